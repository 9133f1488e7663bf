"""MLLR, MAP and Baum-Welch based accent/speaker adaptation.

MLLR estimates one global mean transform [A b] in closed form, row by row,
from a single occupancy pass against the unadapted models. MAP interpolates
each Gaussian mean between its prior and the occupancy-weighted sample mean
with prior weight tau. Both update means only; weights, variances and
transitions pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .decoding import phone_recognize
from .errors import ContractError, DimensionMismatchError, InsufficientDataError
from .models import Gmm, ModelSet
from .training import accumulate_corpus, baum_welch
from . import models as _models


@dataclass(frozen=True)
class MllrTransform:
    """Global affine mean transform: mu' = A @ mu + b."""

    A: np.ndarray   # (D, D)
    b: np.ndarray   # (D,)

    @property
    def dims(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class AdaptationConfig:
    mode: str = "supervised"      # "supervised" | "unsupervised"
    tau: float = 10.0             # MAP prior weight
    mllr_first: bool = True       # run MLLR before MAP

    def validate(self) -> None:
        if self.mode not in ("supervised", "unsupervised"):
            raise ContractError(f"unknown adaptation mode {self.mode!r}")
        if self.tau <= 0:
            raise ContractError(f"tau must be positive, got {self.tau}")


def resolve_transcriptions(ms: ModelSet, corpus, cfg: AdaptationConfig):
    """Supervised mode keeps reference transcriptions; unsupervised mode
    substitutes a phone-recognition pass with the model set itself."""
    resolved = []
    inventory = tuple(sorted(ms.hmms))
    for utt, phones in corpus:
        if cfg.mode == "supervised":
            if phones is None:
                raise ContractError("supervised adaptation requires transcriptions")
            resolved.append((utt, tuple(phones)))
        else:
            hyp = phone_recognize(ms, inventory, utt)
            resolved.append((utt, hyp.labels))
    return resolved


def estimate_mllr(ms: ModelSet, corpus, cfg: AdaptationConfig) -> MllrTransform:
    """Closed-form global MLLR mean transform from one occupancy pass."""
    cfg.validate()
    corpus = resolve_transcriptions(ms, corpus, cfg)
    stats = accumulate_corpus(ms, corpus)
    D = ms.dimensionality

    total_occ = sum(gs.occ.sum() for gs in stats.gauss.values())
    if total_occ < D + 1:
        raise InsufficientDataError(
            f"total occupancy {total_occ:.1f} frames < D+1 = {D + 1}; "
            "transform would be rank-deficient")

    G = np.zeros((D, D + 1, D + 1))
    k = np.zeros((D, D + 1))
    for (phone, s), gs in stats.gauss.items():
        gmm = ms[phone].states[s]
        for m in range(gmm.num_components):
            occ = gs.occ[m]
            if occ <= 0:
                continue
            xi = np.append(gmm.means[m], 1.0)
            outer = np.outer(xi, xi)
            inv_var = 1.0 / gmm.variances[m]
            G += (occ * inv_var)[:, None, None] * outer[None, :, :]
            k += (gs.x[m] * inv_var)[:, None] * xi[None, :]

    W = np.empty((D, D + 1))
    for d in range(D):
        try:
            W[d] = np.linalg.solve(G[d], k[d])
        except np.linalg.LinAlgError as e:
            raise InsufficientDataError(
                f"MLLR normal equations singular in dimension {d}") from e
    return MllrTransform(A=W[:, :D], b=W[:, D])


def apply_mllr(ms: ModelSet, t: MllrTransform) -> ModelSet:
    """Transform every Gaussian mean; variances, weights and transitions
    are shared with the input set unchanged."""
    if t.dims != ms.dimensionality:
        raise DimensionMismatchError(
            f"transform D={t.dims}, model set D={ms.dimensionality}")
    hmms = {}
    for phone, hmm in ms.hmms.items():
        states = tuple(
            Gmm(weights=g.weights, means=g.means @ t.A.T + t.b,
                variances=g.variances)
            for g in hmm.states)
        hmms[phone] = replace(hmm, states=states)
    return replace(ms, hmms=hmms)


def map_adapt(ms: ModelSet, corpus, cfg: AdaptationConfig) -> ModelSet:
    """MAP mean adaptation; with cfg.mllr_first the MLLR-adapted set is both
    the occupancy model and the MAP prior."""
    cfg.validate()
    prior = ms
    if cfg.mllr_first:
        transform = estimate_mllr(ms, corpus, cfg)
        prior = apply_mllr(ms, transform)
    resolved = resolve_transcriptions(prior, corpus, cfg)
    stats = accumulate_corpus(prior, resolved)
    hmms = {}
    for phone, hmm in prior.hmms.items():
        states = []
        for s, g in enumerate(hmm.states):
            gs = stats.gauss.get((phone, s))
            if gs is None:
                states.append(g)
                continue
            denom = cfg.tau + gs.occ
            means = (cfg.tau * g.means + gs.x) / denom[:, None]
            states.append(Gmm(weights=g.weights, means=means,
                              variances=g.variances))
        hmms[phone] = replace(hmm, states=tuple(states))
    return replace(prior, hmms=hmms)


def reestimate_accent(ms: ModelSet, corpus, iters: int,
                      mixtures: int = 64):
    """Accent re-estimation recipe: shrink mixtures to the configured size by
    merging the lightest components, then Baum-Welch on the accented corpus."""
    current = max(g.num_components for h in ms.hmms.values() for g in h.states)
    if current > mixtures:
        ms = _models.resize_model_set(ms, mixtures)
    return baum_welch(ms, corpus, iters)
