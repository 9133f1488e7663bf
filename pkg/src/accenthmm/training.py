"""Baum-Welch estimation and sufficient-statistic accumulation.

The E-step runs forward-backward over per-utterance composite graphs built
from the reference phone transcription (embedded training); statistics for
repeated phones are pooled, so monophones stay tied across occurrences.
The same accumulator feeds MLLR and MAP adaptation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, NoAlignmentError
from .graph import build_composite, forward_backward
from .models import (Gmm, ModelSet, MIN_VARIANCE, _component_log_densities,
                     as_features)

log = logging.getLogger(__name__)

DEFAULT_MIN_OCCUPANCY = 3.0
DEFAULT_VARIANCE_FLOOR_SCALE = 1e-3
WEIGHT_FLOOR = 1e-10


@dataclass
class GaussianStats:
    occ: np.ndarray   # (M,)
    x: np.ndarray     # (M, D)
    x2: np.ndarray    # (M, D)


@dataclass
class SuffStats:
    """Corpus-level sufficient statistics keyed by (phone, state)."""

    gauss: dict = field(default_factory=dict)       # (phone, state) -> GaussianStats
    trans: dict = field(default_factory=dict)       # phone -> (S+2, S+2) counts
    total_log_likelihood: float = 0.0
    num_frames: int = 0
    skipped: list = field(default_factory=list)

    def gaussian(self, ms: ModelSet, phone: str, state: int) -> GaussianStats:
        key = (phone, state)
        if key not in self.gauss:
            g = ms[phone].states[state]
            self.gauss[key] = GaussianStats(
                occ=np.zeros(g.num_components),
                x=np.zeros((g.num_components, g.dims)),
                x2=np.zeros((g.num_components, g.dims)))
        return self.gauss[key]

    def trans_counts(self, ms: ModelSet, phone: str) -> np.ndarray:
        if phone not in self.trans:
            n = ms[phone].num_states
            self.trans[phone] = np.zeros((n + 2, n + 2))
        return self.trans[phone]


def accumulate_utterance(ms: ModelSet, graph, utt, stats: SuffStats) -> float:
    """Forward-backward one utterance and add its posteriors to ``stats``."""
    feats = as_features(utt)
    post = forward_backward(graph, feats)
    comp_cache: dict[int, np.ndarray] = {}
    for j, m in enumerate(graph.meta):
        if m is None:
            continue
        phone, s = m
        gmm = graph.emitters[j]
        key = id(gmm)
        if key not in comp_cache:
            ld = _component_log_densities(gmm, feats)
            comp_cache[key] = np.exp(ld - logsumexp(ld, axis=1, keepdims=True))
        resp = comp_cache[key] * post.gamma[:, j:j + 1]   # (T, M)
        gs = stats.gaussian(ms, phone, s)
        gs.occ += resp.sum(axis=0)
        gs.x += resp.T @ feats
        gs.x2 += resp.T @ (feats * feats)

    _accumulate_transitions(ms, graph, post, stats)
    stats.total_log_likelihood += post.log_likelihood
    stats.num_frames += feats.shape[0]
    return post.log_likelihood


def _accumulate_transitions(ms: ModelSet, graph, post, stats: SuffStats) -> None:
    meta = graph.meta
    for i, j in np.argwhere(post.xi_in > 0):
        mi, mj = meta[i], meta[j]
        if mi is None or mj is None or mi[0] != mj[0]:
            continue
        stats.trans_counts(ms, mi[0])[mi[1] + 1, mj[1] + 1] += post.xi_in[i, j]
    for i, j in np.argwhere(post.xi_x > 0):
        mi, mj = meta[i], meta[j]
        if mi is not None:
            phone, s = mi
            n = ms[phone].num_states
            stats.trans_counts(ms, phone)[s + 1, n + 1] += post.xi_x[i, j]
        if mj is not None:
            phone, s = mj
            stats.trans_counts(ms, phone)[0, s + 1] += post.xi_x[i, j]
    for j in np.flatnonzero(post.start_post > 0):
        if meta[j] is not None:
            phone, s = meta[j]
            stats.trans_counts(ms, phone)[0, s + 1] += post.start_post[j]
    for i in np.flatnonzero(post.final_post > 0):
        if meta[i] is not None:
            phone, s = meta[i]
            n = ms[phone].num_states
            stats.trans_counts(ms, phone)[s + 1, n + 1] += post.final_post[i]


def accumulate_corpus(ms: ModelSet, corpus) -> SuffStats:
    """Accumulate statistics over (utterance, phone transcription) pairs.

    Utterances whose transcription cannot be aligned (too few frames) are
    skipped and reported in ``stats.skipped``.
    """
    stats = SuffStats()
    graph_cache: dict[tuple, object] = {}
    for utt, phones in corpus:
        key = tuple(phones)
        if key not in graph_cache:
            graph_cache[key] = build_composite(ms, list(key))
        try:
            accumulate_utterance(ms, graph_cache[key], utt, stats)
        except NoAlignmentError:
            utt_id = getattr(utt, "utt_id", "") or "<anonymous>"
            stats.skipped.append(utt_id)
            log.warning("skipping unalignable utterance %s", utt_id)
    return stats


def corpus_variance_floor(corpus, scale: float = DEFAULT_VARIANCE_FLOOR_SCALE) -> np.ndarray:
    """Per-dimension floor: scale times the global corpus variance."""
    frames = np.vstack([as_features(u) for u, _ in corpus])
    return np.maximum(scale * frames.var(axis=0), MIN_VARIANCE)


def baum_welch(ms: ModelSet, corpus, iters: int, *,
               min_occupancy: float = DEFAULT_MIN_OCCUPANCY,
               variance_floor: np.ndarray | None = None):
    """Re-estimate a model set; returns (new set, per-iteration log-likelihoods).

    The log-likelihood list entry i is the corpus likelihood under the model
    entering iteration i, so the list is non-decreasing for a valid EM step.
    """
    if iters < 1:
        raise ContractError(f"iters must be >= 1, got {iters}")
    corpus = list(corpus)
    for _, phones in corpus:
        for p in phones:
            ms[p]   # raises UnknownPhoneError
    if variance_floor is None:
        variance_floor = corpus_variance_floor(corpus)
    lls = []
    for _ in range(iters):
        stats = accumulate_corpus(ms, corpus)
        if not stats.gauss:
            raise ContractError("no utterance in the corpus could be aligned")
        lls.append(stats.total_log_likelihood)
        ms = reestimate(ms, stats, min_occupancy=min_occupancy,
                        variance_floor=variance_floor)
    return ms, lls


def flat_start(corpus, num_states: int = 3, name: str = "trained",
               self_loop: float = 0.6) -> ModelSet:
    """Initialize single-Gaussian monophones at the global corpus moments."""
    from .models import PhoneHmm, uniform_left_to_right

    corpus = list(corpus)
    frames = np.vstack([as_features(u) for u, _ in corpus])
    dims = frames.shape[1]
    mean = frames.mean(axis=0)
    var = np.maximum(frames.var(axis=0), MIN_VARIANCE)
    phones = sorted({p for _, trans in corpus for p in trans})
    if not phones:
        raise ContractError("corpus transcriptions are empty")
    hmms = {}
    for phone in phones:
        states = tuple(
            Gmm(weights=np.ones(1), means=mean[None, :].copy(),
                variances=var[None, :].copy())
            for _ in range(num_states))
        hmms[phone] = PhoneHmm(phone=phone, states=states,
                               transitions=uniform_left_to_right(num_states, self_loop))
    return ModelSet(name=name, dimensionality=dims, hmms=hmms)


def train_model_set(corpus, num_states: int = 3, mixtures: int = 1,
                    iters: int = 4, name: str = "trained"):
    """Flat start, Baum-Welch, then grow mixtures by binary splitting with
    re-estimation after each doubling."""
    from .models import resize_model_set

    corpus = list(corpus)
    ms = flat_start(corpus, num_states=num_states, name=name)
    floor = corpus_variance_floor(corpus)
    ms, lls = baum_welch(ms, corpus, iters, variance_floor=floor)
    m = 1
    while m < mixtures:
        m = min(2 * m, mixtures)
        ms = resize_model_set(ms, m)
        ms, step_lls = baum_welch(ms, corpus, iters, variance_floor=floor)
        lls.extend(step_lls)
    return ms, lls


def reestimate(ms: ModelSet, stats: SuffStats, *,
               min_occupancy: float = DEFAULT_MIN_OCCUPANCY,
               variance_floor: np.ndarray = None) -> ModelSet:
    """M-step: new parameters from accumulated statistics; states or
    components with occupancy below the floor keep their prior parameters."""
    if variance_floor is None:
        variance_floor = np.full(ms.dimensionality, MIN_VARIANCE)
    hmms = {}
    for phone, hmm in ms.hmms.items():
        states = []
        for s, g in enumerate(hmm.states):
            gs = stats.gauss.get((phone, s))
            if gs is None or gs.occ.sum() < min_occupancy:
                states.append(g)
                continue
            occ = gs.occ
            weights = np.maximum(occ / occ.sum(), WEIGHT_FLOOR)
            weights = weights / weights.sum()
            means = g.means.copy()
            variances = g.variances.copy()
            enough = occ >= min_occupancy
            for m in np.flatnonzero(enough):
                mu = gs.x[m] / occ[m]
                var = gs.x2[m] / occ[m] - mu * mu
                means[m] = mu
                variances[m] = np.maximum(var, variance_floor)
            states.append(Gmm(weights=weights, means=means, variances=variances))
        counts = stats.trans.get(phone)
        if counts is None:
            trans = hmm.transitions
        else:
            trans = hmm.transitions.copy()
            for row in range(hmm.num_states + 1):
                total = counts[row].sum()
                if total >= (min_occupancy if row > 0 else WEIGHT_FLOOR):
                    trans[row] = counts[row] / total
        hmms[phone] = replace(hmm, states=tuple(states), transitions=trans)
    return replace(ms, hmms=hmms)
