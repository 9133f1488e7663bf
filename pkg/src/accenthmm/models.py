"""Core model types: diagonal-covariance GMMs, left-to-right phone HMMs, model sets.

All probability arithmetic downstream is done in the log domain; this module
provides the emission densities, delta-feature computation and the mixture
split/merge utilities used to grow or shrink GMM sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, DimensionMismatchError, UnknownPhoneError

LOG_ZERO = -1e30
STOCHASTIC_TOL = 1e-8
MIN_VARIANCE = 1e-8


@dataclass(frozen=True)
class Gmm:
    """Diagonal-covariance Gaussian mixture over D-dimensional frames."""

    weights: np.ndarray   # (M,)
    means: np.ndarray     # (M, D)
    variances: np.ndarray  # (M, D)

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    def validate(self, floor: float = MIN_VARIANCE) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ContractError(f"GMM weights sum to {self.weights.sum()}, not 1")
        if np.any(self.variances < floor * (1 - 1e-12)):
            raise ContractError("GMM variance below floor")
        if not (np.all(np.isfinite(self.means)) and np.all(np.isfinite(self.variances))):
            raise ContractError("non-finite GMM parameters")


@dataclass(frozen=True)
class AugmentPath:
    """One alternate-pronunciation branch of an augmented phone HMM.

    The branch is the concatenation of the alternate model set's HMMs for
    ``target``; an empty target is a deletion (direct entry-to-exit skip).
    """

    target: tuple[str, ...]
    entry_prob: float
    states: tuple[Gmm, ...] = ()
    transitions: np.ndarray | None = None  # (n+2, n+2), None when target empty


@dataclass(frozen=True)
class PhoneHmm:
    """Left-to-right phone HMM with GMM emitters.

    ``transitions`` is (S+2)x(S+2) over [entry, state_1..state_S, exit]; the
    entry node is non-emitting, the exit node absorbing within the phone.
    After pronunciation augmentation the canonical chain is entered with
    ``main_entry_prob`` and each ``alt_paths`` branch with its own mass.
    """

    phone: str
    states: tuple[Gmm, ...]
    transitions: np.ndarray
    alt_paths: tuple[AugmentPath, ...] = ()
    main_entry_prob: float = 1.0

    @property
    def num_states(self) -> int:
        return len(self.states)

    def validate(self) -> None:
        n = self.num_states
        t = self.transitions
        if t.shape != (n + 2, n + 2):
            raise ContractError(f"transition matrix shape {t.shape} for {n} states")
        rows = t.sum(axis=1)
        if np.any(np.abs(rows[:-1] - 1.0) > 1e-10):
            raise ContractError(f"non-stochastic transition rows in phone {self.phone!r}")
        if np.any(np.tril(t, -1) > 0):
            raise ContractError(f"backward transition in phone {self.phone!r}")
        if t[-1, -1] != 1.0:
            raise ContractError("exit node must be absorbing")
        entry = self.main_entry_prob + sum(p.entry_prob for p in self.alt_paths)
        if abs(entry - 1.0) > 1e-10:
            raise ContractError(f"entry masses sum to {entry}, not 1")
        for g in self.states:
            g.validate()


@dataclass(frozen=True)
class ModelSet:
    """Named collection of phone HMMs sharing one feature dimensionality."""

    name: str
    dimensionality: int
    hmms: dict[str, PhoneHmm] = field(default_factory=dict)

    @property
    def phones(self) -> list[str]:
        return list(self.hmms)

    def __getitem__(self, phone: str) -> PhoneHmm:
        try:
            return self.hmms[phone]
        except KeyError:
            raise UnknownPhoneError(phone) from None

    def validate(self) -> None:
        for phone, hmm in self.hmms.items():
            hmm.validate()
            for g in hmm.states:
                if g.dims != self.dimensionality:
                    raise DimensionMismatchError(
                        f"phone {phone!r} has D={g.dims}, set has D={self.dimensionality}")

    def with_hmm(self, hmm: PhoneHmm) -> "ModelSet":
        new = dict(self.hmms)
        new[hmm.phone] = hmm
        return replace(self, hmms=new)


@dataclass(frozen=True)
class Utterance:
    """Feature-frame matrix with corpus metadata."""

    features: np.ndarray               # (T, D)
    utt_id: str = ""
    speaker: str = ""
    native_language: str = ""
    words: tuple[str, ...] = ()
    phones: tuple[str, ...] = ()

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


def as_features(u) -> np.ndarray:
    """Accept an Utterance or a bare (T, D) matrix."""
    return u.features if isinstance(u, Utterance) else np.asarray(u, dtype=float)


def gmm_log_density(g: Gmm, x: np.ndarray) -> float:
    """Log density of a frame under a diagonal-covariance GMM."""
    x = np.asarray(x, dtype=float)
    if x.shape != (g.dims,):
        raise DimensionMismatchError(f"frame has shape {x.shape}, model D={g.dims}")
    return float(logsumexp(_component_log_densities(g, x[None, :])[0]))


def gmm_log_density_frames(g: Gmm, frames: np.ndarray) -> np.ndarray:
    """Vectorized log density over a (T, D) frame matrix."""
    if frames.shape[1] != g.dims:
        raise DimensionMismatchError(f"frames have D={frames.shape[1]}, model D={g.dims}")
    return logsumexp(_component_log_densities(g, frames), axis=1)


def _component_log_densities(g: Gmm, frames: np.ndarray) -> np.ndarray:
    """(T, M) matrix of log w_m + log N(x_t; mu_m, diag var_m)."""
    diff = frames[:, None, :] - g.means[None, :, :]            # (T, M, D)
    quad = np.sum(diff * diff / g.variances[None, :, :], axis=2)
    log_norm = -0.5 * (g.dims * np.log(2.0 * np.pi) + np.sum(np.log(g.variances), axis=1))
    return np.log(g.weights)[None, :] + log_norm[None, :] - 0.5 * quad


def compute_deltas(static: np.ndarray, window: int = 2) -> np.ndarray:
    """Append delta and delta-delta coefficients to a (T, K) static matrix.

    Standard regression over +/-window frames with replicated boundary
    frames; output columns are [static | delta | delta-delta].
    """
    if window < 1:
        raise ContractError(f"delta window must be >= 1, got {window}")
    static = np.asarray(static, dtype=float)
    if static.ndim != 2 or static.shape[0] < 1:
        raise ContractError("static features must be a non-empty (T, K) matrix")
    d1 = _delta_regression(static, window)
    d2 = _delta_regression(d1, window)
    return np.hstack([static, d1, d2])


def _delta_regression(x: np.ndarray, window: int) -> np.ndarray:
    T = x.shape[0]
    denom = 2.0 * sum(th * th for th in range(1, window + 1))
    out = np.zeros_like(x)
    for th in range(1, window + 1):
        fwd = x[np.minimum(np.arange(T) + th, T - 1)]
        bwd = x[np.maximum(np.arange(T) - th, 0)]
        out += th * (fwd - bwd)
    return out / denom


def uniform_left_to_right(num_states: int, self_loop: float = 0.6) -> np.ndarray:
    """Plain left-to-right transition matrix: entry to first state, each
    emitting state loops or advances, last state advances to exit."""
    n = num_states
    t = np.zeros((n + 2, n + 2))
    t[0, 1] = 1.0
    for s in range(1, n + 1):
        t[s, s] = self_loop
        t[s, s + 1] = 1.0 - self_loop
    t[n + 1, n + 1] = 1.0
    return t


def split_heaviest(g: Gmm, perturb: float = 0.2) -> Gmm:
    """Binary-split the heaviest component, perturbing means by +/-perturb*sigma."""
    m = int(np.argmax(g.weights))
    sigma = np.sqrt(g.variances[m])
    w = np.concatenate([g.weights, [g.weights[m] / 2.0]])
    w[m] /= 2.0
    means = np.vstack([g.means, g.means[m] + perturb * sigma])
    means[m] = means[m] - perturb * sigma
    variances = np.vstack([g.variances, g.variances[m]])
    return Gmm(weights=w, means=means, variances=variances)


def merge_lightest_pair(g: Gmm) -> Gmm:
    """Merge the two lowest-weight components by moment matching."""
    if g.num_components < 2:
        raise ContractError("cannot merge a single-component mixture")
    order = np.argsort(g.weights)
    i, j = sorted(order[:2])
    wi, wj = g.weights[i], g.weights[j]
    w = wi + wj
    mean = (wi * g.means[i] + wj * g.means[j]) / w
    second = (wi * (g.variances[i] + g.means[i] ** 2)
              + wj * (g.variances[j] + g.means[j] ** 2)) / w
    var = np.maximum(second - mean ** 2, MIN_VARIANCE)
    keep = [k for k in range(g.num_components) if k != j]
    weights = g.weights[keep].copy()
    means = g.means[keep].copy()
    variances = g.variances[keep].copy()
    ki = keep.index(i)
    weights[ki] = w
    means[ki] = mean
    variances[ki] = var
    return Gmm(weights=weights / weights.sum(), means=means, variances=variances)


def resize_mixture(g: Gmm, target: int) -> Gmm:
    """Grow by splitting the heaviest or shrink by merging the lightest pair
    until the mixture has exactly ``target`` components."""
    if target < 1:
        raise ContractError("target mixture size must be >= 1")
    while g.num_components < target:
        g = split_heaviest(g)
    while g.num_components > target:
        g = merge_lightest_pair(g)
    return g


def resize_model_set(ms: ModelSet, target: int) -> ModelSet:
    """Apply resize_mixture to every state of every phone."""
    hmms = {}
    for phone, hmm in ms.hmms.items():
        states = tuple(resize_mixture(g, target) for g in hmm.states)
        hmms[phone] = replace(hmm, states=states)
    return replace(ms, hmms=hmms)
