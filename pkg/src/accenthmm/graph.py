"""Composite decoding graphs and log-domain dynamic programming.

A composite graph is a flattened network of emitting HMM states. Phone HMMs
(including augmented ones with parallel alternate-pronunciation branches) are
first reduced to a LocalGraph (entry vector, inner matrix, exit vector, and a
scalar entry-to-exit skip mass for deletion branches); LocalGraphs are then
chained into sequences or wired through a place network (phone loop, word
grammar). Non-emitting connector mass is eliminated analytically, so the DP
only ever sees emitting nodes.

Arcs are kept in two matrices: within-unit arcs and boundary (cross-unit)
arcs. Boundary arcs mark label-segment starts and carry optional insertion
penalties at decode time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, DimensionMismatchError, NoAlignmentError
from .models import Gmm, ModelSet, PhoneHmm, as_features, gmm_log_density_frames


@dataclass
class LocalGraph:
    """A sub-HMM reduced to emitting states plus boundary mass vectors."""

    states: list[Gmm]
    meta: list            # per state: (phone, state_index) or None for branch states
    entry: np.ndarray     # (n,) entry -> state probabilities
    inner: np.ndarray     # (n, n) state -> state probabilities
    exit: np.ndarray      # (n,) state -> exit probabilities
    skip: float = 0.0     # direct entry -> exit mass (deletions)

    @property
    def size(self) -> int:
        return len(self.states)


def phone_local_graph(hmm: PhoneHmm) -> LocalGraph:
    """Flatten a phone HMM, folding in any alternate-pronunciation branches."""
    parts = [_chain_part(hmm)]
    for path in hmm.alt_paths:
        parts.append(_branch_part(hmm.phone, path))
    main = parts[0]
    scales = [hmm.main_entry_prob] + [p.entry_prob for p in hmm.alt_paths]

    states: list[Gmm] = []
    meta: list = []
    sizes = []
    for part in parts:
        states.extend(part.states)
        meta.extend(part.meta)
        sizes.append(part.size)
    n = len(states)
    entry = np.zeros(n)
    inner = np.zeros((n, n))
    exit_ = np.zeros(n)
    skip = 0.0
    off = 0
    for part, scale in zip(parts, scales):
        k = part.size
        entry[off:off + k] = scale * part.entry
        inner[off:off + k, off:off + k] = part.inner
        exit_[off:off + k] = part.exit
        skip += scale * part.skip
        off += k
    del main, sizes
    return LocalGraph(states=states, meta=meta, entry=entry, inner=inner,
                      exit=exit_, skip=skip)


def _chain_part(hmm: PhoneHmm) -> LocalGraph:
    t = hmm.transitions
    n = hmm.num_states
    return LocalGraph(
        states=list(hmm.states),
        meta=[(hmm.phone, s) for s in range(n)],
        entry=t[0, 1:n + 1].copy(),
        inner=t[1:n + 1, 1:n + 1].copy(),
        exit=t[1:n + 1, n + 1].copy(),
        skip=float(t[0, n + 1]),
    )


def _branch_part(phone: str, path) -> LocalGraph:
    if not path.target:
        return LocalGraph(states=[], meta=[], entry=np.zeros(0),
                          inner=np.zeros((0, 0)), exit=np.zeros(0), skip=1.0)
    t = path.transitions
    n = len(path.states)
    return LocalGraph(
        states=list(path.states),
        meta=[None] * n,
        entry=t[0, 1:n + 1].copy(),
        inner=t[1:n + 1, 1:n + 1].copy(),
        exit=t[1:n + 1, n + 1].copy(),
        skip=float(t[0, n + 1]),
    )


def chain_local_graphs(parts: list[LocalGraph]) -> LocalGraph:
    """Concatenate sub-graphs left to right, composing exit/entry mass and
    propagating skip mass through fully-deletable members."""
    if not parts:
        raise ContractError("cannot chain zero sub-graphs")
    states: list[Gmm] = []
    meta: list = []
    offsets = []
    for p in parts:
        offsets.append(len(states))
        states.extend(p.states)
        meta.extend(p.meta)
    n = len(states)
    skips = [p.skip for p in parts]
    k = len(parts)
    # pre[i] = product of skips before part i; suf[i] = product after part i
    pre = np.ones(k)
    for i in range(1, k):
        pre[i] = pre[i - 1] * skips[i - 1]
    suf = np.ones(k)
    for i in range(k - 2, -1, -1):
        suf[i] = suf[i + 1] * skips[i + 1]

    entry = np.zeros(n)
    inner = np.zeros((n, n))
    exit_ = np.zeros(n)
    for i, p in enumerate(parts):
        o = offsets[i]
        entry[o:o + p.size] = pre[i] * p.entry
        inner[o:o + p.size, o:o + p.size] = p.inner
        exit_[o:o + p.size] = suf[i] * p.exit
        for j in range(i + 1, k):
            gap = 1.0
            for m in range(i + 1, j):
                gap *= skips[m]
            q = parts[j]
            oj = offsets[j]
            inner[o:o + p.size, oj:oj + q.size] += \
                np.outer(p.exit, gap * q.entry)
    return LocalGraph(states=states, meta=meta, entry=entry, inner=inner,
                      exit=exit_, skip=float(np.prod(skips)))


@dataclass
class NetworkUnit:
    """One labelled unit (phone or word pronunciation) placed in a network."""

    label: str
    local: LocalGraph
    src: int
    dst: int
    prior: float


@dataclass
class CompositeGraph:
    """Flattened emitting-state graph ready for DP."""

    emitters: list[Gmm]
    labels: list[str]          # unit label per node
    units: np.ndarray          # unit index per node
    meta: list                 # (phone, state_index) or None per node
    start: np.ndarray          # (N,) log entry probabilities
    ltrans_in: np.ndarray      # (N, N) log within-unit arc probabilities
    ltrans_x: np.ndarray       # (N, N) log boundary arc probabilities
    final: np.ndarray          # (N,) log exit probabilities
    dims: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.emitters)


def compile_network(units: list[NetworkUnit], num_places: int,
                    start_place: int, stop: np.ndarray, dims: int) -> CompositeGraph:
    """Eliminate network places and unit entry/exit nodes, producing a graph
    over emitting states only. Skip mass (deletable units) is closed through
    the place-to-place epsilon matrix."""
    q = np.zeros((num_places, num_places))
    for u in units:
        q[u.src, u.dst] += u.prior * u.local.skip
    closure = np.linalg.solve(np.eye(num_places) - q, np.eye(num_places))

    emitters: list[Gmm] = []
    labels: list[str] = []
    unit_ids: list[int] = []
    meta: list = []
    offsets = []
    for i, u in enumerate(units):
        offsets.append(len(emitters))
        emitters.extend(u.local.states)
        labels.extend([u.label] * u.local.size)
        unit_ids.extend([i] * u.local.size)
        meta.extend(u.local.meta)
    n = len(emitters)
    if n == 0:
        raise ContractError("network has no emitting states")

    start = np.zeros(n)
    trans_in = np.zeros((n, n))
    trans_x = np.zeros((n, n))
    final = np.zeros(n)
    reach0 = closure[start_place]
    stop_from = closure @ stop   # mass from place p that eventually stops
    for i, u in enumerate(units):
        o = offsets[i]
        start[o:o + u.local.size] = reach0[u.src] * u.prior * u.local.entry
        trans_in[o:o + u.local.size, o:o + u.local.size] = u.local.inner
        final[o:o + u.local.size] = u.local.exit * stop_from[u.dst]
        for j, v in enumerate(units):
            w = closure[u.dst, v.src] * v.prior
            if w == 0.0:
                continue
            oj = offsets[j]
            trans_x[o:o + u.local.size, oj:oj + v.local.size] += \
                np.outer(u.local.exit, w * v.local.entry)

    with np.errstate(divide="ignore"):
        return CompositeGraph(
            emitters=emitters, labels=labels, units=np.asarray(unit_ids),
            meta=meta, start=np.log(start), ltrans_in=np.log(trans_in),
            ltrans_x=np.log(trans_x), final=np.log(final), dims=dims)


@dataclass(frozen=True)
class LoopSpec:
    """Free phone-loop specification: any sequence over the inventory."""

    inventory: tuple[str, ...]
    end_prob: float | None = None  # default 1/(N+1)


def build_composite(ms: ModelSet, phones) -> CompositeGraph:
    """Build a decoding graph from a phone sequence or a LoopSpec."""
    if isinstance(phones, LoopSpec):
        return _build_loop(ms, phones)
    phones = list(phones)
    if not phones:
        raise ContractError("phone sequence must be non-empty")
    units = []
    for k, phone in enumerate(phones):
        local = phone_local_graph(ms[phone])
        units.append(NetworkUnit(label=phone, local=local, src=k, dst=k + 1,
                                 prior=1.0))
    stop = np.zeros(len(phones) + 1)
    stop[-1] = 1.0
    return compile_network(units, len(phones) + 1, 0, stop, ms.dimensionality)


def _build_loop(ms: ModelSet, spec: LoopSpec) -> CompositeGraph:
    inventory = list(spec.inventory)
    if not inventory:
        raise ContractError("phone-loop inventory must be non-empty")
    n = len(inventory)
    p_end = spec.end_prob if spec.end_prob is not None else 1.0 / (n + 1)
    prior = (1.0 - p_end) / n
    units = [NetworkUnit(label=ph, local=phone_local_graph(ms[ph]),
                         src=0, dst=0, prior=prior)
             for ph in inventory]
    return compile_network(units, 1, 0, np.array([p_end]), ms.dimensionality)


def emission_matrix(g: CompositeGraph, features) -> np.ndarray:
    """(T, N) log emission densities; identical emitters share one pass."""
    features = as_features(features)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ContractError("utterance must be a non-empty (T, D) matrix")
    if features.shape[1] != g.dims:
        raise DimensionMismatchError(
            f"utterance D={features.shape[1]}, graph D={g.dims}")
    T = features.shape[0]
    out = np.empty((T, g.num_nodes))
    cache: dict[int, np.ndarray] = {}
    for j, em in enumerate(g.emitters):
        key = id(em)
        if key not in cache:
            cache[key] = gmm_log_density_frames(em, features)
        out[:, j] = cache[key]
    return out


def _combined_trans(g: CompositeGraph, boundary_penalty: float) -> np.ndarray:
    return np.logaddexp(g.ltrans_in, g.ltrans_x + boundary_penalty)


def forward_log_likelihood(g: CompositeGraph, features: np.ndarray,
                           boundary_penalty: float = 0.0) -> float:
    """Log P(O | graph) via the forward recursion in the log domain."""
    em = emission_matrix(g, features)
    trans = _combined_trans(g, boundary_penalty)
    alpha = g.start + em[0]
    for t in range(1, em.shape[0]):
        alpha = logsumexp(alpha[:, None] + trans, axis=0) + em[t]
    return float(logsumexp(alpha + g.final))


@dataclass
class ViterbiResult:
    path: list[int]             # node index per frame
    boundaries: list[bool]      # True where a new unit segment starts
    log_prob: float


def viterbi_best_path(g: CompositeGraph, features: np.ndarray,
                      boundary_penalty: float = 0.0) -> ViterbiResult:
    """Best state path; ties broken toward the lower node index and toward
    within-unit arcs."""
    em = emission_matrix(g, features)
    T, n = em.shape
    delta = g.start + em[0]
    back = np.zeros((T, n), dtype=np.int64)
    cross = np.zeros((T, n), dtype=bool)
    t_in = g.ltrans_in
    t_x = g.ltrans_x + boundary_penalty
    for t in range(1, T):
        s_in = delta[:, None] + t_in
        s_x = delta[:, None] + t_x
        idx_in = np.argmax(s_in, axis=0)
        idx_x = np.argmax(s_x, axis=0)
        val_in = s_in[idx_in, np.arange(n)]
        val_x = s_x[idx_x, np.arange(n)]
        use_x = val_x > val_in
        back[t] = np.where(use_x, idx_x, idx_in)
        cross[t] = use_x
        delta = np.where(use_x, val_x, val_in) + em[t]
    scores = delta + g.final
    best = int(np.argmax(scores))
    if not np.isfinite(scores[best]):
        raise NoAlignmentError(
            f"no state path spans {T} frames through this graph")
    path = [best]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    boundaries = [True]
    for t in range(1, T):
        boundaries.append(bool(cross[t, path[t]]))
    return ViterbiResult(path=path, boundaries=boundaries,
                         log_prob=float(scores[best]))


@dataclass
class PosteriorStats:
    """Forward-backward posteriors for one utterance."""

    log_likelihood: float
    gamma: np.ndarray        # (T, N) state occupancies
    xi_in: np.ndarray        # (N, N) summed within-unit arc posteriors
    xi_x: np.ndarray         # (N, N) summed boundary arc posteriors
    start_post: np.ndarray   # (N,)
    final_post: np.ndarray   # (N,)


def forward_backward(g: CompositeGraph, features: np.ndarray) -> PosteriorStats:
    em = emission_matrix(g, features)
    T, n = em.shape
    alpha = np.empty((T, n))
    beta = np.empty((T, n))
    trans = _combined_trans(g, 0.0)
    alpha[0] = g.start + em[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + em[t]
    ll = float(logsumexp(alpha[T - 1] + g.final))
    if not np.isfinite(ll):
        raise NoAlignmentError(f"no state path spans {T} frames through this graph")
    beta[T - 1] = g.final
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(trans + (em[t + 1] + beta[t + 1])[None, :], axis=1)
    gamma = np.exp(alpha + beta - ll)
    xi_in = np.zeros((n, n))
    xi_x = np.zeros((n, n))
    for t in range(T - 1):
        base = alpha[t][:, None] + (em[t + 1] + beta[t + 1])[None, :] - ll
        xi_in += np.exp(base + g.ltrans_in)
        xi_x += np.exp(base + g.ltrans_x)
    start_post = np.exp(g.start + em[0] + beta[0] - ll)
    final_post = np.exp(alpha[T - 1] + g.final - ll)
    return PosteriorStats(log_likelihood=ll, gamma=gamma, xi_in=xi_in,
                          xi_x=xi_x, start_post=start_post, final_post=final_post)
