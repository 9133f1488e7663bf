"""Shared builders and independent oracles for the test suite."""

import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from accenthmm.graph import emission_matrix
from accenthmm.models import Gmm, ModelSet, PhoneHmm, uniform_left_to_right


def single_gaussian(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return Gmm(weights=np.ones(1), means=mean[None, :],
               variances=np.full((1, len(mean)), float(var)))


def make_phone(label, position, num_states=3, var=1.0, self_loop=0.5,
               state_offset=0.2):
    """Left-to-right phone whose state means step away from `position`."""
    position = np.atleast_1d(np.asarray(position, dtype=float))
    states = tuple(single_gaussian(position + state_offset * s, var)
                   for s in range(num_states))
    return PhoneHmm(phone=label, states=states,
                    transitions=uniform_left_to_right(num_states, self_loop))


def make_model_set(spec, name="test", var=1.0, num_states=3, self_loop=0.5,
                   state_offset=0.2):
    """spec: dict label -> position (scalar or vector)."""
    hmms = {}
    dims = None
    for label, pos in spec.items():
        hmm = make_phone(label, pos, num_states=num_states, var=var,
                         self_loop=self_loop, state_offset=state_offset)
        hmms[label] = hmm
        dims = hmm.states[0].dims
    return ModelSet(name=name, dimensionality=dims, hmms=hmms)


def random_model_set(rng, num_phones=2, num_states=2, dims=2, mixtures=1,
                     name="random"):
    hmms = {}
    for i in range(num_phones):
        label = f"p{i}"
        states = []
        for _ in range(num_states):
            w = rng.dirichlet(np.ones(mixtures) * 5)
            means = rng.normal(0, 3, (mixtures, dims))
            variances = rng.uniform(0.3, 1.5, (mixtures, dims))
            states.append(Gmm(weights=w, means=means, variances=variances))
        self_loop = rng.uniform(0.2, 0.8)
        hmms[label] = PhoneHmm(phone=label, states=tuple(states),
                               transitions=uniform_left_to_right(num_states, self_loop))
    return ModelSet(name=name, dimensionality=dims, hmms=hmms)


def brute_force_scores(graph, features):
    """Score every complete node path by direct enumeration (log domain).

    Independent of the forward/Viterbi recursions: paths are scored with
    plain sums over start, arc, emission and final log-probabilities.
    """
    em = emission_matrix(graph, features)
    T, n = em.shape
    trans = np.logaddexp(graph.ltrans_in, graph.ltrans_x)
    paths = np.array(list(itertools.product(range(n), repeat=T)))
    scores = graph.start[paths[:, 0]] + graph.final[paths[:, -1]]
    scores = scores + em[np.arange(T)[None, :], paths].sum(axis=1)
    for t in range(1, T):
        scores = scores + trans[paths[:, t - 1], paths[:, t]]
    return scores


def brute_force_forward(graph, features):
    return float(logsumexp(brute_force_scores(graph, features)))


def brute_force_viterbi(graph, features):
    scores = brute_force_scores(graph, features)
    return float(np.max(scores))


def recursive_edit_distance(ref, hyp):
    """Plain memoized Levenshtein distance, independent of the DP aligner."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
                   d(i, j - 1) + 1,
                   d(i - 1, j) + 1)

    return d(len(ref), len(hyp))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
