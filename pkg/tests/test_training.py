import numpy as np
import pytest

from accenthmm.errors import ContractError, UnknownPhoneError
from accenthmm.graph import build_composite
from accenthmm.models import Utterance
from accenthmm.synth import sample_utterance
from accenthmm.training import (accumulate_corpus, baum_welch,
                                corpus_variance_floor, flat_start, reestimate,
                                train_model_set)
from conftest import make_model_set, random_model_set


def synth_corpus(ms, sentences, seed, frames_per_state=4):
    return [(sample_utterance(ms, sent, [seed, i], frames_per_state), list(sent))
            for i, sent in enumerate(sentences)]


class TestBaumWelch:
    @pytest.mark.parametrize("seed", range(5))
    def test_log_likelihood_non_decreasing(self, seed):
        rng = np.random.default_rng(seed)
        truth = random_model_set(rng, num_phones=2, num_states=2, dims=2)
        corpus = synth_corpus(truth, [("p0", "p1"), ("p1", "p0")] * 3, seed)
        init = random_model_set(np.random.default_rng(seed + 100),
                                num_phones=2, num_states=2, dims=2)
        _, lls = baum_welch(init, corpus, iters=6)
        for a, b in zip(lls, lls[1:]):
            assert b >= a - 1e-9 * abs(a)

    def test_recovers_separated_means(self, rng):
        truth = make_model_set({"a": [0.0, 0.0], "b": [8.0, 8.0]},
                               var=0.25, self_loop=0.6)
        corpus = synth_corpus(truth, [("a", "b"), ("b", "a")] * 10, seed=7,
                              frames_per_state=6)
        init = make_model_set({"a": [1.0, 1.0], "b": [7.0, 7.0]}, var=1.0)
        trained, _ = baum_welch(init, corpus, iters=8)
        for label, pos in (("a", 0.0), ("b", 8.0)):
            state_means = np.array([g.means[0] for g in trained[label].states])
            assert np.all(np.abs(state_means.mean(axis=0) - pos) < 0.5)

    def test_variance_floor_applied(self):
        ms = make_model_set({"a": [0.0]}, var=1.0)
        feats = np.zeros((30, 1))  # degenerate data: zero empirical variance
        corpus = [(Utterance(features=feats), ["a"])]
        floor = np.array([0.05])
        trained, _ = baum_welch(ms, corpus, iters=3, variance_floor=floor)
        for g in trained["a"].states:
            assert np.all(g.variances >= floor - 1e-15)

    def test_unknown_transcription_phone(self):
        ms = make_model_set({"a": [0.0]})
        corpus = [(Utterance(features=np.zeros((5, 1))), ["a", "q"])]
        with pytest.raises(UnknownPhoneError):
            baum_welch(ms, corpus, iters=1)

    def test_zero_iters_rejected(self):
        ms = make_model_set({"a": [0.0]})
        with pytest.raises(ContractError):
            baum_welch(ms, [(Utterance(features=np.zeros((5, 1))), ["a"])], iters=0)


class TestAccumulation:
    def test_gamma_occupancy_matches_frame_count(self, rng):
        ms = random_model_set(rng, num_phones=2, num_states=2, dims=2)
        corpus = synth_corpus(ms, [("p0", "p1")], seed=3)
        stats = accumulate_corpus(ms, corpus)
        total_occ = sum(gs.occ.sum() for gs in stats.gauss.values())
        assert total_occ == pytest.approx(stats.num_frames, abs=1e-8)

    def test_unalignable_utterance_skipped(self):
        ms = make_model_set({"a": [0.0]}, num_states=3)
        short = Utterance(features=np.zeros((2, 1)), utt_id="too-short")
        ok = Utterance(features=np.zeros((10, 1)), utt_id="fine")
        stats = accumulate_corpus(ms, [(short, ["a"]), (ok, ["a"])])
        assert stats.skipped == ["too-short"]
        assert stats.num_frames == 10

    def test_low_occupancy_state_keeps_prior(self):
        ms = make_model_set({"a": [0.0], "b": [5.0]})
        corpus = [(Utterance(features=np.full((12, 1), 0.3)), ["a"])]
        stats = accumulate_corpus(ms, corpus)
        new = reestimate(ms, stats, variance_floor=np.array([1e-4]))
        # "b" never occurs: all its parameters must be untouched
        for g_old, g_new in zip(ms["b"].states, new["b"].states):
            assert np.array_equal(g_old.means, g_new.means)
            assert np.array_equal(g_old.variances, g_new.variances)
        assert not np.array_equal(ms["a"].states[0].means,
                                  new["a"].states[0].means)


class TestInitialization:
    def test_flat_start_global_moments(self, rng):
        feats = rng.normal(2.0, 1.5, (40, 2))
        corpus = [(Utterance(features=feats[:20]), ["a", "b"]),
                  (Utterance(features=feats[20:]), ["b"])]
        ms = flat_start(corpus, num_states=3)
        assert sorted(ms.hmms) == ["a", "b"]
        for hmm in ms.hmms.values():
            for g in hmm.states:
                assert np.allclose(g.means[0], feats.mean(axis=0))
                assert np.allclose(g.variances[0], feats.var(axis=0))

    def test_corpus_variance_floor_value(self, rng):
        feats = rng.normal(0, 2, (50, 3))
        corpus = [(Utterance(features=feats), ["a"])]
        floor = corpus_variance_floor(corpus, scale=1e-3)
        assert np.allclose(floor, 1e-3 * feats.var(axis=0))

    def test_train_model_set_grows_mixtures(self, rng):
        truth = make_model_set({"a": [0.0], "b": [6.0]}, var=0.5)
        corpus = synth_corpus(truth, [("a", "b")] * 6, seed=11)
        ms, lls = train_model_set(corpus, num_states=3, mixtures=4, iters=2)
        for hmm in ms.hmms.values():
            for g in hmm.states:
                assert g.num_components == 4
        assert len(lls) == 2 * 3  # one block of iters per doubling stage
