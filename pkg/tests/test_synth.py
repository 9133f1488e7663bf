import numpy as np
import pytest

from accenthmm.errors import ContractError
from accenthmm.synth import (AccentChannel, apply_accent,
                             make_synthetic_corpus,
                             sample_accented_utterance, sample_utterance)
from conftest import make_model_set


@pytest.fixture
def channel():
    return AccentChannel(rules={"A": ((("t",), 0.3), (("t", "s"), 0.7))})


class TestAccentChannel:
    def test_unlisted_phone_passes_through(self, channel):
        out = apply_accent(("B", "B"), channel, seed=0)
        assert out == ("B", "B")

    def test_substitution_frequencies(self, channel):
        n = 2000
        hits = {("t",): 0, ("t", "s"): 0}
        for i in range(n):
            out = apply_accent(("A",), channel, seed=i)
            hits[out] += 1
        assert hits[("t",)] / n == pytest.approx(0.3, abs=0.04)
        assert hits[("t", "s")] / n == pytest.approx(0.7, abs=0.04)

    def test_identity_mass(self):
        ch = AccentChannel(rules={"A": ((("t",), 0.5),)},
                           identity_mass={"A": 0.5})
        outs = {apply_accent(("A",), ch, seed=i) for i in range(200)}
        assert outs == {("A",), ("t",)}

    def test_masses_must_sum_to_one(self):
        ch = AccentChannel(rules={"A": ((("t",), 0.5),)})
        with pytest.raises(ContractError):
            ch.validate()

    def test_deterministic_in_seed(self, channel):
        seq = ("A",) * 30
        assert apply_accent(seq, channel, 7) == apply_accent(seq, channel, 7)
        assert apply_accent(seq, channel, 7) != apply_accent(seq, channel, 8)


class TestSampling:
    def test_fixed_duration_frame_count(self):
        ms = make_model_set({"a": [0.0], "b": [5.0]})
        u = sample_utterance(ms, ["a", "b", "a"], seed=1, frames_per_state=4)
        assert u.features.shape == (3 * 3 * 4, 1)

    def test_sample_moments_match_model(self):
        ms = make_model_set({"a": [2.0, -1.0]}, var=0.5, state_offset=0.0)
        u = sample_utterance(ms, ["a"] * 60, seed=2, frames_per_state=10)
        assert np.allclose(u.features.mean(axis=0), [2.0, -1.0], atol=0.05)
        assert np.allclose(u.features.var(axis=0), 0.5, atol=0.05)

    def test_model_topology_durations_vary(self):
        ms = make_model_set({"a": [0.0]}, self_loop=0.5)
        lens = {sample_utterance(ms, ["a"], seed=i).features.shape[0]
                for i in range(30)}
        assert len(lens) > 1
        assert min(lens) >= 3   # every state must be visited at least once

    def test_geometric_durations(self):
        ms = make_model_set({"a": [0.0]}, num_states=1)
        lens = [sample_utterance(ms, ["a"], seed=i,
                                 frames_per_state=("geometric", 5.0)).features.shape[0]
                for i in range(400)]
        assert np.mean(lens) == pytest.approx(5.0, abs=0.5)

    def test_invalid_duration_specs(self):
        ms = make_model_set({"a": [0.0]})
        with pytest.raises(ContractError):
            sample_utterance(ms, ["a"], seed=0, frames_per_state=0)
        with pytest.raises(ContractError):
            sample_utterance(ms, ["a"], seed=0, frames_per_state=("weird", 2))

    def test_deterministic_in_seed(self):
        ms = make_model_set({"a": [0.0], "b": [5.0]})
        u1 = sample_utterance(ms, ["a", "b"], seed=9, frames_per_state=3)
        u2 = sample_utterance(ms, ["a", "b"], seed=9, frames_per_state=3)
        assert np.array_equal(u1.features, u2.features)


class TestAccentedCorpus:
    def sets(self):
        sl = make_model_set({"A": [0.0], "SEP": [9.0]}, var=0.1)
        nl = make_model_set({"t": [3.0], "SEP": [6.0]}, var=0.1)
        return sl, nl

    def test_surface_and_canonical_recorded(self, channel):
        sl, nl = self.sets()
        nl2 = make_model_set({"t": [3.0], "s": [5.0]}, var=0.1)
        rec = sample_accented_utterance(sl, nl2, ("A", "SEP"), channel, seed=1,
                                        frames_per_state=2)
        assert rec.canonical == ("A", "SEP")
        assert rec.surface[-1] == "SEP"
        assert rec.surface[:-1] in (("t",), ("t", "s"))

    def test_alternate_set_takes_priority_for_shared_labels(self):
        sl, nl = self.sets()
        ch = AccentChannel(rules={})
        rec = sample_accented_utterance(sl, nl, ("SEP",), ch, seed=3,
                                        frames_per_state=50)
        # SEP exists in both sets; samples must come from the alternate (6.0)
        assert abs(rec.utterance.features.mean() - 6.0) < 0.5

    def test_corpus_is_deterministic(self, channel):
        sl, _ = self.sets()
        nl = make_model_set({"t": [3.0], "s": [5.0]}, var=0.1)
        sents = [("A", "A"), ("A",)]
        c1 = make_synthetic_corpus(sl, nl, channel, sents, seed=5,
                                   frames_per_state=3)
        c2 = make_synthetic_corpus(sl, nl, channel, sents, seed=5,
                                   frames_per_state=3)
        assert len(c1.records) == 2
        for r1, r2 in zip(c1.records, c2.records):
            assert r1.surface == r2.surface
            assert np.array_equal(r1.utterance.features, r2.utterance.features)
        # per-utterance seeds differ
        assert not np.array_equal(c1.records[0].utterance.features[:3],
                                  c1.records[1].utterance.features[:3])
