import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accenthmm.errors import ContractError, DimensionMismatchError
from accenthmm.models import (Gmm, compute_deltas, gmm_log_density,
                              merge_lightest_pair, resize_mixture,
                              split_heaviest, uniform_left_to_right)
from conftest import make_phone, single_gaussian


class TestGmmLogDensity:
    def test_standard_normal_at_mean(self):
        g = single_gaussian([0.0], 1.0)
        assert gmm_log_density(g, np.zeros(1)) == pytest.approx(
            -0.5 * np.log(2 * np.pi), abs=1e-12)

    def test_two_component_hand_computed(self):
        # equal-weight components at -1 and +1, unit variance, scored at 0:
        # both terms are exp(-0.5)/sqrt(2*pi), so the log-sum is
        # ln(exp(-0.5)/sqrt(2*pi)) = -0.5 - 0.5*ln(2*pi)
        g = Gmm(weights=np.array([0.5, 0.5]),
                means=np.array([[-1.0], [1.0]]),
                variances=np.ones((2, 1)))
        expected = -0.5 - 0.5 * np.log(2 * np.pi)
        assert gmm_log_density(g, np.zeros(1)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.41894, abs=1e-5)

    def test_monotone_tail(self):
        g = Gmm(weights=np.array([0.3, 0.7]),
                means=np.array([[-1.0], [1.0]]),
                variances=np.array([[0.5], [2.0]]))
        vals = [gmm_log_density(g, np.array([x])) for x in (3.0, 5.0, 10.0, 50.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_dimension_mismatch(self):
        g = single_gaussian([0.0, 0.0], 1.0)
        with pytest.raises(DimensionMismatchError):
            gmm_log_density(g, np.zeros(3))

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=2))
    def test_finite_for_finite_input(self, xs):
        g = single_gaussian([1.0, -2.0], 0.5)
        assert np.isfinite(gmm_log_density(g, np.array(xs)))


class TestComputeDeltas:
    def test_constant_sequence_zero_derivatives(self):
        static = np.full((10, 3), 4.2)
        out = compute_deltas(static)
        assert out.shape == (10, 9)
        assert np.all(out[:, 3:] == 0.0)

    def test_linear_ramp_interior(self):
        c = 0.7
        t = np.arange(20, dtype=float)
        static = (c * t)[:, None]
        out = compute_deltas(static, window=2)
        interior = slice(2, -2)
        assert np.allclose(out[interior, 1], c, atol=1e-12)
        # delta-delta needs its own margin: deltas are distorted near edges
        assert np.allclose(out[4:-4, 2], 0.0, atol=1e-12)

    def test_single_frame(self):
        out = compute_deltas(np.array([[1.0, 2.0]]))
        assert np.all(out[:, 2:] == 0.0)

    def test_window_validation(self):
        with pytest.raises(ContractError):
            compute_deltas(np.ones((3, 2)), window=0)

    def test_column_order(self):
        static = np.arange(12, dtype=float).reshape(4, 3)
        out = compute_deltas(static)
        assert np.array_equal(out[:, :3], static)


class TestMixtureOps:
    def test_split_preserves_weight_sum_and_mean(self, rng):
        g = Gmm(weights=np.array([0.7, 0.3]),
                means=rng.normal(size=(2, 3)),
                variances=rng.uniform(0.5, 1.0, (2, 3)))
        g2 = split_heaviest(g)
        assert g2.num_components == 3
        assert g2.weights.sum() == pytest.approx(1.0, abs=1e-12)
        mean_before = g.weights @ g.means
        mean_after = g2.weights @ g2.means
        assert np.allclose(mean_before, mean_after, atol=1e-12)

    def test_merge_moment_matching(self):
        g = Gmm(weights=np.array([0.8, 0.1, 0.1]),
                means=np.array([[0.0], [2.0], [4.0]]),
                variances=np.array([[1.0], [1.0], [1.0]]))
        g2 = merge_lightest_pair(g)
        assert g2.num_components == 2
        # merged component: mean 3, variance 1 + 1 (spread of the two means)
        assert g2.means[1, 0] == pytest.approx(3.0)
        assert g2.variances[1, 0] == pytest.approx(2.0)
        assert g2.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_resize_exact_count(self, rng):
        g = Gmm(weights=np.ones(1), means=rng.normal(size=(1, 2)),
                variances=np.ones((1, 2)))
        assert resize_mixture(g, 8).num_components == 8
        big = resize_mixture(g, 8)
        assert resize_mixture(big, 3).num_components == 3

    def test_merge_single_component_rejected(self):
        with pytest.raises(ContractError):
            merge_lightest_pair(single_gaussian([0.0]))


class TestValidation:
    def test_left_to_right_topology(self):
        hmm = make_phone("a", [0.0], num_states=3)
        hmm.validate()
        t = hmm.transitions
        assert np.all(np.tril(t, -1) == 0)
        assert t[-1, -1] == 1.0
        assert np.allclose(t[:-1].sum(axis=1), 1.0, atol=1e-12)

    def test_bad_weights_rejected(self):
        g = Gmm(weights=np.array([0.6, 0.6]), means=np.zeros((2, 1)),
                variances=np.ones((2, 1)))
        with pytest.raises(ContractError):
            g.validate()

    def test_uniform_left_to_right_shape(self):
        t = uniform_left_to_right(4, 0.5)
        assert t.shape == (6, 6)
        assert t[0, 1] == 1.0
