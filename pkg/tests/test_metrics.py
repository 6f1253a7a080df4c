import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moesmn.metrics import (
    aic_bic,
    align_components,
    best_matching,
    contingency,
    mcr,
    pair_count_indices_bruteforce,
    rand_indices,
    regression_mean_mse,
)
from moesmn.model import MixtureParams
from moesmn.smn import SmnFamily

N = SmnFamily.normal()


class TestCriteria:
    def test_examples(self):
        a, b = aic_bic(-100.0, 5, np.exp(2))
        assert a == pytest.approx(210.0) and b == pytest.approx(210.0)
        assert aic_bic(0.0, 0, 10) == (0.0, 0.0)
        assert aic_bic(-617.6, 19, 100)[0] == pytest.approx(1273.2)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            aic_bic(0.0, 1, 0)


class TestPartitions:
    def test_mcr_example(self):
        assert mcr([1, 1, 2, 2, 3, 3], [1, 1, 2, 3, 3, 3]) == pytest.approx(1 / 6)

    def test_mcr_relabel_invariant(self):
        assert mcr([0, 0, 1, 1], [5, 5, 7, 7]) == 0.0
        assert mcr([0, 0, 1, 1], [7, 7, 5, 5]) == 0.0

    def test_mcr_unequal_alphabets(self):
        assert mcr([0, 0, 0, 1], [0, 1, 2, 3]) == pytest.approx(0.5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mcr([0, 1], [0])
        with pytest.raises(ValueError):
            rand_indices([0, 1], [0, 1, 1])

    def test_rand_examples(self):
        ri, ari, jci = rand_indices([1, 1, 2, 2], [1, 2, 1, 2])
        assert ri == pytest.approx(1 / 3)
        assert ari == pytest.approx(-0.5)
        assert jci == 0.0
        ri, ari, jci = rand_indices([0] * 5, list(range(5)))
        assert ri == 0.0 and jci == 0.0

    def test_identical(self):
        assert rand_indices([0, 0, 1, 2], [3, 3, 4, 5]) == (1.0, 1.0, 1.0)

    def test_contingency(self):
        np.testing.assert_array_equal(contingency([0, 0, 1], ["a", "b", "b"]), [[1, 1], [0, 1]])

    def test_matching_large_alphabet(self):
        rng = np.random.default_rng(0)
        t = rng.integers(0, 10, 200)
        perm = rng.permutation(10)
        mapping, agree = best_matching(t, perm[t])
        assert agree == 200
        assert all(mapping[perm[k]] == k for k in range(10))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 40).flatmap(lambda n: st.tuples(
        st.lists(st.integers(0, 4), min_size=n, max_size=n),
        st.lists(st.integers(0, 4), min_size=n, max_size=n))))
    def test_bruteforce_oracle(self, ab):
        a, b = ab
        np.testing.assert_allclose(rand_indices(a, b), pair_count_indices_bruteforce(a, b),
                                   rtol=1e-12, atol=1e-12)

    def test_random_labels_ari_near_zero(self):
        rng = np.random.default_rng(1)
        vals = [rand_indices(rng.integers(0, 3, 200), rng.integers(0, 3, 200))[1]
                for _ in range(200)]
        assert abs(np.mean(vals)) < 0.05


class TestRegressionMse:
    def _theta(self, b0):
        return MixtureParams(np.array([[b0, 1.0], [0.0, -1.0]]), np.ones(2),
                             np.zeros((1, 2)), (N, N))

    def test_hand_value(self):
        # equal gates: mean shifts by b0 / 2 everywhere
        X = np.array([[1.0, 0.2], [1.0, -0.4], [1.0, 0.9]])
        assert regression_mean_mse(self._theta(0.6), self._theta(0.0), (X, X)) == pytest.approx(0.09)

    def test_pairs_equal_matrices(self):
        X = np.array([[1.0, 0.2], [1.0, -0.4]])
        pairs = [(x, x) for x in X]
        a = regression_mean_mse(self._theta(0.3), self._theta(0.0), pairs)
        assert a == pytest.approx(regression_mean_mse(self._theta(0.3), self._theta(0.0), (X, X)))

    def test_self_zero(self):
        X = np.array([[1.0, 0.2]])
        assert regression_mean_mse(self._theta(0.3), self._theta(0.3), (X, X)) == 0.0


def test_align_components():
    true = MixtureParams(np.array([[0.0, 1.0], [5.0, -1.0], [-3.0, 0.0]]), np.array([1.0, 2.0, 3.0]),
                         np.array([[0.1, 0.2], [0.3, 0.4]]), (N,) * 3)
    shuffled = true.permuted([2, 0, 1])
    back = align_components(shuffled, true)
    np.testing.assert_allclose(back.beta, true.beta)
    np.testing.assert_allclose(back.tau, true.tau, atol=1e-12)
