import numpy as np
import pytest

from moesmn.ecme import FitOptions, e_step, fit
from moesmn.inference import information_matrix, information_se, score_names, score_vectors
from moesmn.model import CensoredData, MixtureParams, gating_probs, observed_loglik_terms
from moesmn.smn import SmnFamily
from moesmn.simulate import apply_tail_censoring, generate_moe_data, scenario_asymptotic

N = SmnFamily.normal()


def ols_data(n=500, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.uniform(-1, 1, n)])
    y = X @ [0.5, 2.0] + rng.standard_normal(n)
    return CensoredData.uncensored(y, X, X[:, :1])


def unpack(theta, v):
    """Inverse of the (tau, beta, sigma2) flattening."""
    G, p, q = theta.G, theta.p, theta.q
    k = (G - 1) * q
    return theta.copy(tau=v[:k].reshape(G - 1, q), beta=v[k:k + G * p].reshape(G, p),
                      sigma2=v[k + G * p:])


def fd_scores(data, theta, h=1e-6):
    v0 = np.concatenate([theta.tau.ravel(), theta.beta.ravel(), theta.sigma2])
    cols = []
    for k in range(v0.size):
        e = np.zeros_like(v0)
        e[k] = h
        up = observed_loglik_terms(data, unpack(theta, v0 + e))
        dn = observed_loglik_terms(data, unpack(theta, v0 - e))
        cols.append((up - dn) / (2 * h))
    return np.column_stack(cols)


class TestScores:
    def test_names_and_length(self):
        th = MixtureParams(np.zeros((3, 2)), np.ones(3), np.zeros((2, 4)), (N,) * 3)
        assert len(score_names(th)) == 2 * 4 + 3 * 2 + 3

    def test_tau_block_zero_at_prior(self):
        # identical components: z equals the gate, so the tau score vanishes
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(20), rng.normal(size=20)])
        d = CensoredData.uncensored(rng.normal(size=20), X, X)
        th = MixtureParams(np.zeros((2, 2)), np.ones(2), np.array([[0.4, -1.0]]), (N, N))
        S = score_vectors(d, th)
        np.testing.assert_allclose(S[:, :2], 0.0, atol=1e-14)

    def test_ols_gradient(self):
        d = ols_data(n=30)
        th = MixtureParams(np.array([[0.3, 1.5]]), np.array([1.4]), np.zeros((0, 1)), (N,))
        np.testing.assert_allclose(score_vectors(d, th), fd_scores(d, th), atol=1e-5)

    @pytest.mark.parametrize("fam", [N, SmnFamily.student_t(4.0), SmnFamily.slash(2.0),
                                     SmnFamily.contaminated_normal(0.3, 0.4)], ids=str)
    def test_censored_mixture_gradient(self, fam):
        # Fisher's identity: conditional expectation of the complete score is the observed score
        rng = np.random.default_rng(2)
        n = 12
        X = np.column_stack([np.ones(n), rng.uniform(-1, 1, n)])
        y = rng.normal(size=n)
        c = apply_tail_censoring(y, 0.3, "left").with_design(X, X)
        th = MixtureParams(np.array([[0.2, 1.0], [-0.5, -1.0]]), np.array([0.8, 1.6]),
                           np.array([[0.3, 0.9]]), (fam, fam))
        np.testing.assert_allclose(score_vectors(c, th), fd_scores(c, th), atol=1e-5)

    def test_score_sum_zero_at_mle(self):
        sim = generate_moe_data(scenario_asymptotic("n"), 400, 3)
        d = apply_tail_censoring(sim.y, 0.15, "right").with_design(sim.X, sim.R)
        rep = fit(d, 2, "n", FitOptions(tol=1e-10, compute_se=False))
        s = score_vectors(d, rep.theta).sum(axis=0)
        G, p, q = 2, 4, 3
        k = (G - 1) * q + G * p
        assert np.linalg.norm(s[:k]) < 1e-3 * np.sqrt(d.n)
        assert np.linalg.norm(s[k:]) < 1e-2 * np.sqrt(d.n)


class TestInformation:
    def test_psd(self):
        sim = generate_moe_data(scenario_asymptotic("n"), 200, 4)
        d = apply_tail_censoring(sim.y, 0.15, "right").with_design(sim.X, sim.R)
        rep = fit(d, 2, "t", FitOptions(compute_se=False))
        I = information_matrix(d, rep.theta)
        np.testing.assert_allclose(I, I.T)
        assert np.linalg.eigvalsh(I).min() >= -1e-10 * np.trace(I)

    def test_ols_se(self):
        d = ols_data()
        rep = fit(d, 1, "n")
        X = d.X
        ref = np.sqrt(rep.theta.sigma2[0] * np.diag(np.linalg.inv(X.T @ X)))
        np.testing.assert_allclose(rep.se.se[:2], ref, rtol=0.10)

    def test_duplicate_shrinks(self):
        d = ols_data(n=300, seed=5)
        th = fit(d, 1, "n").theta
        d2 = d.subset(np.concatenate([np.arange(d.n), np.arange(d.n)]))
        a = information_se(d, th).se
        b = information_se(d2, th).se
        np.testing.assert_allclose(b / a, 1 / np.sqrt(2), rtol=0.15)

    def test_unavailable_and_singular(self):
        d = ols_data(n=50)
        rep = fit(d, 1, "cn")
        assert rep.se.unavailable == ["nu", "gamma"]
        assert not rep.se.singular
        # a duplicated regressor makes the information singular
        X = np.column_stack([d.X, d.X[:, 1]])
        d2 = CensoredData.uncensored(d.w, X, d.R)
        th = MixtureParams(np.array([[0.5, 1.0, 1.0]]), np.ones(1), np.zeros((0, 1)), (N,))
        tab = information_se(d2, th)
        assert tab.singular and np.all(np.isfinite(tab.se))
