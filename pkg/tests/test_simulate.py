import numpy as np
import pytest
from scipy import stats

from moesmn.model import CensoredData, gating_probs
from moesmn.simulate import (
    GIG,
    OUTLIER_LABEL,
    GeneratorSpec,
    LaplaceViaExp,
    apply_interval_censoring,
    apply_tail_censoring,
    generate_moe_data,
    gig_cdf,
    inject_outliers,
    sample_gig,
    scenario_asymptotic,
    scenario_gselect,
    scenario_heavytail,
    scenario_outliers,
)
from moesmn.smn import ParameterDomainError, SmnFamily


class TestGenerator:
    def test_zero_noise_exact(self):
        spec = GeneratorSpec(beta=[[1.0, 2.0], [-1.0, 0.5]], sigma2=[0.0, 0.0], tau=[[0.0, 3.0]],
                             mixing=SmnFamily.normal(), x_ranges=[(-1, 1)], r_equals_x=True)
        sim = generate_moe_data(spec, 200, 0)
        np.testing.assert_allclose(sim.y, np.sum(sim.X * spec.beta[sim.labels], axis=1), atol=0)

    def test_saturated_gate(self):
        spec = GeneratorSpec(beta=[[0.0], [1.0]], sigma2=[1.0, 1.0], tau=[[50.0]],
                             mixing=SmnFamily.normal(), x_ranges=[])
        assert np.all(generate_moe_data(spec, 500, 1).labels == 0)

    def test_proportions(self):
        spec = scenario_asymptotic("t")
        sim = generate_moe_data(spec, 20000, 2)
        expected = gating_probs(sim.R, spec.tau).mean(axis=0)
        observed = np.bincount(sim.labels, minlength=2) / sim.n
        np.testing.assert_allclose(observed, expected, atol=0.015)

    def test_deterministic(self):
        a = generate_moe_data(scenario_heavytail("bs"), 50, 7)
        b = generate_moe_data(scenario_heavytail("bs"), 50, 7)
        np.testing.assert_array_equal(a.y, b.y)

    @pytest.mark.parametrize("make", [lambda: scenario_gselect(), lambda: scenario_heavytail("laplace"),
                                      lambda: scenario_outliers("bs"), lambda: scenario_outliers("laplace")])
    def test_scenarios_shapes(self, make):
        spec = make()
        sim = generate_moe_data(spec, 30, 3)
        assert sim.X.shape == (30, spec.beta.shape[1]) and sim.R.shape == (30, spec.q)
        assert np.all(np.isfinite(sim.y))

    def test_validation(self):
        with pytest.raises(ValueError):
            GeneratorSpec(beta=[[0.0, 1.0]], sigma2=[1.0], tau=[], mixing=SmnFamily.normal(),
                          x_ranges=[])
        with pytest.raises(ValueError):
            GeneratorSpec(beta=[[0.0, 1.0]], sigma2=[1.0], tau=[], mixing=SmnFamily.normal(),
                          x_ranges=[(1, 1)])


class TestCensoring:
    def test_interval_count_and_bounds(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=100)
        c = apply_interval_censoring(y, 0.15, 1.0, rng)
        assert c.n_censored == 16
        r = c.rho
        assert np.all(c.c1[r] <= y[r]) and np.all(y[r] <= c.c2[r])
        assert np.all(c.c2[r] - c.c1[r] <= 1.0 + 1e-12)
        assert np.all(np.isnan(c.w[r])) and np.all(c.w[~r] == y[~r])

    def test_tail_threshold(self):
        y = np.arange(1.0, 11.0)
        c = apply_tail_censoring(y, 0.3, "right")
        assert c.c1[c.rho][0] == pytest.approx(7.3)
        np.testing.assert_array_equal(np.flatnonzero(c.rho), [7, 8, 9])
        assert np.all(c.c2[c.rho] == np.inf)

    def test_left_right_mirror(self):
        y = np.random.default_rng(1).normal(size=57)
        r = apply_tail_censoring(y, 0.2, "right")
        l = apply_tail_censoring(-y, 0.2, "left")
        np.testing.assert_array_equal(r.rho, l.rho)
        np.testing.assert_allclose(r.c1[r.rho], -l.c2[l.rho])

    def test_zero_fraction(self):
        assert apply_tail_censoring(np.ones(5), 0.0, "left").n_censored == 0
        with pytest.raises(ValueError):
            apply_tail_censoring(np.ones(5), 1.0, "left")
        with pytest.raises(ValueError):
            apply_tail_censoring(np.ones(5), 0.1, "up")

    def test_outliers(self):
        rng = np.random.default_rng(2)
        sim = generate_moe_data(scenario_outliers("gig"), 500, rng)
        d = apply_tail_censoring(sim.y, 0.075, "left").with_design(sim.X, sim.R)
        out, labels = inject_outliers(d, sim.labels, 0.06, rng)
        assert out.n == 530
        new = slice(500, None)
        assert np.all(out.w[new] == -2.0) and not np.any(out.rho[new])
        assert np.all(np.abs(out.X[new, 1]) < 1)
        np.testing.assert_array_equal(out.R[new], out.X[new])
        assert np.all(labels[new] == OUTLIER_LABEL)
        assert isinstance(out, CensoredData)


class TestMixingLaws:
    def test_inverse_gaussian_mean(self):
        g = GIG(-0.5, 1.0, 2.0)
        x = sample_gig(-0.5, 1.0, 2.0, np.random.default_rng(3), size=100_000)
        assert x.mean() == pytest.approx(g.mean(), rel=0.05)
        assert g.mean() == pytest.approx(np.sqrt(1 / 2), rel=1e-12)

    def test_gig_ks(self):
        x = sample_gig(0.5, 1.0, 2.0, np.random.default_rng(4), size=20_000)
        grid = np.quantile(x, np.linspace(0.01, 0.99, 99))
        F = gig_cdf(grid, 0.5, 1.0, 2.0)
        emp = np.searchsorted(np.sort(x), grid, side="right") / x.size
        assert np.max(np.abs(F - emp)) < 0.01

    def test_gig_reciprocal(self):
        # 1/GIG(k, chi, psi) is GIG(-k, psi, chi)
        x = 1.0 / sample_gig(0.5, 1.0, 3.0, np.random.default_rng(5), size=20_000)
        grid = np.quantile(x, np.linspace(0.05, 0.95, 19))
        emp = np.searchsorted(np.sort(x), grid, side="right") / x.size
        np.testing.assert_allclose(gig_cdf(grid, -0.5, 3.0, 1.0), emp, atol=0.015)

    def test_gig_domain(self):
        with pytest.raises(ParameterDomainError):
            sample_gig(0.5, 0.0, 1.0, np.random.default_rng(0))

    def test_laplace_errors(self):
        rng = np.random.default_rng(6)
        u = LaplaceViaExp(0.5).sample(100_000, rng)
        e = rng.standard_normal(u.size) / np.sqrt(u)
        assert stats.kstest(e, stats.laplace(scale=1.0).cdf).statistic < 0.01
