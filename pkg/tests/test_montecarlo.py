import numpy as np
import pytest
from scipy.stats import norm

from hill_gse.errors import MonteCarloError
from hill_gse.montecarlo import (
    DensityEstimate,
    QuadratureSpec,
    clenshaw_curtis,
    estimate_density,
    estimate_density_direct,
    estimate_distribution_direct,
    estimate_distribution_thm23,
    fit_tail_rate,
    gaussian_envelope,
    map_blocks,
    tail_target,
)

LAMS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


class TestDensity:
    def test_constant_kernel_exact(self, const_kernel):
        est = estimate_density(const_kernel, LAMS, 64)
        np.testing.assert_allclose(est.f_hat, norm.pdf(LAMS), atol=1e-15)
        assert np.all(est.stderr < 1e-16)

    def test_threads_do_not_change_results(self, ou):
        a = estimate_density(ou, LAMS, 600, threads=1)
        b = estimate_density(ou, LAMS, 600, threads=3)
        np.testing.assert_array_equal(a.f_hat, b.f_hat)
        np.testing.assert_array_equal(a.stderr, b.stderr)

    def test_formula_vs_kde(self, ou):
        f = estimate_density(ou, [0.0], 3000)
        k = estimate_density_direct(ou, [0.0], 3000)
        assert abs(f.f_hat[0] - k.f_hat[0]) < 4 * np.hypot(f.stderr[0], k.stderr[0]) + 0.02

    def test_auto_tilt_matches_plain(self, ou):
        lam = [-3.0]
        plain = estimate_density(ou, lam, 4000, seed=1)
        tilted = estimate_density(ou, lam, 4000, seed=1, tilt="auto")
        assert tilted.tilt_theta[0] == 1.0
        assert tilted.n_eff[0] < 4000
        assert abs(plain.f_hat[0] - tilted.f_hat[0]) < 4 * np.hypot(plain.stderr[0], tilted.stderr[0])

    def test_derivative_of_constant_kernel(self, const_kernel):
        est = estimate_density(const_kernel, LAMS, 16, order=1)
        np.testing.assert_allclose(est.f_hat, -LAMS * norm.pdf(LAMS), atol=1e-15)


class TestDistribution:
    def test_s_integral_vs_direct(self, ou):
        lam = [-1.0, 0.0, 1.0]
        t = estimate_distribution_thm23(ou, lam, 40)
        d = estimate_distribution_direct(ou, lam, 2000)
        assert t.extra["inner_exact_err"] < 1e-6
        assert np.all(np.abs(t.p_hat - d.p_hat) < 4 * np.hypot(t.stderr, d.stderr) + 0.01)

    def test_constant_kernel(self, const_kernel):
        t = estimate_distribution_thm23(const_kernel, [0.5], 3)
        assert t.p_hat[0] == pytest.approx(norm.sf(0.5), abs=1e-6)

    def test_clenshaw_curtis(self):
        x, w = clenshaw_curtis(16)
        for k in range(0, 15):
            assert np.sum(w * x**k) == pytest.approx(1.0 / (k + 1), abs=1e-13)

    def test_smax(self):
        assert QuadratureSpec().resolve_smax([-16.0, 1.0]) == pytest.approx(16.0)


def _gauss_estimate(lams, rate):
    f = np.exp(-rate * lams**2)
    z = np.zeros_like(lams)
    return DensityEstimate(lams, f, z + 1e-300, z + 1.0, z, 1, 0, 1.0, 1.0)


class TestTails:
    def test_fit_recovers_rate(self):
        fit = fit_tail_rate(_gauss_estimate(np.linspace(3, 6, 7), 0.5), "right", (3, 6))
        assert fit.rate_hat == pytest.approx(0.5, rel=1e-12)
        assert fit.rel_err < 1e-12

    def test_too_few_points(self):
        with pytest.raises(MonteCarloError):
            fit_tail_rate(_gauss_estimate(np.array([3.0, 4.0, 5.0]), 0.5), "right", (3, 6))

    def test_targets(self, ou):
        assert tail_target("right", ou.sigma0_sq, ou.k0) == pytest.approx(0.5)
        assert tail_target("left", ou.sigma0_sq, ou.k0) == pytest.approx(1 / (2 * ou.k0))

    def test_envelope(self):
        assert gaussian_envelope(0.0) == pytest.approx(norm.pdf(0.0))


def test_map_blocks_ordered():
    parts = map_blocks(lambda start, count: np.arange(start, start + count), 1000, threads=3)
    np.testing.assert_array_equal(np.concatenate(parts), np.arange(1000))
