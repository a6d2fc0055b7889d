"""Acceptance criteria 1-12, one test each, at the stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line (also repeated in the
terminal summary) before asserting.
"""

import time

import numpy as np
import pytest
from scipy.stats import norm

from conftest import ACCEPTANCE_LINES
from hill_gse import cli
from hill_gse.hill import ground_state_discriminant, ground_state_galerkin
from hill_gse.montecarlo import (
    DensityEstimate,
    density_from_samples,
    estimate_density,
    estimate_density_direct,
    estimate_distribution_direct,
    estimate_distribution_thm23,
    fit_tail_rate,
    gaussian_envelope,
    kde_bias_allowance,
    phi_sample_set,
    right_tail_log_lower_bound,
)
from hill_gse.properties import cross_solver, jacobian_checks, sup_bound, lipschitz_phi, phi_identity
from hill_gse.riccati import check_lemma21, phi
from hill_gse.sampler import sample_batch
from hill_gse.variational import solve_euler_lagrange

N_SHARED = 100_000
N_LEFT = 20_000
LEFT_TARGET = 0.46212  # 1/(2K(0)) from tanh(m/2)·m at m = 1, see test below

pytestmark = pytest.mark.slow


def record(num, ok, detail):
    line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def shared_phi(ou):
    return phi_sample_set(ou, N_SHARED, seed=42)


def _est(ou, ss, lams, order=0):
    f, se, ne = density_from_samples(ss, lams, ou.sigma0_sq, order)
    return f, se


def test_left_target_oracle(ou):
    # 1/(2K(0)) with K(0) = coth(1/2)/2 equals tanh(1/2)
    assert np.tanh(0.5) == pytest.approx(LEFT_TARGET, abs=5e-6)
    assert 1 / (2 * ou.k0) == pytest.approx(LEFT_TARGET, rel=1e-3)


def test_criterion_01_exact_identities(ou, const_kernel):
    worst_c = max(abs(solver(np.full(512, c)).lambda0 - c)
                  for c in (-5.0, -0.3, 0.0, 1.7, 40.0)
                  for solver in (ground_state_galerkin, ground_state_discriminant))
    phi0 = max(abs(phi(np.zeros(512), m).phi) for m in ("galerkin", "discriminant"))
    lams = np.linspace(-4, 4, 17)
    f = estimate_density(const_kernel, lams, 1000)
    dens_err = float(np.abs(f.f_hat - norm.pdf(lams)).max())
    rng = np.random.default_rng(1)
    qt = sample_batch(ou, 3, seed=5).tilde
    slopes = [check_lemma21(q, float(rng.uniform(0, 1.5)), float(rng.uniform(-3, 3))).slope for q in qt]
    slope_err = max(abs(s - 1.0) for s in slopes)
    ok = worst_c <= 1e-10 and phi0 <= 1e-10 and dens_err <= 1e-15 and f.stderr.max() < 1e-15 and slope_err <= 1e-12
    record(1, ok, f"|Λ₀(c)-c| {worst_c:.1e}, Φ(0) {phi0:.1e}, const-kernel density err {dens_err:.1e}, "
                  f"slope err {slope_err:.1e}")


def test_criterion_02_cross_solver(ou):
    t0 = time.perf_counter()
    r = cross_solver(ou, 100, seed=42, modes=64, ode_steps=4096)
    dt = time.perf_counter() - t0
    record(2, r.n_violations == 0 and dt < 60, f"max |ΔΛ₀|/(1+‖q‖∞) = {r.worst:.2e} (≤ 1e-8), {dt:.1f} s")


def test_criterion_03_riccati_identity(ou):
    r = phi_identity(ou, 100, seed=42)
    record(3, r.n_violations == 0, f"max |Φ + Λ₀(q̃)| = {r.worst:.2e} (≤ 1e-8) on 100 samples")


def test_criterion_04_lipschitz(ou):
    r = lipschitz_phi(ou, 500, seed=42)
    record(4, r.n_violations == 0, f"{r.n_violations} violations on 500 pairs, worst ratio {r.worst:.3f}")


def test_criterion_05_jacobian(ou):
    r = jacobian_checks(ou, 50, seed=42)
    record(5, r.n_violations == 0, f"max rel |J - FD| = {r.worst:.2e} (≤ 1e-4), J > 0 on 50 pairs")


def test_criterion_06_formula_vs_kde(ou, shared_phi):
    lams = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    f, se = _est(ou, shared_phi, lams)
    f2, _ = _est(ou, shared_phi, lams, order=2)
    k = estimate_density_direct(ou, lams, N_SHARED, seed=42)
    tol = 3 * np.hypot(se, k.stderr) + kde_bias_allowance(k.bandwidth, f2)
    diff = np.abs(f - k.f_hat)
    record(6, bool(np.all(diff <= tol)), "max |f̂ - KDE|/tol = " + f"{(diff / tol).max():.2f} "
           f"at λ ∈ {{-2..2}}, n = {N_SHARED} each, h = {k.bandwidth:.3f}")


def test_criterion_07_distribution(ou):
    lams = [-1.0, 0.0, 1.0]
    t = estimate_distribution_thm23(ou, lams, 10_000, seed=42)
    d = estimate_distribution_direct(ou, lams, 10_000, seed=42)
    z = np.abs(t.p_hat - d.p_hat) / np.hypot(t.stderr, d.stderr)
    record(7, bool(np.all(z <= 3)), f"z = {np.array2string(z, precision=2)} (≤ 3), "
           f"P̂ = {np.array2string(t.p_hat, precision=4)}, failures {t.n_failed}")


def test_criterion_08_right_tail_bounds(ou, shared_phi):
    assert ou.sigma0_sq == pytest.approx(1.0)
    lams = np.array([1.0, 2.0, 3.0, 4.0])
    f, se = _est(ou, shared_phi, lams)
    f0, _ = _est(ou, shared_phi, [0.0])
    upper_ok = np.all(f - 3 * se <= gaussian_envelope(lams))
    lower = right_tail_log_lower_bound(lams, f0[0])
    lower_ok = np.all(np.log(f) >= lower - 3 * se / f)
    record(8, bool(upper_ok and lower_ok),
           f"f̂/envelope = {np.array2string(f / gaussian_envelope(lams), precision=3)}, "
           f"log f̂ - lower = {np.array2string(np.log(f) - lower, precision=3)}")


def test_criterion_09_tail_rates(ou, shared_phi):
    lr = np.arange(3.0, 6.01, 0.5)
    f, se = _est(ou, shared_phi, lr)
    z = np.zeros_like(lr)
    right = fit_tail_rate(DensityEstimate(lr, f, se, z, z, N_SHARED, 42, ou.sigma0_sq, ou.k0), "right", (3, 6))
    ll = np.arange(-8.0, -3.99, 0.5)
    left_est = estimate_density(ou, ll, N_LEFT, tilt="auto", seed=42)
    left = fit_tail_rate(left_est, "left", (-8, -4))
    left_err = abs(left.rate_hat - LEFT_TARGET) / LEFT_TARGET
    ok = right.rel_err <= 0.10 and left_err <= 0.20
    record(9, ok, f"right r̂ = {right.rate_hat:.4f} vs 0.5 ({100 * right.rel_err:.1f}% ≤ 10%), "
                  f"left r̂ = {left.rate_hat:.4f} vs {LEFT_TARGET} ({100 * left_err:.1f}% ≤ 20%), "
                  f"{N_LEFT} tilted samples per λ")


def test_criterion_10_variational(ou, const_kernel):
    lam = -100.0
    r = solve_euler_lagrange(ou, lam)
    target = 1 / (2 * ou.k0)
    rate_ok = abs(r.J_over_lambda2 - target) <= 0.05 * target
    shape = r.shape_error(ou)
    signs = bool(np.all(r.q_opt < 0) and np.all(r.a_opt < 0))
    resid = max(r.residuals.values())
    const = [solve_euler_lagrange(const_kernel, l).J_over_lambda2 for l in (-10.0, -100.0, -1000.0)]
    const_ok = max(abs(c - 0.5) for c in const) <= 1e-12
    ok = rate_ok and shape <= 0.05 and signs and resid <= 1e-6 * abs(lam) and const_ok
    record(10, ok, f"J/λ² = {r.J_over_lambda2:.5f} vs {target:.5f} (5%), shape err {shape:.3f} (≤ 0.05), "
                   f"signs {'ok' if signs else 'bad'}, max residual {resid:.1e}, constant kernel "
                   f"{'exact' if const_ok else 'off'}")


def test_criterion_11_sup_bound(ou):
    r = sup_bound(ou, 200, seed=42)
    record(11, r.n_violations == 0, f"{r.n_violations} violations on 200 paths, max ratio {r.worst:.3f}")


def test_criterion_12_reproducibility(tmp_path):
    outs = {}
    for threads in (1, 2):
        base = tmp_path / f"t{threads}"
        args = ["--threads", str(threads), "--seed", "7"]
        d, s = base.with_suffix(".density.csv"), base.with_suffix(".sample.csv")
        rc = cli.run(["density", "--lambda-min", "-4", "--lambda-max", "2", "--step", "1", "--n", "1500",
                      "--tilt", "auto", "--out", str(d)] + args)
        rc |= cli.run(["sample", "--n", "300", "--out", str(s)] + args)
        assert rc == 0
        outs[threads] = (d.read_bytes(), s.read_bytes())
    same = outs[1] == outs[2]
    record(12, same, "density (auto tilt) and sample CSVs byte-identical for --threads 1 vs 2")
