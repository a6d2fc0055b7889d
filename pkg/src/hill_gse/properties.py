"""Randomized property checks shared by ``hill-gse verify`` and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hill import DEFAULT_MODES, DEFAULT_ODE_STEPS, ground_state_discriminant, ground_state_galerkin
from .riccati import FloquetProblem, check_lemma21, phi, phi_batch
from .sampler import sample_batch

STREAM_BASE = 50


@dataclass(frozen=True)
class PropertyResult:
    name: str
    n_checked: int
    n_violations: int
    worst: float
    bound: float

    @property
    def passed(self):
        return self.n_violations == 0

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<28} {self.n_checked:>6} {self.n_violations:>6} {self.worst:>12.3e} {self.bound:>10.1e}  {status}"


def _pairs(kernel, n_pairs, seed, stream):
    """Half independent pairs, half nearby pairs g = f + εh.

    Pairs are scaled by factors in [1, 30] so that Φ is not negligible
    next to the sup norm.
    """
    b = sample_batch(kernel, 3 * n_pairs, seed, stream)
    f = b.tilde[:n_pairs].copy()
    g = b.tilde[n_pairs : 2 * n_pairs].copy()
    eps = np.geomspace(1e-4, 0.5, n_pairs - n_pairs // 2)
    g[n_pairs // 2 :] = f[n_pairs // 2 :] + eps[:, None] * b.tilde[2 * n_pairs + n_pairs // 2 :]
    scale = np.geomspace(1.0, 30.0, n_pairs)[np.random.default_rng([seed, stream]).permutation(n_pairs)]
    return f * scale[:, None], g * scale[:, None]


def lipschitz_phi(kernel, n_pairs=500, seed=42, modes=DEFAULT_MODES):
    """|Φ(f) - Φ(g)| <= ‖f - g‖∞ and |Φ(f)| <= ‖f‖∞ on random mean-zero pairs."""
    f, g = _pairs(kernel, n_pairs, seed, STREAM_BASE)
    pf, pg = phi_batch(f, modes), phi_batch(g, modes)
    d = np.abs(f - g).max(axis=1)
    r1 = np.abs(pf - pg) / d
    r2 = np.abs(pf) / np.abs(f).max(axis=1)
    slack = 1e-12
    bad = int(np.sum(np.abs(pf - pg) > d + slack) + np.sum(np.abs(pf) > np.abs(f).max(axis=1) + slack))
    return PropertyResult("Φ Lipschitz / sup bound", 2 * n_pairs, bad, float(max(r1.max(), r2.max())), 1.0)


def unit_slope(kernel, n=5, seed=42, ode_steps=DEFAULT_ODE_STEPS):
    """q₀(λ) = λ + Φ_s + s² has unit slope in λ."""
    b = sample_batch(kernel, n, seed, STREAM_BASE + 1)
    rng = np.random.default_rng([seed, STREAM_BASE + 1])
    worst, bad = 0.0, 0
    for i in range(n):
        s = float(rng.uniform(0.0, 1.5))
        lam = float(rng.uniform(-3.0, 3.0))
        rep = check_lemma21(b.tilde[i], s, lam, ode_steps=ode_steps)
        worst = max(worst, abs(rep.slope - 1.0))
        bad += not rep.ok
    return PropertyResult("unit slope of q₀(λ)", n, bad, worst, 1e-12)


def sup_bound(kernel, n=200, seed=42):
    """‖f‖∞² <= ‖K‖∞ ⟨f, 𝐊⁻¹f⟩ for random band-limited f."""
    b = sample_batch(kernel, n, seed, STREAM_BASE + 2)
    rng = np.random.default_rng([seed, STREAM_BASE + 2])
    f = b.values * rng.uniform(0.1, 10.0, size=(n, 1))
    worst, bad = 0.0, 0
    for row in f:
        lhs = float(np.abs(row).max() ** 2)
        rhs = kernel.sup_norm * kernel.quad_form_inv(row)
        worst = max(worst, lhs / rhs)
        bad += lhs > rhs * (1 + 1e-12)
    return PropertyResult("sup norm vs CM norm", n, bad, worst, 1.0)


def jacobian_checks(kernel, n=50, seed=42, ode_steps=DEFAULT_ODE_STEPS, h=1e-4):
    """J(s, q̃) > 0 and agreement with a centred difference of q₀(s)."""
    b = sample_batch(kernel, n, seed, STREAM_BASE + 3)
    rng = np.random.default_rng([seed, STREAM_BASE + 3])
    worst, bad = 0.0, 0
    for i in range(n):
        s = float(rng.uniform(0.05, 2.0))
        prob = FloquetProblem(b.tilde[i], ode_steps, check_mean=False)
        J = prob.jacobian(s)
        fd = ((prob.phi_at(s + h) + (s + h) ** 2) - (prob.phi_at(s - h) + (s - h) ** 2)) / (2 * h)
        rel = abs(J - fd) / abs(fd)
        worst = max(worst, rel)
        bad += (not J > 0) or rel > 1e-4
    return PropertyResult("Jacobian J>0 and FD", n, bad, worst, 1e-4)


def cross_solver(kernel, n=100, seed=42, modes=DEFAULT_MODES, ode_steps=DEFAULT_ODE_STEPS):
    """Galerkin and discriminant ground energies agree to 1e-8·(1 + ‖q‖∞)."""
    b = sample_batch(kernel, n, seed, STREAM_BASE + 4)
    worst, bad = 0.0, 0
    for q in b.values:
        g = ground_state_galerkin(q, modes).lambda0
        d = ground_state_discriminant(q, ode_steps, modes).lambda0
        rel = abs(g - d) / (1.0 + np.abs(q).max())
        worst = max(worst, rel)
        bad += rel > 1e-8
    return PropertyResult("cross-solver Λ₀", n, bad, worst, 1e-8)


def phi_identity(kernel, n=100, seed=42, modes=DEFAULT_MODES, ode_steps=DEFAULT_ODE_STEPS):
    """Φ from the ODE log-derivative vs -Λ₀ from the Galerkin eigenvalue."""
    b = sample_batch(kernel, n, seed, STREAM_BASE + 5)
    worst, bad = 0.0, 0
    lam = -phi_batch(b.tilde, modes)
    for i in range(n):
        d = phi(b.tilde[i], "discriminant", modes, ode_steps)
        err = max(abs(d.phi_logderiv + lam[i]), abs(d.phi - d.phi_logderiv))
        worst = max(worst, err)
        bad += err > 1e-8
    return PropertyResult("Φ = -Λ₀(q̃)", n, bad, worst, 1e-8)


def run_all(kernel, seed=42, modes=DEFAULT_MODES, ode_steps=DEFAULT_ODE_STEPS, scale=1.0):
    """The verify suite; ``scale`` shrinks the sample counts for smoke runs."""
    k = lambda n: max(2, int(round(n * scale)))
    return [
        lipschitz_phi(kernel, k(500), seed, modes),
        unit_slope(kernel, k(5), seed, ode_steps),
        sup_bound(kernel, k(200), seed),
        jacobian_checks(kernel, k(50), seed, ode_steps),
        cross_solver(kernel, k(100), seed, modes, ode_steps),
        phi_identity(kernel, k(100), seed, modes, ode_steps),
    ]
