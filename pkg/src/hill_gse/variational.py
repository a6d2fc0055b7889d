"""Minimal-cost potentials with a prescribed ground-state energy.

Minimize J(q) = ½⟨q, 𝐊⁻¹q⟩ over potentials with Λ₀(q) = λ < 0. At a
minimizer q = 𝐊a with a' = 2pa, p = ψ'/ψ, i.e. a = -c ψ² for the ground
state ψ of q. The solver iterates

    q  →  β q with Λ₀(βq) = λ  →  ψ  →  a = -c ψ², ∫a = ∫(βq)/K̂(0)  →  𝐊a

from q⁰ = λ K/K(0) until the sup-norm update is below tol·|λ|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import ConfigError, NotInCameronMartinSpace, VariationalError
from .hill import coeffs_to_grid, galerkin_matrix, kinetic_diagonal
from .kernel import CovarianceKernel, from_spectrum, spectrum
from .riccati import spectral_derivative
from .sampler import sample_batch


def default_modes(lam, grid_size):
    """Galerkin size for a minimizer at energy λ (deeper wells need more modes)."""
    m = 64 if abs(lam) < 1000 else 128
    return min(m, grid_size // 2 - 1)


def J_of(kernel: CovarianceKernel, q):
    """J(q) = ½⟨q, 𝐊⁻¹q⟩."""
    return 0.5 * kernel.quad_form_inv(q)


class _ScaledProblem:
    """Ground state of βq for a fixed path q, reusing one Galerkin matrix."""

    def __init__(self, q, modes):
        self.q = q
        self.modes = modes
        H = galerkin_matrix(q, modes)
        self.T = np.diag(kinetic_diagonal(modes))
        self.V = H - self.T

    def lowest(self, beta, vectors=False):
        H = self.T + beta * self.V
        if vectors:
            w, v = sla.eigh(H, subset_by_index=[0, 0])
            return float(w[0]), v[:, 0]
        return float(sla.eigh(H, eigvals_only=True, subset_by_index=[0, 0])[0])

    def scale_to(self, lam):
        """β > 0 with Λ₀(βq) = λ; q must be negative with negative mean."""
        q = self.q
        if q.max() >= 0 or q.mean() >= 0:
            raise VariationalError("iterate is not strictly negative; cannot rescale")
        lo = 0.5 * abs(lam) / np.abs(q).max()
        hi = 2.0 * abs(lam) / abs(q.mean())
        f = lambda b: self.lowest(b) - lam
        flo, fhi = f(lo), f(hi)
        if not (flo > 0 > fhi):
            raise VariationalError(f"β bracket failed: Λ₀ - λ = {flo:.3e}, {fhi:.3e}")
        return brentq(f, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True, eq=False)
class VariationalResult:
    """Fixed point of the Euler-Lagrange iteration at energy ``lam``."""

    lam: float
    q_opt: np.ndarray
    a_opt: np.ndarray
    p_opt: np.ndarray
    psi: np.ndarray
    J_value: float
    residuals: dict
    iterations: int
    modes: int
    history: list = field(default_factory=list)

    @property
    def J_over_lambda2(self):
        return self.J_value / self.lam**2

    def shape_error(self, kernel):
        """‖q/λ - K/K(0)‖∞."""
        return float(np.max(np.abs(self.q_opt / self.lam - kernel.values / kernel.k0)))


def _ground(q, modes, lam):
    prob = _ScaledProblem(q, modes)
    e, v = prob.lowest(1.0, vectors=True)
    if v[0] < 0:
        v = -v
    psi = coeffs_to_grid(v, q.size)
    psi = psi / np.sqrt(np.mean(psi * psi))
    return e, psi


def _multiplier(kernel, psi, q):
    """a = -c ψ² with ∫a = ∫q / K̂(0), so that 𝐊a has the mean of q."""
    a = -psi * psi
    return a * (q.mean() / kernel.sigma0_sq / a.mean())


def solve_euler_lagrange(kernel: CovarianceKernel, lam, tol=1e-9, max_iters=500, modes=None, q_init=None):
    """Minimizer of J over {Λ₀(q) = λ} by the damped fixed-point iteration.

    The update is halved whenever the sup-norm change grows from one
    iteration to the next.

    Raises
    ------
    VariationalError
        On non-convergence, bracket failure or loss of negativity.
    """
    lam = float(lam)
    if not lam < 0:
        raise ConfigError("variational solve needs λ < 0")
    N = kernel.grid_size
    M = default_modes(lam, N) if modes is None else int(modes)
    q = lam * kernel.values / kernel.k0 if q_init is None else np.asarray(q_init, dtype=float).copy()
    prev_change = np.inf
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        beta = _ScaledProblem(q, M).scale_to(lam)
        qs = beta * q
        _, psi = _ground(qs, M, lam)
        q_next = kernel.apply(_multiplier(kernel, psi, qs))
        change = float(np.max(np.abs(q_next - qs)))
        if change > prev_change:
            q_next = qs + 0.5 * (q_next - qs)
        history.append(change / abs(lam))
        prev_change = change
        q = q_next
        if change <= tol * abs(lam):
            break
    else:
        raise VariationalError(f"no convergence in {max_iters} iterations (last change {history[-1]:.2e}·|λ|)")
    beta = _ScaledProblem(q, M).scale_to(lam)
    q_opt = beta * q
    e, psi = _ground(q_opt, M, lam)
    a_opt = _multiplier(kernel, psi, q_opt)
    if np.any(q_opt >= 0) or np.any(a_opt >= 0):
        raise VariationalError("minimizer or multiplier is not strictly negative")
    p = spectral_derivative(psi) / psi
    res = {
        "eigenvalue": abs(e - lam),
        "el": float(np.sqrt(np.mean((spectral_derivative(a_opt) - 2.0 * p * a_opt) ** 2))),
        "consistency": float(np.max(np.abs(q_opt - kernel.apply(a_opt)))),
        "alpha": float(abs(np.mean(spectral_derivative(a_opt) - 2.0 * p * a_opt))),
    }
    try:
        J = J_of(kernel, q_opt)
    except NotInCameronMartinSpace as exc:
        raise VariationalError(f"minimizer left the Cameron-Martin space: {exc}") from exc
    return VariationalResult(lam, q_opt, a_opt, p, psi, J, res, it, M, history)


def multistart(kernel, lam, n_starts=4, seed=0, **kw):
    """Best fixed point over the standard start and random negative starts.

    Random starts are λ·exp(0.5 g) with g a kernel sample, band-limited to
    the kernel's modes. Returns (best result, list of all J values).
    """
    results = [solve_euler_lagrange(kernel, lam, **kw)]
    b = sample_batch(kernel, max(n_starts - 1, 1), seed, stream=99)
    for i in range(n_starts - 1):
        g = b.tilde[i] / max(np.abs(b.tilde[i]).max(), 1e-300)
        start = lam * np.exp(0.5 * g)
        start = from_spectrum(spectrum(start) * kernel.support, kernel.grid_size)
        try:
            results.append(solve_euler_lagrange(kernel, lam, q_init=start, **kw))
        except VariationalError:
            continue
    best = min(results, key=lambda r: r.J_value)
    return best, [r.J_value for r in results]


@dataclass(frozen=True)
class RateRow:
    lam: float
    J_over_lambda2: float
    target: float
    eig_residual: float
    iterations: int
    shape_error: float


def rate_curve(kernel, lambdas, **kw):
    """J(q_λ)/λ² per λ, with the limit target 1/(2K(0))."""
    rows = []
    for lam in lambdas:
        if not lam < 0:
            raise ConfigError("rate_curve needs negative λ values")
        r = solve_euler_lagrange(kernel, lam, **kw)
        rows.append(RateRow(float(lam), r.J_over_lambda2, 1.0 / (2.0 * kernel.k0), r.residuals["eigenvalue"],
                            r.iterations, r.shape_error(kernel)))
    return rows
