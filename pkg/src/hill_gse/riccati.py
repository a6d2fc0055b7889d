"""Riccati map q = λ + p' + p² and the functional Φ.

For a mean-zero potential q̃ and log-multiplier s >= 0, let λ = λ_q̃(s)
be the energy below Λ₀(q̃) with discriminant Δ(λ) = 2cosh(s), and ψ the
positive Floquet solution with ψ(x + 1) = e^s ψ(x). Then p = ψ'/ψ has
∫p = s, p̃ = p - s is periodic and mean-zero, and

    Φ_s(q̃) = ∫ p̃² = -λ_q̃(s) - s².

At s = 0 this is Φ(q̃) = -Λ₀(q̃).

The map s ↦ q₀(s) = λ + Φ_s + s² at fixed λ has derivative
J(s, q̃) = -2 sinh(s) / Δ'(λ_q̃(s)), which equals 1/T with

    T = [∫e^{2W} ∫e^{-2W}] / (e^{2s} - 1) + ∫₀¹ e^{-2W(x)} ∫₀ˣ e^{2W(y)} dy dx,

W(x) = ∫₀ˣ (p̃ + s) = log(ψ(x)/ψ(0)).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .errors import ConfigError, RiccatiError
from .hill import (
    DEFAULT_MODES,
    DEFAULT_ODE_STEPS,
    DiscriminantSolver,
    _monodromy_kernel,
    _trace_and_derivative,
    ground_energies,
    ground_state_galerkin,
)

MEAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RiccatiData:
    """Riccati path of a mean-zero potential at log-multiplier ``s``.

    Attributes
    ----------
    p : ndarray
        ψ'/ψ on a uniform periodic grid (the RK4 nodes for the
        discriminant route, the potential grid for Galerkin).
    s : float
        ∫p, the log of the Floquet multiplier.
    lam : float
        The energy λ_q̃(s) with Δ(λ) = 2cosh(s).
    phi : float
        Φ_s = -λ - s², the shipped value.
    phi_logderiv : float
        ∫p̃² from the log-derivative, kept as a cross-check.
    """

    p: np.ndarray
    s: float
    lam: float
    phi: float
    phi_logderiv: float
    method: str = "discriminant"
    residual: float = 0.0
    W: np.ndarray | None = None

    @property
    def p_tilde(self):
        return self.p - self.s

    @property
    def lambda0_tilde(self):
        return self.lam


def _check_mean_zero(values):
    scale = max(1.0, np.abs(values).max())
    if abs(values.mean()) > MEAN_TOL * scale:
        raise ConfigError(f"q_tilde must be mean-zero (mean {values.mean():.3e})")


def _values(q_tilde):
    v = np.asarray(getattr(q_tilde, "tilde_values", q_tilde), dtype=float)
    _check_mean_zero(v)
    return v


def spectral_derivative(f):
    """Derivative of a periodic grid path on [0, 1) via FFT."""
    n = f.shape[-1]
    fh = np.fft.rfft(f, axis=-1)
    k = np.arange(fh.shape[-1])
    fh = fh * (2j * np.pi * k)
    if n % 2 == 0:
        fh[..., -1] = 0.0
    return np.fft.irfft(fh, n=n, axis=-1)


def phi_tolerance(values, tol=1e-8):
    return tol * (1.0 + np.abs(values).max()) ** 2


class FloquetProblem:
    """Floquet data of a fixed mean-zero potential across log-multipliers."""

    def __init__(self, q_tilde, ode_steps=DEFAULT_ODE_STEPS, check_mean=True):
        values = np.asarray(getattr(q_tilde, "tilde_values", q_tilde), dtype=float)
        if check_mean:
            _check_mean_zero(values)
        self.values = values
        self.solver = DiscriminantSolver(values, ode_steps)

    @cached_property
    def lambda0(self):
        return self.solver.ground_energy()

    def lambda_at(self, s):
        """λ_q̃(s); decreasing from Λ₀(q̃) at s = 0."""
        return self.solver.floquet_energy(float(s), self.lambda0)

    def phi_at(self, s):
        """Φ_s = -λ_q̃(s) - s², without building the eigenfunction."""
        return -self.lambda_at(s) - s * s

    def solve(self, s, tol=1e-8):
        """Positive Floquet solution, p = ψ'/ψ and Φ_s at log-multiplier ``s``."""
        if s < 0:
            raise ConfigError("log-multiplier s must be >= 0")
        lam = self.lambda_at(s)
        Y, P = self.solver.floquet_solution(lam, s)
        W = np.log(Y)
        s_meas = W[-1] - W[0]
        if abs(s_meas - s) > tol * max(1.0, s):
            raise RiccatiError(f"∫p = {s_meas:.12g} does not match s = {s:.12g}")
        p = (P / Y)[:-1]
        pt = p - s
        phi_ld = float(np.mean(pt * pt))
        phi = -lam - s * s
        if abs(phi - phi_ld) > phi_tolerance(self.values, tol):
            raise RiccatiError(f"Φ identity violated: -λ - s² = {phi:.12g}, ∫p̃² = {phi_ld:.12g}")
        # Riccati residual p' + p² + λ - q on the RK4 nodes
        qn = self.solver.qf[::2]
        res = float(np.sqrt(np.mean((spectral_derivative(p) + p * p + lam - qn) ** 2)))
        return RiccatiData(p, float(s), lam, phi, phi_ld, "discriminant", res, W)

    def jacobian(self, s, data=None, lam=None):
        """J(s, q̃) = ∂q₀/∂s at fixed (λ, q̃), by trapezoid quadrature of 1/J.

        ``lam`` may pass a precomputed λ_q̃(s) to skip the root-find.
        """
        if not s > 0:
            raise ConfigError("jacobian needs s > 0")
        if data is not None:
            return jacobian_from_W(data.W, s)
        lam = self.lambda_at(s) if lam is None else lam
        Y, _ = self.solver.floquet_solution(lam, s)
        W = np.log(Y)
        if abs(W[-1] - W[0] - s) > 1e-8 * max(1.0, s):
            raise RiccatiError(f"∫p = {W[-1] - W[0]:.12g} does not match s = {s:.12g}")
        return jacobian_from_W(W, s)

    def jacobian_discriminant(self, s):
        """Independent route: J = -2 sinh(s) / Δ'(λ_q̃(s))."""
        lam = self.lambda_at(s)
        _, tz, ls = _trace_and_derivative(self.solver.qf, lam)
        return float(-2.0 * np.sinh(s) * np.exp(-ls) / tz)


def jacobian_from_W(W, s):
    """1/T with T as in the module docstring; W sampled on ode_steps + 1 nodes."""
    h = 1.0 / (W.size - 1)
    ep = np.exp(2.0 * W)
    em = np.exp(-2.0 * W)
    Ip = np.trapezoid(ep, dx=h)
    Im = np.trapezoid(em, dx=h)
    inner = cumulative_trapezoid(ep, dx=h, initial=0.0)
    cross = np.trapezoid(em * inner, dx=h)
    T = Ip * Im / np.expm1(2.0 * s) + cross
    J = 1.0 / T
    if not J > 0:
        raise RiccatiError(f"non-positive Jacobian {J:.6g} at s = {s:.6g}")
    return float(J)


def phi(q_tilde, method="discriminant", modes=DEFAULT_MODES, ode_steps=DEFAULT_ODE_STEPS, tol=1e-8):
    """Φ(q̃) = ∫p² at s = 0, with the identity Φ = -Λ₀(q̃) asserted.

    ``method="discriminant"`` integrates the ODE; ``"galerkin"`` builds ψ
    from the Galerkin eigenvector and differentiates spectrally.
    """
    values = _values(q_tilde)
    if method == "discriminant":
        return FloquetProblem(values, ode_steps, check_mean=False).solve(0.0, tol)
    if method != "galerkin":
        raise ConfigError(f"unknown method {method!r}")
    gs = ground_state_galerkin(values, modes)
    if gs.psi.min() <= 0:
        raise RiccatiError("ground state not strictly positive on the grid")
    p = spectral_derivative(gs.psi) / gs.psi
    s = float(p.mean())
    if abs(s) > 1e-9:
        raise RiccatiError(f"∫p = {s:.3e} should vanish for the periodic ground state")
    phi_ld = float(np.mean(p * p))
    val = -gs.lambda0
    if abs(val - phi_ld) > phi_tolerance(values, tol):
        raise RiccatiError(f"Φ identity violated: -Λ₀ = {val:.12g}, ∫p² = {phi_ld:.12g}")
    return RiccatiData(p, 0.0, gs.lambda0, val, phi_ld, "galerkin", gs.residual)


def floquet_solve(q_tilde, s, ode_steps=DEFAULT_ODE_STEPS, tol=1e-8):
    return FloquetProblem(_values(q_tilde), ode_steps, check_mean=False).solve(float(s), tol)


def jacobian_J(q_tilde, s, ode_steps=DEFAULT_ODE_STEPS):
    return FloquetProblem(_values(q_tilde), ode_steps, check_mean=False).jacobian(float(s))


def phi_batch(q_tilde_batch, modes=DEFAULT_MODES):
    """Φ for each row by the identity Φ = -Λ₀(q̃) (Galerkin eigenvalues)."""
    return -ground_energies(q_tilde_batch, modes)


def reconstruct_potential(data: RiccatiData):
    """q̃ = p̃' + p̃² - Φ_s + 2s p̃ on the grid of ``data.p``."""
    pt = data.p_tilde
    return spectral_derivative(pt) + pt * pt - data.phi + 2.0 * data.s * pt


@dataclass(frozen=True)
class SlopeReport:
    slope: float
    slope_direct: float
    q0: float
    phi_s: float
    ok: bool


def check_lemma21(q_tilde, s, lam, h=2.0**-10, ode_steps=DEFAULT_ODE_STEPS):
    """Slope of λ ↦ q₀(λ) = λ + Φ_s(q̃) + s² at fixed (q̃, s).

    ``slope`` uses the formula with Φ_s computed once; ``slope_direct``
    re-solves for the q₀ at which q₀ + q̃ has multiplier e^s at energies
    λ and λ + h by bracketing on the discriminant of the shifted potential,
    so it checks the unit slope up to root-finding error.
    """
    values = _values(q_tilde)
    prob = FloquetProblem(values, ode_steps, check_mean=False)
    phi_s = prob.phi_at(s)
    q0 = lam + phi_s + s * s
    q1 = (lam + h) + phi_s + s * s
    slope = (q1 - q0) / h

    target = 2.0 * np.cosh(s)
    qf = prob.solver.qf
    lo_off = prob.lambda0 + 0.5
    hi_off = prob.solver.qmin - s * s - 1.0

    def shoot(energy):
        # the c with Δ_{q̃ + c}(energy) = 2cosh(s), by bracketing in c
        def f(c):
            a11, _, _, a22, ls = _monodromy_kernel(qf + c, energy)
            return np.exp(ls) * (a11 + a22) - target

        return brentq(f, energy - lo_off, energy - hi_off, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    d0, d1 = shoot(lam), shoot(lam + h)
    slope_direct = (d1 - d0) / h
    ok = abs(slope - 1.0) <= 1e-12 and abs(slope_direct - 1.0) <= 1e-9
    return SlopeReport(float(slope), float(slope_direct), float(q0), float(phi_s), bool(ok))
