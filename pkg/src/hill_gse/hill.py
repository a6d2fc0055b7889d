"""Ground state of Hill's operator Q = -d²/dx² + q on the circle [0, 1).

Two independent solvers are provided:

* Fourier-Galerkin on the real basis {1, √2 cos 2πkx, √2 sin 2πkx},
  k = 1..M, by shifted inverse iteration with Rayleigh-quotient polish
  (single path) or batched LAPACK ``eigvalsh`` (Monte Carlo path).
* Floquet discriminant: RK4 integration of ψ'' = (q - λ)ψ over one
  period, root-finding on Δ(λ) = tr M(λ) = 2.

Both act on band-limited grid paths; the RK4 integrator samples the
trigonometric interpolant of q at the half steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg as sla

from .errors import BracketError, ConfigError, ConvergenceError, NumericalError
from .kernel import spectrum

DEFAULT_MODES = 64
DEFAULT_ODE_STEPS = 4096
RENORM_SEGMENTS = 16


def _values(q):
    v = getattr(q, "values", q)
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 4:
        raise ConfigError("potential must be a 1-D grid path")
    if not np.all(np.isfinite(v)):
        raise ConfigError("potential contains non-finite values")
    return v


@dataclass(frozen=True, eq=False)
class GroundState:
    """Minimal periodic eigenvalue and positive eigenfunction.

    ``psi`` lives on the potential's grid and satisfies ∫ψ² = 1.
    ``residual`` is the L² norm of the Galerkin-projected residual
    P(-ψ'' + qψ - λ₀ψ) onto the Fourier modes the solver resolves.
    """

    lambda0: float
    psi: np.ndarray
    method: str
    residual: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class MonodromyData:
    """Transfer matrix over one period, stored as ``exp(log_scale) * frame``."""

    frame: np.ndarray
    log_scale: float
    lam: float

    @property
    def transfer(self):
        return np.exp(self.log_scale) * self.frame

    @property
    def discriminant(self):
        return float(np.exp(self.log_scale) * np.trace(self.frame))

    @property
    def det(self):
        d = np.linalg.det(self.frame)
        return float(d * np.exp(2 * self.log_scale))

    def multipliers(self):
        """Floquet multipliers (μ, 1/μ) with |μ| >= 1 when they are real."""
        d = self.discriminant
        if abs(d) < 2:
            return complex(d / 2, np.sqrt(1 - d * d / 4)), complex(d / 2, -np.sqrt(1 - d * d / 4))
        mu = 0.5 * (d + np.sign(d) * np.sqrt(d * d - 4))
        return mu, 1.0 / mu


# ---------------------------------------------------------------------------
# Galerkin


def galerkin_matrix(q, modes):
    """Real symmetric Galerkin matrix (or stack of them) of size 2M + 1.

    With q̂(n) = R(n) - iS(n), the basis products give
    cos·cos = R(|j-k|) + R(j+k), sin·sin = R(|j-k|) - R(j+k),
    cos_j·sin_k = S(j+k) + sign(k-j) S(|j-k|).
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = q[None] if single else q
    n = q2.shape[-1]
    M = int(modes)
    if M < 1 or M > n // 2:
        raise ConfigError(f"galerkin modes must lie in [1, {n // 2}], got {M}")
    qh = spectrum(q2)
    if qh.shape[-1] < 2 * M + 1:
        qh = np.concatenate([qh, np.zeros((qh.shape[0], 2 * M + 1 - qh.shape[-1]))], axis=-1)
    # the Nyquist coefficient of a real grid path is ambiguous; it is zero for
    # the band-limited paths this package produces
    R, S = qh.real, -qh.imag
    j = np.arange(1, M + 1)
    d = np.abs(j[:, None] - j[None, :])
    s = j[:, None] + j[None, :]
    sgn = np.sign(j[None, :] - j[:, None])
    B = q2.shape[0]
    H = np.empty((B, 2 * M + 1, 2 * M + 1))
    r2 = np.sqrt(2.0)
    H[:, 0, 0] = R[:, 0]
    H[:, 0, 1 : M + 1] = r2 * R[:, 1 : M + 1]
    H[:, 1 : M + 1, 0] = H[:, 0, 1 : M + 1]
    H[:, 0, M + 1 :] = r2 * S[:, 1 : M + 1]
    H[:, M + 1 :, 0] = H[:, 0, M + 1 :]
    H[:, 1 : M + 1, 1 : M + 1] = R[:, d] + R[:, s]
    H[:, M + 1 :, M + 1 :] = R[:, d] - R[:, s]
    cs = S[:, s] + sgn * S[:, d]
    H[:, 1 : M + 1, M + 1 :] = cs
    H[:, M + 1 :, 1 : M + 1] = cs.transpose(0, 2, 1)
    diag = np.arange(2 * M + 1)
    H[:, diag, diag] += kinetic_diagonal(M)
    return H[0] if single else H


def kinetic_diagonal(modes):
    k = np.arange(1, modes + 1)
    return (2 * np.pi * np.concatenate([[0], k, k])) ** 2


def coeffs_to_grid(v, grid_size):
    """Evaluate a real-basis coefficient vector on the grid j/N."""
    M = (v.shape[-1] - 1) // 2
    L = grid_size
    while L < 2 * M + 2:
        L *= 2
    c = np.zeros(v.shape[:-1] + (L // 2 + 1,), dtype=complex)
    c[..., 0] = v[..., 0]
    c[..., 1 : M + 1] = (v[..., 1 : M + 1] - 1j * v[..., M + 1 :]) / np.sqrt(2.0)
    out = np.fft.irfft(c * L, n=L, axis=-1)
    return out[..., :: L // grid_size]


def ground_state_galerkin(q, modes=DEFAULT_MODES, tol=1e-10, max_iters=200):
    """Ground state by shifted inverse iteration on the Galerkin matrix.

    The shift ``min q - 1`` lies strictly below Λ₀, so H - shift is
    positive definite and one Cholesky factorization serves every
    iteration. Once the residual is below 1e-6 a few Rayleigh-quotient
    steps polish the pair to ``tol * (1 + ‖q‖∞)``.
    """
    values = _values(q)
    H = galerkin_matrix(values, modes)
    scale = 1.0 + np.abs(values).max()
    shift = values.min() - 1.0
    dim = H.shape[0]
    try:
        chol = sla.cho_factor(H - shift * np.eye(dim))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"shifted Galerkin matrix not positive definite: {exc}") from exc
    v = np.zeros(dim)
    v[0] = 1.0
    rho, res = float(H[0, 0]), np.inf
    it = 0
    for it in range(1, max_iters + 1):
        v = sla.cho_solve(chol, v)
        v /= np.linalg.norm(v)
        Hv = H @ v
        rho = float(v @ Hv)
        res = float(np.linalg.norm(Hv - rho * v))
        if res <= max(1e-6 * scale, tol * scale):
            break
    else:
        raise ConvergenceError(f"inverse iteration stalled after {max_iters} steps", residual=res)
    for _ in range(4):
        if res <= tol * scale:
            break
        try:
            with warnings.catch_warnings():
                # near-singularity is the point of a Rayleigh step
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                w = sla.solve(H - rho * np.eye(dim), v, assume_a="sym")
        except np.linalg.LinAlgError:
            break
        w /= np.linalg.norm(w)
        Hw = H @ w
        rho_w = float(w @ Hw)
        # a Rayleigh step may not leave the Kato-Temple window of the current pair
        if abs(rho_w - rho) > 2 * res:
            break
        v, rho = w, rho_w
        res = float(np.linalg.norm(Hw - rho * w))
    if res > tol * scale:
        raise ConvergenceError(f"Galerkin residual {res:.3e} above tolerance", residual=res)
    if v[0] < 0:
        v = -v
    psi = coeffs_to_grid(v, values.size)
    _check_positive(psi, "galerkin")
    return GroundState(rho, psi, "galerkin", res, it)


def ground_energies(q_batch, modes=DEFAULT_MODES, chunk=256):
    """Λ₀ for each row of ``q_batch`` by dense symmetric eigensolves.

    Rows whose eigensolve fails come back as NaN so that callers can count
    and drop them.
    """
    q_batch = np.atleast_2d(np.asarray(q_batch, dtype=float))
    out = np.empty(q_batch.shape[0])
    for lo in range(0, q_batch.shape[0], chunk):
        part = q_batch[lo : lo + chunk]
        H = galerkin_matrix(part, modes)
        try:
            out[lo : lo + part.shape[0]] = np.linalg.eigvalsh(H)[:, 0]
        except np.linalg.LinAlgError:
            for i in range(part.shape[0]):
                try:
                    out[lo + i] = np.linalg.eigvalsh(H[i])[0]
                except np.linalg.LinAlgError:
                    out[lo + i] = np.nan
    bad = ~np.all(np.isfinite(q_batch), axis=1)
    out[bad] = np.nan
    return out


def _check_positive(psi, method):
    if psi.min() <= -1e-10 * np.abs(psi).max() or psi.max() <= 0:
        raise NumericalError(f"{method} eigenfunction changes sign (min {psi.min():.3e})", module="hill")


# ---------------------------------------------------------------------------
# Floquet discriminant


def fine_potential(values, ode_steps):
    """Trigonometric interpolant of q at the RK4 nodes and midpoints (2·ode_steps points)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    F = 2 * int(ode_steps)
    if F < n:
        raise ConfigError(f"ode_steps={ode_steps} is coarser than the potential grid")
    c = np.fft.rfft(values)
    cc = np.zeros(F // 2 + 1, dtype=complex)
    cc[: n // 2] = c[: n // 2]
    return np.fft.irfft(cc, n=F) * (F / n)


@numba.njit(nogil=True, cache=True)
def _rk4_step(y, yp, c0, cm, c1, h):
    k1y = yp
    k1p = c0 * y
    k2y = yp + 0.5 * h * k1p
    k2p = cm * (y + 0.5 * h * k1y)
    k3y = yp + 0.5 * h * k2p
    k3p = cm * (y + 0.5 * h * k2y)
    k4y = yp + h * k3p
    k4p = c1 * (y + h * k3y)
    return (y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y),
            yp + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p))


@numba.njit(nogil=True, cache=True)
def _monodromy_kernel(qf, lam):
    nst = qf.shape[0] // 2
    F = qf.shape[0]
    h = 1.0 / nst
    a11, a12, a21, a22 = 1.0, 0.0, 0.0, 1.0
    logs = 0.0
    every = max(nst // 16, 1)
    for i in range(nst):
        c0 = qf[2 * i] - lam
        cm = qf[2 * i + 1] - lam
        c1 = qf[(2 * i + 2) % F] - lam
        a11, a21 = _rk4_step(a11, a21, c0, cm, c1, h)
        a12, a22 = _rk4_step(a12, a22, c0, cm, c1, h)
        if (i + 1) % every == 0:
            s = max(abs(a11), abs(a12), abs(a21), abs(a22))
            a11 /= s
            a12 /= s
            a21 /= s
            a22 /= s
            logs += np.log(s)
    return a11, a12, a21, a22, logs


@numba.njit(nogil=True, cache=True)
def _trace_and_derivative(qf, lam):
    """(tr Y, tr ∂Y/∂λ, log scale) with Δ = e^L tr Y and Δ' = e^L tr ∂Y/∂λ."""
    nst = qf.shape[0] // 2
    F = qf.shape[0]
    h = 1.0 / nst
    # state per column: y, y', z = ∂y/∂λ, z'
    st = np.zeros((2, 4))
    st[0, 0] = 1.0
    st[1, 1] = 1.0
    logs = 0.0
    every = max(nst // 16, 1)
    k = np.empty((4, 4))
    for i in range(nst):
        c0 = qf[2 * i] - lam
        cm = qf[2 * i + 1] - lam
        c1 = qf[(2 * i + 2) % F] - lam
        for col in range(2):
            y, yp, z, zp = st[col, 0], st[col, 1], st[col, 2], st[col, 3]
            k[0, 0] = yp
            k[0, 1] = c0 * y
            k[0, 2] = zp
            k[0, 3] = c0 * z - y
            for stage in range(1, 4):
                f = 0.5 * h if stage < 3 else h
                c = cm if stage < 3 else c1
                ty = y + f * k[stage - 1, 0]
                typ = yp + f * k[stage - 1, 1]
                tz = z + f * k[stage - 1, 2]
                tzp = zp + f * k[stage - 1, 3]
                k[stage, 0] = typ
                k[stage, 1] = c * ty
                k[stage, 2] = tzp
                k[stage, 3] = c * tz - ty
            for j in range(4):
                st[col, j] += h / 6.0 * (k[0, j] + 2 * k[1, j] + 2 * k[2, j] + k[3, j])
        if (i + 1) % every == 0:
            s = 0.0
            for col in range(2):
                s = max(s, abs(st[col, 0]), abs(st[col, 1]))
            for col in range(2):
                for j in range(4):
                    st[col, j] /= s
            logs += np.log(s)
    return st[0, 0] + st[1, 1], st[0, 2] + st[1, 3], logs


@numba.njit(nogil=True, cache=True)
def _discriminant_root(qf, target, lo, hi, x0, xtol, maxit):
    """Root of Δ(λ) = target in (lo, hi) with Δ(lo) > target > Δ(hi).

    Newton on Δ from ``x0`` with bisection safeguard; returns
    (λ, iterations, ok).
    """
    x = x0 if lo < x0 < hi else 0.5 * (lo + hi)
    dxold = hi - lo
    dx = dxold
    ty, tz, ls = _trace_and_derivative(qf, x)
    sc = np.exp(-ls)
    f = ty - target * sc
    df = tz
    for it in range(maxit):
        if f > 0:
            lo = x
        else:
            hi = x
        if f == 0.0:
            return x, it, True
        xn = x - f / df if df != 0.0 else lo - 1.0
        if xn <= lo or xn >= hi or abs(2.0 * f) > abs(dxold * df):
            dxold = dx
            dx = 0.5 * (hi - lo)
            x = lo + dx
        else:
            dxold = dx
            dx = f / df
            x = xn
        if abs(dx) <= xtol or hi - lo <= xtol:
            return x, it + 1, True
        ty, tz, ls = _trace_and_derivative(qf, x)
        sc = np.exp(-ls)
        f = ty - target * sc
        df = tz
    return x, maxit, False


@numba.njit(nogil=True, cache=True)
def _propagate(qf, lam, y0, yp0):
    nst = qf.shape[0] // 2
    F = qf.shape[0]
    h = 1.0 / nst
    Y = np.empty(nst + 1)
    P = np.empty(nst + 1)
    Y[0] = y0
    P[0] = yp0
    y, yp = y0, yp0
    for i in range(nst):
        y, yp = _rk4_step(y, yp, qf[2 * i] - lam, qf[2 * i + 1] - lam, qf[(2 * i + 2) % F] - lam, h)
        Y[i + 1] = y
        P[i + 1] = yp
    return Y, P


class DiscriminantSolver:
    """Floquet machinery for one potential at a fixed RK4 resolution.

    Parameters
    ----------
    q : grid path or PotentialSample
    ode_steps : int
        RK4 steps per period; a power of two no smaller than the grid.
    """

    def __init__(self, q, ode_steps=DEFAULT_ODE_STEPS):
        self.values = _values(q)
        n = self.values.size
        ode_steps = int(ode_steps)
        if ode_steps < n or ode_steps & (ode_steps - 1):
            raise ConfigError(f"ode_steps must be a power of two >= grid size {n}, got {ode_steps}")
        self.ode_steps = ode_steps
        self.qf = fine_potential(self.values, ode_steps)
        self.qmin = float(self.qf.min())
        self.qmean = float(self.values.mean())

    def monodromy(self, lam):
        a11, a12, a21, a22, ls = _monodromy_kernel(self.qf, float(lam))
        return MonodromyData(np.array([[a11, a12], [a21, a22]]), ls, float(lam))

    def discriminant(self, lam):
        return self.monodromy(lam).discriminant

    def _f(self, lam, target):
        a11, _, _, a22, ls = _monodromy_kernel(self.qf, float(lam))
        return a11 + a22 - target * np.exp(-ls)

    def root(self, target, lo, hi, xtol=1e-13, guess=None, bracketed=False):
        """Smallest λ in (lo, hi) with Δ(λ) = target (Δ(lo) > target assumed)."""
        if bracketed:
            pass
        elif not self._f(lo, target) > 0:
            raise BracketError(f"Δ({lo:.6g}) does not exceed {target:.6g}")
        elif self._f(hi, target) >= 0:
            # the upper end may sit past the first gap; scan for the first sign change
            grid = np.linspace(lo, hi, 65)
            for a, b in zip(grid[:-1], grid[1:]):
                if self._f(b, target) < 0:
                    lo, hi = a, b
                    break
            else:
                raise BracketError(f"no root of Δ = {target:.6g} in [{lo:.6g}, {hi:.6g}]")
        tol = xtol * max(1.0, abs(lo), abs(hi))
        x0 = 0.5 * (lo + hi) if guess is None else float(guess)
        lam, its, ok = _discriminant_root(self.qf, float(target), float(lo), float(hi), x0, tol, 200)
        if not ok:
            raise ConvergenceError(f"discriminant root did not converge in {its} steps")
        return float(lam)

    def ground_energy(self):
        return self.root(2.0, self.qmin - 1.0, self.qmean + 1.0)

    def floquet_energy(self, s, lam0=None, guess=None):
        """The λ below Λ₀ with Δ(λ) = 2cosh(s).

        For a mean-zero potential, min q - s² <= λ <= -s² - Φ_s <= -s²,
        which gives a tight bracket; the generic one is kept as fallback.
        """
        if s < 0:
            raise ConfigError("log-multiplier s must be >= 0")
        if s == 0:
            return self.ground_energy() if lam0 is None else lam0
        if s > 700:
            raise ConfigError("log-multiplier too large for double precision")
        lam0 = self.ground_energy() if lam0 is None else lam0
        target = 2.0 * np.cosh(s)
        pad = 1e-9 * (1.0 + abs(self.qmin) + s * s)
        lo = self.qmin - s * s - pad
        hi = min(lam0, self.qmean - s * s + pad)
        if guess is None:
            guess = lam0 - s * s
        if hi > lo:
            lam = self.root(target, lo, hi, guess=guess, bracketed=True)
            # an endpoint answer means the analytic bracket failed numerically
            if min(lam - lo, hi - lam) > 1e-12 * (1.0 + abs(lam)):
                return lam
        return self.root(target, self.qmin - s * s - 1.0, lam0, guess=guess)

    def floquet_solution(self, lam, s=0.0):
        """Positive solution with ψ(x + 1) = e^s ψ(x) on the RK4 nodes (ode_steps + 1 points).

        Returns (Y, P) with Y = ψ and P = ψ', normalized so that ψ(0) = 1.
        """
        mono = self.monodromy(lam)
        F = mono.frame
        mu = np.exp(s - mono.log_scale)
        v1 = np.array([F[0, 1], mu - F[0, 0]])
        v2 = np.array([mu - F[1, 1], F[1, 0]])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        if v[0] == 0:
            raise NumericalError("Floquet eigenvector has ψ(0) = 0", module="hill")
        v = v / v[0]
        Y, P = _propagate(self.qf, float(lam), v[0], v[1])
        if Y.min() <= 0 or not np.all(np.isfinite(Y)):
            raise NumericalError(f"Floquet solution not positive at λ = {lam:.6g}", module="hill")
        return Y, P


def projected_residual(psi, q, lam, modes):
    """‖P_M(-ψ'' + qψ - λψ)‖₂ from values on a uniform periodic grid."""
    n = psi.size
    ph = np.fft.rfft(psi) / n
    k = np.arange(ph.size)
    r = ((2 * np.pi * k) ** 2 - lam) * ph + np.fft.rfft(q * psi) / n
    w = np.full(ph.size, 2.0)
    w[0] = 1.0
    r, w = r[: modes + 1], w[: modes + 1]
    return float(np.sqrt(np.sum(w * np.abs(r) ** 2)))


def ground_state_discriminant(q, ode_steps=DEFAULT_ODE_STEPS, modes=DEFAULT_MODES):
    """Ground state from the smallest root of Δ(λ) = 2.

    The residual is evaluated on the RK4 nodes and projected onto
    |k| <= ``modes``, the same subspace the Galerkin residual measures.
    Higher modes carry the O(h⁴) integrator error amplified by k².
    """
    solver = DiscriminantSolver(q, ode_steps)
    lam = solver.ground_energy()
    Y, P = solver.floquet_solution(lam, 0.0)
    y = Y[:-1]
    y = y / np.sqrt(np.mean(y * y))
    n = solver.values.size
    res = projected_residual(y, solver.qf[::2], lam, int(modes))
    psi = y[:: solver.ode_steps // n].copy()
    _check_positive(psi, "discriminant")
    return GroundState(lam, psi, "discriminant", res)


def monodromy(q, lam, ode_steps=DEFAULT_ODE_STEPS):
    return DiscriminantSolver(q, ode_steps).monodromy(lam)


def discriminant(q, lam, ode_steps=DEFAULT_ODE_STEPS):
    return DiscriminantSolver(q, ode_steps).discriminant(lam)


def ground_state(q, method="galerkin", modes=DEFAULT_MODES, ode_steps=DEFAULT_ODE_STEPS):
    if method == "galerkin":
        return ground_state_galerkin(q, modes)
    if method == "discriminant":
        return ground_state_discriminant(q, ode_steps)
    raise ConfigError(f"unknown eigen-solver {method!r}")
