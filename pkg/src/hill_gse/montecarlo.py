"""Monte Carlo estimators for the law of the ground-state energy Λ₀(q).

Density formula (q₀ ~ N(0, σ₀²) independent of q̃, σ₀² = K̂(0)):

    f(λ) = E[ φ_σ₀(λ + Φ(q̃)) ],      f'(λ) = -E[ (λ + Φ)/σ₀² · φ_σ₀(λ + Φ) ],

where φ_σ is the centred normal density. Φ is computed once per sample and
reused across the λ grid.

Distribution function through the Riccati change of variables:

    P(Λ₀ > λ) = E[ ∫₀^∞ φ_σ₀(λ + Φ_s(q̃) + s²) J(s, q̃) ds ].

Samples are split into fixed blocks of :data:`~hill_gse.sampler.BLOCK_SIZE`
indices; workers process whole blocks and results are reassembled in
index order, so estimates do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, MonteCarloError, NumericalError
from .hill import DEFAULT_MODES, DEFAULT_ODE_STEPS, ground_energies
from .kernel import CovarianceKernel
from .riccati import FloquetProblem, phi_batch
from .sampler import BLOCK_SIZE, TiltSpec, make_tilt_toward_optimal, sample_batch

STREAM_FORMULA = 0
STREAM_DIRECT = 1
STREAM_S_INTEGRAL = 2
STREAM_DIST_DIRECT = 3
STREAM_FIXED_TILT = 4
STREAM_AUTO_TILT = 2_000_000

MAX_FAIL_FRACTION = 1e-3
AUTO_TILT_THRESHOLD = -2.0


def gauss(z, var):
    return np.exp(-0.5 * z * z / var) / math.sqrt(2 * math.pi * var)


def map_blocks(fn, n_samples, threads=1):
    """Apply ``fn(start, count)`` to consecutive blocks; results in index order."""
    starts = list(range(0, n_samples, BLOCK_SIZE))
    args = [(s, min(BLOCK_SIZE, n_samples - s)) for s in starts]
    if threads <= 1 or len(args) == 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: fn(*a), args))


def _check_failures(n_failed, n_total, what):
    if n_failed > MAX_FAIL_FRACTION * n_total:
        raise MonteCarloError(f"{n_failed} of {n_total} {what} failed (limit {MAX_FAIL_FRACTION:.1%})")


# ---------------------------------------------------------------------------
# sample sets


@dataclass(frozen=True, eq=False)
class PhiSampleSet:
    """Φ(q̃ᵢ) and log likelihood ratios for one sample stream."""

    phi: np.ndarray
    log_weight: np.ndarray
    n_requested: int
    n_failed: int
    seed: int
    stream: int
    tilt: TiltSpec | None = None

    @property
    def n(self):
        return self.phi.size

    @property
    def weights(self):
        return np.exp(self.log_weight)

    @property
    def theta(self):
        return 0.0 if self.tilt is None else self.tilt.theta


def phi_sample_set(kernel, n_samples, seed=42, stream=STREAM_FORMULA, tilt=None, modes=DEFAULT_MODES, threads=1):
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")

    def work(start, count):
        b = sample_batch(kernel, count, seed, stream, start, tilt)
        return phi_batch(b.tilde, modes), b.log_weight

    parts = map_blocks(work, n_samples, threads)
    phi = np.concatenate([p[0] for p in parts])
    lw = np.concatenate([p[1] for p in parts])
    ok = np.isfinite(phi) & np.isfinite(lw)
    n_failed = int((~ok).sum())
    _check_failures(n_failed, n_samples, "eigensolves")
    return PhiSampleSet(phi[ok], lw[ok], n_samples, n_failed, seed, stream, tilt)


def lambda0_samples(kernel, n_samples, seed=42, stream=STREAM_DIRECT, modes=DEFAULT_MODES, threads=1):
    """Λ₀ of full potentials q = q₀ + q̃ by direct eigensolves."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")

    def work(start, count):
        return ground_energies(sample_batch(kernel, count, seed, stream, start).values, modes)

    lam = np.concatenate(map_blocks(work, n_samples, threads))
    ok = np.isfinite(lam)
    _check_failures(int((~ok).sum()), n_samples, "eigensolves")
    return lam[ok]


# ---------------------------------------------------------------------------
# density formula


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """Pointwise estimates on a λ grid with Monte Carlo standard errors.

    ``kind`` is ``"density"``, ``"derivative"``, ``"second_derivative"``
    or ``"kde"``. ``n_eff`` is the Kish effective sample size of the
    weights used at each λ and ``tilt_theta`` the tilt strength (0 when
    untilted).
    """

    lambdas: np.ndarray
    f_hat: np.ndarray
    stderr: np.ndarray
    n_eff: np.ndarray
    tilt_theta: np.ndarray
    n_samples: int
    seed: int
    sigma0_sq: float
    k0: float
    kind: str = "density"
    tilt_used: str = "none"
    n_failed: int = 0
    bandwidth: float = float("nan")
    extra: dict = field(default_factory=dict)


def _weighted_stats(values, weights):
    n = values.shape[-1]
    v = values * weights
    mean = v.sum(axis=-1) / n
    if n > 1:
        se = v.std(axis=-1, ddof=1) / math.sqrt(n)
    else:
        se = np.full(mean.shape, np.inf)
    return mean, se


def _integrand(lam, phi, var, order):
    z = lam[:, None] + phi[None, :]
    g = gauss(z, var)
    if order == 0:
        return g
    if order == 1:
        return -(z / var) * g
    if order == 2:
        return (z * z / var - 1.0) / var * g
    raise ConfigError("derivative order must be 0, 1 or 2")


def density_from_samples(samples: PhiSampleSet, lambdas, sigma0_sq, order=0, chunk=8):
    """Weighted sample means of the density-formula integrand (or its λ-derivatives)."""
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    w = samples.weights
    f = np.empty(lambdas.size)
    se = np.empty(lambdas.size)
    for lo in range(0, lambdas.size, chunk):
        sl = slice(lo, lo + chunk)
        f[sl], se[sl] = _weighted_stats(_integrand(lambdas[sl], samples.phi, sigma0_sq, order), w)
    n_eff = np.full(lambdas.size, w.sum() ** 2 / np.sum(w * w))
    return f, se, n_eff


def _auto_stream(lam):
    return STREAM_AUTO_TILT + int(round(-1000.0 * lam))


def estimate_density(
    kernel: CovarianceKernel,
    lambdas,
    n_samples,
    tilt=None,
    seed=42,
    modes=DEFAULT_MODES,
    threads=1,
    theta=1.0,
    tilt_threshold=AUTO_TILT_THRESHOLD,
    samples: PhiSampleSet | None = None,
    order=0,
):
    """Density (``order=0``) or its derivatives from the Φ-formula.

    Parameters
    ----------
    tilt : None, TiltSpec or "auto"
        ``None`` uses one untilted sample set for all λ. A TiltSpec uses one
        tilted set. ``"auto"`` keeps the untilted set for λ > tilt_threshold
        and, for each λ <= tilt_threshold, draws a separate set tilted
        toward θ·λ(K - ∫K)/K(0).
    samples : PhiSampleSet, optional
        Reuse a precomputed untilted set instead of drawing one.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    var = kernel.sigma0_sq
    f = np.empty(lambdas.size)
    se = np.empty(lambdas.size)
    n_eff = np.empty(lambdas.size)
    th = np.zeros(lambdas.size)
    n_failed = 0
    if isinstance(tilt, TiltSpec):
        ss = phi_sample_set(kernel, n_samples, seed, STREAM_FIXED_TILT, tilt, modes, threads)
        f, se, n_eff = density_from_samples(ss, lambdas, var, order)
        th[:] = tilt.theta
        return DensityEstimate(lambdas, f, se, n_eff, th, n_samples, seed, var, kernel.k0,
                               _KINDS[order], "fixed", ss.n_failed)
    if tilt not in (None, "auto", "none"):
        raise ConfigError(f"unknown tilt policy {tilt!r}")
    auto = tilt == "auto"
    plain = np.ones(lambdas.size, dtype=bool)
    if auto:
        plain = lambdas > tilt_threshold
    if plain.any():
        ss = samples or phi_sample_set(kernel, n_samples, seed, STREAM_FORMULA, None, modes, threads)
        f[plain], se[plain], n_eff[plain] = density_from_samples(ss, lambdas[plain], var, order)
        n_failed += ss.n_failed
    for i in np.flatnonzero(~plain):
        lam = lambdas[i]
        t = make_tilt_toward_optimal(kernel, lam, theta)
        ss = phi_sample_set(kernel, n_samples, seed, _auto_stream(lam), t, modes, threads)
        f[i], se[i], n_eff[i] = (a[0] for a in density_from_samples(ss, [lam], var, order))
        th[i] = theta
        n_failed += ss.n_failed
    return DensityEstimate(lambdas, f, se, n_eff, th, n_samples, seed, var, kernel.k0,
                           _KINDS[order], "auto" if auto else "none", n_failed)


_KINDS = {0: "density", 1: "derivative", 2: "second_derivative"}


def estimate_density_derivative(kernel, lambdas, n_samples, seed=42, **kw):
    return estimate_density(kernel, lambdas, n_samples, seed=seed, order=1, **kw)


def estimate_density_direct(kernel, lambdas, n_samples, bandwidth=None, seed=42, modes=DEFAULT_MODES,
                            threads=1, lambda0=None):
    """Gaussian KDE of directly sampled Λ₀ values (no boundary correction).

    ``bandwidth=None`` uses Silverman's rule 1.06·σ̂·n^(-1/5).
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    lam0 = lambda0_samples(kernel, n_samples, seed, STREAM_DIRECT, modes, threads) if lambda0 is None else lambda0
    n = lam0.size
    if bandwidth is None:
        bandwidth = 1.06 * lam0.std(ddof=1) * n ** -0.2
    if not bandwidth > 0:
        raise ConfigError("bandwidth must be positive")
    f = np.empty(lambdas.size)
    se = np.empty(lambdas.size)
    ones = np.ones(n)
    for lo in range(0, lambdas.size, 8):
        sl = slice(lo, lo + 8)
        vals = gauss(lambdas[sl, None] - lam0[None, :], bandwidth**2)
        f[sl], se[sl] = _weighted_stats(vals, ones)
    return DensityEstimate(lambdas, f, se, np.full(lambdas.size, float(n)), np.zeros(lambdas.size),
                           n_samples, seed, kernel.sigma0_sq, kernel.k0, "kde", "none",
                           n_samples - n, float(bandwidth), {"lambda0": lam0})


def kde_bias_allowance(bandwidth, f_second):
    """Leading-order KDE bias ½h²|f''|."""
    return 0.5 * bandwidth**2 * np.abs(f_second)


# ---------------------------------------------------------------------------
# distribution function


@dataclass(frozen=True)
class QuadratureSpec:
    """Nested Clenshaw-Curtis rule on [0, s_max].

    ``s_max=None`` picks 4·max(1, √max|λ|). Levels are powers of two of the
    number of subintervals; refinement stops when two consecutive levels
    agree to ``tol`` at every λ. The rule converges geometrically, so the
    accepted finer level is typically accurate far below ``tol``.
    """

    s_max: float | None = None
    min_level: int = 4
    max_level: int = 9
    tol: float = 1e-4

    def resolve_smax(self, lambdas):
        need = 4.0 * max(1.0, math.sqrt(float(np.max(np.abs(lambdas)))))
        if self.s_max is None:
            return need
        if self.s_max < need:
            raise ConfigError(f"s_max = {self.s_max} is below the required {need:.3g}")
        return float(self.s_max)


def clenshaw_curtis(n):
    """Nodes and weights on [0, 1] for n (even) subintervals."""
    k = np.arange(n + 1)
    theta = np.pi * k / n
    j = np.arange(1, n // 2 + 1)
    b = np.where(j == n // 2, 1.0, 2.0)
    c = np.where((k == 0) | (k == n), 1.0, 2.0)
    w = c / n * (1.0 - np.cos(2.0 * np.outer(theta, j)) @ (b / (4.0 * j * j - 1.0)))
    return 0.5 * (1.0 - np.cos(theta)), 0.5 * w


def s_integral_inner(prob: FloquetProblem, lambdas, sigma0_sq, spec: QuadratureSpec, s_max):
    """∫₀^{s_max} φ_σ(λ + Φ_s + s²) J(s) ds for each λ; also returns node count."""
    cache = {}
    lam0 = prob.lambda0
    prev = None
    top = spec.max_level
    for level in range(spec.min_level, top + 1):
        n = 2**level
        stride = 2 ** (top - level)
        t, w = clenshaw_curtis(n)
        g = np.empty(n + 1)
        J = np.empty(n + 1)
        for k in range(n + 1):
            key = k * stride
            if key not in cache:
                s = s_max * t[k]
                if k == 0:
                    cache[key] = (-lam0, 0.0)
                else:
                    # Φ_s varies slowly: seed Newton with the neighbouring node's Φ
                    s_prev = s_max * t[k - 1]
                    guess = -s * s - (g[k - 1] - s_prev * s_prev)
                    lam_s = prob.solver.floquet_energy(s, lam0, guess)
                    cache[key] = (-lam_s, prob.jacobian(s, lam=lam_s))
            g[k], J[k] = cache[key]
        vals = gauss(lambdas[:, None] + g[None, :], sigma0_sq) * J[None, :]
        est = s_max * (vals @ w)
        if prev is not None and np.max(np.abs(est - prev)) <= spec.tol:
            return est, len(cache)
        prev = est
    raise MonteCarloError(f"Clenshaw-Curtis did not reach tol {spec.tol:g} with {2**top + 1} nodes")


@dataclass(frozen=True, eq=False)
class DistributionEstimate:
    """Estimates of P(Λ₀ > λ) with standard errors."""

    lambdas: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray
    n_samples: int
    seed: int
    method: str
    n_failed: int = 0
    extra: dict = field(default_factory=dict)


def estimate_distribution_thm23(kernel, lambdas, n_samples, s_quad: QuadratureSpec | None = None, seed=42,
                                ode_steps=DEFAULT_ODE_STEPS, threads=1):
    """P(Λ₀ > λ) from the s-integral of the Jacobian-weighted density formula.

    ``extra["inner_exact_err"]`` records max |inner integral - (1 - Φ_N((λ + Φ₀)/σ₀))|
    over samples, the error of the quadrature and Jacobian for each path.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    spec = s_quad or QuadratureSpec()
    s_max = spec.resolve_smax(lambdas)
    var = kernel.sigma0_sq
    sd = math.sqrt(var)

    def work(start, count):
        b = sample_batch(kernel, count, seed, STREAM_S_INTEGRAL, start)
        out = np.full((count, lambdas.size), np.nan)
        err = 0.0
        nodes = 0
        for i in range(count):
            try:
                prob = FloquetProblem(b.tilde[i], ode_steps, check_mean=False)
                est, nn = s_integral_inner(prob, lambdas, var, spec, s_max)
            except NumericalError:
                continue
            out[i] = est
            nodes += nn
            err = max(err, float(np.max(np.abs(est - ndtr(-(lambdas - prob.lambda0) / sd)))))
        return out, err, nodes

    parts = map_blocks(work, n_samples, threads)
    vals = np.concatenate([p[0] for p in parts])
    ok = np.all(np.isfinite(vals), axis=1)
    n_failed = int((~ok).sum())
    _check_failures(n_failed, n_samples, "Floquet quadratures")
    vals = vals[ok]
    p, se = _weighted_stats(vals.T, np.ones(vals.shape[0]))
    extra = {
        "inner_exact_err": max(p_[1] for p_ in parts),
        "mean_nodes": sum(p_[2] for p_ in parts) / max(vals.shape[0], 1),
        "s_max": s_max,
    }
    return DistributionEstimate(lambdas, p, se, n_samples, seed, "thm23", n_failed, extra)


def estimate_distribution_direct(kernel, lambdas, n_samples, seed=42, modes=DEFAULT_MODES, threads=1):
    """Empirical P(Λ₀ > λ) from direct eigensolves."""
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    lam0 = lambda0_samples(kernel, n_samples, seed, STREAM_DIST_DIRECT, modes, threads)
    ind = (lam0[None, :] > lambdas[:, None]).astype(float)
    p, se = _weighted_stats(ind, np.ones(lam0.size))
    return DistributionEstimate(lambdas, p, se, n_samples, seed, "direct", n_samples - lam0.size)


# ---------------------------------------------------------------------------
# tails


@dataclass(frozen=True)
class TailFit:
    side: str
    rate_hat: float
    intercept: float
    window: tuple
    target: float
    n_points: int

    @property
    def rel_err(self):
        return abs(self.rate_hat - self.target) / self.target


def tail_target(side, sigma0_sq, k0):
    """Limit of -log f(λ)/λ²: 1/(2∫K) on the right, 1/(2K(0)) on the left."""
    if side == "right":
        return 1.0 / (2.0 * sigma0_sq)
    if side == "left":
        return 1.0 / (2.0 * k0)
    raise ConfigError(f"side must be 'left' or 'right', got {side!r}")


def fit_tail_rate(est: DensityEstimate, side, window):
    """Least-squares fit of log f̂(λ) ≈ c - r·λ² over the window."""
    lo, hi = sorted(float(w) for w in window)
    target = tail_target(side, est.sigma0_sq, est.k0)
    mask = (est.lambdas >= lo) & (est.lambdas <= hi)
    if mask.sum() < 4:
        raise MonteCarloError(f"fit window [{lo}, {hi}] holds {int(mask.sum())} points; need >= 4")
    f, se, lam = est.f_hat[mask], est.stderr[mask], est.lambdas[mask]
    if np.any(~(f > 3.0 * se)):
        raise MonteCarloError("density estimates too noisy in the fit window (f_hat <= 3 stderr)")
    A = np.column_stack([-lam * lam, np.ones_like(lam)])
    (r, c), *_ = np.linalg.lstsq(A, np.log(f), rcond=None)
    return TailFit(side, float(r), float(c), (lo, hi), target, int(mask.sum()))


def gaussian_envelope(lam):
    """Upper bound (2π)^(-1/2) e^{-λ²/2} on f(λ), λ >= 0, for ∫K = 1."""
    lam = np.asarray(lam, dtype=float)
    return np.exp(-0.5 * lam * lam) / math.sqrt(2 * math.pi)


def right_tail_log_lower_bound(lam, f0):
    """log f(0) - λ²/2 - λ/(√(2πe) f(0)), the right-tail lower bound for ∫K = 1."""
    lam = np.asarray(lam, dtype=float)
    return math.log(f0) - 0.5 * lam * lam - lam / (math.sqrt(2 * math.pi * math.e) * f0)
