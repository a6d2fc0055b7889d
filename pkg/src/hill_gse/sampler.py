"""Spectral synthesis of stationary Gaussian potentials on the circle.

A sample is ``q = q₀ + q̃`` with q₀ ~ N(0, K̂(0)) and the mean-zero part

    q̃(x) = Σ_{1 <= |n| <= M_max} √K̂(n) g_n e^{2πinx},   g_{-n} = conj(g_n),

where the g_n are independent standard complex Gaussians (E|g_n|² = 1).

Random numbers come from counter-based Philox streams keyed by
``(seed, stream, block)``; sample ``i`` of a stream always lives in block
``i // BLOCK_SIZE`` at row ``i % BLOCK_SIZE``, so any partition of the
index range across workers reproduces the same draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NotInCameronMartinSpace
from .kernel import CovarianceKernel, from_spectrum, mode_weights, spectrum

BLOCK_SIZE = 256


def block_generator(seed, stream, block):
    ss = np.random.SeedSequence([int(seed), int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _normal_dim(kernel):
    return 1 + 2 * kernel.m_max


def standard_normals(kernel, seed, stream, start, count):
    """Rows ``start .. start+count`` of the stream's standard-normal table."""
    dim = _normal_dim(kernel)
    out = np.empty((count, dim))
    first, last = start // BLOCK_SIZE, (start + count - 1) // BLOCK_SIZE
    pos = 0
    for b in range(first, last + 1):
        tab = block_generator(seed, stream, b).standard_normal((BLOCK_SIZE, dim))
        lo = max(start - b * BLOCK_SIZE, 0)
        hi = min(start + count - b * BLOCK_SIZE, BLOCK_SIZE)
        out[pos : pos + hi - lo] = tab[lo:hi]
        pos += hi - lo
    return out


@dataclass(frozen=True, eq=False)
class PotentialSample:
    """One potential path on the uniform grid x_j = j/N."""

    values: np.ndarray
    q0: float
    log_weight: float = 0.0

    @classmethod
    def from_values(cls, values, log_weight=0.0):
        values = np.asarray(values, dtype=float)
        return cls(values, float(values.mean()), log_weight)

    @property
    def tilde_values(self):
        return self.values - self.q0

    @property
    def grid_size(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class TiltSpec:
    """Cameron-Martin mean shift ``h`` applied to q̃, with rate ½⟨h, 𝐊⁻¹h⟩."""

    shift_path: np.ndarray
    rate: float
    lam: float = float("nan")
    theta: float = 0.0

    @classmethod
    def from_path(cls, kernel, h, lam=float("nan"), theta=0.0):
        h = np.asarray(h, dtype=float)
        if abs(h.mean()) > 1e-12 * max(1.0, np.abs(h).max()):
            raise ConfigError("tilt shift must be mean-zero")
        rate = 0.5 * kernel.quad_form_inv(h)  # raises if h leaves the CM space
        return cls(h, rate, float(lam), float(theta))

    @property
    def is_zero(self):
        return not np.any(self.shift_path)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Rows of a stream: q₀ values, q̃ paths and log likelihood ratios."""

    q0: np.ndarray
    tilde: np.ndarray
    log_weight: np.ndarray
    start: int = 0

    @property
    def values(self):
        return self.tilde + self.q0[:, None]

    def __len__(self):
        return self.q0.size

    def __getitem__(self, i):
        return PotentialSample(self.tilde[i] + self.q0[i], float(self.q0[i]), float(self.log_weight[i]))


def _synthesize(kernel, g):
    """Map standard normals (rows of length 1 + 2 M_max) to (q₀, q̃)."""
    c = kernel.coeffs
    q0 = np.sqrt(c[0]) * g[:, 0]
    re, im = g[:, 1::2], g[:, 2::2]
    amp = np.sqrt(c[1:] / 2.0)
    spec = np.zeros((g.shape[0], c.size), dtype=complex)
    spec[:, 1:] = amp * (re + 1j * im)
    return q0, from_spectrum(spec, kernel.grid_size)


def _tilt_projection(kernel, tilt):
    """Vector u with ⟨h, 𝐊⁻¹q̃_raw⟩ = g[:, 1:] @ u."""
    c = kernel.coeffs
    hh = spectrum(tilt.shift_path)[1 : c.size]
    mask = c[1:] > kernel.spectral_floor
    scale = np.zeros_like(c[1:])
    scale[mask] = np.sqrt(2.0 / c[1:][mask])
    u = np.empty(2 * (c.size - 1))
    u[0::2] = hh.real * scale
    u[1::2] = hh.imag * scale
    return u


def sample_batch(kernel: CovarianceKernel, n, seed=42, stream=0, start=0, tilt: TiltSpec | None = None):
    """Samples ``start .. start+n`` of ``(seed, stream)``, optionally tilted.

    Under a tilt the mean-zero part is ``q̃ = q̃_raw + h`` and
    ``log_weight = -⟨h, 𝐊⁻¹q̃_raw⟩ - ½⟨h, 𝐊⁻¹h⟩`` so that weighted averages
    are unbiased for the untilted law. q₀ is never tilted.
    """
    if n <= 0:
        raise ConfigError("number of samples must be positive")
    g = standard_normals(kernel, seed, stream, start, n)
    q0, tilde = _synthesize(kernel, g)
    if tilt is None or tilt.is_zero:
        return SampleBatch(q0, tilde, np.zeros(n), start)
    if tilt.shift_path.size != kernel.grid_size:
        raise NotInCameronMartinSpace("tilt grid does not match kernel grid")
    log_w = -(g[:, 1:] @ _tilt_projection(kernel, tilt)) - tilt.rate
    return SampleBatch(q0, tilde + tilt.shift_path, log_w, start)


def _rng_seed(rng):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    return int(rng)


def sample(kernel, rng=42, stream=0, index=0):
    """A single untilted sample; ``rng`` is a seed or a numpy Generator."""
    return sample_batch(kernel, 1, _rng_seed(rng), stream, index)[0]


def sample_tilted(kernel, tilt, rng=42, stream=0, index=0):
    return sample_batch(kernel, 1, _rng_seed(rng), stream, index, tilt)[0]


def optimal_shape(kernel):
    """Mean-zero profile (K(x) - ∫K) / K(0) of the left-tail concentration point."""
    return (kernel.values - kernel.sigma0_sq) / kernel.k0


def make_tilt_toward_optimal(kernel, lam, theta=1.0):
    """Tilt toward θ·λ(K - ∫K)/K(0).

    The rate is ½⟨h, 𝐊⁻¹h⟩ = θ²λ²(K(0) - K̂(0)) / (2K(0)²).
    """
    if not 0.0 <= theta <= 1.0:
        raise ConfigError("tilt strength theta must lie in [0, 1]")
    h = theta * lam * optimal_shape(kernel)
    # roundoff can leave a ~1e-17 mean; the shape is mean-zero by construction
    h = from_spectrum(np.where(np.arange(kernel.grid_size // 2 + 1) == 0, 0.0, spectrum(h)), kernel.grid_size)
    return TiltSpec.from_path(kernel, h, lam, theta)


def weights_ok(log_weight):
    return np.all(np.isfinite(log_weight))


__all__ = [
    "BLOCK_SIZE",
    "PotentialSample",
    "SampleBatch",
    "TiltSpec",
    "make_tilt_toward_optimal",
    "mode_weights",
    "optimal_shape",
    "sample",
    "sample_batch",
    "sample_tilted",
    "standard_normals",
]
