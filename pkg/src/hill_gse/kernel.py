"""Stationary covariance kernels on the circle [0, 1).

A kernel is stored through its Fourier spectrum ``K̂(n) >= 0`` for
``n = 0 .. M_max`` (``K̂(-n) = K̂(n)``), with ``M_max = grid_size // 2 - 1``.
The Nyquist mode of the grid is never populated, so every path produced
from a kernel is exactly band-limited and all inner products below are
finite sums.

Fourier convention used throughout the package::

    f̂(n) = ∫₀¹ f(x) e^{-2πinx} dx = rfft(f)[n] / N

so that ``∫ f g = Σ_n f̂(n) conj(ĝ(n))`` over all integers ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import polygamma

from .errors import ConfigError, NotInCameronMartinSpace

#: relative floor below which a spectral coefficient counts as absent
SPECTRAL_FLOOR_REL = 1e-14
#: a path may carry at most this fraction of its L2 amplitude in absent modes
ABSENT_MODE_TOL = 1e-10


def spectrum(f):
    """Fourier coefficients f̂(0..N/2) of grid path(s) along the last axis."""
    f = np.asarray(f, dtype=float)
    return np.fft.rfft(f, axis=-1) / f.shape[-1]


def mode_weights(grid_size):
    """Multiplicity of each rfft mode in a two-sided sum (1 at 0 and Nyquist)."""
    w = np.full(grid_size // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def from_spectrum(c, grid_size):
    """Inverse of :func:`spectrum`; ``c`` may be shorter than N/2 + 1."""
    c = np.asarray(c)
    full = np.zeros(c.shape[:-1] + (grid_size // 2 + 1,), dtype=complex)
    full[..., : c.shape[-1]] = c
    return np.fft.irfft(full * grid_size, n=grid_size, axis=-1)


def grid(grid_size):
    return np.arange(grid_size) / grid_size


def _check_grid_size(grid_size, minimum=16):
    if int(grid_size) != grid_size or grid_size < minimum or grid_size & (grid_size - 1):
        raise ConfigError(f"grid_size must be a power of two >= {minimum}, got {grid_size}")
    return int(grid_size)


@dataclass(frozen=True, eq=False)
class CovarianceKernel:
    """Covariance ``K(x - y) = E[q(x) q(y)]`` of a stationary process on S¹.

    Parameters
    ----------
    coeffs : ndarray
        ``K̂(n)`` for ``n = 0 .. M_max``; read-only after construction.
    grid_size : int
        Synthesis / evaluation grid (power of two).
    name, params :
        Provenance used by :meth:`to_config`.
    truncation_error :
        Upper bound on the spectral mass dropped when the kernel was
        built from an infinite spectrum (0 for finite spectra).
    """

    coeffs: np.ndarray
    grid_size: int
    name: str = "coeffs"
    params: dict = field(default_factory=dict)
    truncation_error: float = 0.0

    @property
    def m_max(self):
        return self.coeffs.size - 1

    @property
    def sigma0_sq(self):
        """Variance of the mean mode q₀, i.e. K̂(0) = ∫₀¹ K."""
        return float(self.coeffs[0])

    @cached_property
    def k0(self):
        """K(0) = Σ_n K̂(n) over all integers n."""
        return float(self.coeffs[0] + 2.0 * self.coeffs[1:].sum())

    @property
    def sup_norm(self):
        # |K(x)| <= K(0) for any nonnegative-definite kernel
        return self.k0

    @cached_property
    def spectral_floor(self):
        return SPECTRAL_FLOOR_REL * float(self.coeffs.max())

    @cached_property
    def support(self):
        """Boolean mask over rfft modes 0..N/2 that the kernel represents."""
        mask = np.zeros(self.grid_size // 2 + 1, dtype=bool)
        mask[: self.coeffs.size] = self.coeffs > self.spectral_floor
        return mask

    @cached_property
    def padded(self):
        """K̂ on all rfft modes 0..N/2 (zeros beyond M_max)."""
        out = np.zeros(self.grid_size // 2 + 1)
        out[: self.coeffs.size] = self.coeffs
        out.setflags(write=False)
        return out

    @cached_property
    def values(self):
        """K on the uniform grid x_j = j/N."""
        v = from_spectrum(self.padded, self.grid_size)
        v.setflags(write=False)
        return v

    @property
    def x(self):
        return grid(self.grid_size)

    def eval(self, x):
        """K(x mod 1) by direct summation of the cosine series."""
        x = np.asarray(x, dtype=float)
        n = np.arange(1, self.coeffs.size)
        out = self.coeffs[0] + 2.0 * np.cos(2 * np.pi * np.multiply.outer(x % 1.0, n)) @ self.coeffs[1:]
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    def normalized(self):
        """Copy rescaled so that ∫K = 1."""
        return CovarianceKernel(
            _readonly(self.coeffs / self.coeffs[0]),
            self.grid_size,
            self.name,
            {**self.params, "normalize": True},
            self.truncation_error / self.coeffs[0],
        )

    # -- operator 𝐊 and its quadratic forms -------------------------------

    def apply(self, f):
        """Convolution 𝐊f(x) = ∫ K(x - y) f(y) dy on the grid."""
        return from_spectrum(spectrum(f) * self.padded, self.grid_size)

    def quad_form(self, f):
        """⟨f, 𝐊f⟩."""
        fh = spectrum(f)
        w = mode_weights(self.grid_size)
        return float(np.sum(w * self.padded * np.abs(fh) ** 2, axis=-1))

    def quad_form_inv(self, f):
        """⟨f, 𝐊⁻¹f⟩ = Σ_n |f̂(n)|² / K̂(n) over the represented modes.

        Raises
        ------
        NotInCameronMartinSpace
            If ``f`` has non-negligible energy in a mode with
            ``K̂(n) <= spectral_floor``.
        """
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.grid_size:
            raise ConfigError(f"path length {f.shape[-1]} != grid_size {self.grid_size}")
        fh = spectrum(f)
        energy = mode_weights(self.grid_size) * np.abs(fh) ** 2
        bad = energy[~self.support].sum()
        total = energy.sum()
        if bad > ABSENT_MODE_TOL**2 * total and bad > 0.0:
            raise NotInCameronMartinSpace(
                f"path not in Cameron-Martin space: relative energy {np.sqrt(bad / total):.2e} "
                "in modes the kernel does not represent"
            )
        k = self.padded[self.support]
        return float(np.sum(energy[self.support] / k))

    def cm_inner(self, h, f):
        """⟨h, 𝐊⁻¹f⟩ restricted to represented modes (no support check)."""
        w = mode_weights(self.grid_size)[self.support]
        prod = spectrum(h)[..., self.support] * np.conj(spectrum(f)[..., self.support])
        return np.sum(w * prod.real / self.padded[self.support], axis=-1)

    def modulus_of_continuity(self, shift):
        """Δ_K(d) = sup_y |K(y + d) - K(y)| for a grid shift d = shift / N."""
        return float(np.max(np.abs(np.roll(self.values, -int(shift)) - self.values)))

    def to_config(self):
        cfg = {"grid_size": self.grid_size, "normalize": bool(self.params.get("normalize", False))}
        if self.name == "ou":
            cfg.update(type="ou", m=self.params["m"])
        else:
            raw = self.params.get("values", self.coeffs.tolist())
            cfg.update(type="coeffs", values=list(raw))
        return cfg


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def make_kernel_from_coeffs(coeffs, grid_size=512, normalize=False):
    """Kernel with the given spectrum; modes beyond the grid's M_max are dropped."""
    grid_size = _check_grid_size(grid_size)
    raw = np.asarray(coeffs, dtype=float).ravel()
    if raw.size == 0:
        raise ConfigError("empty coefficient list")
    if np.any(~np.isfinite(raw)) or np.any(raw < 0):
        raise ConfigError("kernel coefficients must be finite and nonnegative")
    if raw[0] <= 0:
        raise ConfigError("coeffs[0] = ∫K must be > 0 (the constant mode is required: 𝐊1 > 0)")
    c = np.zeros(grid_size // 2)
    keep = min(raw.size, c.size)
    c[:keep] = raw[:keep]
    kern = CovarianceKernel(_readonly(c), grid_size, "coeffs", {"values": raw.tolist()},
                            float(2 * raw[keep:].sum()))
    return kern.normalized() if normalize else kern


def make_ou_kernel(m, grid_size=512, normalize=False):
    """Periodic Ornstein-Uhlenbeck kernel of mass ``m``: K̂(n) = 1/((2πn)² + m²)."""
    if not np.isfinite(m) or m <= 0:
        raise ConfigError(f"OU mass must be positive, got {m}")
    grid_size = _check_grid_size(grid_size)
    n = np.arange(grid_size // 2)
    c = 1.0 / ((2 * np.pi * n) ** 2 + m * m)
    mmax = n[-1]
    # Σ_{n>M} 2/((2πn)² + m²) <= trigamma(M + 1) / (2π²)
    tail = float(polygamma(1, mmax + 1) / (2 * np.pi**2))
    kern = CovarianceKernel(_readonly(c), grid_size, "ou", {"m": float(m)}, tail)
    return kern.normalized() if normalize else kern


def ou_closed_form(m, x):
    """Real-space OU covariance K(x) = (e^{mx}/(e^m-1) - e^{-mx}/(e^{-m}-1)) / 2m on [0, 1)."""
    x = np.asarray(x, dtype=float) % 1.0
    return (np.exp(m * x) / np.expm1(m) - np.exp(-m * x) / np.expm1(-m)) / (2 * m)


def kernel_from_config(cfg):
    """Build a kernel from ``{type: "ou", m} | {type: "coeffs", values}`` plus grid keys."""
    if not isinstance(cfg, dict):
        raise ConfigError("kernel config must be a mapping")
    kind = cfg.get("type")
    grid_size = cfg.get("grid_size", 512)
    normalize = bool(cfg.get("normalize", False))
    if kind == "ou":
        if "m" not in cfg:
            raise ConfigError("OU kernel needs 'm'")
        return make_ou_kernel(float(cfg["m"]), grid_size, normalize)
    if kind == "coeffs":
        if "values" not in cfg:
            raise ConfigError("coeffs kernel needs 'values'")
        return make_kernel_from_coeffs(cfg["values"], grid_size, normalize)
    raise ConfigError(f"unknown kernel type {kind!r}")
