"""Periodic grid, Fourier multipliers and the free-space Coulomb convolution.

Transform convention: the forward transform is unnormalized (``scipy.fft.fftn``)
and the inverse divides by ``n**3``. With this choice

    sum_x |f(x)|^2 h^3 == (h^3 / n^3) sum_k |fhat(k)|^2

Fields are plain ``numpy`` arrays whose last three axes have shape
``(n, n, n)``; any leading axes are treated as a batch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

logger = logging.getLogger(__name__)

SYMBOL_KINDS = (
    "identity",
    "dispersion",
    "inverse_dispersion",
    "p2_over_dispersion",
    "sobolev_half",
    "sobolev_quarter",
    "laplacian",
    "coulomb_truncated",
)


class GridMismatchError(ValueError):
    """A field does not live on the grid it is used with."""


def coulomb_symbol(kabs: np.ndarray, rho_c: float) -> np.ndarray:
    """Fourier transform of ``1/|x|`` truncated to the ball of radius `rho_c`.

    ``4 pi (1 - cos(rho_c k)) / k^2`` with its analytic limit ``2 pi rho_c^2``
    at ``k = 0``.
    """
    kabs = np.asarray(kabs, dtype=float)
    out = np.empty_like(kabs)
    zero = kabs == 0.0
    kk = kabs[~zero]
    # 1 - cos(a) = 2 sin^2(a/2) avoids cancellation at small k
    out[~zero] = 8.0 * np.pi * np.sin(0.5 * rho_c * kk) ** 2 / kk**2
    out[zero] = 2.0 * np.pi * rho_c**2
    return out


def _fft_size(target: int) -> int:
    return sfft.next_fast_len(int(math.ceil(target)))


@dataclass(frozen=True)
class MultiplierSymbol:
    kind: str
    values: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple:
        return self.values.shape


class Grid:
    """Cubic periodic box ``[-L/2, L/2)^3`` with ``n`` points per axis.

    Parameters
    ----------
    n : int
        Points per axis; even and at least 8.
    L : float
        Box edge length.
    m : float
        Particle mass entering the dispersion ``sqrt(|k|^2 + m^2)``.
    coulomb_pad : float
        Padding factor of the Coulomb convolution. ``2`` gives the exact
        free-space convolution for any source/target pair in the box; smaller
        factors ``p`` are exact only while the mass stays inside
        ``|x_a| < p L / 4`` and are guarded by :meth:`coulomb_guard_fraction`.
    """

    def __init__(self, n: int, L: float, m: float = 1.0, coulomb_pad: float = 2.0):
        if int(n) != n or n % 2 or n < 8:
            raise ValueError(f"n must be an even integer >= 8, got {n}")
        if not L > 0:
            raise ValueError(f"box length must be positive, got {L}")
        if not m >= 0:
            raise ValueError(f"mass must be non-negative, got {m}")
        if not 1.0 < coulomb_pad <= 2.0:
            raise ValueError(f"coulomb_pad must lie in (1, 2], got {coulomb_pad}")
        self.n = int(n)
        self.L = float(L)
        self.m = float(m)
        self.coulomb_pad = float(coulomb_pad)
        self.h = self.L / self.n
        self.dv = self.h**3
        self.shape = (self.n,) * 3
        self.x1d = -0.5 * self.L + self.h * np.arange(self.n)
        self.k1d = 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)
        self.k_max = np.pi / self.h
        self._symbols: dict = {}

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, L={self.L}, m={self.m}, coulomb_pad={self.coulomb_pad})"

    def same_as(self, other: "Grid") -> bool:
        return (self.n, self.L, self.m, self.coulomb_pad) == (
            other.n,
            other.L,
            other.m,
            other.coulomb_pad,
        )

    # -- coordinates ---------------------------------------------------------

    @cached_property
    def coords(self) -> tuple:
        """Broadcastable centered coordinates ``(x, y, z)``."""
        return tuple(np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij", sparse=True))

    @cached_property
    def r2(self) -> np.ndarray:
        x, y, z = self.coords
        return x**2 + y**2 + z**2

    @cached_property
    def r(self) -> np.ndarray:
        return np.sqrt(self.r2)

    @cached_property
    def kvec(self) -> tuple:
        return tuple(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij", sparse=True))

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.kvec
        return kx**2 + ky**2 + kz**2

    @cached_property
    def kvec_deriv(self) -> tuple:
        """Wavenumbers with the Nyquist entry zeroed, for odd-order derivatives."""
        k = self.k1d.copy()
        k[self.n // 2] = 0.0
        return tuple(np.meshgrid(k, k, k, indexing="ij", sparse=True))

    @cached_property
    def kinf(self) -> np.ndarray:
        """``max_a |k_a|`` on the grid."""
        kx, ky, kz = (np.abs(k) for k in self.kvec)
        return np.maximum(np.maximum(kx, ky), kz)

    # -- transforms ----------------------------------------------------------

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-3:] != self.shape:
            raise GridMismatchError(f"field of shape {f.shape} is not on {self}")
        return f

    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.fftn(self.check(f), axes=(-3, -2, -1))

    def ifft(self, fhat: np.ndarray) -> np.ndarray:
        return sfft.ifftn(self.check(fhat), axes=(-3, -2, -1))

    def spectral_norm2(self, fhat: np.ndarray) -> float:
        """``||f||^2`` computed from the unnormalized transform."""
        return float(np.sum(np.abs(fhat) ** 2) * self.dv / self.n**3)

    # -- symbols -------------------------------------------------------------

    def symbol(self, kind: str) -> MultiplierSymbol:
        if kind not in self._symbols:
            self._symbols[kind] = MultiplierSymbol(kind, self._symbol_values(kind))
        return self._symbols[kind]

    def _symbol_values(self, kind: str) -> np.ndarray:
        k2, m2 = self.k2, self.m**2
        if kind == "identity":
            return np.ones(self.shape)
        if kind == "dispersion":
            return np.sqrt(k2 + m2)
        if kind == "inverse_dispersion":
            if self.m == 0.0:
                raise ValueError("inverse dispersion is singular at k=0 for m=0")
            return 1.0 / np.sqrt(k2 + m2)
        if kind == "p2_over_dispersion":
            disp = np.sqrt(k2 + m2)
            out = np.zeros(self.shape)
            np.divide(k2, disp, out=out, where=disp > 0)
            return out
        if kind == "sobolev_half":
            return np.sqrt(1.0 + k2)
        if kind == "sobolev_quarter":
            return (1.0 + k2) ** 0.25
        if kind == "laplacian":
            return np.broadcast_to(k2, self.shape).copy()
        if kind == "coulomb_truncated":
            return coulomb_symbol(np.sqrt(np.broadcast_to(k2, self.shape)), math.sqrt(3.0) * self.L)
        raise ValueError(f"unknown symbol kind {kind!r}; expected one of {SYMBOL_KINDS}")

    # -- Coulomb -------------------------------------------------------------

    @cached_property
    def coulomb(self) -> "CoulombKernel":
        return CoulombKernel(self)

    def coulomb_guard_fraction(self) -> float:
        """Box fraction inside which the padded convolution is exact."""
        return min(1.0, 0.5 * self.coulomb_pad)


def make_grid(n: int, L: float, m: float = 1.0, coulomb_pad: float = 2.0) -> Grid:
    return Grid(n, L, m, coulomb_pad)


class CoulombKernel:
    """Aperiodic convolution with ``1/|x|`` on a zero-padded grid.

    The padded period holds ``P = pad * n`` points. The kernel is truncated at
    ``rho_c = sqrt(3) P h / 2`` (the padded-box half diagonal), sampled in real
    space from a one-off transform on a period ``Q >= P (1 + sqrt 3) / 2`` large
    enough that truncated images never overlap, restricted to the minimum-image
    cell of the padded period and transformed back. Each convolution then costs
    one forward and one inverse transform of size ``P^3`` and carries no
    periodic-image contamination.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n, h = grid.n, grid.h
        self.P = P = _fft_size(max(grid.coulomb_pad * n, n + 2))
        self.rho_c = math.sqrt(3.0) * 0.5 * P * h
        Q = _fft_size(0.5 * P * (1.0 + math.sqrt(3.0)) + 2)
        self.Q = Q
        kq = 2.0 * np.pi * sfft.fftfreq(Q, d=h)
        kr = 2.0 * np.pi * sfft.rfftfreq(Q, d=h)
        kabs = np.sqrt(kq[:, None, None] ** 2 + kq[None, :, None] ** 2 + kr[None, None, :] ** 2)
        table = sfft.irfftn(coulomb_symbol(kabs, self.rho_c), s=(Q, Q, Q)) / h**3
        del kabs
        idx = np.arange(P)
        idx = np.where(idx < P // 2, idx, idx - P) % Q
        kernel = table[np.ix_(idx, idx, idx)]
        del table
        self.kernel_real = kernel  # G(q h) for minimum-image offsets q
        self.symbol = np.ascontiguousarray(sfft.fftn(kernel).real * h**3)
        logger.debug("Coulomb kernel: n=%d P=%d Q=%d rho_c=%.3f", n, P, Q, self.rho_c)

    def _convolve_complex(self, f: np.ndarray) -> np.ndarray:
        n, P = self.grid.n, self.P
        fh = sfft.fftn(f, s=(P, P, P), axes=(-3, -2, -1))
        fh *= self.symbol
        return sfft.ifftn(fh, axes=(-3, -2, -1), overwrite_x=True)[..., :n, :n, :n]

    def convolve(self, f: np.ndarray) -> np.ndarray:
        """``int f(y) / |x - y| dy`` for a (batch of) field(s) `f`."""
        f = self.grid.check(f)
        if f.ndim == 3:
            out = self._convolve_complex(f)
            return out.real.copy() if np.isrealobj(f) else out
        batch = f.reshape((-1,) + self.grid.shape)
        if np.isrealobj(f):
            # the kernel is real, so two real sources share one complex transform
            out = np.empty(batch.shape)
            for i in range(0, len(batch) - 1, 2):
                v = self._convolve_complex(batch[i] + 1j * batch[i + 1])
                out[i], out[i + 1] = v.real, v.imag
            if len(batch) % 2:
                out[-1] = self._convolve_complex(batch[-1]).real
        else:
            out = np.empty(batch.shape, dtype=complex)
            for i, fi in enumerate(batch):
                out[i] = self._convolve_complex(fi)
        return out.reshape(f.shape)


# -- field operations ----------------------------------------------------------


def apply_multiplier(f: np.ndarray, s: MultiplierSymbol, grid: Grid | None = None) -> np.ndarray:
    """Apply the Fourier multiplier `s` over the last three axes of `f`."""
    f = np.asarray(f)
    if f.shape[-3:] != s.shape:
        raise GridMismatchError(f"field of shape {f.shape} does not match symbol {s.kind} {s.shape}")
    if grid is not None:
        grid.check(f)
    axes = (-3, -2, -1)
    return sfft.ifftn(sfft.fftn(f, axes=axes) * s.values, axes=axes, overwrite_x=True)


def coulomb_convolve(rho: np.ndarray, grid: Grid, warn_threshold: float | None = None) -> np.ndarray:
    """Free-space convolution of `rho` with ``1/|x|``.

    If `warn_threshold` is given, a warning is logged when the mass of
    ``|rho|`` outside the exactness region of the padded convolution exceeds it.
    """
    grid.check(rho)
    if warn_threshold is not None:
        frac = min(0.8, grid.coulomb_guard_fraction())
        outside = boundary_mass(np.abs(rho), grid, frac)
        if outside > warn_threshold:
            logger.warning("Coulomb source has boundary mass %.3e beyond %.2f of the box", outside, frac)
    return grid.coulomb.convolve(rho)


def gradient(f: np.ndarray, grid: Grid) -> tuple:
    """Spectral partial derivatives ``(d_x f, d_y f, d_z f)``."""
    fh = grid.fft(f)
    return tuple(grid.ifft(1j * k * fh) for k in grid.kvec_deriv)


def inner(f: np.ndarray, g: np.ndarray, grid: Grid) -> complex:
    """``<f, g> = sum conj(f) g h^3``, antilinear in the first argument."""
    grid.check(f)
    grid.check(g)
    if f.shape != g.shape:
        raise GridMismatchError(f"shapes differ: {f.shape} vs {g.shape}")
    return complex(np.vdot(f, g) * grid.dv)


def boundary_mass(rho: np.ndarray, grid: Grid, fraction: float) -> float:
    """Integral of `rho` over ``||x||_inf > fraction * L / 2``."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    grid.check(rho)
    x, y, z = grid.coords
    lim = fraction * 0.5 * grid.L
    outside = (np.abs(x) > lim) | (np.abs(y) > lim) | (np.abs(z) > lim)
    return float(np.real(np.sum(rho[..., outside]) * grid.dv))
