"""Periodic grids on flat complex tori and spectral (Fourier) differentiation.

A flat complex torus C^n / Lambda is discretized with ``res`` points per real
axis.  Real coordinates are ordered (x1, y1, ..., xn, yn) with z^r = x^r + i y^r,
so real axis ``2r-2`` carries x^r and axis ``2r-1`` carries y^r (0-based).
Grid points are ordered row-major over the axes in declared order; every field
array has leading shape ``grid.shape`` followed by its component axes.

Wirtinger derivatives are computed by discrete-Fourier differentiation over
the (x^r, y^r) axis pair:

    d_r     = (d/dx^r - i d/dy^r) / 2
    d_rbar  = (d/dx^r + i d/dy^r) / 2

The Nyquist wavenumber is excluded from every derivative multiplier (its sign
is ambiguous on an even grid); band-limited inputs never populate that mode,
so the transforms are exact to roundoff for them and iterated derivatives
commute exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

TWO_PI = 2.0 * math.pi

# scipy.fft thread count for the axis transforms; results are independent of it.
FFT_WORKERS = 2


class GridError(ValueError):
    """Invalid grid construction parameters."""


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on a flat complex torus.

    Attributes
    ----------
    n : int
        Complex dimension (>= 1).
    res : int
        Points per real axis; a power of two >= 8 (required by the
        transform-based differentiator).
    periods : tuple of float
        2n positive real periods, one per real axis.
    """

    n: int
    res: int
    periods: tuple[float, ...]

    def __post_init__(self):
        if self.n < 1:
            raise GridError(f"complex dimension must be >= 1, got {self.n}")
        if not _is_power_of_two(self.res) or self.res < 8:
            raise GridError(f"res must be a power of two >= 8, got {self.res}")
        if len(self.periods) != 2 * self.n:
            raise GridError(
                f"expected {2 * self.n} periods for n={self.n}, got {len(self.periods)}"
            )
        if any(L <= 0 for L in self.periods):
            raise GridError(f"periods must be strictly positive, got {self.periods}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.res,) * (2 * self.n)

    @property
    def total_points(self) -> int:
        return self.res ** (2 * self.n)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Sample coordinates along one real axis (0-based)."""
        L = self.periods[axis]
        return np.arange(self.res) * (L / self.res)

    def meshes(self) -> list[np.ndarray]:
        """Full coordinate meshes, one array of shape ``grid.shape`` per real axis."""
        axes = [self.axis_coords(a) for a in range(2 * self.n)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def wave_phase(self, wavevector) -> np.ndarray:
        """Phase field 2*pi * sum_a k_a u_a / L_a for an integer wavevector."""
        k = np.asarray(wavevector)
        if k.shape != (2 * self.n,):
            raise GridError(f"wavevector must have length {2 * self.n}")
        phase = np.zeros(self.shape)
        for a, mesh in enumerate(self.meshes()):
            if k[a]:
                phase = phase + (TWO_PI * k[a] / self.periods[a]) * mesh
        return phase


def build_grid(n: int, res: int, periods=None) -> PeriodicGrid:
    """Construct a PeriodicGrid; periods default to 2*pi on every axis."""
    if periods is None:
        periods = (TWO_PI,) * (2 * n)
    return PeriodicGrid(n=int(n), res=int(res), periods=tuple(float(L) for L in periods))


@lru_cache(maxsize=64)
def _axis_wavenumbers(res: int, period: float) -> np.ndarray:
    """Angular wavenumbers 2*pi*k/L with the Nyquist entry zeroed."""
    k = np.fft.fftfreq(res, d=1.0 / res)  # integers 0..res/2-1, -res/2..-1
    kappa = (TWO_PI / period) * k
    kappa[res // 2] = 0.0  # Nyquist excluded from derivative multipliers
    return kappa


def _pair_multiplier(grid: PeriodicGrid, r: int, kind: str, ndim_extra: int) -> np.ndarray:
    """Fourier multiplier for d_r / d_rbar over the (x^r, y^r) axis pair.

    In Fourier space d/dx -> i*kx and d/dy -> i*ky, so

        d_r    -> (i*kx + ky) / 2
        d_rbar -> (i*kx - ky) / 2

    Returned with shape broadcastable against the transformed field.
    """
    ax_x, ax_y = 2 * (r - 1), 2 * (r - 1) + 1
    kx = _axis_wavenumbers(grid.res, grid.periods[ax_x])
    ky = _axis_wavenumbers(grid.res, grid.periods[ax_y])
    if kind == "h":
        m = 0.5 * (1j * kx[:, None] + ky[None, :])
    elif kind == "a":
        m = 0.5 * (1j * kx[:, None] - ky[None, :])
    else:
        raise ValueError(f"kind must be 'h' or 'a', got {kind!r}")
    # broadcast: leading grid axes before the pair stay 1, trailing axes stay 1
    lead = (1,) * ax_x
    trail = (1,) * (2 * grid.n - ax_y - 1 + ndim_extra)
    return m.reshape(lead + (grid.res, grid.res) + trail)


def wirtinger(data: np.ndarray, grid: PeriodicGrid, r: int, kind: str) -> np.ndarray:
    """Spectral Wirtinger derivative of a sampled array.

    Parameters
    ----------
    data : ndarray
        Leading axes are the grid axes (``grid.shape``); any trailing axes are
        treated componentwise.
    r : int
        Complex coordinate index, 1-based, 1 <= r <= n.
    kind : {'h', 'a'}
        'h' for the holomorphic derivative d_r, 'a' for d_rbar.

    Returns
    -------
    ndarray of the same shape.
    """
    if not (1 <= r <= grid.n):
        raise GridError(f"derivative index {r} out of range 1..{grid.n}")
    ax_x, ax_y = 2 * (r - 1), 2 * (r - 1) + 1
    extra = data.ndim - 2 * grid.n
    if extra < 0 or data.shape[: 2 * grid.n] != grid.shape:
        raise GridError("field shape does not match grid")
    F = _fft.fftn(data, axes=(ax_x, ax_y), workers=FFT_WORKERS)
    F *= _pair_multiplier(grid, r, kind, extra)
    return _fft.ifftn(F, axes=(ax_x, ax_y), workers=FFT_WORKERS)


def wirtinger_stack(data: np.ndarray, grid: PeriodicGrid, kind: str) -> np.ndarray:
    """All n Wirtinger derivatives, stacked in a new trailing axis (comma-last)."""
    return np.stack([wirtinger(data, grid, r, kind) for r in range(1, grid.n + 1)], axis=-1)
