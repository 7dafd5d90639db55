"""Uniform grids and Fourier operators on the periodic torus [0, 2pi)^n.

Fourier coefficients are normalized so that a constant field ``f = c`` has
coefficient ``c`` at ``k = 0``; i.e. ``coeffs = fftn(values) / N**n``.
Arrays are stored in FFT order; use ``TorusGrid.wavenumbers`` to map an
index to its integer frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

PERIOD = 2.0 * np.pi
SUPPORTED_DIMS = (1, 2)


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class TorusGrid:
    """Tensor grid with ``points_per_axis`` points on each of ``dim`` axes."""

    dim: int
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in SUPPORTED_DIMS:
            raise ValueError(f"unsupported dimension {self.dim}; expected 1 or 2")
        n = self.points_per_axis
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ValueError(
                f"points_per_axis must be a power of two >= 8, got {n!r}"
            )

    @property
    def N(self) -> int:
        return int(self.points_per_axis)

    @property
    def period(self) -> float:
        return PERIOD

    @property
    def spacing(self) -> float:
        return PERIOD / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dim

    @property
    def size(self) -> int:
        return self.N**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def dealias_cutoff(self) -> float:
        """Largest retained |k_j| under the 2/3 rule is ``floor(N/3)``."""
        return self.N / 3.0

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer frequencies in FFT order: 0, 1, ..., N/2-1, -N/2, ..., -1."""
        return np.rint(np.fft.fftfreq(self.N, d=1.0 / self.N)).astype(np.int64)

    @cached_property
    def k_axes(self) -> tuple:
        """Per-axis wavenumber arrays broadcast against the coefficient array."""
        k = self.wavenumbers.astype(float)
        if self.dim == 1:
            return (k,)
        return (k[:, None], k[None, :])

    @cached_property
    def k_norm(self) -> np.ndarray:
        k2 = sum(ka**2 for ka in self.k_axes)
        return np.sqrt(np.broadcast_to(k2, self.shape))

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """False wherever any axis sits on the Nyquist frequency -N/2."""
        ok = np.ones(self.shape, dtype=bool)
        for ka in self.k_axes:
            ok &= np.broadcast_to(ka != -self.N // 2, self.shape)
        return ok

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.ones(self.shape, dtype=bool)
        for ka in self.k_axes:
            keep &= np.broadcast_to(np.abs(ka) <= self.dealias_cutoff, self.shape)
        return keep

    def derivative_symbol(self, axis: int) -> np.ndarray:
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for dim {self.dim}")
        sym = 1j * np.broadcast_to(self.k_axes[axis], self.shape)
        return np.where(self.nyquist_free, sym, 0.0)

    def fractional_symbol(self, alpha: float) -> np.ndarray:
        return np.where(self.nyquist_free, self.k_norm**alpha, 0.0)

    @cached_property
    def coordinates(self) -> tuple:
        """Grid coordinates per axis, ``indexing='ij'``."""
        x = np.arange(self.N) * self.spacing
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """All grid points as an ``(N**n, n)`` array, row-major order."""
        return np.stack([c.ravel() for c in self.coordinates], axis=-1)


@dataclass(frozen=True)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(
                f"values of shape {vals.shape} do not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("ScalarField values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "ScalarField":
        return cls(grid, fn(*grid.coordinates))


@dataclass(frozen=True)
class SpectralField:
    grid: TorusGrid
    coeffs: np.ndarray
    dealiased: bool = field(default=False)

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise GridMismatchError(
                f"coefficients of shape {self.coeffs.shape} do not match grid"
            )
        if self.dealiased and np.any(self.coeffs[~self.grid.dealias_mask] != 0):
            raise ValueError("dealiased field carries modes above N/3")


FieldLike = Union[ScalarField, np.ndarray]


def make_grid(dim: int, points_per_axis: int) -> TorusGrid:
    return TorusGrid(dim, points_per_axis)


# Array-level kernels. These are the hot path used by the dynamics module.

def fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values) / values.size


def ifft(coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(coeffs * coeffs.size).real


def _check_same_grid(*fields: ScalarField) -> TorusGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid {f.grid} != {grid}")
    return grid


def forward_transform(f: ScalarField) -> SpectralField:
    return SpectralField(f.grid, fft(f.values))


def inverse_transform(F: SpectralField) -> ScalarField:
    return ScalarField(F.grid, ifft(F.coeffs))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in the open interval (0, 2), got {alpha}")


def fractional_laplacian(f: ScalarField, alpha: float) -> ScalarField:
    """(-Delta)^{alpha/2} via the multiplier |k|^alpha (Nyquist row zeroed)."""
    _check_alpha(alpha)
    grid = f.grid
    return ScalarField(grid, ifft(grid.fractional_symbol(alpha) * fft(f.values)))


def partial_derivative(f: ScalarField, axis: int) -> ScalarField:
    grid = f.grid
    sym = grid.derivative_symbol(axis)
    return ScalarField(grid, ifft(sym * fft(f.values)))


def laplacian(f: ScalarField) -> ScalarField:
    grid = f.grid
    sym = np.where(grid.nyquist_free, -grid.k_norm**2, 0.0)
    return ScalarField(grid, ifft(sym * fft(f.values)))


def dealias(F: SpectralField) -> SpectralField:
    return SpectralField(F.grid, np.where(F.grid.dealias_mask, F.coeffs, 0.0), True)


def gradient(f: ScalarField) -> list:
    return [partial_derivative(f, j) for j in range(f.grid.dim)]


def spectral_shift(f: ScalarField, offset: Sequence[float]) -> ScalarField:
    """Return ``x -> f(x + offset)`` computed with phase factors.

    Exact for band-limited fields without Nyquist content; a Nyquist
    component is shifted as the cosine it represents on the grid.
    """
    grid = f.grid
    offset = np.atleast_1d(np.asarray(offset, dtype=float))
    if offset.shape != (grid.dim,):
        raise ValueError(f"offset must have {grid.dim} components")
    if not np.all(np.isfinite(offset)):
        raise ValueError("offset must be finite")
    factor = np.ones(grid.shape, dtype=complex)
    for ka, a in zip(grid.k_axes, offset):
        # Nyquist modes have no conjugate partner; they shift like cosines.
        axis_factor = np.where(ka == -grid.N // 2, np.cos(ka * a), np.exp(1j * ka * a))
        factor = factor * axis_factor
    coeffs = fft(f.values) * factor
    return ScalarField(grid, ifft(coeffs))


def inner_product(f: ScalarField, g: ScalarField) -> float:
    """Grid quadrature of ``f * g`` over the torus."""
    grid = _check_same_grid(f, g)
    return float(np.sum(f.values * g.values) * grid.cell_volume)


def sobolev_norm(f: ScalarField, s: float, homogeneous: bool = False) -> float:
    """H^s norm ``((2pi)^n sum (1+|k|^2)^s |c_k|^2)^{1/2}``.

    The homogeneous variant uses ``|k|^{2s}`` with the same Nyquist mask as
    the fractional operators, so ``|Lambda_a f|_2`` equals it exactly.
    """
    grid = f.grid
    power = np.abs(fft(f.values)) ** 2
    if homogeneous:
        weight = np.where(grid.nyquist_free, grid.k_norm ** (2 * s), 0.0)
        if s == 0:
            weight = grid.nyquist_free.astype(float)
    else:
        weight = (1.0 + grid.k_norm**2) ** s
    return float(np.sqrt(PERIOD**grid.dim * np.sum(weight * power)))


def max_mode(values: np.ndarray, rtol: float = 1e-13) -> int:
    """Largest |k_j| carrying a coefficient above ``rtol`` of the peak."""
    grid_n = values.shape[0]
    c = np.abs(np.fft.fftn(values))
    k = np.abs(np.rint(np.fft.fftfreq(grid_n, d=1.0 / grid_n))).astype(int)
    significant = c > rtol * max(c.max(), 1e-300)
    if values.ndim == 1:
        return int(k[significant].max(initial=0))
    kk = np.maximum(k[:, None], k[None, :])
    return int(kk[significant].max(initial=0))


class TrigPolynomial:
    """Trigonometric interpolant of grid data, evaluable anywhere.

    Built from a coefficient table restricted to ``|k_j| <= band``.
    Derivative orders are given per axis, e.g. ``(1, 0)`` for d/dx1.
    """

    def __init__(self, coeffs: np.ndarray, k: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.k = np.asarray(k, dtype=float)
        self.dim = self.coeffs.ndim

    @classmethod
    def from_values(cls, values: np.ndarray, band: int | None = None) -> "TrigPolynomial":
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if band is None:
            band = min(max_mode(values), n // 2 - 1)
        coeffs = fft(values)
        kall = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(int)
        sel = np.abs(kall) <= band
        sel &= kall != -n // 2
        for ax in range(values.ndim):
            coeffs = np.compress(sel, coeffs, axis=ax)
        return cls(coeffs, kall[sel])

    def __call__(self, points: np.ndarray, order: Sequence[int] | None = None) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dim == 1 and pts.shape[-1] != 1:
            pts = pts.reshape(-1, 1)
        order = tuple(order) if order is not None else (0,) * self.dim
        factors = []
        for ax in range(self.dim):
            e = np.exp(1j * np.outer(pts[:, ax], self.k))
            if order[ax]:
                e = e * (1j * self.k) ** order[ax]
            factors.append(e)
        if self.dim == 1:
            return (factors[0] @ self.coeffs).real
        return np.einsum("pa,ab,pb->p", factors[0], self.coeffs, factors[1]).real
