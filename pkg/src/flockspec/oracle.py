"""Slow, quadrature-based reference evaluations of the singular operators.

Everything here works from the integral (kernel) side and never touches the
spectral multiplier ``|k|^alpha``:

* ``PeriodizedKernel`` sums the lattice images of ``|z|^{-(n+alpha)}`` with a
  Taylor-corrected tail and a rigorous remainder bound.
* ``lambda_direct``, ``d_alpha_direct`` and ``commutator_direct`` integrate
  over one periodic cell. The cell integral is split into the bare
  singularity ``|z|^{-(n+alpha)}`` (polar Gauss-Jacobi/Gauss-Legendre in the
  radius) and the smooth image part (tensor Gauss-Legendre).
* Off-grid values of band-limited fields come from a trigonometric
  interpolant whose coefficients are formed by an explicit DFT sum.

Integrands are symmetrized in ``z -> -z`` so each one vanishes like ``|z|^2``
at the origin; dividing by ``r^2`` against the weight ``r^{1-alpha}`` then
makes the radial integrals absolutely convergent for every alpha in (0, 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy.special import poch, roots_jacobi, roots_legendre, zeta

from .torus import ScalarField, TorusGrid, max_mode

TWO_PI = 2.0 * pi


class OracleError(RuntimeError):
    """Raised when a reference evaluation cannot be trusted."""


def normalization_constant(dim: int, alpha: float) -> float:
    """c_{n,alpha} such that c * p.v. int (f(x)-f(x+z))|z|^{-n-alpha} has symbol |k|^alpha."""
    return 2.0**alpha * gamma((dim + alpha) / 2) / (pi ** (dim / 2) * abs(gamma(-alpha / 2)))


def _full_lattice_sum(dim: int, p: float) -> float:
    """sum over k in Z^n \\ {0} of |k|^{-p}; needs p > n."""
    if dim == 1:
        return 2.0 * float(zeta(p))
    # Sum over Z^2 of (m^2+n^2)^{-s} equals 4 zeta(s) beta(s), beta the Dirichlet beta.
    s = p / 2
    beta = 4.0**-s * (zeta(s, 0.25) - zeta(s, 0.75))
    return 4.0 * float(zeta(s)) * float(beta)


def _image_offsets(dim: int, K: int) -> np.ndarray:
    k = np.arange(-K, K + 1)
    if dim == 1:
        return k[:, None].astype(float)
    a, b = np.meshgrid(k, k, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=-1).astype(float)


@lru_cache(maxsize=None)
def _tail_sum(dim: int, p: float, K: int) -> float:
    """sum over |k|_inf > K of |k|^{-p}."""
    k = _image_offsets(dim, K)
    r = np.sqrt(np.sum(k**2, axis=1))
    near = np.sum(r[r > 0] ** -p)
    return _full_lattice_sum(dim, p) - near


@dataclass(frozen=True)
class PeriodizedKernel:
    """phi_alpha(z) = sum_k |z + 2 pi k|^{-(n+alpha)} on the torus.

    Images with ``|k|_inf <= shell_radius`` are summed directly. The rest
    are replaced by their Taylor expansion through second order in ``z``
    (odd orders cancel by lattice symmetry). ``tail_bound`` is a rigorous
    bound on what that expansion leaves out, uniform over the torus.
    """

    alpha: float
    dim: int
    shell_radius: int = 20

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.dim not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dim}")
        if self.shell_radius < 3:
            raise ValueError("shell_radius must be at least 3")

    @property
    def exponent(self) -> float:
        return self.dim + self.alpha

    def _tail_coefficients(self):
        s, n, K = self.exponent, self.dim, self.shell_radius
        c0 = TWO_PI**-s * _tail_sum(n, s, K)
        c2 = 0.5 * s * ((s + 2) / n - 1.0) * TWO_PI ** (-s - 2) * _tail_sum(n, s + 2, K)
        return c0, c2

    def remainder_bound(self, zabs) -> np.ndarray:
        s, n, K = self.exponent, self.dim, self.shell_radius
        zabs = np.asarray(zabs, dtype=float)
        shrink = (1.0 - zabs / (TWO_PI * (K + 1))) ** (-s - 4)
        return (
            poch(s, 4) / 24.0 * zabs**4 * shrink
            * TWO_PI ** (-s - 4) * _tail_sum(n, s + 4, K)
        )

    @property
    def tail_bound(self) -> float:
        return float(self.remainder_bound(pi * np.sqrt(self.dim)))

    @staticmethod
    def reduce(z) -> np.ndarray:
        """Map points to the fundamental cell [-pi, pi)^n."""
        z = np.asarray(z, dtype=float)
        return (z + pi) % TWO_PI - pi

    def _as_points(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.dim == 1:
            return z.reshape(-1, 1)
        return z.reshape(-1, 2)

    def _images(self, z: np.ndarray, include_origin: bool) -> np.ndarray:
        s = self.exponent
        offs = TWO_PI * _image_offsets(self.dim, self.shell_radius)
        if not include_origin:
            offs = offs[np.any(offs != 0, axis=1)]
        out = np.zeros(len(z))
        for start in range(0, len(z), 512):
            zz = z[start:start + 512]
            d2 = np.sum((zz[:, None, :] + offs[None, :, :]) ** 2, axis=-1)
            out[start:start + 512] = np.sum(d2 ** (-s / 2), axis=1)
        return out

    def evaluate(self, z):
        """Kernel values and per-point remainder bounds at points ``z``."""
        pts = self.reduce(self._as_points(z))
        r2 = np.sum(pts**2, axis=1)
        if np.any(r2 == 0.0):
            raise ValueError("kernel is singular at lattice points")
        c0, c2 = self._tail_coefficients()
        # summing both orientations makes phi(z) == phi(-z) bit for bit
        neg = self.reduce(-self._as_points(z))
        images = 0.5 * (self._images(pts, True) + self._images(neg, True))
        r2 = 0.5 * (r2 + np.sum(neg**2, axis=1))
        vals = images + c0 + c2 * r2
        return vals, self.remainder_bound(np.sqrt(r2))

    def regular_part(self, z) -> np.ndarray:
        """phi_alpha(z) - |z|^{-(n+alpha)} for z in the closed cell; smooth there."""
        pts = self._as_points(z)
        r2 = np.sum(pts**2, axis=1)
        c0, c2 = self._tail_coefficients()
        return self._images(pts, include_origin=False) + c0 + c2 * r2


def kernel_value(z, kernel: PeriodizedKernel):
    """Return ``(value, bound)`` for a single point or an array of points."""
    vals, bounds = kernel.evaluate(z)
    if np.ndim(z) == 0 or (np.ndim(z) == 1 and kernel.dim > 1):
        return float(vals[0]), float(bounds[0])
    return vals, bounds


def kernel_minimum(kernel: PeriodizedKernel, samples: int = 65) -> float:
    """phi_alpha^- = min over the torus; scanned on a cell-centred lattice."""
    t = np.linspace(-pi, pi, samples)
    if kernel.dim == 1:
        pts = t[t != 0][:, None]
    else:
        a, b = np.meshgrid(t, t, indexing="ij")
        pts = np.stack([a.ravel(), b.ravel()], axis=-1)
        pts = pts[np.any(pts != 0, axis=1)]
    vals, _ = kernel.evaluate(pts)
    return float(vals.min())


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts for the cell integral.

    ``inner_radius`` splits the radial integral: on ``[0, r0]`` the
    regularized integrand ``N(z)/r^2`` is integrated against ``r^{1-alpha}``
    by Gauss-Jacobi, beyond it Gauss-Legendre handles ``N(z) r^{-1-alpha}``.
    """

    inner_radius: float
    n_inner: int = 16
    n_outer: int = 64
    n_theta: int = 24
    n_cube: int = 80
    shell_radius: int = 20
    tail_tolerance: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.inner_radius < pi:
            raise ValueError("inner_radius must lie in (0, pi)")
        if self.shell_radius < 3:
            raise ValueError("shell_radius must be at least 3")

    @classmethod
    def for_grid(cls, grid: TorusGrid, band: int | None = None, **overrides) -> "QuadratureSpec":
        """Resolution sized for fields with modes up to ``band`` (default N/2)."""
        band = grid.N // 2 if band is None else max(int(band), 1)
        params = dict(
            inner_radius=grid.spacing,
            n_inner=16,
            n_outer=3 * band + 24,
            n_theta=band + 12,
            n_cube=4 * band + 24,
        )
        params.update(overrides)
        return cls(**params)


@lru_cache(maxsize=32)
def _nodes(dim: int, alpha: float, quad: QuadratureSpec):
    """Nodes ``z`` and weights ``W`` with sum W N(z) ~ int_cell N(z) phi_alpha(z) dz.

    Valid for integrands that are even in z and vanish to second order at 0.
    """
    r0 = quad.inner_radius
    tj, wj = roots_jacobi(quad.n_inner, 0.0, 1.0 - alpha)
    tl, wl = roots_legendre(quad.n_outer)

    def radial(R):
        r_in = r0 * (1 + tj) / 2
        w_in = wj * (r0 / 2) ** (2 - alpha) / r_in**2
        r_out = r0 + (R - r0) * (1 + tl) / 2
        w_out = wl * (R - r0) / 2 * r_out ** (-1 - alpha)
        return np.concatenate([r_in, r_out]), np.concatenate([w_in, w_out])

    if dim == 1:
        r, w = radial(pi)
        zs, ws = [r[:, None]], [2.0 * w]
    else:
        zs, ws = [], []
        tt, wt = roots_legendre(quad.n_theta)
        for lo in np.arange(4) * (pi / 4):
            theta = lo + (pi / 8) * (1 + tt)
            wth = wt * (pi / 8)
            for th, wtheta in zip(theta, wth):
                R = pi / max(abs(np.cos(th)), abs(np.sin(th)))
                r, w = radial(R)
                zs.append(np.stack([r * np.cos(th), r * np.sin(th)], axis=-1))
                ws.append(2.0 * wtheta * w)

    kernel = PeriodizedKernel(alpha, dim, quad.shell_radius)
    # Relative (per unit sup|f|) error the truncated images can cause.
    truncation = 2.0 * normalization_constant(dim, alpha) * TWO_PI**dim * kernel.tail_bound
    if truncation > quad.tail_tolerance:
        raise OracleError(
            f"image truncation error bound {truncation:.3g} exceeds "
            f"{quad.tail_tolerance:.3g}; increase shell_radius"
        )
    g, gw = roots_legendre(quad.n_cube)
    g, gw = pi * g, pi * gw
    if dim == 1:
        cube = g[:, None]
        cw = gw
    else:
        a, b = np.meshgrid(g, g, indexing="ij")
        cube = np.stack([a.ravel(), b.ravel()], axis=-1)
        cw = np.outer(gw, gw).ravel()
    zs.append(cube)
    ws.append(cw * kernel.regular_part(cube))
    return np.concatenate(zs, axis=0), np.concatenate(ws)


class _Interpolant:
    """Band-limited trigonometric interpolant with explicitly summed DFT coefficients."""

    def __init__(self, values: np.ndarray, band: int | None = None):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        self.dim = values.ndim
        if band is None:
            band = max_mode(values)
        band = min(band, n // 2 - 1)
        self.band = band
        self.k = np.arange(-band, band + 1).astype(float)
        x = np.arange(n) * (TWO_PI / n)
        E = np.exp(-1j * np.outer(self.k, x)) / n
        if self.dim == 1:
            self.coeffs = E @ values
        else:
            self.coeffs = E @ values @ E.T

    def derivative(self, axis: int) -> "_Interpolant":
        out = object.__new__(_Interpolant)
        out.dim, out.band, out.k = self.dim, self.band, self.k
        if self.dim == 1:
            out.coeffs = self.coeffs * (1j * self.k)
        else:
            ik = 1j * self.k
            out.coeffs = self.coeffs * (ik[:, None] if axis == 0 else ik[None, :])
        return out

    def at(self, x: np.ndarray) -> np.ndarray:
        return self.shifted(x, np.zeros((1, self.dim)))[:, 0]

    def shifted(self, x: np.ndarray, z: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Values f(x_p + z_m) as a (P, M) array."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        z = np.asarray(z, dtype=float).reshape(-1, self.dim)
        out = np.empty((len(x), len(z)))
        if self.dim == 1:
            A = self.coeffs[None, :] * np.exp(1j * np.outer(x[:, 0], self.k))
            for s in range(0, len(z), chunk):
                B = np.exp(1j * np.outer(self.k, z[s:s + chunk, 0]))
                out[:, s:s + chunk] = (A @ B).real
            return out
        K = len(self.k)
        ex1 = np.exp(1j * np.outer(x[:, 0], self.k))
        ex2 = np.exp(1j * np.outer(x[:, 1], self.k))
        A = self.coeffs[None, :, :] * ex1[:, :, None] * ex2[:, None, :]
        A2 = A.reshape(len(x) * K, K)
        step = max(64, chunk * 32 // max(len(x), 1) // max(K // 16, 1))
        for s in range(0, len(z), step):
            zz = z[s:s + step]
            B1 = np.exp(1j * np.outer(self.k, zz[:, 0]))
            B2 = np.exp(1j * np.outer(self.k, zz[:, 1]))
            T = (A2 @ B2).reshape(len(x), K, len(zz))
            out[:, s:s + len(zz)] = np.einsum("pam,am->pm", T, B1).real
        return out


def _points(x, dim: int):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and dim > 1 and arr.shape[0] == dim)
    return arr.reshape(-1, dim), single


def _finish(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


def _default_quad(grid: TorusGrid, *fields) -> QuadratureSpec:
    band = max(max_mode(f.values) for f in fields)
    return QuadratureSpec.for_grid(grid, band)


def lambda_direct(f: ScalarField, x, alpha: float, quad: QuadratureSpec | None = None):
    """c_{n,a} * int_cell (f(x) - f(x+z)) phi_alpha(z) dz at point(s) ``x``."""
    grid = f.grid
    quad = quad or _default_quad(grid, f)
    z, w = _nodes(grid.dim, float(alpha), quad)
    pts, single = _points(x, grid.dim)
    P = _Interpolant(f.values)
    f0 = P.at(pts)[:, None]
    num = f0 - 0.5 * (P.shifted(pts, z) + P.shifted(pts, -z))
    return _finish(normalization_constant(grid.dim, alpha) * (num @ w), single)


def _d_alpha(polys, pts, alpha, quad, grid):
    z, w = _nodes(grid.dim, float(alpha), quad)
    total = np.zeros((len(pts), len(z)))
    for P in polys:
        g0 = P.at(pts)[:, None]
        total += (P.shifted(pts, z) - g0) ** 2 + (P.shifted(pts, -z) - g0) ** 2
    return normalization_constant(grid.dim, alpha) * (0.5 * total @ w)


def d_alpha_direct(g, x, alpha: float, quad: QuadratureSpec | None = None):
    """c_{n,a} * int_cell |g(x+z) - g(x)|^2 phi_alpha(z) dz for a vector field ``g``."""
    g = [g] if isinstance(g, ScalarField) else list(g)
    grid = g[0].grid
    quad = quad or _default_quad(grid, *g)
    pts, single = _points(x, grid.dim)
    polys = [_Interpolant(c.values) for c in g]
    return _finish(_d_alpha(polys, pts, alpha, quad, grid), single)


def commutator_direct(u: ScalarField, rho: ScalarField, x, alpha: float,
                      quad: QuadratureSpec | None = None):
    """c_{n,a} * p.v. int (u(x+z) - u(x)) rho(x+z) phi_alpha(z) dz."""
    grid = u.grid
    if rho.grid != grid:
        raise ValueError("u and rho live on different grids")
    quad = quad or _default_quad(grid, u, rho)
    z, w = _nodes(grid.dim, float(alpha), quad)
    pts, single = _points(x, grid.dim)
    U, R = _Interpolant(u.values), _Interpolant(rho.values)
    u0 = U.at(pts)[:, None]
    num = 0.5 * (
        (U.shifted(pts, z) - u0) * R.shifted(pts, z)
        + (U.shifted(pts, -z) - u0) * R.shifted(pts, -z)
    )
    return _finish(normalization_constant(grid.dim, alpha) * (num @ w), single)


def nl_max_ratios(f: ScalarField, alpha: float, points=None,
                  quad: QuadratureSpec | None = None, grad_floor: float = 1e-8) -> np.ndarray:
    """D_alpha(grad f)(x) |f|_inf^alpha / |grad f(x)|^{2+alpha} at the given points.

    Points where ``|grad f| < grad_floor`` are dropped.
    """
    grid = f.grid
    quad = quad or _default_quad(grid, f)
    pts = grid.points if points is None else _points(points, grid.dim)[0]
    P = _Interpolant(f.values)
    polys = [P.derivative(j) for j in range(grid.dim)]
    grad = np.stack([Q.at(pts) for Q in polys], axis=-1)
    gnorm = np.sqrt(np.sum(grad**2, axis=-1))
    keep = gnorm >= grad_floor
    if not np.any(keep):
        return np.empty(0)
    D = _d_alpha(polys, pts[keep], alpha, quad, grid)
    fsup = np.max(np.abs(f.values))
    return D * fsup**alpha / gnorm[keep] ** (2 + alpha)


def nl_max_principle_constant(samples, alpha: float, points=None,
                              quad: QuadratureSpec | None = None) -> float:
    """Smallest observed ratio D_alpha(grad f) |f|_inf^alpha / |grad f|^{2+alpha}."""
    samples = list(samples)
    if not samples:
        raise ValueError("nl_max_principle_constant needs at least one sample field")
    best = np.inf
    for f in samples:
        ratios = nl_max_ratios(f, alpha, points=points, quad=quad)
        if ratios.size:
            best = min(best, float(ratios.min()))
    if not np.isfinite(best):
        raise OracleError("no sample point had a nonvanishing gradient")
    if best <= 0.0:
        raise OracleError(f"nonlinear maximum principle ratio is not positive: {best}")
    return best
