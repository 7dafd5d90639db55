"""Cross-checks of the spectral operators against the quadrature oracle.

Each check returns a :class:`CheckResult` with the measured error and the
tolerance it is held to. ``run_checks`` takes the commutator implementation
as a parameter so a deliberately broken one can be injected in tests.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import oracle
from .dynamics import alignment_commutator_field
from .torus import (ScalarField, TorusGrid, fractional_laplacian, inner_product,
                    make_grid, sobolev_norm)

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.5, 1.0, 1.5)
DEFAULT_NS = (32, 64)


@dataclass(frozen=True)
class CheckResult:
    name: str
    dim: int
    N: int
    alpha: float
    error: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    comparison: str = "<"  # "<": error below tolerance; ">": value above bound

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        label = "error" if self.comparison == "<" else "value"
        return (f"{status} {self.name:<22s} dim={self.dim} N={self.N:<3d} alpha={self.alpha:<5g}"
                f" {label}={self.error:.3e} {self.comparison} {self.tolerance:.1e}")


def random_band_limited(grid: TorusGrid, band: int, rng: np.random.Generator,
                        decay: float = 1.0) -> np.ndarray:
    """Real random field with modes |k|_inf <= band and coefficient decay (1+|k|)^-decay,
    scaled to unit sup norm."""
    if band >= grid.N // 2:
        raise ValueError("band must be below N/2")
    mask = grid.nyquist_free.copy()
    for k in grid.k_axes:
        mask &= np.abs(k) <= band
    amp = (1.0 + grid.k_norm) ** (-decay)
    coeffs = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * amp * mask
    values = np.fft.ifftn(coeffs).real
    return values / np.max(np.abs(values))


def sample_points(grid: TorusGrid, count: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(grid.size, size=min(count, grid.size), replace=False)
    return grid.points[np.sort(idx)]


def _rel(err: float, scale: float) -> float:
    return err / scale if scale > 0 else err


def _timed(fn):
    t0 = time.perf_counter()
    name, dim, N, alpha, err, tol, *cmp = fn()
    cmp = cmp[0] if cmp else "<"
    passed = err < tol if cmp == "<" else err > tol
    return CheckResult(name, dim, N, alpha, float(err), tol, bool(passed),
                       time.perf_counter() - t0, cmp)


def _grid_index(grid: TorusGrid, pts: np.ndarray) -> tuple:
    idx = np.rint(pts / grid.spacing).astype(int) % grid.N
    return tuple(idx.T)


def check_lambda(grid, alpha, rng, n_points=32):
    f = random_band_limited(grid, grid.N // 4, rng)
    pts = sample_points(grid, n_points, rng)
    spec = fractional_laplacian(ScalarField(grid, f), alpha).values
    direct = oracle.lambda_direct(ScalarField(grid, f), pts, alpha)
    err = np.max(np.abs(direct - spec[_grid_index(grid, pts)]))
    return "lambda_direct", grid.dim, grid.N, alpha, _rel(err, np.max(np.abs(spec))), 1e-6


def check_commutator(grid, alpha, rng, commutator: Callable = alignment_commutator_field,
                     n_points=16):
    band = grid.N // 8
    u = ScalarField(grid, random_band_limited(grid, band, rng))
    rho = ScalarField(grid, 1.5 + 0.5 * random_band_limited(grid, band, rng))
    pts = sample_points(grid, n_points, rng)
    spec = commutator(u, rho, alpha).values
    direct = oracle.commutator_direct(u, rho, pts, alpha)
    err = np.max(np.abs(direct - spec[_grid_index(grid, pts)]))
    return "commutator_direct", grid.dim, grid.N, alpha, _rel(err, np.max(np.abs(spec))), 1e-5


def pointwise_identity_residual(f: ScalarField, alpha: float, pts: np.ndarray) -> float:
    """max |grad f . Lambda grad f - Lambda|grad f|^2 / 2 - D(grad f) / 2| / scale
    with scale = sup |grad f . Lambda grad f| on the grid."""
    grid = f.grid
    grads = [ScalarField(grid, g) for g in _spectral_gradient(f)]
    lam = [fractional_laplacian(g, alpha).values for g in grads]
    dot = sum(g.values * lg for g, lg in zip(grads, lam))
    sq = ScalarField(grid, sum(g.values**2 for g in grads))
    lhs = dot - 0.5 * fractional_laplacian(sq, alpha).values
    D = oracle.d_alpha_direct(grads, pts, alpha)
    resid = np.abs(lhs[_grid_index(grid, pts)] - 0.5 * D)
    return _rel(float(np.max(resid)), float(np.max(np.abs(dot))))


def _spectral_gradient(f: ScalarField) -> list:
    from .torus import gradient
    return [g.values for g in gradient(f)]


def check_pointwise_identity(grid, alpha, rng, n_fields=2, n_points=16):
    worst = 0.0
    for _ in range(n_fields):
        f = ScalarField(grid, random_band_limited(grid, grid.N // 8, rng))
        worst = max(worst, pointwise_identity_residual(f, alpha, sample_points(grid, n_points, rng)))
    return "pointwise_identity", grid.dim, grid.N, alpha, worst, 1e-5


def check_nl_max(grid, alpha, rng, n_fields=4):
    fields = [ScalarField(grid, random_band_limited(grid, grid.N // 8, rng)) for _ in range(n_fields)]
    ratios = [oracle.nl_max_ratios(f, alpha) for f in fields]
    const = min(float(r.min()) for r in ratios if r.size)
    return "nl_max_positivity", grid.dim, grid.N, alpha, const, 0.0, ">"


def check_semigroup(grid, alpha, rng):
    f = ScalarField(grid, random_band_limited(grid, grid.N // 4, rng))
    a1 = a2 = alpha / 2.0
    twice = fractional_laplacian(fractional_laplacian(f, a1), a2).values
    once = fractional_laplacian(f, a1 + a2).values
    return "semigroup", grid.dim, grid.N, alpha, _rel(np.max(np.abs(twice - once)), np.max(np.abs(once))), 1e-10


def check_adjoint(grid, alpha, rng):
    f = ScalarField(grid, random_band_limited(grid, grid.N // 2 - 1, rng))
    g = ScalarField(grid, random_band_limited(grid, grid.N // 2 - 1, rng))
    a = inner_product(fractional_laplacian(f, alpha), g)
    b = inner_product(f, fractional_laplacian(g, alpha))
    return "self_adjoint", grid.dim, grid.N, alpha, _rel(abs(a - b), max(abs(a), abs(b))), 1e-11


def check_coercivity(grid, alpha, rng):
    f = ScalarField(grid, random_band_limited(grid, grid.N // 2 - 1, rng))
    lam = fractional_laplacian(f, alpha)
    l2 = np.sqrt(inner_product(lam, lam))
    hs = sobolev_norm(f, alpha, homogeneous=True)
    return "coercivity", grid.dim, grid.N, alpha, _rel(abs(l2 - hs), hs), 1e-12


def check_mean(grid, alpha, rng):
    f = ScalarField(grid, rng.standard_normal(grid.shape))
    return "mean_annihilation", grid.dim, grid.N, alpha, abs(float(np.mean(fractional_laplacian(f, alpha).values))), 1e-13


def run_checks(alphas: Sequence[float] = DEFAULT_ALPHAS, Ns: Sequence[int] = DEFAULT_NS,
               commutator: Callable = alignment_commutator_field, seed: int = 2024,
               dims: Sequence[int] = (1, 2)) -> list:
    results = []
    for N in Ns:
        for dim in dims:
            grid = make_grid(dim, N)
            for alpha in alphas:
                rng = np.random.Generator(np.random.Philox(seed))
                checks = [
                    lambda: check_lambda(grid, alpha, rng),
                    lambda: check_commutator(grid, alpha, rng, commutator),
                    lambda: check_pointwise_identity(grid, alpha, rng),
                    lambda: check_semigroup(grid, alpha, rng),
                    lambda: check_adjoint(grid, alpha, rng),
                    lambda: check_coercivity(grid, alpha, rng),
                    lambda: check_mean(grid, alpha, rng),
                ]
                if dim == 1:
                    checks.append(lambda: check_nl_max(grid, alpha, rng))
                for check in checks:
                    res = _timed(check)
                    log.info(res.line())
                    results.append(res)
    return results


def report(results: Sequence[CheckResult]) -> dict:
    return {
        "passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }


def write_report(path, results) -> None:
    with open(path, "w") as fh:
        json.dump(report(results), fh, indent=2)
        fh.write("\n")
