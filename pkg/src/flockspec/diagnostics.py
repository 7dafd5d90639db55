"""Measurements taken along a run: conserved integrals, amplitude, density
extrema, entropy statistics, norms, decay fits and the traveling frame."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .dynamics import FlowState, entropy_fields
from .torus import (
    ScalarField,
    TorusGrid,
    TrigPolynomial,
    fft,
    ifft,
    sobolev_norm,
    spectral_shift,
)

BASE_COLUMNS = (
    "t", "M", "P", "A", "rho_min", "rho_max", "sup_q", "sup_e",
    "grad_u_inf", "grad_rho_inf", "dt",
)


class FitRefused(ValueError):
    """The series cannot be log-fitted; ``reason`` says why."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _fmt_s(s: float) -> str:
    return f"{s:g}"


def norm_columns(s_list: Sequence[float]) -> list:
    cols = [f"H{_fmt_s(s)}_u" for s in s_list]
    cols += [f"H{_fmt_s(s)}_rho" for s in s_list]
    return cols + ["grad2_u_inf", "holder_rho"]


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    M: float
    P: object  # float, or a tuple of floats in vector mode
    A: float
    rho_min: float
    rho_max: float
    sup_q: float
    sup_e: float
    grad_u_inf: float
    grad_rho_inf: float
    dt: float
    mean_e: float = 0.0
    sobolev_u: dict = field(default_factory=dict)
    sobolev_rho: dict = field(default_factory=dict)
    grad2_u_inf: float = 0.0
    holder_rho: float = 0.0

    def row(self) -> dict:
        """Flat mapping in output-column order."""
        P = self.P[0] if isinstance(self.P, tuple) else self.P
        out = {"t": self.t, "M": self.M, "P": P}
        for name in BASE_COLUMNS[3:]:
            out[name] = getattr(self, name)
        for s, v in self.sobolev_u.items():
            out[f"H{_fmt_s(s)}_u"] = v
        for s, v in self.sobolev_rho.items():
            out[f"H{_fmt_s(s)}_rho"] = v
        out["grad2_u_inf"] = self.grad2_u_inf
        out["holder_rho"] = self.holder_rho
        return out


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    residual: float
    window: tuple


@dataclass
class LimitingProfile:
    rho_bar: ScalarField
    u_bar: float
    cauchy_residuals: np.ndarray
    residual_times: np.ndarray
    residual_fit: DecayFit | None
    fit_refusal: str | None = None


def conserved(state: FlowState):
    """Mass and momentum by grid quadrature (exact for band-limited data)."""
    vol = state.grid.cell_volume
    M = float(np.sum(state.rho) * vol)
    if state.vector_mode:
        P = tuple(float(np.sum(state.rho * c) * vol) for c in state.u)
    else:
        P = float(np.sum(state.rho * state.u) * vol)
    return M, P


def locate_extremum(values: np.ndarray, kind: str = "max", iterations: int = 8) -> tuple:
    """Location and value of an extremum of the trigonometric interpolant.

    Starts from the grid extremum and takes Newton steps on the gradient.
    Falls back to the grid point if Newton leaves the starting cell or fails
    to improve on it.
    """
    sign = 1.0 if kind == "max" else -1.0
    idx = np.unravel_index(np.argmax(sign * values), values.shape)
    n = values.shape[0]
    h = 2 * np.pi / n
    x0 = np.array(idx, dtype=float) * h
    best = float(values[idx])
    poly = TrigPolynomial.from_values(values, band=n // 2 - 1)
    dim = values.ndim
    x = x0.copy()
    for _ in range(iterations):
        grad = np.array([poly(x, _unit(dim, j))[0] for j in range(dim)])
        hess = np.empty((dim, dim))
        for i in range(dim):
            for j in range(dim):
                order = [0] * dim
                order[i] += 1
                order[j] += 1
                hess[i, j] = poly(x, order)[0]
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        x = x - step
        if np.max(np.abs(x - x0)) > h or not np.all(np.isfinite(x)):
            return x0, best
        if np.max(np.abs(step)) < 1e-14:
            break
    val = float(poly(x)[0])
    return (x, val) if sign * val >= sign * best else (x0, best)


def refine_extremum(values: np.ndarray, kind: str = "max", iterations: int = 8) -> float:
    """Extremal value of the trigonometric interpolant of ``values``."""
    return locate_extremum(values, kind, iterations)[1]


def _unit(dim: int, j: int) -> list:
    order = [0] * dim
    order[j] = 1
    return order


def amplitude(state: FlowState, refine: bool = True) -> float:
    """max |u(x) - u(y)| over the torus.

    Unidirectional: range of the interpolated velocity (Newton-polished
    extrema when ``refine``). Vector mode: diameter of the velocity point
    cloud on a grid coarsened to at most 4096 points.
    """
    if not state.vector_mode:
        u = state.u
        if refine and np.ptp(u) > 0:
            return max(refine_extremum(u, "max") - refine_extremum(u, "min"), 0.0)
        return float(np.ptp(u))
    grid = state.grid
    stride = 1
    while (grid.N // stride) ** grid.dim > 4096:
        stride *= 2
    sl = (slice(None),) + (slice(None, None, stride),) * grid.dim
    pts = state.u[sl].reshape(grid.dim, -1).T
    pts = np.unique(pts, axis=0)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 2:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except (QhullError, ValueError):
            # flat clouds (unidirectional data): joggled hull, ~1e-11 relative slack
            pts = pts[ConvexHull(pts, qhull_options="QJ").vertices]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def entropy_stats(state: FlowState):
    """(sup|e|, sup|q|, grid mean of e)."""
    ent = entropy_fields(state)
    return float(np.max(np.abs(ent.e))), float(np.max(np.abs(ent.q))), float(np.mean(ent.e))


def _grad_sup(grid: TorusGrid, values: np.ndarray) -> float:
    vhat = fft(values)
    g2 = sum(ifft(grid.derivative_symbol(j) * vhat) ** 2 for j in range(grid.dim))
    return float(np.sqrt(np.max(g2)))


def _hessian_sup(grid: TorusGrid, values: np.ndarray) -> float:
    vhat = fft(values)
    out = 0.0
    for i in range(grid.dim):
        for j in range(grid.dim):
            sym = grid.derivative_symbol(i) * grid.derivative_symbol(j)
            out = max(out, float(np.max(np.abs(ifft(sym * vhat)))))
    return out


def norm_bundle(state: FlowState, s_list: Sequence[float]) -> dict:
    """H^s norms of u and rho, and sup norms of first and second derivatives."""
    grid = state.grid
    comps = state.velocity_components[: (grid.dim if state.vector_mode else 1)]
    out = {"u": {}, "rho": {}}
    rho = ScalarField(grid, state.rho)
    for s in s_list:
        out["u"][s] = float(np.sqrt(sum(sobolev_norm(ScalarField(grid, c), s) ** 2 for c in comps)))
        out["rho"][s] = sobolev_norm(rho, s)
    out["grad_u_inf"] = max(_grad_sup(grid, c) for c in comps)
    out["grad_rho_inf"] = _grad_sup(grid, state.rho)
    out["grad2_u_inf"] = max(_hessian_sup(grid, c) for c in comps)
    return out


def _holder_offsets(grid: TorusGrid) -> list:
    n = grid.N
    steps = sorted({int(round(v)) for v in np.geomspace(1, n // 4, num=12)})
    if grid.dim == 1:
        return [(m,) for m in steps]
    shifts = [0] + steps
    limit = (n // 4) ** 2
    return [(a, b) for a in shifts for b in shifts if 0 < a * a + b * b <= limit]


def holder_seminorm(f: ScalarField, gamma: float) -> float:
    """max |f(x) - f(y)| / |x - y|^gamma over a fixed family of grid offsets
    of torus length at most L/4. A trend indicator, not a certified norm."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    grid = f.grid
    best = 0.0
    for off in _holder_offsets(grid):
        for signs in ([1], [1, -1])[grid.dim - 1]:
            shift = (off[0],) if grid.dim == 1 else (off[0], signs * off[1])
            dist = grid.spacing * np.sqrt(sum(m * m for m in shift))
            diff = np.abs(f.values - np.roll(f.values, shift, axis=tuple(range(grid.dim))))
            best = max(best, float(diff.max()) / float(dist)**gamma)
    return best


def _split_series(series):
    """Accept ``[(t, v), ...]`` or a pair of equal-length arrays ``(ts, vs)``."""
    if isinstance(series, tuple) and len(series) == 2 and np.ndim(series[0]) == 1:
        t, v = series
    else:
        arr = np.asarray(series, dtype=float).reshape(-1, 2)
        t, v = arr[:, 0], arr[:, 1]
    return np.asarray(t, dtype=float), np.asarray(v, dtype=float)


def fit_decay_rate(series, window_fraction: float = 0.5, window: tuple | None = None) -> DecayFit:
    """Least-squares fit of log(value) = intercept - rate * t.

    The window is the trailing ``window_fraction`` of the time span unless
    an explicit ``(t_a, t_b)`` is given.
    """
    t, v = _split_series(series)
    if len(t) < 2:
        raise FitRefused("need at least two samples")
    if window is None:
        if not 0.0 < window_fraction <= 1.0:
            raise ValueError("window_fraction must lie in (0, 1]")
        t_b = float(t[-1])
        t_a = t_b - window_fraction * (t_b - float(t[0]))
    else:
        t_a, t_b = map(float, window)
    sel = (t >= t_a) & (t <= t_b)
    if sel.sum() < 2:
        raise FitRefused("fewer than two samples inside the fit window")
    tv, vv = t[sel], v[sel]
    if np.any(~(vv > 0)):
        raise FitRefused("nonpositive values in the fit window")
    logv = np.log(vv)
    if np.ptp(logv) == 0.0:
        return DecayFit(0.0, float(logv[0]), 0.0, (t_a, t_b))
    slope, intercept = np.polyfit(tv, logv, 1)
    resid = logv - (slope * tv + intercept)
    return DecayFit(float(-slope), float(intercept), float(np.sqrt(np.mean(resid**2))), (t_a, t_b))


def traveling_frame(state: FlowState, u_bar: float) -> ScalarField:
    """rho~(x, t) = rho(x_1 + u_bar t, x_2, ..., t)."""
    if state.vector_mode:
        raise ValueError("traveling_frame expects a unidirectional state")
    offset = np.zeros(state.grid.dim)
    offset[0] = u_bar * state.time
    return spectral_shift(ScalarField(state.grid, state.rho), offset)


def limiting_profile(trajectory, floor: float = 1e-12, window_fraction: float = 1.0) -> LimitingProfile:
    """Cauchy-sequence estimate of the limiting density in the moving frame.

    Residuals at or below ``floor`` are treated as converged and left out
    of the decay fit.
    """
    snaps = list(trajectory.snapshots)
    if len(snaps) < 3:
        raise ValueError("limiting_profile needs at least three snapshots")
    M0, P0 = conserved(snaps[0])
    u_bar = P0 / M0
    frames = [traveling_frame(s, u_bar).values for s in snaps]
    res = np.array([np.max(np.abs(b - a)) for a, b in zip(frames[:-1], frames[1:])])
    times = np.array([s.time for s in snaps[1:]])
    fit, refusal = None, None
    keep = res > floor
    if keep.sum() >= 2:
        try:
            fit = fit_decay_rate((times[keep], res[keep] / np.diff([snaps[0].time, *times])[keep]),
                                 window_fraction=window_fraction)
        except FitRefused as exc:
            refusal = exc.reason
    else:
        refusal = "degenerate: residuals already at floor"
    return LimitingProfile(ScalarField(snaps[-1].grid, frames[-1]), u_bar, res, times, fit, refusal)


def density_bound_margins(state: FlowState, kernel_min: float) -> tuple:
    """Pointwise checks behind the two-sided density bounds.

    At the (interpolated) minimiser x-, Lambda_alpha rho(x-) cannot exceed
    c phi^- ((2pi)^n rho^- - M); at the maximiser it cannot fall below
    c phi^- ((2pi)^n rho^+ - M) >= 0. ``kernel_min`` must be the
    normalised minimum c_{n,alpha} phi_alpha^-. Returned margins are
    nonnegative when the inequalities hold.
    """
    grid = state.grid
    M, _ = conserved(state)
    vol = (2 * np.pi) ** grid.dim
    lam = ifft(grid.fractional_symbol(state.alpha) * fft(state.rho))
    i_min = np.unravel_index(np.argmin(state.rho), grid.shape)
    i_max = np.unravel_index(np.argmax(state.rho), grid.shape)
    rmin, rmax = state.rho[i_min], state.rho[i_max]
    lower = kernel_min * (vol * rmin - M) - lam[i_min]
    upper = lam[i_max] - kernel_min * (vol * rmax - M)
    return float(lower), float(upper)


def make_record(state: FlowState, dt: float, s_list: Sequence[float] = (1.0, 2.0),
                gamma: float = 0.5) -> DiagnosticsRecord:
    M, P = conserved(state)
    sup_e, sup_q, mean_e = entropy_stats(state)
    norms = norm_bundle(state, s_list)
    return DiagnosticsRecord(
        t=float(state.time), M=M, P=P, A=amplitude(state),
        rho_min=float(np.min(state.rho)), rho_max=float(np.max(state.rho)),
        sup_q=sup_q, sup_e=sup_e,
        grad_u_inf=norms["grad_u_inf"], grad_rho_inf=norms["grad_rho_inf"],
        dt=float(dt), mean_e=mean_e,
        sobolev_u=norms["u"], sobolev_rho=norms["rho"],
        grad2_u_inf=norms["grad2_u_inf"],
        holder_rho=holder_seminorm(ScalarField(state.grid, state.rho), gamma),
    )
