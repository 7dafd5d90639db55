"""Explicit SSP-RK3 time stepping with a state-dependent step size."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dynamics import FlowState, NumericalAbort, rhs

log = logging.getLogger(__name__)


class StiffnessError(NumericalAbort):
    reason = "stiffness"


class NonFiniteError(NumericalAbort):
    reason = "nan"


@dataclass(frozen=True)
class StepPolicy:
    cfl_advective: float = 0.4
    cfl_dissipative: float = 0.4
    dt_max: float = 0.05
    dt_min: float = 1e-9

    def __post_init__(self):
        for name in ("cfl_advective", "cfl_dissipative"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0.0 < self.dt_min < self.dt_max:
            raise ValueError("need 0 < dt_min < dt_max")


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    failure: Optional[NumericalAbort] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> FlowState:
        return self.snapshots[-1]


def stable_dt(state: FlowState, eps: float, policy: StepPolicy) -> float:
    """min(advective CFL, dissipative bound, dt_max); raises if below dt_min."""
    grid = state.grid
    umax = float(np.max(np.abs(state.u)))
    adv = policy.cfl_advective * grid.spacing / umax if umax > 0 else np.inf
    kmax = grid.dealias_cutoff
    stiff = float(np.max(state.rho)) * kmax**state.alpha + eps * kmax**2 + 1e-30
    dt = min(adv, policy.cfl_dissipative / stiff, policy.dt_max)
    if dt < policy.dt_min:
        raise StiffnessError(f"stable dt {dt:.3e} below dt_min {policy.dt_min:.3e}", state.time)
    return dt


def _check(state: FlowState) -> None:
    if not state.is_finite():
        raise NonFiniteError("non-finite values in state", state.time)


def step_ssprk3(state: FlowState, dt: float, eps: float = 0.0,
                vacuum_floor: float = 0.0) -> FlowState:
    """Shu-Osher three-stage, third-order SSP Runge-Kutta step.

    Every stage is a convex combination of forward-Euler updates of the
    divergence-form density equation, so the grid mean of rho is kept.
    """
    r0 = rhs(state, eps, vacuum_floor)
    s1 = state.advanced(state.rho + dt * r0.drho_dt, state.u + dt * r0.du_dt, dt)
    _check(s1)
    r1 = rhs(s1, eps, vacuum_floor)
    s2 = state.advanced(
        0.75 * state.rho + 0.25 * (s1.rho + dt * r1.drho_dt),
        0.75 * state.u + 0.25 * (s1.u + dt * r1.du_dt),
        0.5 * dt,
    )
    _check(s2)
    r2 = rhs(s2, eps, vacuum_floor)
    out = state.advanced(
        state.rho / 3.0 + 2.0 / 3.0 * (s2.rho + dt * r2.drho_dt),
        state.u / 3.0 + 2.0 / 3.0 * (s2.u + dt * r2.du_dt),
        dt,
    )
    _check(out)
    return out


def integrate(state: FlowState, t_final: float, eps: float = 0.0,
              policy: StepPolicy | None = None, observer: Callable | None = None,
              stride: int = 1, dt_fixed: float | None = None,
              vacuum_relative: float = 1e-8) -> Trajectory:
    """Advance ``state`` to ``t_final``.

    ``observer(state, dt)`` runs after every accepted step (and once at
    t = 0 with ``dt = 0``); its return value is appended to
    ``Trajectory.records``. Snapshots are kept every ``stride`` accepted
    steps plus the final state. A numerical abort is stored on the
    trajectory instead of propagating, leaving the partial records intact.
    """
    policy = policy or StepPolicy()
    vacuum_floor = vacuum_relative * float(np.mean(state.rho))
    traj = Trajectory(snapshots=[state])
    if observer is not None:
        traj.records.append(observer(state, 0.0))
    steps = 0
    try:
        while state.time < t_final:
            if dt_fixed is None:
                dt = stable_dt(state, eps, policy)
            else:
                dt = dt_fixed
            remaining = t_final - state.time
            last = dt >= remaining or remaining - dt < 1e-12 * max(t_final, 1.0)
            if last:
                dt = remaining
            state = step_ssprk3(state, dt, eps, vacuum_floor)
            if last:
                state = replace(state, time=t_final)
            steps += 1
            if observer is not None:
                traj.records.append(observer(state, dt))
            if steps % stride == 0 or state.time >= t_final:
                traj.snapshots.append(state)
    except NumericalAbort as exc:
        log.warning("run aborted at t=%.6g: %s", exc.time if exc.time is not None else state.time, exc)
        if exc.time is None:
            exc.time = state.time
        traj.failure = exc
        if traj.snapshots[-1] is not state:
            traj.snapshots.append(state)
    return traj


def initial_state(config) -> FlowState:
    """Build the scenario's initial state for a :class:`~flockspec.config.SimConfig`."""
    from .scenarios import get_scenario
    from .torus import make_grid

    grid = make_grid(config.dim, config.N)
    return get_scenario(config.scenario.name).generate(
        grid, config.scenario.param_dict(), config.seed, config.alpha, config.mode)


def run(config, observer: Callable | None = None) -> Trajectory:
    """Integrate a configured scenario, recording diagnostics at every step.

    ``observer(record)`` receives each fresh DiagnosticsRecord; snapshots
    are decimated by the output stride.
    """
    from .diagnostics import make_record

    diag = config.diagnostics

    def _observe(state, dt):
        record = make_record(state, dt, diag.s_list, diag.gamma)
        if observer is not None:
            observer(record)
        return record

    return integrate(initial_state(config), config.T_final, config.eps, config.policy,
                     _observe, config.output.stride)
