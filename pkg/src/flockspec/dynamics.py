"""Right-hand sides of the Euler alignment system with kernel |z|^{-(n+alpha)}.

Unidirectional mode evolves a scalar velocity amplitude along e_1::

    rho_t + d_1(rho u) = eps Lap rho
    u_t + d_1(u^2)/2   = C_alpha(u, rho) + eps Lap u

with C_alpha(u, rho) = Lambda_alpha(rho) u - Lambda_alpha(rho u). Vector mode
carries all n velocity components and the full transport u . grad u.

Every pointwise product is projected onto the 2/3-rule band before any
derivative is taken, and the returned rates live in that band, so states
started inside the band stay there.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .torus import ScalarField, TorusGrid, fft, ifft, _check_alpha


class NumericalAbort(RuntimeError):
    """Base class for conditions that stop a run; ``reason`` is machine readable."""

    reason = "numerical"

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class VacuumError(NumericalAbort):
    reason = "vacuum"


@dataclass(frozen=True)
class FlowState:
    """Density and velocity on a torus grid at one instant.

    ``u`` has the grid shape in unidirectional mode and shape
    ``(dim, *grid.shape)`` in vector mode.
    """

    grid: TorusGrid
    rho: np.ndarray
    u: np.ndarray
    alpha: float
    time: float = 0.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.rho.shape != self.grid.shape:
            raise ValueError(f"rho has shape {self.rho.shape}, grid is {self.grid.shape}")
        if self.u.shape not in (self.grid.shape, (self.grid.dim,) + self.grid.shape):
            raise ValueError(f"u has incompatible shape {self.u.shape}")

    @property
    def vector_mode(self) -> bool:
        return self.u.shape != self.grid.shape

    @property
    def mode(self) -> str:
        return "vector" if self.vector_mode else "unidirectional"

    @property
    def velocity_components(self) -> np.ndarray:
        """Velocity as ``(dim, *shape)``; unidirectional data points along e_1."""
        if self.vector_mode:
            return self.u
        comps = np.zeros((self.grid.dim,) + self.grid.shape)
        comps[0] = self.u
        return comps

    @property
    def direction(self) -> np.ndarray:
        d = np.zeros(self.grid.dim)
        d[0] = 1.0
        return d

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.u)))

    def rho_field(self) -> ScalarField:
        return ScalarField(self.grid, self.rho)

    def u_field(self, component: int = 0) -> ScalarField:
        return ScalarField(self.grid, self.u[component] if self.vector_mode else self.u)

    def advanced(self, rho: np.ndarray, u: np.ndarray, dt: float) -> "FlowState":
        return replace(self, rho=rho, u=u, time=self.time + dt)


@dataclass(frozen=True)
class StateRate:
    drho_dt: np.ndarray
    du_dt: np.ndarray


@dataclass(frozen=True)
class EntropyFields:
    e: np.ndarray
    q: np.ndarray


def _project(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Band-limited Fourier coefficients of a pointwise product."""
    return np.where(grid.dealias_mask, fft(values), 0.0)


def _commutator_hat(grid, rho_hat, u, rho_u_hat, alpha, lam_rho=None):
    sym = grid.fractional_symbol(alpha)
    if lam_rho is None:
        lam_rho = ifft(sym * rho_hat)
    return _project(grid, lam_rho * u) - sym * rho_u_hat


def alignment_commutator_field(u: ScalarField, rho: ScalarField, alpha: float) -> ScalarField:
    """Lambda_alpha(rho) u - Lambda_alpha(rho u) on the grid.

    The product ``rho u`` is dealiased before it is transformed; the outer
    product with ``u`` is left as is.
    """
    if u.grid != rho.grid:
        raise ValueError("u and rho live on different grids")
    _check_alpha(alpha)
    grid = u.grid
    sym = grid.fractional_symbol(alpha)
    lam_rho = ifft(sym * fft(rho.values))
    rho_u_hat = _project(grid, rho.values * u.values)
    return ScalarField(grid, lam_rho * u.values - ifft(sym * rho_u_hat))


def _check_vacuum(state: FlowState, vacuum_floor: float) -> None:
    rmin = float(np.min(state.rho))
    if not rmin > vacuum_floor:
        raise VacuumError(f"min rho = {rmin:.3e} <= {vacuum_floor:.3e}", state.time)


def rhs_unidirectional(state: FlowState, eps: float = 0.0, vacuum_floor: float = 0.0) -> StateRate:
    if state.vector_mode:
        raise ValueError("rhs_unidirectional needs a scalar velocity")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    _check_vacuum(state, vacuum_floor)
    grid, rho, u = state.grid, state.rho, state.u
    ik1 = grid.derivative_symbol(0)
    rho_hat, u_hat = fft(rho), fft(u)
    rho_u_hat = _project(grid, rho * u)
    u2_hat = _project(grid, u * u)
    drho_hat = -ik1 * rho_u_hat
    du_hat = -0.5 * ik1 * u2_hat + _commutator_hat(grid, rho_hat, u, rho_u_hat, state.alpha)
    if eps > 0:
        lap = np.where(grid.nyquist_free, -grid.k_norm**2, 0.0)
        drho_hat = drho_hat + eps * lap * rho_hat
        du_hat = du_hat + eps * lap * u_hat
    mask = grid.dealias_mask
    return StateRate(ifft(np.where(mask, drho_hat, 0.0)), ifft(np.where(mask, du_hat, 0.0)))


def rhs_full_vector(state: FlowState, eps: float = 0.0, vacuum_floor: float = 0.0) -> StateRate:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    _check_vacuum(state, vacuum_floor)
    grid, rho = state.grid, state.rho
    vel = state.velocity_components
    sym = grid.fractional_symbol(state.alpha)
    rho_hat = fft(rho)
    lam_rho = ifft(sym * rho_hat)
    mask = grid.dealias_mask
    lap = np.where(grid.nyquist_free, -grid.k_norm**2, 0.0)
    d = [grid.derivative_symbol(j) for j in range(grid.dim)]

    drho_hat = np.zeros(grid.shape, dtype=complex)
    for j in range(grid.dim):
        drho_hat -= d[j] * _project(grid, rho * vel[j])
    if eps > 0:
        drho_hat += eps * lap * rho_hat

    du = np.empty_like(vel)
    for i in range(grid.dim):
        ui_hat = fft(vel[i])
        transport = np.zeros(grid.shape)
        for j in range(grid.dim):
            transport += vel[j] * ifft(d[j] * ui_hat)
        rate_hat = -_project(grid, transport)
        rate_hat += _commutator_hat(grid, rho_hat, vel[i], _project(grid, rho * vel[i]),
                                    state.alpha, lam_rho)
        if eps > 0:
            rate_hat += eps * lap * ui_hat
        du[i] = ifft(np.where(mask, rate_hat, 0.0))
    du_dt = du if state.vector_mode else du[0]
    return StateRate(ifft(np.where(mask, drho_hat, 0.0)), du_dt)


def rhs(state: FlowState, eps: float = 0.0, vacuum_floor: float = 0.0) -> StateRate:
    if state.vector_mode:
        return rhs_full_vector(state, eps, vacuum_floor)
    return rhs_unidirectional(state, eps, vacuum_floor)


def entropy_fields(state: FlowState) -> EntropyFields:
    """e = div u - Lambda_alpha rho (d_1 u in unidirectional mode) and q = e / rho."""
    grid = state.grid
    vel = state.velocity_components
    div_hat = sum(grid.derivative_symbol(j) * fft(vel[j]) for j in range(grid.dim))
    e = ifft(div_hat - grid.fractional_symbol(state.alpha) * fft(state.rho))
    if np.min(state.rho) <= 0:
        raise VacuumError("q = e / rho is undefined on vacuum", state.time)
    return EntropyFields(e, e / state.rho)


def velocity_gradient(state: FlowState) -> np.ndarray:
    """Array ``G[i, j] = d_j u^i`` of shape ``(dim, dim, *grid.shape)``."""
    grid = state.grid
    vel = state.velocity_components
    G = np.empty((grid.dim, grid.dim) + grid.shape)
    for i in range(grid.dim):
        ui_hat = fft(vel[i])
        for j in range(grid.dim):
            G[i, j] = ifft(grid.derivative_symbol(j) * ui_hat)
    return G


def entropy_source_multiD(state: FlowState) -> ScalarField:
    """(div u)^2 - Tr((grad u)^2), the production term of the multi-D entropy."""
    G = velocity_gradient(state)
    div = np.trace(G, axis1=0, axis2=1)
    tr_sq = np.einsum("ij...,ji...->...", G, G)
    return ScalarField(state.grid, div**2 - tr_sq)
