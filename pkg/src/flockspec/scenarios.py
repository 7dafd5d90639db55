"""Named initial-data presets.

Every generator returns band-limited fields (all modes below N/3) with a
strictly positive density. Randomized presets draw from a Philox
counter-based generator seeded from the config, so the same seed gives the
same bits on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ConfigError
from .dynamics import FlowState
from .torus import TorusGrid, max_mode


@dataclass(frozen=True)
class Scenario:
    name: str
    defaults: dict
    build: Callable  # (grid, params, rng) -> (rho, u)
    dims: tuple = (1, 2)
    description: str = ""

    def generate(self, grid: TorusGrid, params: dict | None = None, seed: int = 0,
                 alpha: float = 1.5, mode: str = "unidirectional") -> FlowState:
        merged = dict(self.defaults)
        merged.update(params or {})
        rng = np.random.Generator(np.random.Philox(seed))
        rho, u = self.build(grid, merged, rng)
        rho = np.ascontiguousarray(rho, dtype=float)
        u = np.ascontiguousarray(u, dtype=float)
        if not np.min(rho) > 0:
            raise ConfigError(f"scenario {self.name}: generated density is not positive")
        for f in (rho, u):
            if max_mode(f) >= grid.dealias_cutoff:
                raise ConfigError(f"scenario {self.name}: data not band-limited below N/3 at N={grid.N}")
        if mode == "vector":
            comps = np.zeros((grid.dim,) + grid.shape)
            comps[0] = u
            u = comps
        return FlowState(grid, rho, u, alpha)


def _uniform(grid, p, rng):
    return np.full(grid.shape, p["rho0"]), np.full(grid.shape, p["u0"])


def _bump1d(grid, p, rng):
    x1 = grid.coordinates[0]
    return 1.0 + p["a"] * np.cos(x1), p["c"] + p["b"] * np.sin(x1)


def _bump2d(grid, p, rng):
    x1, x2 = grid.coordinates
    rho = 1.0 + p["a"] * np.cos(x1) * np.cos(x2)
    u = p["b"] * (np.sin(x1) * np.cos(x2) + 0.5 * np.sin(x2))
    return rho, u


def _twave(grid, p, rng):
    x1 = grid.coordinates[0]
    a = p["a"]
    return 1.0 + a * np.cos(x1) + 0.5 * a * np.sin(2.0 * x1), np.full(grid.shape, p["c"])


def _random_modes(grid, kmax, rng, amp):
    """Real field with random coefficients on |k|_inf <= kmax, scaled to sup norm ``amp``."""
    kk = np.arange(-kmax, kmax + 1)
    field = np.zeros(grid.shape)
    coords = grid.coordinates
    if grid.dim == 1:
        for k in kk[kk > 0]:
            a, b = rng.standard_normal(2) / k
            field += a * np.cos(k * coords[0]) + b * np.sin(k * coords[0])
    else:
        for k1 in kk:
            for k2 in kk:
                if (k1, k2) <= (0, 0):
                    continue
                a, b = rng.standard_normal(2) / np.hypot(k1, k2)
                phase = k1 * coords[0] + k2 * coords[1]
                field += a * np.cos(phase) + b * np.sin(phase)
    peak = np.max(np.abs(field))
    return field * (amp / peak) if peak > 0 else field


def _rand_smooth(grid, p, rng):
    kmax = int(p["kmax"])
    if kmax < 1:
        raise ConfigError("[scenario] kmax: must be >= 1")
    if kmax >= grid.dealias_cutoff:
        raise ConfigError(f"[scenario] kmax: must be below N/3 = {grid.dealias_cutoff:.3g}")
    amp_rho = p["amp_rho"]
    if not 0.0 <= amp_rho <= 0.8:
        raise ConfigError("[scenario] amp_rho: must lie in [0, 0.8] so that min rho >= 0.2")
    rho = 1.0 + _random_modes(grid, kmax, rng, amp_rho)
    u = _random_modes(grid, kmax, rng, p["amp_u"])
    return rho, u


_LIBRARY = (
    Scenario("uniform", {"rho0": 1.0, "u0": 0.5}, _uniform,
             description="constant state, an exact steady solution"),
    Scenario("bump1d", {"a": 0.5, "b": 1.0, "c": 0.0}, _bump1d,
             description="rho = 1 + a cos x1, u = c + b sin x1"),
    Scenario("rand_smooth", {"kmax": 4.0, "amp_rho": 0.5, "amp_u": 1.0}, _rand_smooth,
             description="seeded random band-limited perturbations"),
    Scenario("bump2d_uni", {"a": 0.5, "b": 1.0}, _bump2d, dims=(2,),
             description="2D data depending on both coordinates, velocity along e1"),
    Scenario("nearvac", {"a": 0.95, "b": 1.0, "c": 0.0}, _bump1d,
             description="bump1d with a deep density trough"),
    Scenario("twave_check", {"a": 0.3, "c": 0.7}, _twave,
             description="constant velocity, exact traveling wave rho(x1 - c t)"),
)


def scenario_library() -> list:
    return list(_LIBRARY)


def get_scenario(name: str) -> Scenario:
    for sc in _LIBRARY:
        if sc.name == name:
            return sc
    known = ", ".join(s.name for s in _LIBRARY)
    raise ConfigError(f"[run] scenario: unknown scenario {name!r} (known: {known})")


def validate_scenario_params(name: str, raw: dict, dim: int) -> tuple:
    """Check parameter names and types; returns sorted (key, float) pairs with defaults."""
    sc = get_scenario(name)
    if dim not in sc.dims:
        raise ConfigError(f"[run] dim: scenario {name!r} requires dim in {sc.dims}")
    params = dict(sc.defaults)
    for key, value in raw.items():
        if key not in sc.defaults:
            raise ConfigError(f"unknown key '{key}' in [scenario] for {name!r}")
        try:
            params[key] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"[scenario] {key}: expected float, got {value!r}") from None
    if "a" in params and name != "twave_check" and not 0.0 <= params["a"] < 1.0:
        raise ConfigError("[scenario] a: must lie in [0, 1) to keep rho positive")
    return tuple(sorted(params.items()))
