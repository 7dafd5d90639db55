"""Run configuration: an INI-style key=value file with sections.

Keys belonging to ``[run]`` may also appear before any section header, so
the minimal config is four lines::

    alpha = 1.5
    N = 256
    T = 20
    scenario = bump1d
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .integrator import StepPolicy

FORMATS = ("csv", "ndjson")
MODES = ("unidirectional", "vector")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: tuple = ()  # sorted (key, value) pairs

    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class OutputPolicy:
    directory: str = "out"
    stride: int = 200
    formats: tuple = ("csv",)


@dataclass(frozen=True)
class DiagnosticsSpec:
    s_list: tuple = (1.0, 2.0)
    gamma: float = 0.5
    fit_window: float = 0.5


@dataclass(frozen=True)
class SimConfig:
    alpha: float
    N: int
    T_final: float
    scenario: ScenarioSpec
    eps: float = 0.0
    dim: int = 1
    mode: str = "unidirectional"
    seed: int = 0
    output: OutputPolicy = field(default_factory=OutputPolicy)
    policy: StepPolicy = field(default_factory=StepPolicy)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)

    def with_updates(self, **changes) -> "SimConfig":
        return replace(self, **changes)


_RUN_KEYS = {"alpha", "N", "T", "scenario", "eps", "dim", "mode", "seed"}
_REQUIRED_RUN = ("alpha", "N", "T", "scenario")
_OUTPUT_KEYS = {"dir", "stride", "format"}
_POLICY_KEYS = {f.name for f in fields(StepPolicy)}
_DIAG_KEYS = {"s_list", "gamma", "fit_window"}
_SECTIONS = {"run", "scenario", "output", "policy", "diagnostics"}


def _num(section: str, key: str, raw: str, kind=float):
    try:
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected {kind.__name__}, got {raw!r}") from None


def _read_text(source) -> str:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and "=" not in source and os.path.exists(source)):
        return Path(source).read_text()
    return str(source)


def parse_config(source) -> SimConfig:
    """Parse and validate a config given as a path or as text."""
    text = _read_text(source)
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    allowed = {"run": _RUN_KEYS, "output": _OUTPUT_KEYS, "policy": _POLICY_KEYS,
               "diagnostics": _DIAG_KEYS}
    for section, keys in allowed.items():
        if cp.has_section(section):
            for key in cp[section]:
                if key not in keys:
                    raise ConfigError(f"unknown key '{key}' in [{section}]")

    run = cp["run"] if cp.has_section("run") else {}
    for key in _REQUIRED_RUN:
        if key not in run:
            raise ConfigError(f"missing required key '{key}' in [run]")

    alpha = _num("run", "alpha", run["alpha"])
    if not 0.0 < alpha < 2.0:
        raise ConfigError(f"[run] alpha: must lie in the open interval (0, 2), got {alpha}")
    N = _num("run", "N", run["N"], int)
    if N < 8 or N & (N - 1):
        raise ConfigError(f"[run] N: must be a power of two >= 8, got {N}")
    T = _num("run", "T", run["T"])
    if T < 0:
        raise ConfigError(f"[run] T: must be nonnegative, got {T}")
    eps = _num("run", "eps", run.get("eps", "0"))
    if eps < 0:
        raise ConfigError(f"[run] eps: must be nonnegative, got {eps}")
    dim = _num("run", "dim", run.get("dim", "1"), int)
    if dim not in (1, 2):
        raise ConfigError(f"[run] dim: must be 1 or 2, got {dim}")
    mode = run.get("mode", "unidirectional").strip()
    if mode not in MODES:
        raise ConfigError(f"[run] mode: must be one of {MODES}, got {mode!r}")
    seed = _num("run", "seed", run.get("seed", "0"), int)

    from .scenarios import validate_scenario_params

    name = run["scenario"].strip()
    raw_params = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    params = validate_scenario_params(name, raw_params, dim)

    out = cp["output"] if cp.has_section("output") else {}
    stride = _num("output", "stride", out.get("stride", str(OutputPolicy.stride)), int)
    if stride < 1:
        raise ConfigError(f"[output] stride: must be >= 1, got {stride}")
    output = OutputPolicy(
        directory=out.get("dir", OutputPolicy.directory).strip(),
        stride=stride,
        formats=parse_formats(out.get("format", "csv")),
    )

    pol = cp["policy"] if cp.has_section("policy") else {}
    try:
        policy = StepPolicy(**{k: _num("policy", k, v) for k, v in pol.items()})
    except ValueError as exc:
        raise ConfigError(f"[policy] {exc}") from None

    dg = cp["diagnostics"] if cp.has_section("diagnostics") else {}
    s_list = DiagnosticsSpec.s_list
    if "s_list" in dg:
        s_list = tuple(_num("diagnostics", "s_list", v.strip())
                       for v in dg["s_list"].split(",") if v.strip())
    gamma = _num("diagnostics", "gamma", dg.get("gamma", str(DiagnosticsSpec.gamma)))
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"[diagnostics] gamma: must lie in (0, 1), got {gamma}")
    window = _num("diagnostics", "fit_window", dg.get("fit_window", str(DiagnosticsSpec.fit_window)))
    if not 0.0 < window <= 1.0:
        raise ConfigError(f"[diagnostics] fit_window: must lie in (0, 1], got {window}")

    return SimConfig(
        alpha=alpha, N=N, T_final=T, scenario=ScenarioSpec(name, params), eps=eps,
        dim=dim, mode=mode, seed=seed, output=output, policy=policy,
        diagnostics=DiagnosticsSpec(s_list, gamma, window),
    )


def parse_formats(raw: str) -> tuple:
    raw = raw.strip()
    if raw == "both":
        return FORMATS
    items = tuple(x.strip() for x in raw.split(",") if x.strip())
    for item in items:
        if item not in FORMATS:
            raise ConfigError(f"[output] format: unknown format {item!r}")
    if not items:
        raise ConfigError("[output] format: empty")
    return items


def serialize_config(cfg: SimConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    fmt = repr
    lines = [
        "[run]",
        f"alpha = {fmt(cfg.alpha)}",
        f"N = {cfg.N}",
        f"T = {fmt(cfg.T_final)}",
        f"scenario = {cfg.scenario.name}",
        f"eps = {fmt(cfg.eps)}",
        f"dim = {cfg.dim}",
        f"mode = {cfg.mode}",
        f"seed = {cfg.seed}",
        "",
        "[scenario]",
    ]
    lines += [f"{k} = {fmt(v)}" for k, v in cfg.scenario.params]
    lines += [
        "",
        "[output]",
        f"dir = {cfg.output.directory}",
        f"stride = {cfg.output.stride}",
        f"format = {','.join(cfg.output.formats)}",
        "",
        "[policy]",
    ]
    lines += [f"{f.name} = {fmt(getattr(cfg.policy, f.name))}" for f in fields(StepPolicy)]
    lines += [
        "",
        "[diagnostics]",
        f"s_list = {', '.join(fmt(s) for s in cfg.diagnostics.s_list)}",
        f"gamma = {fmt(cfg.diagnostics.gamma)}",
        f"fit_window = {fmt(cfg.diagnostics.fit_window)}",
        "",
    ]
    return "\n".join(lines)
