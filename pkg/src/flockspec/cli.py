"""Command-line entry point: ``flockspec run | verify | sweep``.

Exit codes: 0 ok, 2 invalid input, 3 numerical abort, 4 verify failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioSpec, SimConfig, parse_config, parse_formats, serialize_config
from .diagnostics import FitRefused, fit_decay_rate
from .integrator import run
from .output import RecordWriter, write_snapshot

log = logging.getLogger("flockspec")

EXIT_OK, EXIT_INVALID, EXIT_ABORT, EXIT_VERIFY = 0, 2, 3, 4
SWEEP_AXES = ("alpha", "N", "eps", "scenario.a")
DEGENERATE = "degenerate: already flocked"
# amplitudes below this fraction of the velocity scale count as already flocked
_FLOCKED_FLOOR = 1e-13


def _drift(series, scale):
    series = np.asarray(series, dtype=float)
    return float(np.max(np.abs(series - series[0])) / scale) if scale > 0 else 0.0


def summarize(config: SimConfig, trajectory) -> dict:
    recs = trajectory.records
    first, last = recs[0], recs[-1]
    final = trajectory.final
    vel = final.velocity_components
    M0 = first.M
    P0 = np.atleast_1d(np.asarray(first.P, dtype=float))
    u_bar = P0 / M0
    u_mean = np.array([float(np.mean(vel[j])) for j in range(len(P0))])
    u_scale = max(float(np.max(np.abs(trajectory.snapshots[0].u))), 1.0)

    t = np.array([r.t for r in recs])
    A = np.array([r.A for r in recs])
    rho_min = np.array([r.rho_min for r in recs])
    rho_max = np.array([r.rho_max for r in recs])
    window = config.diagnostics.fit_window
    fit_info = None
    refusal = None
    t_a = t[-1] - window * (t[-1] - t[0])
    in_window = A[t >= t_a]
    if len(t) < 2 or np.all(in_window <= _FLOCKED_FLOOR * u_scale):
        refusal = DEGENERATE
    else:
        try:
            fit = fit_decay_rate((t, A), window_fraction=window)
            fit_info = {"rate": fit.rate, "intercept": fit.intercept,
                        "residual": fit.residual, "window": list(fit.window)}
        except FitRefused as exc:
            refusal = exc.reason

    P_series = np.array([np.atleast_1d(r.P) for r in recs])
    P_scale = float(np.max(np.abs(P0)))
    if P_scale < 1e-12 * M0 * u_scale:
        P_scale = M0 * u_scale  # zero net momentum: normalise by M0 max|u0|
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    failure = trajectory.failure
    return {
        "version": __version__,
        "status": "ok" if failure is None else "aborted",
        "failure": None if failure is None else {
            "reason": failure.reason, "time": failure.time, "message": str(failure)},
        "t_final": float(final.time),
        "steps": len(recs) - 1,
        "M0": M0,
        "P0": P0.tolist() if len(P0) > 1 else float(P0[0]),
        "u_bar": u_bar.tolist() if len(u_bar) > 1 else float(u_bar[0]),
        "u_mean_final": u_mean.tolist() if len(u_mean) > 1 else float(u_mean[0]),
        "u_bar_error": float(np.max(np.abs(u_mean - u_bar))),
        "A0": float(A[0]),
        "A_final": float(A[-1]),
        "A_ratio": float(A[-1] / A[0]) if A[0] > 0 else None,
        "delta_fit": fit_info,
        "delta_refused": refusal,
        "envelopes": {
            "rho_min": float(rho_min.min()),
            "rho_max": float(rho_max.max()),
            "rho_min_second_half": float(rho_min[half].min()),
            "rho_max_second_half": float(rho_max[half].max()),
            "sup_q_max": float(max(r.sup_q for r in recs)),
            "sup_q_initial": float(first.sup_q),
        },
        "drift": {
            "mass_relative": _drift([r.M for r in recs], abs(M0)),
            "momentum_relative": float(np.max(np.abs(P_series - P_series[0]))) / P_scale,
            "mean_e_absolute": _drift([r.mean_e for r in recs], 1.0),
        },
    }


def execute(config: SimConfig) -> tuple:
    """Run one configuration, writing all artifacts. Returns (exit code, summary)."""
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(serialize_config(config))
    with RecordWriter(out, config.output.formats, config.diagnostics.s_list) as writer:
        traj = run(config, observer=writer.write)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for old in snap_dir.glob("snap_*.bin"):
        old.unlink()
    for i, state in enumerate(traj.snapshots):
        write_snapshot(snap_dir / f"snap_{i:06d}.bin", state)
    summary = summarize(config, traj)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return (EXIT_OK if traj.failure is None else EXIT_ABORT), summary


def cmd_run(config: SimConfig) -> int:
    code, summary = execute(config)
    if summary["failure"] is not None:
        print(json.dumps({"error": summary["failure"]["reason"],
                          "time": summary["failure"]["time"]}), file=sys.stderr)
    fit = summary["delta_fit"]
    delta = f"{fit['rate']:.6g}" if fit else summary["delta_refused"]
    print(f"t={summary['t_final']:g} steps={summary['steps']} A_final={summary['A_final']:.3e}"
          f" delta={delta} u_bar={summary['u_bar']}")
    return code


def cmd_verify(alphas, Ns, out: str | None = None) -> int:
    from .verify import run_checks, write_report

    results = run_checks(alphas, Ns)
    for r in results:
        print(r.line())
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_report(Path(out) / "verify_report.json", results)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY


def apply_axis(config: SimConfig, axis: str, value: str) -> SimConfig:
    """Config with one parameter replaced, revalidated through the parser."""
    if axis == "alpha":
        new = replace(config, alpha=float(value))
    elif axis == "N":
        new = replace(config, N=int(value))
    elif axis == "eps":
        new = replace(config, eps=float(value))
    elif axis == "scenario.a":
        params = config.scenario.param_dict()
        if "a" not in params:
            raise ConfigError(f"scenario {config.scenario.name!r} has no parameter 'a'")
        params["a"] = float(value)
        new = replace(config, scenario=ScenarioSpec(config.scenario.name, tuple(sorted(params.items()))))
    else:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    return parse_config(serialize_config(new))


def _sweep_row(args):
    axis, value, config = args
    try:
        code, summary = execute(config)
    except Exception as exc:  # a broken row must not stop the sweep
        return {"value": value, "status": "error", "reason": repr(exc)}
    fit = summary["delta_fit"] or {}
    failure = summary["failure"] or {}
    return {
        "value": value,
        "status": summary["status"],
        "reason": failure.get("reason", ""),
        "delta": fit.get("rate", ""),
        "delta_residual": fit.get("residual", ""),
        "u_bar": summary["u_bar"],
        "u_bar_error": summary["u_bar_error"],
        "A_final": summary["A_final"],
        "A_ratio": summary["A_ratio"],
        "rho_min": summary["envelopes"]["rho_min"],
        "rho_max": summary["envelopes"]["rho_max"],
        "mass_drift": summary["drift"]["mass_relative"],
        "momentum_drift": summary["drift"]["momentum_relative"],
    }


SWEEP_COLUMNS = ("value", "status", "reason", "delta", "delta_residual", "u_bar", "u_bar_error",
                 "A_final", "A_ratio", "rho_min", "rho_max", "mass_drift", "momentum_drift")


def thread_cap() -> int:
    raw = os.environ.get("FLOCKSPEC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"FLOCKSPEC_THREADS must be an integer, got {raw!r}") from None


def cmd_sweep(config: SimConfig, axis: str, values) -> tuple:
    """Independent runs over one axis. Returns (exit code, rows)."""
    values = [v.strip() for v in values if str(v).strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    base = Path(config.output.directory)
    jobs = []
    for v in values:
        cfg = apply_axis(config, axis, v)
        cfg = replace(cfg, output=replace(cfg.output, directory=str(base / f"{axis}={v}")))
        jobs.append((axis, v, cfg))
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=(axis,) + SWEEP_COLUMNS[1:], lineterminator="\n")
        writer.writeheader()
        for row in rows:
            out = {k: row.get(k, "") for k in SWEEP_COLUMNS[1:]}
            out[axis] = row["value"]
            writer.writerow(out)
    for row in rows:
        print(f"{axis}={row['value']} status={row['status']} delta={row.get('delta', '')}")
    ok = all(r["status"] == "ok" for r in rows)
    return (EXIT_OK if ok else EXIT_ABORT), rows


def _split_list(raw, kind):
    out = []
    for item in raw or []:
        out += [kind(x) for x in str(item).split(",") if x.strip()]
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flockspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def output_args(p):
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--stride", type=int, help="snapshot stride in steps")
        p.add_argument("--format", choices=("csv", "ndjson", "both"), help="records format")

    p_run = sub.add_parser("run", help="integrate one configuration")
    p_run.add_argument("config")
    output_args(p_run)

    p_ver = sub.add_parser("verify", help="spectral vs quadrature oracle checks")
    p_ver.add_argument("--alpha", action="append", help="alpha value(s), repeatable or comma separated")
    p_ver.add_argument("--N", action="append", help="grid size(s), repeatable or comma separated")
    p_ver.add_argument("--out", help="directory for verify_report.json")

    p_sw = sub.add_parser("sweep", help="independent runs over one parameter")
    p_sw.add_argument("config")
    p_sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sw.add_argument("--values", required=True, help="comma separated values")
    output_args(p_sw)
    return parser


def _with_overrides(config: SimConfig, args) -> SimConfig:
    out = config.output
    if args.out:
        out = replace(out, directory=args.out)
    if args.stride is not None:
        if args.stride < 1:
            raise ConfigError("--stride must be >= 1")
        out = replace(out, stride=args.stride)
    if args.format:
        out = replace(out, formats=parse_formats(args.format))
    return replace(config, output=out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(_with_overrides(parse_config(Path(args.config)), args))
        if args.command == "verify":
            from .verify import DEFAULT_ALPHAS, DEFAULT_NS
            alphas = _split_list(args.alpha, float) or list(DEFAULT_ALPHAS)
            Ns = _split_list(args.N, int) or list(DEFAULT_NS)
            for a in alphas:
                if not 0.0 < a < 2.0:
                    raise ConfigError(f"--alpha: must lie in the open interval (0, 2), got {a}")
            for n in Ns:
                if n < 8 or n & (n - 1):
                    raise ConfigError(f"--N: must be a power of two >= 8, got {n}")
            return cmd_verify(alphas, Ns, args.out)
        config = _with_overrides(parse_config(Path(args.config)), args)
        code, _ = cmd_sweep(config, args.axis, args.values.split(","))
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
