"""Acceptance criteria, one test and one PASS/FAIL line each.

Tolerances are pinned here. Criteria 5 to 9 share one bump1d run
(alpha 1.5, N 256, T 20) that takes about two minutes.
"""

import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from flockspec.cli import execute
from flockspec.config import parse_config
from flockspec.diagnostics import limiting_profile
from flockspec.dynamics import FlowState, entropy_source_multiD
from flockspec.integrator import StepPolicy, integrate
from flockspec.oracle import nl_max_principle_constant
from flockspec.scenarios import get_scenario
from flockspec.torus import ScalarField, make_grid
from flockspec.verify import (check_commutator, check_lambda, pointwise_identity_residual,
                              random_band_limited, sample_points)

LINES = []

# pilot run values (bump1d, alpha 1.5, N 256, T 20), frozen
PILOT_RHO_MIN = 0.5
PILOT_RHO_MAX = 1.64217
ENVELOPE_DRIFT = 1e-3


def report(number, name, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {name}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    cfg = parse_config("alpha = 1.5\nN = 256\nT = 20\nscenario = bump1d\n")
    cfg = replace(cfg, output=replace(cfg.output, directory=str(out)))
    captured = {}

    from flockspec import cli
    original = cli.run

    def keep(config, observer=None):
        captured["traj"] = original(config, observer)
        return captured["traj"]

    cli.run = keep
    try:
        t0 = time.perf_counter()
        code, summary = execute(cfg)
        seconds = time.perf_counter() - t0
    finally:
        cli.run = original
    return code, summary, captured["traj"], seconds


def test_criterion_01_lambda_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for dim in (1, 2):
        grid = make_grid(dim, 64)
        for alpha in (0.5, 1.0, 1.5):
            worst = max(worst, check_lambda(grid, alpha, _rng(101))[4])
    dt = time.perf_counter() - t0
    report(1, "lambda_direct vs spectral", worst < 1e-6 and dt < 60,
           f"max rel error {worst:.2e} < 1e-6, {dt:.1f} s < 60 s")


def test_criterion_02_commutator_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for dim in (1, 2):
        grid = make_grid(dim, 64)
        for alpha in (0.5, 1.0, 1.5):
            worst = max(worst, check_commutator(grid, alpha, _rng(202))[4])
    dt = time.perf_counter() - t0
    report(2, "commutator_direct vs spectral", worst < 1e-5 and dt < 60,
           f"max rel error {worst:.2e} < 1e-5, {dt:.1f} s < 60 s")


def test_criterion_03_pointwise_identity():
    rng = _rng(303)
    worst = 0.0
    for dim in (1, 2):
        grid = make_grid(dim, 32)
        for _ in range(5):
            f = ScalarField(grid, random_band_limited(grid, 4, rng))
            worst = max(worst, pointwise_identity_residual(f, 1.5, sample_points(grid, 16, rng)))
    report(3, "pointwise identity", worst < 1e-5, f"max scaled residual {worst:.2e} < 1e-5")


def test_criterion_04_nl_max_positivity():
    rng = _rng(404)
    grid = make_grid(1, 32)
    fields = [ScalarField(grid, random_band_limited(grid, 4, rng)) for _ in range(20)]
    consts = {a: nl_max_principle_constant(fields, a) for a in (0.5, 1.0, 1.5)}
    ok = all(c > 0 for c in consts.values())
    detail = ", ".join(f"alpha={a}: {c:.3f}" for a, c in consts.items())
    report(4, "nonlinear maximum principle constant > 0 (20 fields)", ok, detail)


def test_criterion_05_conservation(acceptance_run):
    code, s, _, seconds = acceptance_run
    d = s["drift"]
    ok = (code == 0 and d["mass_relative"] < 1e-10 and d["momentum_relative"] < 1e-8
          and d["mean_e_absolute"] < 1e-9)
    report(5, "conservation", ok,
           f"M {d['mass_relative']:.1e} < 1e-10, P {d['momentum_relative']:.1e} < 1e-8,"
           f" mean e {d['mean_e_absolute']:.1e} < 1e-9, run {seconds:.0f} s (target 300 s)")


def test_criterion_06_q_transport(acceptance_run):
    env = acceptance_run[1]["envelopes"]
    ok = env["sup_q_max"] <= env["sup_q_initial"] * 1.001
    report(6, "sup|q| transport", ok,
           f"max sup|q| {env['sup_q_max']:.12g} <= 1.001 * {env['sup_q_initial']:.12g}")


def test_criterion_07_density_bounds(acceptance_run):
    traj = acceptance_run[2]
    t = np.array([r.t for r in traj.records])
    lo = np.array([r.rho_min for r in traj.records])
    hi = np.array([r.rho_max for r in traj.records])
    floor, ceiling = 0.5 * PILOT_RHO_MIN, 2.0 * PILOT_RHO_MAX
    half = t >= 0.5 * t[-1]
    # running envelopes may move by at most ENVELOPE_DRIFT (relative) over the second half
    lo_growth = (lo[~half].min() - lo.min()) / lo.min()
    hi_growth = (hi.max() - hi[~half].max()) / hi.max()
    ok = (lo.min() >= floor and hi.max() <= ceiling
          and lo_growth <= ENVELOPE_DRIFT and hi_growth <= ENVELOPE_DRIFT)
    report(7, "density envelopes", ok,
           f"rho- >= {lo.min():.5f} >= {floor}, rho+ <= {hi.max():.5f} <= {ceiling:.5f},"
           f" second-half envelope drift {lo_growth:.1e}, {hi_growth:.1e} <= {ENVELOPE_DRIFT}")


def test_criterion_08_flocking(acceptance_run):
    s = acceptance_run[1]
    fit = s["delta_fit"]
    ok = (fit is not None and fit["rate"] > 0 and fit["residual"] < 0.2
          and s["A_ratio"] < 0.05 and s["u_bar_error"] < 1e-6)
    report(8, "exponential flocking", ok,
           f"delta {fit['rate']:.4f} > 0, residual {fit['residual']:.1e} < 0.2,"
           f" A(20)/A(0) {s['A_ratio']:.1e} < 0.05, |mean u - P0/M0| {s['u_bar_error']:.1e} < 1e-6")


def test_criterion_09_limiting_profile(acceptance_run):
    prof = limiting_profile(acceptance_run[2])
    rate = prof.residual_fit.rate if prof.residual_fit else float("nan")
    report(9, "traveling-frame Cauchy residuals decay", bool(rate > 0),
           f"fitted rate {rate:.4f} > 0 over {len(prof.cauchy_residuals)} residuals")


def test_criterion_10_unidirectional_ansatz():
    s0 = get_scenario("bump2d_uni").generate(make_grid(2, 64), alpha=1.5, mode="vector")
    worst = [0.0]

    def watch(state, dt):
        worst[0] = max(worst[0], float(np.max(np.abs(state.u[1]))))

    traj = integrate(s0, 5.0, observer=watch, stride=10**9)
    ok = traj.failure is None and worst[0] < 1e-10
    report(10, "unidirectional ansatz preserved", ok, f"sup|u_perp| {worst[0]:.1e} < 1e-10")


def test_criterion_11_entropy_source():
    g = make_grid(2, 32)
    x1, x2 = g.coordinates
    rng = _rng(1111)
    rho = 1.5 + 0.5 * random_band_limited(g, 4, rng)
    uni = FlowState(g, rho, np.stack([random_band_limited(g, 4, rng), np.zeros(g.shape)]), 1.5)
    zero = float(np.max(np.abs(entropy_source_multiD(uni).values)))
    cross = FlowState(g, np.ones(g.shape), np.stack([np.sin(x2), np.sin(x1)]), 1.5)
    err = float(np.max(np.abs(entropy_source_multiD(cross).values + 2 * np.cos(x1) * np.cos(x2))))
    report(11, "multi-D entropy source", zero < 1e-12 and err < 1e-12,
           f"unidirectional {zero:.1e} < 1e-12, cross-shear error {err:.1e} < 1e-12")


def test_criterion_12_temporal_order():
    s = get_scenario("bump1d").generate(make_grid(1, 64), alpha=1.5)
    T = 0.1
    dts = [T / 32, T / 64, T / 128, T / 256]
    ref = integrate(s, T, dt_fixed=dts[-1] / 16).final
    errs = []
    for dt in dts:
        f = integrate(s, T, dt_fixed=dt).final
        errs.append(max(np.max(np.abs(f.rho - ref.rho)), np.max(np.abs(f.u - ref.u))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    report(12, "temporal self-convergence", bool(orders.min() >= 2.7),
           "observed orders " + ", ".join(f"{o:.2f}" for o in orders) + " >= 2.7")


def test_criterion_13_determinism(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("alpha = 1.5\nN = 64\nT = 1\nscenario = rand_smooth\nseed = 7\n"
                   "[output]\nformat = both\n")
    for k in ("a", "b"):
        subprocess.run([sys.executable, "-m", "flockspec.cli", "run", str(cfg), "--out",
                        str(tmp_path / k)], check=True, capture_output=True)
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("records.csv", "records.ndjson"))
    size = (tmp_path / "a" / "records.csv").stat().st_size
    report(13, "byte-identical records across processes", same, f"records.csv {size} bytes, identical={same}")
