"""Command line runner.

Subcommands: ``estimate``, ``oracle``, ``verify-bounds``, ``stein``,
``validate-geometry`` and ``bench``.  Exit codes: 0 success, 1 configuration
error, 2 assertion failure (bound or invariant breach), 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from .config import (
    ESTIMATE_COLUMNS,
    FORMULAS,
    SCHEDULES,
    ConfigError,
    ExperimentConfig,
    csv_text,
    load_config,
    resolve_output,
)

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_ABORT = 0, 1, 2, 3

BOUND_COLUMNS = ("config", "bound_id", "left", "right", "margin", "se", "passed", "notes")
STEIN_COLUMNS = ("c2", "n", "K", "H", "I", "S2", "HSI_RHS", "LSI_RHS", "HSI_margin", "LSI_margin",
                 "HSI_tighter", "passed")


def _experiment_flags(p):
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--model")
    p.add_argument("--radius", type=float)
    p.add_argument("--drift", type=float, help="OU drift rate K for Z = -Kx")
    p.add_argument("--f")
    p.add_argument("--x0")
    p.add_argument("--v")
    p.add_argument("--T", type=float)
    p.add_argument("--N", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--schedule-K", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--formula", choices=FORMULAS)
    p.add_argument("--threads", type=int)
    p.add_argument("--reproducible", action="store_true", default=None,
                   help="zero wall-clock fields so equal configs give identical bytes")
    p.add_argument("--dump-paths", help="K:FILE, write the first K paths as a binary trace")
    _output_flags(p)


def _output_flags(p):
    p.add_argument("--output", help="CSV path (default stdout or $NEUMANN_BISMUT_OUTPUT_DIR)")
    p.add_argument("--json", action="store_true", default=None, help="emit JSON instead of CSV")


def build_parser():
    ap = argparse.ArgumentParser(prog="neumann-bismut", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    _experiment_flags(sub.add_parser("estimate", help="Monte Carlo estimate of a Bismut formula"))
    _experiment_flags(sub.add_parser("oracle", help="ground truth for the same quantity"))
    vb = sub.add_parser("verify-bounds", help="check the closed-form derivative estimates")
    vb.add_argument("--suite", choices=("lpf", "hess", "grad", "all"), default="all")
    vb.add_argument("--N", type=float, default=20_000)
    vb.add_argument("--dt", type=float, default=1e-3)
    vb.add_argument("--seed", type=int, default=0)
    vb.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _output_flags(vb)
    st = sub.add_parser("stein", help="entropy / Fisher / Stein discrepancy sweep")
    st.add_argument("--sweep", default="c2=0.25,0.5,1.5,2,4")
    st.add_argument("--K", type=float, default=1.0)
    st.add_argument("--n", type=int, default=1)
    _output_flags(st)
    vg = sub.add_parser("validate-geometry", help="finite-difference checks of a model")
    vg.add_argument("--model", default="all")
    vg.add_argument("--radius", type=float, default=1.0)
    vg.add_argument("--drift", type=float, default=0.0)
    vg.add_argument("--points", type=int, default=200)
    _output_flags(vg)
    be = sub.add_parser("bench", help="half-line path-steps per second")
    be.add_argument("--N", type=float, default=50_000)
    be.add_argument("--dt", type=float, default=1e-3)
    be.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _output_flags(be)
    return ap


def _config_from(args):
    cfg = ExperimentConfig()
    if args.config:
        load_config(args.config, cfg)
    for key in ExperimentConfig.keys():
        if key == "config":
            continue
        val = getattr(args, key, None)
        if val is not None:
            cfg.update(key, val, f"--{key.replace('_', '-')}")
    return cfg.validate()


def _emit(rows, columns, args, command, out=None):
    if getattr(args, "json", False):
        text = json.dumps(rows, indent=2, default=float) + "\n"
    else:
        text = csv_text(rows, columns)
    path = resolve_output(getattr(args, "output", None), command)
    if path:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        (out or sys.stdout).write(text)


def _row(cfg, command, est):
    row = {
        "command": command, "model": cfg.model, "f": cfg.f, "x0": cfg.x0, "v": cfg.v, "T": cfg.T,
        "N": cfg.N, "dt": cfg.dt, "schedule": est.get("schedule", cfg.schedule), "seed": cfg.seed,
        "formula": cfg.formula,
    }
    row.update(est)
    if cfg.reproducible:
        row["runtime"] = 0.0
    return row


def run_estimate(cfg):
    """Monte Carlo estimate for the configured formula."""
    import numpy as np

    from . import estimators as E
    from .geometry import make_model
    from .pathsim import write_trace
    from .schedules import make_schedule

    model = make_model(cfg.model, radius=cfg.radius, drift_K=cfg.drift)
    common = dict(N=cfg.N, dt=cfg.dt, seed=cfg.seed, threads=cfg.threads)
    dump = None
    if cfg.dump_paths:
        k, _, path = cfg.dump_paths.partition(":")

        def save(p):
            with open(path, "wb") as fh:
                write_trace(p, fh)

        dump = (int(k), save)
    common["dump"] = dump
    x0, v = np.array(cfg.x0), np.array(cfg.v)
    sch = None if cfg.schedule == "constant" else make_schedule(cfg.schedule, cfg.T, cfg.schedule_K)
    fm = cfg.formula
    if fm == "semigroup":
        est = E.estimate_semigroup(model, cfg.f, x0, cfg.T, **common)
    elif fm in ("grad13", "grad14"):
        est = E.estimate_gradient(model, cfg.f, x0, v, cfg.T, formula=fm, **common)
    elif fm == "lpf":
        est = E.estimate_LPf(model, cfg.f, x0, cfg.T, schedule=sch, **common)
    elif fm == "hess":
        est = E.estimate_hessian(model, cfg.f, x0, v, cfg.T, schedule=sch, **common)
    else:
        est = E.estimate_hessian_gradform(model, cfg.f, x0, v, cfg.T, schedule=sch, **common)
    return est.as_row()


def run_oracle(cfg):
    """Ground-truth value of the same quantity."""
    import numpy as np

    from .functions import make_function
    from .geometry import make_model
    from .oracle import make_oracle

    t0 = time.perf_counter()
    model = make_model(cfg.model, radius=cfg.radius, drift_K=cfg.drift)
    f = make_function(cfg.f, model.dim)
    orc = make_oracle(model, T_max=cfg.T + 0.05)
    x0, v = np.array(cfg.x0), np.array(cfg.v)
    fm = cfg.formula
    if fm == "semigroup":
        val = orc.value(f, x0, cfg.T)
    elif fm in ("grad13", "grad14"):
        val = orc.grad(f, x0, cfg.T, v)
    elif fm == "lpf":
        val = orc.Lf(f, x0, cfg.T)
    else:
        val = orc.hess(f, x0, cfg.T, v)
    return {"value": float(val), "std_error": 0.0, "n_samples": 0, "n_rejected": 0,
            "schedule": "none", "runtime": time.perf_counter() - t0}


def _summary(cfg, row, command):
    return (f"{command} {cfg.formula} {cfg.model} f={cfg.f} x0={cfg.x0}: "
            f"{row['value']:.6f} ± {row['std_error']:.2g}")


def cmd_experiment(args, command):
    cfg = _config_from(args)
    row = _row(cfg, command, run_estimate(cfg) if command == "estimate" else run_oracle(cfg))
    _emit([row], ESTIMATE_COLUMNS, args, command)
    print(_summary(cfg, row, command), file=sys.stderr)
    return EXIT_OK


def cmd_verify_bounds(args):
    from .bounds import run_suite

    reports = run_suite(args.suite, N=int(args.N), dt=args.dt, seed=args.seed, threads=args.threads)
    rows = [r.as_row() for r in reports]
    _emit(rows, BOUND_COLUMNS, args, "verify-bounds")
    failed = [r for r in reports if not r.passed]
    print(f"verify-bounds: {len(reports) - len(failed)}/{len(reports)} reports pass", file=sys.stderr)
    return EXIT_ASSERT if failed else EXIT_OK


def _parse_sweep(text):
    key, _, vals = text.partition("=")
    if key.strip() != "c2" or not vals:
        raise ConfigError("expected c2=v1,v2,...", "--sweep")
    try:
        return [float(x) for x in vals.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc), "--sweep") from None


def cmd_stein(args):
    from .stein import MeasurePair, check_HSI

    if args.K <= 0 or args.n < 1:
        raise ConfigError("need K > 0 and n >= 1", "--K/--n")
    reports = []
    for c2 in _parse_sweep(args.sweep):
        if c2 <= 0:
            raise ConfigError("c2 values must be positive", "--sweep")
        reports.append(check_HSI(MeasurePair(n=args.n, K=args.K, c2=c2)))
    _emit([r.as_row() for r in reports], STEIN_COLUMNS, args, "stein")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_ASSERT


def cmd_validate_geometry(args):
    from .geometry import CATALOG, make_model, validate_geometry

    ids = CATALOG if args.model == "all" else (args.model,)
    rows = []
    ok = True
    for mid in ids:
        if mid not in CATALOG:
            raise ConfigError(f"unknown model {mid!r}", "--model")
        drift = 0.0 if mid == "hemisphere" else args.drift
        rep = validate_geometry(make_model(mid, radius=args.radius, drift_K=drift), n_points=args.points)
        ok &= rep.passed
        for c in rep.checks:
            rows.append({"model": mid, "check": c.name, "value": c.value, "tol": c.tol, "passed": c.passed})
    _emit(rows, ("model", "check", "value", "tol", "passed"), args, "validate-geometry")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_bench(args):
    from .estimators import estimate_semigroup
    from .geometry import make_model

    N = int(args.N)
    model = make_model("half_line")
    t0 = time.perf_counter()
    estimate_semigroup(model, "sq", [0.0], 1.0, N=N, dt=args.dt, seed=0, threads=args.threads)
    wall = time.perf_counter() - t0
    steps = N * math.ceil(1.0 / args.dt)
    row = {"paths": N, "steps": steps, "threads": args.threads, "seconds": wall,
           "paths_per_s": N / wall, "path_steps_per_s_per_core": steps / wall / args.threads}
    _emit([row], tuple(row), args, "bench")
    if row["path_steps_per_s_per_core"] < 1e5:
        print("bench: below the 1e5 path-steps/s/core soft target", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .pathsim import PathAbort
    from .transport import NumericalAbort

    try:
        if args.command in ("estimate", "oracle"):
            return cmd_experiment(args, args.command)
        if args.command == "verify-bounds":
            return cmd_verify_bounds(args)
        if args.command == "stein":
            return cmd_stein(args)
        if args.command == "validate-geometry":
            return cmd_validate_geometry(args)
        return cmd_bench(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalAbort, PathAbort, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
