"""Command-line surface: thin wrappers over the library operations.

Subcommands: test, pvalue, table, calibrate, nrp, power, exact, simulate.
stdout carries data only (JSON or CSV), diagnostics go to stderr.  Exit
codes: 0 computed, 2 usage or input error, 3 numeric non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import calibrate, estimate, simulate, size_power
from .calibrate import CalibrationConfig, ConvergenceError
from .order_stats import OrderedPair
from .rules import CriticalTable, build_exact_spec, p_value

_CACHE_ENV = "MEDLR_CACHE_DIR"


class UsageError(Exception):
    pass


def _parse_grid(text: str) -> np.ndarray:
    """Parse 'a:b:n' as n points from a to b, or a comma list."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    return np.array([float(t) for t in text.split(",")])


def _load_table(path: str | None) -> CriticalTable:
    if path is None:
        return CriticalTable.default()
    return CriticalTable.from_csv(path)


def cmd_test(args) -> int:
    if args.data is not None:
        if not (args.y and args.x and args.m):
            raise UsageError("--data requires --y, --x and --m column names")
        controls = args.controls.split(",") if args.controls else ()
        data = estimate.read_dataset_csv(args.data, args.y, args.x, args.m, controls)
        opts = estimate.MediationOptions(se_mode=args.se, model=args.model,
                                         alpha=args.alpha, table=_load_table(args.table))
        report = estimate.run_mediation_test(data, opts)
    else:
        if args.t1 is None or args.t2 is None:
            raise UsageError("provide either --data or both --t1 and --t2")
        report = estimate.test_from_tstats(args.t1, args.t2, alpha=args.alpha,
                                           table=_load_table(args.table))
    print(report.to_json())
    return 0


def cmd_pvalue(args) -> int:
    if args.v1 is not None and args.v2 is not None:
        pt = OrderedPair.from_squares(args.v1, args.v2)
    elif args.t1 is not None and args.t2 is not None:
        pt = OrderedPair.from_statistics(args.t1, args.t2)
    else:
        raise UsageError("provide --v1/--v2 or --t1/--t2")
    table = _load_table(args.table)
    p = p_value(pt, table, refine=args.refine)
    print(json.dumps({"v1": pt.v1, "v2": pt.v2, "p_value": p}))
    return 0


def _cache_path(levels, epsilon) -> str | None:
    root = os.environ.get(_CACHE_ENV)
    if not root:
        return None
    key = hashlib.sha256(
        (",".join(repr(float(a)) for a in levels) + f"|{epsilon!r}").encode()
    ).hexdigest()[:16]
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, f"table_{key}.csv")


def cmd_table(args) -> int:
    if args.levels == "percentile":
        levels = [round(i / 100, 2) for i in range(101)]
    elif os.path.exists(args.levels):
        with open(args.levels) as fh:
            levels = [float(line) for line in fh.read().split() if line.strip()]
    else:
        levels = [float(t) for t in args.levels.split(",")]
    cache = _cache_path(levels, args.epsilon)
    if cache and os.path.exists(cache):
        table = CriticalTable.from_csv(cache)
    else:
        cfg = CalibrationConfig(epsilon=args.epsilon)
        table = calibrate.generate_table(levels, cfg, workers=args.workers)
        if cache:
            table.to_csv(cache)
    table.to_csv(sys.stdout)
    return 0


def cmd_calibrate(args) -> int:
    cfg = CalibrationConfig(epsilon=args.epsilon)
    if args.truncated:
        res = calibrate.optimal_b_truncated(args.alpha, cfg)
    else:
        res = calibrate.optimal_b(args.alpha, cfg)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(calibrate.trace_to_tsv(res))
    print(json.dumps({
        "alpha": res.alpha,
        "b": res.b_opt,
        "roots": [{"lambda": lam, "discrepancy": val} for lam, val in res.roots],
        "iterations": res.iterations,
        "evaluations": res.evaluations,
    }))
    return 0


def cmd_nrp(args) -> int:
    lams = _parse_grid(args.lambda_grid)
    if args.test == "lr":
        vals = [size_power.nrp_lr(args.alpha, l) for l in lams]
    elif args.test == "simply_augmented":
        b = args.b if args.b is not None else CriticalTable.default().b_at(args.alpha)
        vals = [size_power.nrp_simply_augmented(args.alpha, b, l) for l in lams]
    elif args.test == "truncated":
        b = args.b if args.b is not None else calibrate.optimal_b_truncated_value(args.alpha)
        vals = [args.alpha + size_power.truncated_discrepancy(args.alpha, b, l) for l in lams]
    elif args.test == "exact":
        spec = build_exact_spec(args.r)
        vals = [size_power.exact_nrp_quadrature(spec, l) for l in lams]
    else:
        vals = [size_power.nrp_wald(args.alpha, l) for l in lams]
    size_power.write_curve_csv(sys.stdout, lams, vals)
    return 0


def cmd_power(args) -> int:
    l1s = _parse_grid(args.lambda1)
    l2s = _parse_grid(args.lambda2)
    params = {"alpha": args.alpha}
    if args.region in ("simply_augmented", "truncated"):
        if args.b is not None:
            params["b"] = args.b
        elif args.region == "simply_augmented":
            params["b"] = CriticalTable.default().b_at(args.alpha)
        else:
            params["b"] = calibrate.optimal_b_truncated_value(args.alpha)
    if args.region == "exact":
        params = {"r": args.r}
    import csv as _csv

    w = _csv.writer(sys.stdout)
    w.writerow(["lambda1", "lambda2", "power"])
    for l1 in l1s:
        for l2 in l2s:
            val = size_power.power_region(args.region, params, (l1, l2))
            w.writerow([repr(float(l1)), repr(float(l2)), repr(float(val))])
    return 0


def cmd_exact(args) -> int:
    spec = build_exact_spec(args.r)
    print(json.dumps({"r": spec.r, "alpha": spec.alpha, "knots": list(spec.knots)}))
    return 0


def cmd_simulate(args) -> int:
    with open(args.config) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        raw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                raw[key] = json.loads(val)
            except json.JSONDecodeError:
                raw[key] = val
    sweep = raw.pop("theta2_grid", None)
    lam_sweep = raw.pop("lambda2_grid", None)
    if args.seed is not None:
        raw["seed"] = args.seed
    if "tests" in raw:
        raw["tests"] = tuple(raw["tests"])
    try:
        cfg = simulate.SimulationConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad simulation config: {exc}")
    if lam_sweep is not None:
        sweep = [simulate.theta2_for_lambda(l, cfg.n) for l in lam_sweep]
    if sweep is not None:
        results = simulate.run_sweep(cfg, sweep, workers=args.workers)
    else:
        results = [simulate.run_campaign(cfg, workers=args.workers)]
    simulate.results_to_csv(results, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="medlr",
                                 description="Tests for the no-mediation hypothesis")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run every decision rule on data or t-statistics")
    t.add_argument("--data", help="CSV file with a header row")
    t.add_argument("--y"), t.add_argument("--x"), t.add_argument("--m")
    t.add_argument("--controls", help="comma-separated control columns")
    t.add_argument("--t1", type=float), t.add_argument("--t2", type=float)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--se", choices=["robust", "ordinary"], default="robust")
    t.add_argument("--model", choices=["linear", "logit_outcome"], default="linear")
    t.add_argument("--table", help="critical table CSV (default: built-in)")
    t.set_defaults(func=cmd_test)

    p = sub.add_parser("pvalue", help="p-value of the simply augmented test")
    p.add_argument("--v1", type=float), p.add_argument("--v2", type=float)
    p.add_argument("--t1", type=float), p.add_argument("--t2", type=float)
    p.add_argument("--table")
    p.add_argument("--refine", action="store_true",
                   help="recalibrate locally for small p-values")
    p.set_defaults(func=cmd_pvalue)

    tb = sub.add_parser("table", help="calibrate a critical table")
    tb.add_argument("--levels", default="percentile",
                    help="'percentile', a comma list, or a file of levels")
    tb.add_argument("--epsilon", type=float, default=1e-9)
    tb.add_argument("--workers", type=int, default=None)
    tb.set_defaults(func=cmd_table)

    c = sub.add_parser("calibrate", help="calibrate one level in detail")
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--epsilon", type=float, default=1e-9)
    c.add_argument("--truncated", action="store_true")
    c.add_argument("--trace", help="write the descent audit log (TSV) here")
    c.set_defaults(func=cmd_calibrate)

    n = sub.add_parser("nrp", help="null rejection probability curve (CSV)")
    n.add_argument("--test", default="simply_augmented",
                   choices=["lr", "simply_augmented", "truncated", "exact", "wald"])
    n.add_argument("--alpha", type=float, default=0.05)
    n.add_argument("--b", type=float)
    n.add_argument("--r", type=int, default=18)
    n.add_argument("--lambda-grid", default="0:25:101", dest="lambda_grid",
                   help="'lo:hi:n' or comma list")
    n.set_defaults(func=cmd_nrp)

    pw = sub.add_parser("power", help="power surface (CSV)")
    pw.add_argument("--region", default="simply_augmented",
                    choices=["lr", "wald", "simply_augmented", "truncated", "exact"])
    pw.add_argument("--alpha", type=float, default=0.05)
    pw.add_argument("--b", type=float)
    pw.add_argument("--r", type=int, default=18)
    pw.add_argument("--lambda1", default="0:10:11")
    pw.add_argument("--lambda2", default="0:10:11")
    pw.set_defaults(func=cmd_power)

    e = sub.add_parser("exact", help="knots of the exactly similar test")
    e.add_argument("--r", type=int, required=True)
    e.set_defaults(func=cmd_exact)

    s = sub.add_parser("simulate", help="Monte Carlo campaign from a config file")
    s.add_argument("--config", required=True, help="JSON or key=value file")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
