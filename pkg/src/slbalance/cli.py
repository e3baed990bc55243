"""Command-line entry point.

    slbalance run     --scenario frontal --condition comp [--seed 7] [--out DIR]
    slbalance compare --scenario lateral [--trials 3]
    slbalance sweep   --param planner.gamma --values 0.1,1,10 --scenario frontal

Common options: ``--config PATH`` (key = value file), ``--set key=value``
(repeatable), ``--seed N``, ``--out DIR``. Exit codes: 0 success, 1 verdict
failed (compare), 2 usage or configuration error.
"""
import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import metrics, svg
from .errors import ConfigError
from .logio import write_trial_csv
from .sim import Condition, run_trial, values_hash

EXIT_OK, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2
SCENARIOS = ("frontal", "lateral")
CONDITIONS = tuple(c.value for c in Condition)
MAIN_VERDICT = "CoM-SUP: Comp < min(HOnly, NoComp)"


def _mm(v):
    return f"{1000.0 * v:.2f} mm"


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.12g" % float(v)


def write_csv(path, rows):
    keys = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[k]) for k in keys) + "\n")


def _values(args, seed=None):
    return cfgmod.resolve(args.config, args.set, args.seed if seed is None else seed)


def _trial_name(scenario, condition, seed):
    return f"{scenario}_{condition}_s{seed}"


# ---------------------------------------------------------------------------
# Commands


def cmd_run(args):
    values = _values(args)
    cfg, scenario = cfgmod.build(values, args.scenario)
    os.makedirs(args.out, exist_ok=True)
    log = run_trial(scenario, args.condition, cfg)
    path = os.path.join(args.out, _trial_name(args.scenario, args.condition, cfg.seed) + ".csv")
    write_trial_csv(log, path, timing=args.timing)
    com = metrics.mean_distance(metrics.com_sup_series(log))
    cop = metrics.mean_distance(metrics.cop_sup_series(log))
    print(f"{args.scenario} {Condition(args.condition).label} seed {cfg.seed}")
    print(f"mean CoM-SUP distance: {_mm(com)}")
    print(f"mean CoP-SUP distance: {_mm(cop)}")
    stops = log.metadata["safe_stops"]
    if stops:
        print(f"note: {stops} solver safe-stop tick(s) (u = 0 applied)")
    if log.metadata["degraded_solves"]:
        print(f"note: {log.metadata['degraded_solves']} degraded solve(s)")
    print(f"wrote {path}")
    return EXIT_OK


def run_compare(values, kind, trials, out, timing=False, write_trials=True, quiet=False):
    """All conditions for ``trials`` seeds; returns (summary, logs by condition)."""
    os.makedirs(out, exist_ok=True)
    seed0 = int(values["sim.seed"])
    logs = {c: [] for c in CONDITIONS}
    for k in range(trials):
        v = dict(values, **{"sim.seed": seed0 + k})
        cfg, scenario = cfgmod.build(v, kind)
        for c in CONDITIONS:
            log = run_trial(scenario, c, cfg)
            if write_trials:
                name = _trial_name(kind, c, cfg.seed) + ".csv"
                write_trial_csv(log, os.path.join(out, name), timing=timing)
            logs[c].append(log)
            if not quiet:
                print(f"  {kind} {Condition(c).label:6s} seed {cfg.seed}: CoM-SUP "
                      f"{_mm(metrics.mean_distance(metrics.com_sup_series(log)))}", flush=True)
    summary = metrics.condition_summary(logs, kind)
    chash = values_hash(values)
    rows = [dict(r, config_hash=chash) for r in summary.rows()]
    write_csv(os.path.join(out, f"summary_{kind}.csv"), rows)
    with open(os.path.join(out, f"config_{kind}.txt"), "w") as fh:
        fh.write(f"# config_hash = {chash}\n" + cfgmod.config_text(values))
    _write_plots(summary, logs, kind, out, chash)
    with open(os.path.join(out, f"verdicts_{kind}.txt"), "w") as fh:
        fh.write(f"# config_hash = {chash}\n")
        for name, ok in summary.orderings.items():
            fh.write(f"{name}: {'PASS' if ok else 'FAIL'}\n")
    return summary, logs


def _write_plots(summary, logs, kind, out, chash):
    tag = f"<!-- config_hash: {chash} -->\n"
    dist = {c: metrics.com_sup_series(logs[c][0]) for c in CONDITIONS}
    doc = svg.line_plot({c: (d.times, 1000.0 * d.values) for c, d in dist.items()},
                        f"CoM-SUP distance, {kind} bow", "time [s]", "distance [mm]")
    _write(os.path.join(out, f"{kind}_com_sup.svg"), tag + doc)
    cop = {c: metrics.cop_sup_series(logs[c][0]) for c in CONDITIONS}
    doc = svg.line_plot({c: (d.times, 1000.0 * d.values) for c, d in cop.items()},
                        f"CoP-SUP distance, {kind} bow", "time [s]", "distance [mm]")
    _write(os.path.join(out, f"{kind}_cop_sup.svg"), tag + doc)
    st = summary.stats
    doc = svg.bar_plot({c: 1000.0 * st[c].com_sup_mean for c in CONDITIONS},
                       {c: 1000.0 * st[c].com_sup_sd for c in CONDITIONS},
                       f"mean CoM-SUP distance, {kind} bow", "distance [mm]")
    _write(os.path.join(out, f"{kind}_com_sup_mean.svg"), tag + doc)
    clouds = {c: np.vstack([metrics.grf_series(t) for t in logs[c]]) for c in CONDITIONS}
    doc = svg.ellipse_plot(clouds, {c: st[c].ellipse for c in CONDITIONS},
                           f"horizontal GRF, {kind} bow")
    _write(os.path.join(out, f"{kind}_grf.svg"), tag + doc)


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _print_summary(summary):
    for c in CONDITIONS:
        s = summary.stats[c]
        print(f"{Condition(c).label:6s} CoM-SUP {_mm(s.com_sup_mean)} (sd {_mm(s.com_sup_sd)})  "
              f"CoP-SUP {_mm(s.cop_sup_mean)} (sd {_mm(s.cop_sup_sd)})")
    for name, ok in summary.orderings.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")


def cmd_compare(args):
    values = _values(args)
    cfgmod.build(values, args.scenario)  # validate before running anything
    summary, _ = run_compare(values, args.scenario, args.trials, args.out, args.timing)
    _print_summary(summary)
    return EXIT_OK if summary.orderings[MAIN_VERDICT] else EXIT_VERDICT


def cmd_sweep(args):
    if args.param not in cfgmod.SCHEMA:
        raise ConfigError(f"unknown config key {args.param!r}")
    base = _values(args)
    texts = [t for t in args.values.split(",") if t.strip()]
    if not texts:
        raise ConfigError("--values needs at least one value")
    values_list = [cfgmod.parse_value(args.param, t, 1, None, "--values") for t in texts]
    rows = []
    for text, val in zip(texts, values_list):
        values = cfgmod.with_value(base, args.param, val)
        cfgmod.build(values, args.scenario)
        sub = os.path.join(args.out, f"{args.param}={text.strip()}")
        print(f"{args.param} = {text.strip()}", flush=True)
        summary, _ = run_compare(values, args.scenario, args.trials, sub, args.timing,
                                 write_trials=False, quiet=True)
        st = summary.stats
        row = {"param": args.param, "value": cfgmod.format_value(val)}
        for c in CONDITIONS:
            row[f"{c}_com_sup_mean"] = st[c].com_sup_mean
        for c in CONDITIONS:
            row[f"{c}_cop_sup_mean"] = st[c].cop_sup_mean
        row["comp_effort_mean"] = st["comp"].effort_mean
        row["verdict"] = "PASS" if summary.orderings[MAIN_VERDICT] else "FAIL"
        row["config_hash"] = values_hash(values)
        rows.append(row)
        print(f"  Comp {_mm(st['comp'].com_sup_mean)}  HOnly {_mm(st['honly'].com_sup_mean)}  "
              f"NoComp {_mm(st['nocomp'].com_sup_mean)}  {row['verdict']}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"sweep_{args.scenario}_{args.param}.csv")
    write_csv(path, rows)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _common(p):
    p.add_argument("--scenario", choices=SCENARIOS, default="frontal")
    p.add_argument("--config", metavar="PATH", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="noise seed (overrides sim.seed)")
    p.add_argument("--out", default="out", metavar="DIR", help="artifact directory")
    p.add_argument("--timing", action="store_true",
                   help="also log wall-clock solve times (not reproducible)")


def build_parser():
    parser = argparse.ArgumentParser(prog="slbalance", description="Simulate supernumerary-limb balance augmentation on bow trials.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="one trial under one condition")
    _common(p)
    p.add_argument("--condition", choices=CONDITIONS, default="comp")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="all three conditions, summary and plots")
    _common(p)
    p.add_argument("--trials", type=int, default=1, help="seeds per condition")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("sweep", help="one compare per value of a config key")
    _common(p)
    p.add_argument("--param", required=True, metavar="KEY")
    p.add_argument("--values", required=True, metavar="V1,V2,...")
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    sub.add_parser("keys", help="list config keys with units").set_defaults(func=cmd_keys)
    return parser


def cmd_keys(args):
    for key, unit, default, doc in cfgmod.schema_table():
        print(f"{key} = {default}  [{unit}]  {doc}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
