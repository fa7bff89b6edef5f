"""Command line: simulate, sweep, fit, verify."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ALGORITHMS, ConfigError, ExperimentConfig, load_config
from .outputs import emit_outputs, write_sweep
from .runner import run_experiment, sweep

AXES = ("MPR", "bandwidth", "alpha", "beta")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    for name in ("seed", "frames", "out"):
        v = getattr(args, name, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "algo", None):
        changes["algorithms"] = tuple(args.algo)
    return cfg.replace(**changes) if changes else cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sink = None
    fh = None
    if cfg.dump_topology and cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        fh = open(Path(cfg.out) / "topology.jsonl", "w")
        sink = lambda line: fh.write(line + "\n")  # noqa: E731
    try:
        records, summary = run_experiment(cfg, topo_sink=sink)
    finally:
        if fh is not None:
            fh.close()
    if cfg.out:
        emit_outputs(records, summary, cfg.out, cfg)
    for row in summary:
        print(f"{row['algorithm']:>16s}  weighted recall {row['weighted_recall']:.4f}  "
              f"mean bandwidth {row['mean_bandwidth'] / 1e6:.3f} MHz  mean scheduled {row['mean_scheduled']:.2f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    table = sweep(cfg, args.axis, args.values, args.seeds, jobs=args.jobs)
    out = Path(args.out or cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_sweep(table, out / f"sweep_{args.axis}.csv")
    for row in table:
        print(f"{args.axis}={row['value']:<10g} {row['algorithm']:>16s}  {row['mean_recall']:.4f} ± {row['std_recall']:.4f}  (n={row['n_seeds']})")
    return 0


def cmd_fit(args) -> int:
    from ..detmodel import fit_model, read_grid, save_model

    n1, n2, miss = read_grid(args.grid)
    model = fit_model(n1, n2, miss)
    save_model(model, args.out)
    print(f"p={model.p:g} lambda={model.scale:g} mu={model.bias:g} -> {args.out}")
    return 0


def cmd_verify(args) -> int:
    from ..verify import run_suite

    failed = False
    for name in args.suite:
        rep = run_suite(name)
        print(rep.text())
        failed |= not rep.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    from ..verify import SUITES

    p = argparse.ArgumentParser(prog="cpsched", description="Collaborative perception scheduling simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one experiment")
    s.add_argument("--config", help="YAML experiment config")
    s.add_argument("--algo", action="append", choices=ALGORITHMS, help="algorithm (repeatable; default: all in the config)")
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="mean recall over seeds for each value of one parameter")
    w.add_argument("--config", help="YAML experiment config")
    w.add_argument("--axis", required=True, choices=AXES)
    w.add_argument("--values", required=True, nargs="+", type=float)
    w.add_argument("--seeds", type=int, default=10)
    w.add_argument("--algo", action="append", choices=ALGORITHMS)
    w.add_argument("--frames", type=int)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", help="directory for sweep_<axis>.csv")
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit the detection model to a miss-probability grid")
    f.add_argument("--grid", required=True, help="CSV with log_n1,log_n2,miss_prob")
    f.add_argument("--out", required=True, help="YAML file for the fitted detection section")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", action="append", required=True, choices=SUITES)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"cpsched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
