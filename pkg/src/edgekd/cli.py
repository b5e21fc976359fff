"""Command line surface: ``simulate run | inspect | selftest``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime
contract violation or failed selftest.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .errors import ConfigError, EdgeKdError
from .harness import load_experiment_config, run_experiment
from .scenario import load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTRACT = 3


def _parse_seeds(text: str):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"--seeds must be comma-separated integers, got {text!r}",
                          "seeds") from exc


def _cmd_run(args) -> int:
    config = load_experiment_config(args.config)
    if args.seeds:
        config = dataclasses.replace(config, seeds=_parse_seeds(args.seeds))
    if args.workers:
        config = dataclasses.replace(config, workers=args.workers)
    if args.topology:
        kept = tuple(p for p in config.plans if p.topology == args.topology)
        if not kept:
            raise ConfigError(f"no plan has topology {args.topology!r}", "topology")
        config = dataclasses.replace(config, plans=kept)
    report = run_experiment(config, out_dir=args.out)
    print(f"wrote {report.out_dir}/metrics.csv, ledger.csv, summary.csv, "
          f"models.csv, config_echo.json"
          + (", fig3.csv" if config.emit_fig3 else ""))
    return EXIT_OK


def _cmd_inspect(args) -> int:
    scenario = load_scenario(args.scenario)
    echo = {"config": scenario.config.to_dict(), "seed": scenario.seed}
    print(json.dumps(echo, sort_keys=True, indent=2))
    names = (["server"]
             + [f"node{k}" for k in range(scenario.config.num_nodes)]
             + [f"holdout{k}" for k in range(scenario.config.num_nodes)])
    datasets = [scenario.server_set, *scenario.per_node_sets,
                *scenario.node_holdouts]
    print(f"\nbeam histograms ({scenario.config.num_beams} beams):")
    for name, ds in zip(names, datasets):
        print(f"  {name} ({len(ds)} samples)")
        for s in range(ds.num_slots):
            counts = np.bincount(ds.labels[:, s],
                                 minlength=scenario.config.num_beams)
            print(f"    t{s}: {' '.join(str(c) for c in counts)}")
    return EXIT_OK


def _cmd_selftest(_args) -> int:
    from .selftest import run_selftest
    return EXIT_OK if run_selftest() else EXIT_CONTRACT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Deterministic knowledge-distillation collaborative "
                    "learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment configuration")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--out", default=None, help="output directory "
                       "(overrides the config's output_dir)")
    p_run.add_argument("--seeds", default=None,
                       help="comma-separated seed list override")
    p_run.add_argument("--topology", default=None,
                       help="keep only plans with this topology")
    p_run.add_argument("--workers", type=int, default=None,
                       help="parallel cell workers override")
    p_run.set_defaults(fn=_cmd_run)

    p_inspect = sub.add_parser("inspect", help="describe a .scn scenario file")
    p_inspect.add_argument("--scenario", required=True, help="path to a .scn file")
    p_inspect.set_defaults(fn=_cmd_inspect)

    p_self = sub.add_parser("selftest", help="run the built-in invariant suite")
    p_self.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"configuration error: {exc}{field}", file=sys.stderr)
        return EXIT_CONFIG
    except EdgeKdError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
