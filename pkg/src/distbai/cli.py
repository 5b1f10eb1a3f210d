"""Command line entry point: ``distbai run`` and ``distbai suite``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .harness import ConfigError

FLAG_KEYS = ("problem", "population", "n", "n_gamma", "pop_n_gamma", "m", "algo", "eps",
             "delta", "horizon", "trials", "seed", "out", "stride", "workers")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--problem", choices=("problem1", "problem2"))
    p.add_argument("--population", choices=("uniform", "pareto8020"))
    p.add_argument("--n", type=int, help="number of players")
    p.add_argument("--n-gamma", dest="n_gamma", type=int,
                   help="N_gamma handed to the protocol (default: population's active group)")
    p.add_argument("--pop-n-gamma", dest="pop_n_gamma", type=int,
                   help="size of the 80%% group in pareto8020 (default: ceil(0.2 N))")
    p.add_argument("--m", type=int, help="instances for edme")
    p.add_argument("--algo", choices=harness.ALGORITHMS)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--stride", type=int, help="checkpoint stride of the regret trace")
    p.add_argument("--workers", type=int, help="processes for parallel trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distbai", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configuration and write its CSVs")
    _add_experiment_flags(run)

    suite = sub.add_parser("suite", help="sweep a parameter over several algorithms")
    _add_experiment_flags(suite)
    suite.add_argument("--sweep", choices=tuple(harness.SWEEPABLE))
    suite.add_argument("--values", help="comma separated sweep values (n defaults to 1,2,4,...,1024)")
    suite.add_argument("--algos", help="comma separated algorithms")
    suite.add_argument("--figure", help="prefix of the output files")
    suite.add_argument("--out-dir", dest="out_dir")
    return parser


def _collect(args: argparse.Namespace, keys) -> dict:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(harness.parse_kv(fh.read()))
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = harness.config_from_mapping(_collect(args, FLAG_KEYS))
            trace, summary = harness.run_experiment(cfg)
            if cfg.out:
                print(f"wrote {cfg.out} and {harness.summary_path(cfg.out)}")
            print(",".join(harness.Summary.FIELDS))
            print(",".join(summary.row()))
        else:
            suite_keys = FLAG_KEYS + ("sweep", "values", "algos", "figure", "out_dir")
            suite = harness.suite_from_mapping(_collect(args, suite_keys))
            for path in harness.run_suite(suite):
                print(f"wrote {path}")
    except (ConfigError, OSError) as exc:
        print(f"distbai: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
