"""Command line entry point: ``fasnoma run`` and ``fasnoma summarize``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .bench import ExperimentConfig, run_experiment, summarize

log = logging.getLogger("fasnoma")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fasnoma", description="Fluid-antenna NOMA secrecy-rate benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte Carlo sweep from a YAML config")
    r.add_argument("--config", required=True, help="experiment YAML file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--trials", type=int, default=None, help="override num_trials")
    r.add_argument("--seed", type=int, default=None, help="override base_seed")
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("-q", "--quiet", action="store_true")

    s = sub.add_parser("summarize", help="recompute summaries from trial CSVs")
    s.add_argument("--in", dest="inputs", required=True, nargs="+", help="trial CSV paths or glob patterns")
    s.add_argument("--out", required=True, help="summary CSV to write")
    return p


def _progress(done: int, total: int) -> None:
    if done == total or done % max(1, total // 20) == 0:
        log.info("%d/%d trials", done, total)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s")
    try:
        if args.command == "run":
            config = ExperimentConfig.load(args.config)
            changes = {}
            if args.trials is not None:
                changes["num_trials"] = args.trials
            if args.seed is not None:
                changes["base_seed"] = args.seed
            if changes:
                config = replace(config, **changes)
            if args.workers < 1:
                raise ValueError("--workers must be >= 1")
            out = run_experiment(config, args.out, workers=args.workers, progress=_progress)
            log.info("wrote %s", out.trials_path)
            for row in out.summary:
                log.info("%s=%s %-18s mean R_s %.4f (n=%d, feasible %.2f)", row["sweep_axis"], row["sweep_value"],
                         row["method"], row["mean"], row["count"], row["feasible_fraction"])
        else:
            summarize(args.inputs, args.out)
    except (OSError, ValueError) as exc:
        print(f"fasnoma: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
