"""Command-line entry point: one subcommand per experiment family."""

from __future__ import annotations

import argparse
import sys

from .harness import EXPERIMENTS, load_config, run_experiment, spec_from_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaysec",
        description="Secrecy-rate experiments for the AN-aided full-duplex two-way relay design.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name.replace("_", "-"), help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file (see README for the schema)")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--trials", type=int, help="number of Monte Carlo trials")
        p.add_argument("--threads", type=int, help="trial worker processes")
        p.add_argument("--duplex", choices=["fd", "hd", "both"], help="duplex mode(s) to run")
        p.add_argument(
            "--timing", action="store_true", default=None,
            help="record wall-clock columns (off by default so reruns are byte-identical)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    experiment = args.experiment.replace("-", "_")
    try:
        config = load_config(args.config) if args.config else None
        spec = spec_from_config(
            experiment,
            config,
            out=args.out,
            seed=args.seed,
            trials=args.trials,
            threads=args.threads,
            duplex=args.duplex,
            timing=args.timing,
        )
        rows = run_experiment(spec)
    except (ValueError, OSError) as exc:
        print(f"relaysec: error: {exc}", file=sys.stderr)
        return 2
    trials = sum(1 for r in rows if r.get("row_kind") == "trial")
    dest = spec.out or "(not written; pass --out)"
    print(f"{experiment}: {trials} trial rows, {len(rows)} total -> {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
