"""Command line interface: generate a dataset, run the pipeline, report results.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 run aborted
because the scheduling delay exceeded its bound.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import run_experiment
from .generator import GeneratorConfigError, generate
from .preprocess import PreprocessError
from .transactions import FRAUD, SchemaError, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_OVERFLOW = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraudstream",
        description="Streaming credit-card fraud detection with a feedback/delayed model ensemble.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "write a synthetic labelled transaction dataset"),
        ("run", "run the streaming pipeline and write reports"),
        ("report", "print the summary of a finished run directory"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="JSON config file (defaults apply)")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the configured seed(s)")
    return parser


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    gen = config.generator
    if args.seed is not None:
        gen = dataclasses.replace(gen, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "transactions.csv"
    transactions = list(generate(gen))
    write_csv(transactions, path, gen.schema)
    frauds = sum(1 for t in transactions if t.true_label == FRAUD)
    cards = len({t.card_id for t in transactions})
    print(
        f"wrote {len(transactions)} transactions ({frauds} fraudulent, {cards} cards, "
        f"{gen.num_days} days) to {path}"
    )
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seeds((args.seed,))
    summary = run_experiment(config, args.out)
    print(f"ran {len(summary['seeds'])} seed(s) into {args.out}")
    _print_summary(summary)
    if summary["aborted_seeds"]:
        print(f"ABORTED seeds (queue overflow): {summary['aborted_seeds']}", file=sys.stderr)
        return EXIT_OVERFLOW
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    path = args.out / "summary.json"
    if not path.exists():
        raise SchemaError(f"no run summary at {path}; run `fraudstream run --out {args.out}` first")
    summary = json.loads(path.read_text(encoding="utf-8"))
    _print_summary(summary)
    return EXIT_OK


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def _print_summary(summary: dict) -> None:
    print(f"seeds: {summary['seeds']}")
    if summary.get("aborted_seeds"):
        print(f"aborted seeds: {summary['aborted_seeds']} (partial results)")
    for phase, models in sorted(summary.get("phase_precision_mean", {}).items()):
        print(f"phase {phase}: mean daily card precision over seeds")
        for name in ("delayed", "feedback", "ensemble"):
            if name in models:
                print(f"  {name:<9} {_fmt(models[name])}")
    for other in ("delayed", "feedback"):
        test = summary.get(f"ensemble_vs_{other}")
        if test:
            print(
                f"ensemble vs {other}: mean diff {test['mean_difference']:+.3f}, "
                f"one-sided p={test['p_value']:.2e} over {test['n']} paired days"
            )
    rate = summary.get("earlier_detection_rate_mean")
    print(f"earlier detection rate (mean over seeds): {_fmt(rate)}")
    timing = summary.get("timing_first_seed")
    if timing:
        overall = timing["overall"]
        delay = overall["scheduling_delay"]
        proc = overall["processing_time"]
        print(
            f"timing (first seed): processing median {proc['median']:.2f}s p90 {proc['p90']:.2f}s; "
            f"scheduling delay median {delay['median']:.2f}s max {delay['max']:.2f}s"
        )
        shares = overall["task_share"]
        print(
            "task shares: "
            + ", ".join(f"{k} {shares[k]:.0%}" for k in ("read", "features", "write", "classify", "retrain"))
        )


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": cmd_generate, "run": cmd_run, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigError, GeneratorConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, PreprocessError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
