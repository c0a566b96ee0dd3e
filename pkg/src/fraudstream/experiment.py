"""Multi-seed experiment driver: one shared input stream, one engine per seed.

Seeds vary only model randomness (subsampling and split draws); the
transaction stream itself is produced once from the generator seed or read
from a dataset file, so seed-to-seed differences isolate the learning
pipeline.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path

import numpy as np

from .config import RunConfig, config_to_dict
from .generator import generate
from .metrics import paired_improvement_test
from .streaming import FULLY_OPERATIONAL, QueueOverflowError, RunReport, StreamingEngine
from .transactions import Transaction, read_dataset

logger = logging.getLogger(__name__)

MODELS = ("delayed", "feedback", "ensemble")


def load_stream(config: RunConfig) -> list[Transaction]:
    if config.dataset is not None:
        _, rows = read_dataset(config.dataset)
        return rows
    return list(generate(config.generator))


def run_single(config: RunConfig, transactions: list[Transaction], seed: int) -> tuple[RunReport, bool]:
    """One engine pass; returns (report, aborted)."""
    engine = StreamingEngine(
        schema=config.generator.schema,
        stream_config=config.stream,
        ensemble_config=config.ensemble,
        aggregation=config.aggregation,
        seed=seed,
    )
    try:
        return engine.run(iter(transactions)), False
    except QueueOverflowError as exc:
        logger.warning("seed %d aborted: %s", seed, exc)
        return exc.report, True


def _report_payload(report: RunReport, seed: int, aborted: bool) -> dict:
    return {
        "seed": seed,
        "aborted": aborted,
        "abort_reason": report.abort_reason,
        "evaluation": report.evaluation,
        "days": [
            {
                "day": rec.day,
                "phase": rec.phase,
                "alerts": [dataclasses.asdict(e) for e in rec.alerts],
                "store_rows": rec.store_rows,
                "broker_records": rec.broker_records,
                "delayed_trained_day": rec.delayed_trained_day,
                "feedback_trained": rec.feedback_trained,
                "notes": rec.notes,
            }
            for rec in report.days
        ],
        "batches": [
            [b.index, b.day, b.records, round(b.processing_time, 6), round(b.scheduling_delay, 6)]
            for b in report.batches
        ],
    }


def _write_alerts_csv(report: RunReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "card_id", "trx_id", "score", "card_compromised_that_day"])
        for row in report.evaluation.get("alerts", []):
            writer.writerow(
                [row["day"], row["card_id"], row["trx_id"], repr(row["score"]), row["card_compromised_that_day"]]
            )


def _full_phase_series(report: RunReport) -> dict[str, dict[int, float]]:
    """day -> precision for each model, over fully-operational days."""
    out: dict[str, dict[int, float]] = {name: {} for name in MODELS}
    for row in report.evaluation.get("per_day", []):
        if row["phase"] != FULLY_OPERATIONAL:
            continue
        for name in MODELS:
            if row[name]["defined"]:
                out[name][row["day"]] = row[name]["precision"]
    return out


def summarize(config: RunConfig, results: dict[int, tuple[RunReport, bool]]) -> dict:
    """Cross-seed summary: per-phase precision means and paired comparisons."""
    phases: dict[str, dict[str, list[float]]] = {}
    detection_rates: list[float] = []
    per_seed: dict[int, dict] = {}
    ensemble_series: list[float] = []
    feedback_series: list[float] = []
    delayed_series: list[float] = []

    for seed, (report, aborted) in sorted(results.items()):
        seed_block = {"aborted": aborted, "phases": {}}
        for phase, block in report.evaluation.get("phase_means", {}).items():
            seed_block["phases"][phase] = {
                name: block[name]["mean_precision"] for name in MODELS
            }
            for name in MODELS:
                value = block[name]["mean_precision"]
                if value is not None:
                    phases.setdefault(phase, {}).setdefault(name, []).append(value)
        detection = report.evaluation.get("earlier_detection", {})
        if detection.get("defined"):
            detection_rates.append(detection["rate"])
        per_seed[seed] = seed_block

        series = _full_phase_series(report)
        shared_days = sorted(set(series["ensemble"]) & set(series["delayed"]) & set(series["feedback"]))
        ensemble_series.extend(series["ensemble"][d] for d in shared_days)
        feedback_series.extend(series["feedback"][d] for d in shared_days)
        delayed_series.extend(series["delayed"][d] for d in shared_days)

    summary: dict = {
        "config": config_to_dict(config),
        "seeds": sorted(results),
        "aborted_seeds": sorted(seed for seed, (_, aborted) in results.items() if aborted),
        "per_seed": per_seed,
        "phase_precision_mean": {
            phase: {name: float(np.mean(vals)) for name, vals in models.items()}
            for phase, models in phases.items()
        },
        "earlier_detection_rate_mean": float(np.mean(detection_rates)) if detection_rates else None,
        "paired_days": len(ensemble_series),
        "timing_first_seed": results[min(results)][0].evaluation.get("timing") if results else None,
    }
    if len(ensemble_series) >= 2:
        for name, other in (("delayed", delayed_series), ("feedback", feedback_series)):
            test = paired_improvement_test(ensemble_series, other)
            summary[f"ensemble_vs_{name}"] = {
                "t_statistic": test.t_statistic,
                "p_value": test.p_value,
                "mean_difference": test.mean_difference,
                "n": test.n,
                "defined": test.defined,
            }
    return summary


def _write_per_day_csv(results: dict[int, tuple[RunReport, bool]], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "day", "phase", "model", "precision", "precision_at_budget", "hits", "alerts", "defined"]
        )
        for seed, (report, _) in sorted(results.items()):
            for row in report.evaluation.get("per_day", []):
                for name in MODELS:
                    block = row[name]
                    writer.writerow(
                        [
                            seed,
                            row["day"],
                            row["phase"],
                            name,
                            repr(block["precision"]),
                            repr(block["precision_at_budget"]),
                            block["hits"],
                            block["alerts"],
                            int(block["defined"]),
                        ]
                    )


def run_experiment(config: RunConfig, out_dir: str | Path) -> dict:
    """Run every seed, write per-seed and aggregate outputs, return the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    transactions = load_stream(config)
    results: dict[int, tuple[RunReport, bool]] = {}
    for seed in config.seeds:
        report, aborted = run_single(config, transactions, seed)
        results[seed] = (report, aborted)
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        (seed_dir / "report.json").write_text(
            json.dumps(_report_payload(report, seed, aborted), indent=1), encoding="utf-8"
        )
        _write_alerts_csv(report, seed_dir / "alerts.csv")

    summary = summarize(config, results)
    (out / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
    _write_per_day_csv(results, out / "per_day.csv")
    return summary
