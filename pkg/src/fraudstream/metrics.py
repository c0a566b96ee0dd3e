"""Evaluation: card-level precision, ranking AUC, detection timing, and a
paired significance test for comparing scoring strategies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .transactions import FRAUD


class DegenerateMetricError(ValueError):
    """Metric undefined on this input (e.g. a single class present)."""


@dataclass(frozen=True)
class CardPrecision:
    """Precision of one day's card alerts.

    value: fraction of alerted cards that were compromised that day, over the
    alerts actually issued. value_at_budget: same hits over the full alert
    budget k, which penalizes days with too few alerts. defined is False when
    no alert was issued (value is 0.0 then).
    """

    value: float
    value_at_budget: float
    hits: int
    n_alerted: int
    budget: int
    defined: bool


def card_precision(
    alerted_cards: Sequence[str],
    card_truth: Mapping[str, int],
    budget: int,
) -> CardPrecision:
    if budget < 1:
        raise DegenerateMetricError(f"budget must be positive, got {budget}")
    if len(set(alerted_cards)) != len(alerted_cards):
        raise DegenerateMetricError("alerted cards must be unique")
    if len(alerted_cards) > budget:
        raise DegenerateMetricError(f"{len(alerted_cards)} alerts exceed the budget of {budget}")
    hits = sum(1 for c in alerted_cards if card_truth.get(c, 0) == FRAUD)
    n = len(alerted_cards)
    return CardPrecision(
        value=hits / n if n else 0.0,
        value_at_budget=hits / budget,
        hits=hits,
        n_alerted=n,
        budget=budget,
        defined=n > 0,
    )


def auc(
    scores: Sequence[float],
    labels: Sequence[int],
    level: str = "transaction",
    cards: Sequence[str] | None = None,
) -> float:
    """Probability that a random fraud outranks a random genuine (ties half).

    level="card" first reduces to one (max score, any fraud) pair per card;
    `cards` is required there and ignored otherwise.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise DegenerateMetricError(f"scores and labels must align, got {s.shape} and {y.shape}")
    if level == "card":
        if cards is None or len(cards) != len(s):
            raise DegenerateMetricError("card-level AUC needs one card id per score")
        best: dict[str, tuple[float, int]] = {}
        for card, score, label in zip(cards, s, y):
            prev = best.get(card)
            if prev is None:
                best[card] = (float(score), int(label))
            else:
                best[card] = (max(prev[0], float(score)), max(prev[1], int(label)))
        s = np.asarray([v[0] for v in best.values()])
        y = np.asarray([v[1] for v in best.values()])
    elif level != "transaction":
        raise DegenerateMetricError(f"unknown level {level!r}")
    n_pos = int((y == FRAUD).sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateMetricError(f"AUC undefined with {n_pos} frauds and {n_neg} genuine")
    ranks = stats.rankdata(s, method="average")
    rank_sum = float(ranks[y == FRAUD].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class EarlierDetection:
    """How often alerting preceded the card's final fraudulent use."""

    value: float
    n_earlier: int
    n_fraud_cards: int
    defined: bool


def earlier_detection_rate(
    first_alert_day: Mapping[str, int],
    last_fraud_day: Mapping[str, int],
) -> EarlierDetection:
    if not last_fraud_day:
        return EarlierDetection(value=0.0, n_earlier=0, n_fraud_cards=0, defined=False)
    earlier = 0
    for card, fraud_day in last_fraud_day.items():
        alert_day = first_alert_day.get(card)
        if alert_day is not None and alert_day < fraud_day:
            earlier += 1
    n = len(last_fraud_day)
    return EarlierDetection(value=earlier / n, n_earlier=earlier, n_fraud_cards=n, defined=True)


def _summary(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return {"median": 0.0, "p90": 0.0, "max": 0.0}
    return {
        "median": float(np.median(arr)),
        "p90": float(np.percentile(arr, 90)),
        "max": float(arr.max()),
    }


def timing_report(batches: Sequence) -> dict:
    """Processing-time and delay summaries from per-batch statistics.

    Batches are grouped by operating phase; task shares are fractions of
    total processing time, and the model-update share is measured over the
    batches that actually retrained.
    """
    by_phase: dict[str, list] = {}
    for b in batches:
        by_phase.setdefault(b.phase, []).append(b)
    out: dict = {"phases": {}, "overall": {}}
    for phase, rows in sorted(by_phase.items()):
        out["phases"][phase] = {
            "batches": len(rows),
            "processing_time": _summary([b.processing_time for b in rows]),
            "scheduling_delay": _summary([b.scheduling_delay for b in rows]),
        }
    tasks = {
        "read": sum(b.read_s for b in batches),
        "write": sum(b.write_s for b in batches),
        "features": sum(b.feature_s for b in batches),
        "classify": sum(b.classify_s for b in batches),
        "retrain": sum(b.retrain_s for b in batches),
    }
    # Shares are normalized over the measured task components themselves, so
    # they stay meaningful when processing time comes from a simulated cost
    # model rather than the wall clock.
    total = float(sum(tasks.values()))
    out["overall"] = {
        "batches": len(batches),
        "processing_time": _summary([b.processing_time for b in batches]),
        "scheduling_delay": _summary([b.scheduling_delay for b in batches]),
        "task_share": {k: (v / total if total else 0.0) for k, v in tasks.items()},
    }
    retrain_batches = [b for b in batches if b.retrain_s > 0]
    if retrain_batches:
        rt = float(sum(b.retrain_s for b in retrain_batches))
        comp = float(
            sum(b.read_s + b.write_s + b.feature_s + b.classify_s + b.retrain_s for b in retrain_batches)
        )
        out["overall"]["retrain_share_when_retraining"] = rt / comp if comp else 0.0
    return out


@dataclass(frozen=True)
class PairedTest:
    """One-sided paired t-test that strategy A scores above strategy B."""

    t_statistic: float
    p_value: float
    mean_difference: float
    n: int
    defined: bool


def paired_improvement_test(a: Sequence[float], b: Sequence[float]) -> PairedTest:
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if xa.shape != xb.shape or xa.ndim != 1:
        raise DegenerateMetricError(f"paired samples must align, got {xa.shape} and {xb.shape}")
    if xa.size < 2:
        raise DegenerateMetricError("paired test needs at least two pairs")
    diff = xa - xb
    if np.allclose(diff.std(ddof=1), 0.0):
        # No variance in the differences: test statistic is undefined.
        return PairedTest(
            t_statistic=float("nan"),
            p_value=0.0 if diff.mean() > 0 else 1.0,
            mean_difference=float(diff.mean()),
            n=int(xa.size),
            defined=False,
        )
    result = stats.ttest_rel(xa, xb, alternative="greater")
    return PairedTest(
        t_statistic=float(result.statistic),
        p_value=float(result.pvalue),
        mean_difference=float(diff.mean()),
        n=int(xa.size),
        defined=True,
    )
