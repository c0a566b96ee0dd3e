"""Supervised preprocessing: median imputation and categorical risk coding.

Categorical values are replaced by a smoothed fraud rate estimated from
labelled history; missing numerics are replaced by the per-attribute median.
Both tables are fit only on transactions whose labels have already been
revealed, and can be refreshed incrementally as new labelled days arrive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .transactions import FRAUD, Transaction, TransactionSchema


class PreprocessError(ValueError):
    """Fit attempted on unusable data (no rows, or an all-missing attribute)."""


# Missing categorical values are coded as their own token and earn their own
# risk estimate, since absence itself can be informative.
MISSING_TOKEN = ""


@dataclass
class RiskDictionary:
    """Smoothed per-value fraud rates for each categorical attribute.

    risk(v) = (fraud_count(v) + alpha * default) / (count(v) + alpha)
    where default = (total frauds + alpha * 0.5) / (total + alpha); values
    never seen in training fall back to the default.
    """

    alpha: float = 10.0
    counts: list[dict[str, list[int]]] = field(default_factory=list)
    total: int = 0
    total_frauds: int = 0
    fitted_on: int = 0

    @property
    def default_risk(self) -> float:
        return (self.total_frauds + self.alpha * 0.5) / (self.total + self.alpha)

    def risk(self, attr_index: int, value: str | None) -> float:
        token = MISSING_TOKEN if value is None else value
        entry = self.counts[attr_index].get(token)
        default = self.default_risk
        if entry is None:
            return default
        count, frauds = entry
        return (frauds + self.alpha * default) / (count + self.alpha)

    def encode(self, trx: Transaction) -> list[float]:
        return [self.risk(i, v) for i, v in enumerate(trx.cat_values)]


@dataclass
class MedianTable:
    """Per-attribute medians for the amount and each numeric attribute.

    Index 0 is the amount median; indices 1..m are the numeric attributes.
    """

    medians: list[float] = field(default_factory=list)
    fitted_on: int = 0

    def impute_amount(self, amount: float | None) -> float:
        return self.medians[0] if amount is None else amount

    def impute_numeric(self, index: int, value: float | None) -> float:
        return self.medians[1 + index] if value is None else value


def fit_risk_dictionary(
    transactions: Sequence[Transaction],
    labels: Sequence[int],
    n_categorical: int,
    alpha: float = 10.0,
) -> RiskDictionary:
    if not transactions:
        raise PreprocessError("cannot fit a risk dictionary on zero transactions")
    if len(labels) != len(transactions):
        raise PreprocessError("labels and transactions must align")
    rdict = RiskDictionary(alpha=alpha, counts=[{} for _ in range(n_categorical)])
    for trx, label in zip(transactions, labels):
        is_fraud = int(label == FRAUD)
        rdict.total += 1
        rdict.total_frauds += is_fraud
        for i in range(n_categorical):
            value = trx.cat_values[i]
            token = MISSING_TOKEN if value is None else value
            entry = rdict.counts[i].setdefault(token, [0, 0])
            entry[0] += 1
            entry[1] += is_fraud
    rdict.fitted_on = len(transactions)
    return rdict


def refresh_risk_dictionary(
    rdict: RiskDictionary,
    transactions: Sequence[Transaction],
    labels: Sequence[int],
) -> RiskDictionary:
    """New dictionary equal to refitting on old data plus the new rows."""
    out = RiskDictionary(
        alpha=rdict.alpha,
        counts=[{token: list(entry) for token, entry in attr.items()} for attr in rdict.counts],
        total=rdict.total,
        total_frauds=rdict.total_frauds,
        fitted_on=rdict.fitted_on,
    )
    if len(labels) != len(transactions):
        raise PreprocessError("labels and transactions must align")
    for trx, label in zip(transactions, labels):
        is_fraud = int(label == FRAUD)
        out.total += 1
        out.total_frauds += is_fraud
        for i in range(len(out.counts)):
            value = trx.cat_values[i]
            token = MISSING_TOKEN if value is None else value
            entry = out.counts[i].setdefault(token, [0, 0])
            entry[0] += 1
            entry[1] += is_fraud
    out.fitted_on += len(transactions)
    return out


def fit_median_table(transactions: Sequence[Transaction], n_numeric: int) -> MedianTable:
    if not transactions:
        raise PreprocessError("cannot fit medians on zero transactions")
    amounts = [t.amount for t in transactions if t.amount is not None]
    if not amounts:
        raise PreprocessError("attribute 'amount' is missing in every row")
    medians = [float(np.median(amounts))]
    for i in range(n_numeric):
        values = [t.num_values[i] for t in transactions if t.num_values[i] is not None]
        if not values:
            raise PreprocessError(f"attribute 'num_{i + 1}' is missing in every row")
        medians.append(float(np.median(values)))
    return MedianTable(medians=medians, fitted_on=len(transactions))


def encode_transaction(trx: Transaction, rdict: RiskDictionary, medians: MedianTable) -> np.ndarray:
    """Raw attribute vector: [amount, num_1..num_m, risk(cat_1)..risk(cat_k)]."""
    values = [medians.impute_amount(trx.amount)]
    values.extend(medians.impute_numeric(i, v) for i, v in enumerate(trx.num_values))
    values.extend(rdict.encode(trx))
    return np.asarray(values, dtype=np.float64)


def encoded_width(schema: TransactionSchema) -> int:
    return 1 + schema.n_numeric + schema.n_categorical


def save_preprocessors(rdict: RiskDictionary, medians: MedianTable, path: str | Path) -> None:
    payload = {
        "risk": {
            "alpha": rdict.alpha,
            "counts": rdict.counts,
            "total": rdict.total,
            "total_frauds": rdict.total_frauds,
            "fitted_on": rdict.fitted_on,
        },
        "medians": {"medians": medians.medians, "fitted_on": medians.fitted_on},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_preprocessors(path: str | Path) -> tuple[RiskDictionary, MedianTable]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    risk = payload["risk"]
    rdict = RiskDictionary(
        alpha=float(risk["alpha"]),
        counts=[{token: [int(c), int(f)] for token, (c, f) in attr.items()} for attr in risk["counts"]],
        total=int(risk["total"]),
        total_frauds=int(risk["total_frauds"]),
        fitted_on=int(risk["fitted_on"]),
    )
    med = payload["medians"]
    medians = MedianTable(medians=[float(v) for v in med["medians"]], fitted_on=int(med["fitted_on"]))
    return rdict, medians
