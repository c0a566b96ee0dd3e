"""On-line feature engineering: per-card behavioural aggregates.

Each incoming transaction is augmented with statistics of the same card's
prior history over sliding windows (day, week by default), plus lifetime
descriptors. Aggregation sees only rows strictly before the transaction, so
features never leak the transaction's own values or its future.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .preprocess import MedianTable, RiskDictionary, encode_transaction
from .store import StoredRow, TransactionStore
from .transactions import DAY_SECONDS, Transaction


class FeatureError(ValueError):
    """History passed to the aggregator violates its contract."""


WEEK_SECONDS = 7 * DAY_SECONDS

# Per window: count, sum, avg, max, min of amount; seconds since the most
# recent prior transaction (window length when none); distinct values of the
# first categorical attribute.
PER_WINDOW_STATS = 7
EXTRA_STATS = 3


@dataclass(frozen=True)
class AggregationSpec:
    windows: tuple[float, ...] = (DAY_SECONDS, WEEK_SECONDS)

    def __post_init__(self) -> None:
        if not self.windows:
            raise FeatureError("need at least one window")
        if any(w <= 0 for w in self.windows):
            raise FeatureError(f"windows must be positive, got {self.windows}")

    @property
    def max_window(self) -> float:
        return max(self.windows)

    @property
    def width(self) -> int:
        return len(self.windows) * PER_WINDOW_STATS + EXTRA_STATS

    def names(self) -> list[str]:
        out = []
        for w in self.windows:
            hours = int(w // 3600)
            prefix = f"w{hours}h"
            out.extend(
                [
                    f"{prefix}_count",
                    f"{prefix}_sum",
                    f"{prefix}_avg",
                    f"{prefix}_max",
                    f"{prefix}_min",
                    f"{prefix}_since_last",
                    f"{prefix}_distinct_cat",
                ]
            )
        out.extend(["card_age", "lifetime_count", "lifetime_avg_amount"])
        return out


def aggregate(trx: Transaction, history: Sequence[StoredRow], spec: AggregationSpec) -> np.ndarray:
    """Feature vector from this card's prior rows.

    `history` must contain rows of the same card, strictly older than `trx`,
    covering at least the largest window; it may extend further back, which
    only affects the lifetime descriptors.
    """
    for row in history:
        if row.card_id != trx.card_id:
            raise FeatureError(f"history row {row.trx_id} belongs to card {row.card_id}, not {trx.card_id}")
        if row.timestamp >= trx.timestamp:
            raise FeatureError(f"history row {row.trx_id} is not strictly before the transaction")

    out = np.empty(spec.width, dtype=np.float64)
    pos = 0
    for window in spec.windows:
        start = trx.timestamp - window
        in_window = [row for row in history if row.timestamp >= start]
        amounts = [row.amount for row in in_window if row.amount is not None]
        count = float(len(in_window))
        total = float(sum(amounts))
        out[pos] = count
        out[pos + 1] = total
        out[pos + 2] = total / len(amounts) if amounts else 0.0
        out[pos + 3] = max(amounts) if amounts else 0.0
        out[pos + 4] = min(amounts) if amounts else 0.0
        if in_window:
            out[pos + 5] = trx.timestamp - max(row.timestamp for row in in_window)
        else:
            out[pos + 5] = window
        out[pos + 6] = float(len({row.cat_values[0] for row in in_window if row.cat_values[0] is not None}))
        pos += PER_WINDOW_STATS

    if history:
        oldest = min(row.timestamp for row in history)
        out[pos] = trx.timestamp - oldest
        amounts = [row.amount for row in history if row.amount is not None]
        out[pos + 1] = float(len(history))
        out[pos + 2] = float(sum(amounts)) / len(amounts) if amounts else 0.0
    else:
        out[pos] = 0.0
        out[pos + 1] = 0.0
        out[pos + 2] = 0.0
    return out


@dataclass
class AugmentedTransaction:
    """A transaction with its engineered features and, once the preprocessing
    tables exist, its encoded raw attributes."""

    base: Transaction
    engineered: np.ndarray
    encoded_raw: np.ndarray | None

    @property
    def x(self) -> np.ndarray:
        if self.encoded_raw is None:
            raise FeatureError(f"transaction {self.base.trx_id} has no encoded attributes yet")
        return np.concatenate([self.encoded_raw, self.engineered])


def feature_width(spec: AggregationSpec, encoded_raw_width: int) -> int:
    return encoded_raw_width + spec.width


def augment(
    trx: Transaction,
    store: TransactionStore,
    spec: AggregationSpec,
    rdict: RiskDictionary | None,
    medians: MedianTable | None,
) -> AugmentedTransaction:
    """Engineer features against the store's current contents.

    The history query ends at the transaction's own timestamp (exclusive), so
    the row itself, even if already inserted, is never counted.
    """
    history = store.query_card_window(trx.card_id, end=trx.timestamp, window=spec.max_window)
    engineered = aggregate(trx, history, spec)
    encoded = None
    if rdict is not None and medians is not None:
        encoded = encode_transaction(trx, rdict, medians)
    return AugmentedTransaction(base=trx, engineered=engineered, encoded_raw=encoded)
