"""Hour-partitioned card transaction store.

Rows live in hour buckets keyed by int(timestamp // 3600); within a bucket,
each card's rows are kept sorted by (timestamp, trx_id). Window queries visit
only the buckets overlapping the window, so retrieving a card's recent
history never scans the full table.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .transactions import HOUR_SECONDS, Transaction


class StoreError(ValueError):
    """Bad insert (bucket/timestamp mismatch) or malformed query bounds."""


@dataclass(frozen=True)
class StoredRow:
    """A transaction as the store keeps it: identifiers, time, raw attributes.

    Labels are deliberately absent; the store serves feature queries and must
    not leak outcome information.
    """

    trx_id: str
    card_id: str
    timestamp: float
    amount: float | None
    cat_values: tuple[str | None, ...]
    num_values: tuple[float | None, ...]

    @classmethod
    def from_transaction(cls, trx: Transaction) -> "StoredRow":
        return cls(trx.trx_id, trx.card_id, trx.timestamp, trx.amount, trx.cat_values, trx.num_values)


def hour_bucket(timestamp: float) -> int:
    return int(timestamp // HOUR_SECONDS)


class TransactionStore:
    """In-memory table partitioned by (hour bucket, card)."""

    def __init__(self) -> None:
        self._buckets: dict[int, dict[str, list[tuple[float, str, StoredRow]]]] = {}
        # Secondary index: which buckets hold rows for a card, sorted. Lets a
        # window query skip buckets where the card never transacted.
        self._card_buckets: dict[str, list[int]] = {}
        self._count = 0
        # Instrumentation: bucket lookups performed by window queries.
        self.bucket_visits = 0
        self.queries = 0

    def __len__(self) -> int:
        return self._count

    def insert(self, row: StoredRow, bucket: int | None = None) -> None:
        """Insert one row. A duplicate (card, timestamp, trx_id) replaces in place."""
        expected = hour_bucket(row.timestamp)
        if bucket is None:
            bucket = expected
        elif bucket != expected:
            raise StoreError(
                f"bucket {bucket} does not cover timestamp {row.timestamp} (expected {expected})"
            )
        per_card = self._buckets.setdefault(bucket, {})
        rows = per_card.setdefault(row.card_id, [])
        key = (row.timestamp, row.trx_id)
        i = bisect_left(rows, key, key=lambda entry: (entry[0], entry[1]))
        if i < len(rows) and (rows[i][0], rows[i][1]) == key:
            rows[i] = (row.timestamp, row.trx_id, row)
            return
        rows.insert(i, (row.timestamp, row.trx_id, row))
        self._count += 1
        card_buckets = self._card_buckets.setdefault(row.card_id, [])
        j = bisect_left(card_buckets, bucket)
        if j == len(card_buckets) or card_buckets[j] != bucket:
            card_buckets.insert(j, bucket)

    def insert_transaction(self, trx: Transaction) -> None:
        self.insert(StoredRow.from_transaction(trx))

    def query_card_window(self, card_id: str, end: float, window: float) -> list[StoredRow]:
        """Rows for card_id with timestamp in [end - window, end), time-ordered.

        Visits at most ceil(window / 3600) + 1 buckets.
        """
        if window <= 0:
            raise StoreError(f"window must be positive, got {window}")
        start = end - window
        self.queries += 1
        out: list[StoredRow] = []
        first = hour_bucket(start)
        last = hour_bucket(end)
        # The end bound is exclusive; a window ending exactly on an hour edge
        # never needs the bucket that starts there.
        if end == last * HOUR_SECONDS and last > first:
            last -= 1
        card_buckets = self._card_buckets.get(card_id)
        if not card_buckets:
            return out
        lo = bisect_left(card_buckets, first)
        hi = bisect_left(card_buckets, last + 1)
        for b in card_buckets[lo:hi]:
            self.bucket_visits += 1
            rows = self._buckets[b].get(card_id)
            if not rows:
                continue
            for ts, _, row in rows:
                if start <= ts < end:
                    out.append(row)
        return out

    def prune(self, before: float) -> int:
        """Drop all rows with timestamp < before. Returns count dropped."""
        cutoff_bucket = hour_bucket(before)
        dropped = 0
        for b in [b for b in self._buckets if b < cutoff_bucket]:
            for card_id, rows in self._buckets[b].items():
                dropped += len(rows)
                self._drop_from_index(card_id, b)
            del self._buckets[b]
        boundary = self._buckets.get(cutoff_bucket)
        if boundary is not None:
            for card_id in list(boundary):
                rows = boundary[card_id]
                keep = [entry for entry in rows if entry[0] >= before]
                dropped += len(rows) - len(keep)
                if keep:
                    boundary[card_id] = keep
                else:
                    del boundary[card_id]
                    self._drop_from_index(card_id, cutoff_bucket)
            if not boundary:
                del self._buckets[cutoff_bucket]
        self._count -= dropped
        return dropped

    def _drop_from_index(self, card_id: str, bucket: int) -> None:
        card_buckets = self._card_buckets[card_id]
        i = bisect_left(card_buckets, bucket)
        if i < len(card_buckets) and card_buckets[i] == bucket:
            del card_buckets[i]
        if not card_buckets:
            del self._card_buckets[card_id]

    def iter_rows(self) -> Iterator[StoredRow]:
        for b in sorted(self._buckets):
            per_card = self._buckets[b]
            for card_id in sorted(per_card):
                for _, _, row in per_card[card_id]:
                    yield row

    def max_buckets_for_window(self, window: float) -> int:
        return math.ceil(window / HOUR_SECONDS) + 1

    def save(self, path: str | Path) -> int:
        n = 0
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.iter_rows():
                fh.write(
                    json.dumps(
                        {
                            "trx_id": row.trx_id,
                            "card_id": row.card_id,
                            "timestamp": row.timestamp,
                            "amount": row.amount,
                            "cat_values": list(row.cat_values),
                            "num_values": list(row.num_values),
                        }
                    )
                )
                fh.write("\n")
                n += 1
        return n

    @classmethod
    def load(cls, path: str | Path) -> "TransactionStore":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                store.insert(
                    StoredRow(
                        trx_id=obj["trx_id"],
                        card_id=obj["card_id"],
                        timestamp=float(obj["timestamp"]),
                        amount=None if obj["amount"] is None else float(obj["amount"]),
                        cat_values=tuple(obj["cat_values"]),
                        num_values=tuple(None if v is None else float(v) for v in obj["num_values"]),
                    )
                )
        return store
