"""Transaction model and dataset file formats (CSV and JSON-lines).

A transaction carries a hidden ground-truth label that the scoring path
must never see before its revelation day; the label is therefore exposed
through a property so audit harnesses can instrument every read.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

GENUINE = 0
FRAUD = 1

#: seconds per simulated day / hour
DAY_SECONDS = 86_400.0
HOUR_SECONDS = 3_600.0


class SchemaError(ValueError):
    """Transaction attributes do not match the expected schema."""


@dataclass(frozen=True)
class TransactionSchema:
    """Attribute layout: `n` categorical and `m` numeric columns.

    Column names are fixed to ``cat_1..cat_n`` / ``num_1..num_m`` so a
    dataset file is self-describing.
    """

    n_categorical: int = 3
    n_numeric: int = 4

    @property
    def categorical_names(self) -> tuple[str, ...]:
        return tuple(f"cat_{i + 1}" for i in range(self.n_categorical))

    @property
    def numeric_names(self) -> tuple[str, ...]:
        return tuple(f"num_{i + 1}" for i in range(self.n_numeric))

    def csv_header(self) -> list[str]:
        return (
            ["trx_id", "card_id", "timestamp", "amount"]
            + list(self.categorical_names)
            + list(self.numeric_names)
            + ["label"]
        )


class Transaction:
    """One raw payment event.

    ``amount`` and any categorical/numeric attribute may be missing
    (``None``). ``true_label`` is hidden state: it is only legitimate to
    read it when sealing it into a label vault, on revelation, or during
    offline evaluation.
    """

    __slots__ = ("trx_id", "card_id", "timestamp", "amount", "cat_values", "num_values", "_label")

    def __init__(
        self,
        trx_id: str,
        card_id: str,
        timestamp: float,
        amount: float | None,
        cat_values: tuple[str | None, ...],
        num_values: tuple[float | None, ...],
        true_label: int | None,
    ) -> None:
        self.trx_id = trx_id
        self.card_id = card_id
        self.timestamp = timestamp
        self.amount = amount
        self.cat_values = cat_values
        self.num_values = num_values
        self._label = true_label

    @property
    def true_label(self) -> int:
        if self._label is None:
            raise LookupError(f"transaction {self.trx_id} carries no outcome label")
        return self._label

    @property
    def day(self) -> int:
        return int(self.timestamp // DAY_SECONDS)

    def __repr__(self) -> str:  # label deliberately omitted
        return f"Transaction({self.trx_id!r}, card={self.card_id!r}, ts={self.timestamp}, amount={self.amount})"


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return repr(value)


def _parse_float(field: str) -> float | None:
    return None if field == "" else float(field)


def transaction_to_row(trx: Transaction) -> list[str]:
    return (
        [trx.trx_id, trx.card_id, repr(trx.timestamp), _fmt(trx.amount)]
        + [v if v is not None else "" for v in trx.cat_values]
        + [_fmt(v) for v in trx.num_values]
        + [str(trx.true_label)]
    )


def write_csv(transactions: Iterable[Transaction], path: str | Path, schema: TransactionSchema) -> int:
    """Write the stream to CSV; missing values become empty fields. Returns row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.csv_header())
        for trx in transactions:
            writer.writerow(transaction_to_row(trx))
            n += 1
    return n


def schema_from_header(header: list[str]) -> TransactionSchema:
    n_cat = sum(1 for name in header if name.startswith("cat_"))
    n_num = sum(1 for name in header if name.startswith("num_"))
    schema = TransactionSchema(n_categorical=n_cat, n_numeric=n_num)
    if header != schema.csv_header():
        raise SchemaError(f"unexpected header {header!r}; expected {schema.csv_header()!r}")
    return schema


def _row_to_transaction(row: list[str], schema: TransactionSchema, line_no: int) -> Transaction:
    expected = 5 + schema.n_categorical + schema.n_numeric
    if len(row) != expected:
        raise SchemaError(f"line {line_no}: expected {expected} fields, got {len(row)}")
    try:
        n_cat = schema.n_categorical
        cats = tuple(v if v != "" else None for v in row[4 : 4 + n_cat])
        nums = tuple(_parse_float(v) for v in row[4 + n_cat : 4 + n_cat + schema.n_numeric])
        return Transaction(
            trx_id=row[0],
            card_id=row[1],
            timestamp=float(row[2]),
            amount=_parse_float(row[3]),
            cat_values=cats,
            num_values=nums,
            true_label=int(row[-1]),
        )
    except ValueError as exc:
        raise SchemaError(f"line {line_no}: {exc}") from exc


def read_csv(path: str | Path) -> tuple[TransactionSchema, list[Transaction]]:
    """Read a dataset file. Malformed rows raise SchemaError naming the line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return TransactionSchema(), []
        schema = schema_from_header(header)
        out = [_row_to_transaction(row, schema, i) for i, row in enumerate(reader, start=2)]
    return schema, out


def write_jsonl(transactions: Iterable[Transaction], path: str | Path, schema: TransactionSchema) -> int:
    names = schema.csv_header()
    n = 0
    with open(path, "w") as fh:
        for trx in transactions:
            row = transaction_to_row(trx)
            obj = {k: (v if v != "" else None) for k, v in zip(names, row)}
            obj["timestamp"] = trx.timestamp
            obj["amount"] = trx.amount
            for name, v in zip(schema.numeric_names, trx.num_values):
                obj[name] = v
            obj["label"] = trx.true_label
            fh.write(json.dumps(obj) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> tuple[TransactionSchema, list[Transaction]]:
    out: list[Transaction] = []
    schema: TransactionSchema | None = None
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}: {exc}") from exc
            if schema is None:
                n_cat = sum(1 for k in obj if k.startswith("cat_"))
                n_num = sum(1 for k in obj if k.startswith("num_"))
                schema = TransactionSchema(n_categorical=n_cat, n_numeric=n_num)
            try:
                out.append(
                    Transaction(
                        trx_id=str(obj["trx_id"]),
                        card_id=str(obj["card_id"]),
                        timestamp=float(obj["timestamp"]),
                        amount=None if obj.get("amount") is None else float(obj["amount"]),
                        cat_values=tuple(obj.get(n) for n in schema.categorical_names),
                        num_values=tuple(
                            None if obj.get(n) is None else float(obj[n]) for n in schema.numeric_names
                        ),
                        true_label=int(obj["label"]),
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise SchemaError(f"line {line_no}: {exc}") from exc
    return schema or TransactionSchema(), out


def read_dataset(path: str | Path) -> tuple[TransactionSchema, list[Transaction]]:
    """Dispatch on extension: .jsonl/.json gets JSON-lines, anything else CSV."""
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".json"):
        return read_jsonl(path)
    return read_csv(path)


def stream_iterator(transactions: Iterable[Transaction]) -> Iterator[Transaction]:
    last = -float("inf")
    for trx in transactions:
        if trx.timestamp < last:
            raise SchemaError(f"stream out of order at {trx.trx_id}")
        last = trx.timestamp
        yield trx
