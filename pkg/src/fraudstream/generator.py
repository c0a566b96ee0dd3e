"""Seeded synthetic transaction stream, plus a paced file replayer.

The generator stands in for a confidential production feed: cards emit a
Poisson number of transactions per day, a small subset of cards is
compromised, and compromised cards flip individual transactions to fraud
with elevated amounts and a risky merchant category. An optional drift day
swaps which category is risky and rescales fraud amounts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .transactions import DAY_SECONDS, FRAUD, GENUINE, Transaction, TransactionSchema, read_dataset


class GeneratorConfigError(ValueError):
    """Invalid generator configuration."""


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 1
    num_cards: int = 1000
    trx_per_card_per_day: float = 4.0
    fraud_trx_rate: float = 0.004
    fraud_card_rate: float = 0.05
    num_days: int = 40
    drift_day: int | None = None
    missing_rate: float = 0.02
    n_categorical: int = 3
    n_numeric: int = 4
    # Fraud signal strength: multiplicative amount inflation on the card's own
    # scale, and the probability that a fraud uses the currently risky category.
    amount_inflation: float = 3.0
    risky_category_share: float = 0.8
    # Post-drift values (used from drift_day on, when drift_day is set).
    drift_amount_inflation: float = 2.0
    n_category_values: int = 12

    def validate(self) -> None:
        if self.num_cards < 1 or self.num_days < 1:
            raise GeneratorConfigError("num_cards and num_days must be positive")
        if self.trx_per_card_per_day <= 0:
            raise GeneratorConfigError("trx_per_card_per_day must be positive")
        if not 0.0 < self.fraud_trx_rate < 1.0:
            raise GeneratorConfigError(f"fraud_trx_rate must be in (0,1), got {self.fraud_trx_rate}")
        if not 0.0 < self.fraud_card_rate < 1.0:
            raise GeneratorConfigError(f"fraud_card_rate must be in (0,1), got {self.fraud_card_rate}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise GeneratorConfigError(f"missing_rate must be in [0,1), got {self.missing_rate}")
        if self.n_categorical < 1 or self.n_numeric < 1:
            raise GeneratorConfigError("need at least one categorical and one numeric attribute")
        if self.drift_day is not None and self.drift_day < 0:
            raise GeneratorConfigError("drift_day must be nonnegative")

    @property
    def schema(self) -> TransactionSchema:
        return TransactionSchema(n_categorical=self.n_categorical, n_numeric=self.n_numeric)


# Category indices holding the fraud signal before/after drift.
_RISKY_PRE = 0
_RISKY_POST = 3


def _category_popularity(n_values: int, rng: np.random.Generator) -> np.ndarray:
    # Zipf-flavoured popularity so risk estimates meet both common and rare values.
    weights = 1.0 / np.arange(1, n_values + 1)
    return weights / weights.sum()


def generate(config: GeneratorConfig) -> Iterator[Transaction]:
    """Yield the full stream in nondecreasing timestamp order.

    Deterministic: identical config (seed included) produces an identical
    stream, byte for byte once serialized.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_cards = config.num_cards
    card_ids = [f"c{i:06d}" for i in range(n_cards)]

    # Per-card behaviour: spend scale and activity multiplier.
    base_scale = np.exp(rng.normal(3.0, 0.6, size=n_cards))
    activity = config.trx_per_card_per_day * rng.gamma(4.0, 0.25, size=n_cards)

    n_fraud_cards = max(1, round(config.fraud_card_rate * n_cards))
    fraud_cards = rng.choice(n_cards, size=n_fraud_cards, replace=False)
    is_fraud_card = np.zeros(n_cards, dtype=bool)
    is_fraud_card[fraud_cards] = True
    # Calibrated so the realized fraud fraction tracks fraud_trx_rate.
    p_flip = min(0.9, config.fraud_trx_rate / config.fraud_card_rate)

    n_vals = config.n_category_values
    popularity = _category_popularity(n_vals, rng)
    cat_tokens = [f"m{v:02d}" for v in range(n_vals)]

    seq = 0
    for day in range(config.num_days):
        drifted = config.drift_day is not None and day >= config.drift_day
        risky = _RISKY_POST if drifted else _RISKY_PRE
        inflation = config.drift_amount_inflation if drifted else config.amount_inflation

        counts = rng.poisson(activity)
        total = int(counts.sum())
        if total == 0:
            continue
        card_idx = np.repeat(np.arange(n_cards), counts)
        ts = rng.uniform(day * DAY_SECONDS, (day + 1) * DAY_SECONDS, size=total).round(3)

        flip = rng.random(total) < p_flip
        labels = np.where(is_fraud_card[card_idx] & flip, FRAUD, GENUINE)

        scale = base_scale[card_idx]
        amounts = np.exp(rng.normal(np.log(scale), 0.7))
        fraud_amounts = np.exp(rng.normal(np.log(scale * inflation), 0.7))
        amounts = np.where(labels == FRAUD, fraud_amounts, amounts).round(2)

        cats = rng.choice(n_vals, size=(total, config.n_categorical), p=popularity)
        fraud_use_risky = rng.random(total) < config.risky_category_share
        cats[:, 0] = np.where((labels == FRAUD) & fraud_use_risky, risky, cats[:, 0])

        nums = rng.normal(0.0, 1.0, size=(total, config.n_numeric)).round(4)

        missing = rng.random((total, 1 + config.n_categorical + config.n_numeric)) < config.missing_rate

        order = np.lexsort((card_idx, ts))
        for j in order:
            amount = None if missing[j, 0] else float(amounts[j])
            cat_values = tuple(
                None if missing[j, 1 + a] else cat_tokens[cats[j, a]] for a in range(config.n_categorical)
            )
            num_values = tuple(
                None if missing[j, 1 + config.n_categorical + a] else float(nums[j, a])
                for a in range(config.n_numeric)
            )
            yield Transaction(
                trx_id=f"t{seq:08d}",
                card_id=card_ids[card_idx[j]],
                timestamp=float(ts[j]),
                amount=amount,
                cat_values=cat_values,
                num_values=num_values,
                true_label=int(labels[j]),
            )
            seq += 1


@dataclass
class ReplayStats:
    rows: int = 0
    started_at: float = field(default_factory=time.monotonic)


def replay(
    path: str | Path,
    rate: float,
    speedup: float = 1.0,
    sleep=time.sleep,
    clock=time.monotonic,
) -> Iterator[Transaction]:
    """Replay a dataset file, pacing `rate` transactions per simulated second.

    speedup > 1 compresses wall-clock time by that factor. Row order is file
    order; malformed rows raise SchemaError with the offending line number.
    """
    if rate <= 0:
        raise GeneratorConfigError("rate must be positive")
    if speedup <= 0:
        raise GeneratorConfigError("speedup must be positive")
    _, rows = read_dataset(path)
    start = clock()
    for i, trx in enumerate(rows):
        target = start + (i / rate) / speedup
        delta = target - clock()
        if delta > 0:
            sleep(delta)
        yield trx
