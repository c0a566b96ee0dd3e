"""Mini-batch streaming engine tying the pipeline together.

Transactions are published to a partitioned in-process log, consumed in
fixed-duration mini-batches, augmented with per-card history features,
persisted to the hour-partitioned store, and scored by the feedback/delayed
ensemble. Each simulated day ends with a fixed rollover: flush the day's
top-N alert tables, reveal investigator feedback for the alerted cards,
reveal the labels of the day that just matured, refresh the preprocessing
tables, retrain the models, and prune state that fell out of every window.

Ground-truth labels never travel with the stream: they are sealed into a
LabelVault at ingestion and leave it only through the revelation calls, each
of which is logged for audit.
"""

from __future__ import annotations

import json
import logging
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .broker import Broker
from .features import AggregationSpec, aggregate
from .learner import (
    EnsembleConfig,
    EnsembleScorer,
    FeedbackDelayedEnsemble,
    train_balanced_forest,
)
from .metrics import DegenerateMetricError, auc, card_precision, earlier_detection_rate, timing_report
from .preprocess import (
    MedianTable,
    RiskDictionary,
    encode_transaction,
    fit_median_table,
    fit_risk_dictionary,
    refresh_risk_dictionary,
)
from .store import StoredRow, TransactionStore
from .transactions import DAY_SECONDS, FRAUD, GENUINE, SchemaError, Transaction, TransactionSchema

logger = logging.getLogger(__name__)

INITIALIZATION = "INITIALIZATION"
PARTIAL_ENSEMBLE = "PARTIAL_ENSEMBLE"
FULLY_OPERATIONAL = "FULLY_OPERATIONAL"

THREADS_ENV_VAR = "FRAUDSTREAM_THREADS"


class StreamConfigError(ValueError):
    """Invalid streaming configuration."""


class LabelLeakError(RuntimeError):
    """A ground-truth label was requested outside its revelation rules."""


class QueueOverflowError(RuntimeError):
    """Scheduling delay exceeded the configured bound; carries the partial report."""

    def __init__(self, message: str, report: "RunReport") -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class StreamConfig:
    batch_duration: float = 240.0
    top_n: int = 100
    max_queue_delay: float = 300.0
    time_mode: str = "SIMULATED"  # SIMULATED scores batches with a cost model; WALL measures the clock
    num_partitions: int = 4
    retention_seconds: float = 8 * DAY_SECONDS
    record_scores: bool = False
    threads: int | None = None  # None reads FRAUDSTREAM_THREADS, defaulting to 1

    def validate(self) -> None:
        if self.batch_duration <= 0:
            raise StreamConfigError(f"batch_duration must be positive, got {self.batch_duration}")
        if self.top_n < 1:
            raise StreamConfigError(f"top_n must be positive, got {self.top_n}")
        if self.max_queue_delay <= 0:
            raise StreamConfigError(f"max_queue_delay must be positive, got {self.max_queue_delay}")
        if self.time_mode not in ("SIMULATED", "WALL"):
            raise StreamConfigError(f"time_mode must be SIMULATED or WALL, got {self.time_mode!r}")
        if self.num_partitions < 1:
            raise StreamConfigError(f"num_partitions must be positive, got {self.num_partitions}")
        if self.retention_seconds <= 0:
            raise StreamConfigError(f"retention_seconds must be positive, got {self.retention_seconds}")
        if self.threads is not None and self.threads < 1:
            raise StreamConfigError(f"threads must be positive, got {self.threads}")

    def resolve_threads(self) -> int:
        if self.threads is not None:
            return self.threads
        raw = os.environ.get(THREADS_ENV_VAR, "1")
        try:
            n = int(raw)
        except ValueError:
            raise StreamConfigError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None
        if n < 1:
            raise StreamConfigError(f"{THREADS_ENV_VAR} must be positive, got {n}")
        return n


@dataclass(frozen=True)
class LinearCostModel:
    """Simulated per-batch processing time: affine in record count, plus a
    surcharge on batches that retrained models."""

    base_seconds: float = 5.0
    per_record: float = 0.002
    retrain_seconds: float = 20.0

    def __call__(self, stats: "BatchStats") -> float:
        extra = self.retrain_seconds if stats.retrained else 0.0
        return self.base_seconds + self.per_record * stats.records + extra


CostModel = Callable[["BatchStats"], float]


class LabelVault:
    """Sealed ground-truth storage with audited revelation.

    Labels enter exactly once per transaction at ingestion and leave through
    three doors: investigator feedback on alerted cards (next day), full
    revelation of a day once the maturity delay passes, and offline
    evaluation after the run is finished. Every door logs its use.
    """

    _sealing_depth = 0

    def __init__(self) -> None:
        self._by_trx: dict[str, tuple[int, str, int]] = {}
        self._by_day: dict[int, list[str]] = {}
        self._finished = False
        self.access_log: list[tuple[str, int | None, int | None]] = []

    @classmethod
    def sealing(cls) -> bool:
        """True while the vault itself is reading a label off a transaction."""
        return cls._sealing_depth > 0

    def deposit(self, trx: Transaction) -> None:
        if trx.trx_id in self._by_trx:
            raise LabelLeakError(f"transaction {trx.trx_id} already deposited")
        LabelVault._sealing_depth += 1
        try:
            label = int(trx.true_label)
        finally:
            LabelVault._sealing_depth -= 1
        self._by_trx[trx.trx_id] = (trx.day, trx.card_id, label)
        self._by_day.setdefault(trx.day, []).append(trx.trx_id)

    def reveal_feedback(self, data_day: int, cards: Iterable[str], engine_day: int) -> dict[str, int]:
        """Labels of the given cards' transactions on data_day."""
        if engine_day <= data_day:
            raise LabelLeakError(f"feedback for day {data_day} requested already on day {engine_day}")
        self.access_log.append(("feedback", data_day, engine_day))
        wanted = set(cards)
        out: dict[str, int] = {}
        for trx_id in self._by_day.get(data_day, ()):
            day, card, label = self._by_trx[trx_id]
            if card in wanted:
                out[trx_id] = label
        return out

    def reveal_day(self, data_day: int, engine_day: int) -> dict[str, int]:
        """All labels of data_day, once the maturity delay passed."""
        if engine_day <= data_day:
            raise LabelLeakError(f"labels of day {data_day} requested already on day {engine_day}")
        self.access_log.append(("delayed", data_day, engine_day))
        return {trx_id: self._by_trx[trx_id][2] for trx_id in self._by_day.get(data_day, ())}

    def mark_finished(self) -> None:
        self._finished = True

    def reveal_for_evaluation(self) -> dict[str, tuple[int, str, int]]:
        """Everything, keyed by trx_id as (day, card_id, label). Post-run only."""
        if not self._finished:
            raise LabelLeakError("evaluation labels requested while the stream is still running")
        self.access_log.append(("evaluation", None, None))
        return dict(self._by_trx)

    def __len__(self) -> int:
        return len(self._by_trx)


@dataclass(frozen=True)
class AlertEntry:
    trx_id: str
    card_id: str
    score: float
    day: int
    timestamp: float


def _beats(a: AlertEntry, b: AlertEntry) -> bool:
    if a.score != b.score:
        return a.score > b.score
    if a.timestamp != b.timestamp:
        return a.timestamp < b.timestamp
    return a.trx_id < b.trx_id


def merge_alert(table: dict[str, AlertEntry], entry: AlertEntry) -> None:
    """Keep one entry per card: the highest-scoring (earliest on ties)."""
    prev = table.get(entry.card_id)
    if prev is None or _beats(entry, prev):
        table[entry.card_id] = entry


def flush_alert_table(table: Mapping[str, AlertEntry], top_n: int) -> list[AlertEntry]:
    ranked = sorted(table.values(), key=lambda e: (-e.score, e.timestamp, e.trx_id))
    return ranked[:top_n]


@dataclass
class BatchStats:
    index: int
    day: int
    window_start: float
    records: int = 0
    processing_time: float = 0.0
    scheduling_delay: float = 0.0
    phase: str = INITIALIZATION
    retrained: bool = False
    read_s: float = 0.0
    write_s: float = 0.0
    feature_s: float = 0.0
    classify_s: float = 0.0
    retrain_s: float = 0.0


@dataclass
class DayRecord:
    day: int
    phase: str
    alerts: list[AlertEntry] = field(default_factory=list)
    feedback_alerts: list[AlertEntry] = field(default_factory=list)
    delayed_alerts: list[AlertEntry] = field(default_factory=list)
    store_rows: int = 0
    broker_records: int = 0
    delayed_trained_day: int | None = None
    feedback_trained: bool = False
    notes: list[str] = field(default_factory=list)


@dataclass
class TransactionScore:
    trx_id: str
    card_id: str
    day: int
    timestamp: float
    feedback: float | None
    delayed: float | None
    combined: float


@dataclass
class RunReport:
    batches: list[BatchStats] = field(default_factory=list)
    days: list[DayRecord] = field(default_factory=list)
    scores: list[TransactionScore] = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None
    evaluation: dict = field(default_factory=dict)


def payload_from_transaction(trx: Transaction) -> bytes:
    """Wire form of a transaction. Deliberately label-free."""
    return json.dumps(
        {
            "trx_id": trx.trx_id,
            "card_id": trx.card_id,
            "timestamp": trx.timestamp,
            "amount": trx.amount,
            "cat_values": list(trx.cat_values),
            "num_values": list(trx.num_values),
        },
        separators=(",", ":"),
    ).encode("utf-8")


def transaction_from_payload(payload: bytes) -> Transaction:
    obj = json.loads(payload)
    return Transaction(
        trx_id=obj["trx_id"],
        card_id=obj["card_id"],
        timestamp=float(obj["timestamp"]),
        amount=None if obj["amount"] is None else float(obj["amount"]),
        cat_values=tuple(obj["cat_values"]),
        num_values=tuple(None if v is None else float(v) for v in obj["num_values"]),
        true_label=None,
    )


class StreamingEngine:
    """Runs the full pipeline over a time-ordered transaction stream."""

    def __init__(
        self,
        schema: TransactionSchema | None = None,
        stream_config: StreamConfig | None = None,
        ensemble_config: EnsembleConfig | None = None,
        aggregation: AggregationSpec | None = None,
        seed: int = 0,
        cost_model: CostModel | None = None,
    ) -> None:
        self.schema = schema or TransactionSchema()
        self.stream_config = stream_config or StreamConfig()
        self.stream_config.validate()
        self.ensemble_config = ensemble_config or EnsembleConfig()
        self.aggregation = aggregation or AggregationSpec()
        self.seed = seed
        self.cost_model: CostModel = cost_model or LinearCostModel()

        self.broker = Broker()
        self.topic = self.broker.create_topic(
            "transactions",
            num_partitions=self.stream_config.num_partitions,
            retention_seconds=self.stream_config.retention_seconds,
        )
        self.store = TransactionStore()
        self.vault = LabelVault()
        self.ensemble = FeedbackDelayedEnsemble(
            feedback_weight=self.ensemble_config.feedback_weight,
            max_delayed=self.ensemble_config.delayed_models,
        )
        self.scorer: EnsembleScorer | None = None
        self.rdict: RiskDictionary | None = None
        self.medians: MedianTable | None = None
        self.phase = INITIALIZATION

        self._rng = np.random.default_rng(seed)
        # Per-day caches feeding the rollover: every processed transaction
        # with its engineered features, investigator feedback rows, and the
        # recent revealed days used to refit the median table.
        self._day_rows: dict[int, list[tuple[Transaction, np.ndarray]]] = {}
        self._ledger: dict[int, list[tuple[Transaction, np.ndarray, int]]] = {}
        self._median_days: deque[list[Transaction]] = deque(maxlen=self.ensemble_config.delayed_models)
        self._table_combined: dict[str, AlertEntry] = {}
        self._table_feedback: dict[str, AlertEntry] = {}
        self._table_delayed: dict[str, AlertEntry] = {}

    # ------------------------------------------------------------------ run

    def run(self, stream: Iterable[Transaction], epoch: float = 0.0, end_time: float | None = None) -> RunReport:
        """Consume the stream in mini-batches until it is exhausted (or until
        end_time). Returns the full run report with evaluation attached."""
        report = RunReport()
        duration = self.stream_config.batch_duration
        n_parts = self.topic.num_partitions
        offsets = [0] * n_parts
        current_day = int(epoch // DAY_SECONDS)
        delay = 0.0
        index = 0
        last_ts = -np.inf
        it = iter(stream)
        pending = next(it, None)
        threads = self.stream_config.resolve_threads()
        executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

        try:
            while True:
                window_start = epoch + index * duration
                window_end = window_start + duration
                if end_time is not None and window_start >= end_time:
                    break

                while pending is not None and pending.timestamp < window_end:
                    if pending.timestamp < epoch:
                        raise SchemaError(f"transaction {pending.trx_id} predates the stream epoch")
                    if pending.timestamp < last_ts:
                        raise SchemaError(f"stream out of order at {pending.trx_id}")
                    last_ts = pending.timestamp
                    self.vault.deposit(pending)
                    self.topic.produce(
                        pending.card_id, payload_from_transaction(pending), pending.timestamp
                    )
                    pending = next(it, None)

                if end_time is None and pending is None:
                    if all(offsets[p] >= self.topic.end_offset(p) for p in range(n_parts)):
                        break

                stats = BatchStats(index=index, day=int(window_start // DAY_SECONDS), window_start=window_start)
                t_batch = time.perf_counter()

                if stats.day > current_day:
                    t0 = time.perf_counter()
                    while current_day < stats.day:
                        self._rollover(current_day, current_day + 1, report, now=window_start)
                        current_day += 1
                    stats.retrain_s = time.perf_counter() - t0
                    stats.retrained = True
                stats.phase = self.phase

                t0 = time.perf_counter()
                rows: list[Transaction] = []
                for p in range(n_parts):
                    records = self.topic.poll(p, offsets[p])
                    if records:
                        offsets[p] = records[-1].offset + 1
                        rows.extend(transaction_from_payload(r.payload) for r in records)
                rows.sort(key=lambda t: (t.timestamp, t.trx_id))
                stats.read_s = time.perf_counter() - t0
                stats.records = len(rows)

                if rows:
                    self._process_rows(rows, window_end, stats, report, executor)

                if self.stream_config.time_mode == "WALL":
                    stats.processing_time = time.perf_counter() - t_batch
                else:
                    stats.processing_time = float(self.cost_model(stats))
                stats.scheduling_delay = delay
                delay = max(0.0, delay + stats.processing_time - duration)
                report.batches.append(stats)
                if delay > self.stream_config.max_queue_delay:
                    report.aborted = True
                    report.abort_reason = (
                        f"scheduling delay {delay:.1f}s exceeded the {self.stream_config.max_queue_delay:.1f}s "
                        f"bound at batch {index}"
                    )
                    self._finalize(report, current_day)
                    raise QueueOverflowError(report.abort_reason, report)
                index += 1
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

        self._finalize(report, current_day)
        return report

    # ------------------------------------------------------------ per batch

    def _process_rows(
        self,
        rows: list[Transaction],
        window_end: float,
        stats: BatchStats,
        report: RunReport,
        executor: ThreadPoolExecutor | None,
    ) -> None:
        by_card: dict[str, list[Transaction]] = {}
        for trx in rows:
            by_card.setdefault(trx.card_id, []).append(trx)
        cards = sorted(by_card)

        # Features first, against the store as of the previous batch; rows of
        # this batch never see their batch-mates, whatever the card.
        t0 = time.perf_counter()
        if executor is not None:
            feature_lists = list(
                executor.map(lambda card: self._card_features(by_card[card], window_end), cards)
            )
        else:
            feature_lists = [self._card_features(by_card[card], window_end) for card in cards]
        engineered: dict[str, np.ndarray] = {}
        for card, vectors in zip(cards, feature_lists):
            for trx, vec in zip(by_card[card], vectors):
                engineered[trx.trx_id] = vec
        stats.feature_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        for trx in rows:
            self.store.insert_transaction(trx)
            self._day_rows.setdefault(trx.day, []).append((trx, engineered[trx.trx_id]))
        stats.write_s = time.perf_counter() - t0

        if self.scorer is None:
            return
        assert self.rdict is not None and self.medians is not None
        t0 = time.perf_counter()
        X = np.stack(
            [
                np.concatenate([encode_transaction(trx, self.rdict, self.medians), engineered[trx.trx_id]])
                for trx in rows
            ]
        )
        scored = self.scorer.score_batch(X)
        combined = scored["combined"]
        feedback = scored["feedback"]
        delayed = scored["delayed"]
        for j, trx in enumerate(rows):
            entry = AlertEntry(trx.trx_id, trx.card_id, float(combined[j]), stats.day, trx.timestamp)
            merge_alert(self._table_combined, entry)
            if feedback is not None:
                merge_alert(
                    self._table_feedback,
                    AlertEntry(trx.trx_id, trx.card_id, float(feedback[j]), stats.day, trx.timestamp),
                )
            if delayed is not None:
                merge_alert(
                    self._table_delayed,
                    AlertEntry(trx.trx_id, trx.card_id, float(delayed[j]), stats.day, trx.timestamp),
                )
            if self.stream_config.record_scores:
                report.scores.append(
                    TransactionScore(
                        trx_id=trx.trx_id,
                        card_id=trx.card_id,
                        day=trx.day,
                        timestamp=trx.timestamp,
                        feedback=None if feedback is None else float(feedback[j]),
                        delayed=None if delayed is None else float(delayed[j]),
                        combined=float(combined[j]),
                    )
                )
        stats.classify_s = time.perf_counter() - t0

    def _card_features(self, trxs: list[Transaction], window_end: float) -> list[np.ndarray]:
        """Engineered vectors for one card's batch rows (time-ordered)."""
        max_window = self.aggregation.max_window
        history = self.store.query_card_window(
            trxs[0].card_id, end=window_end, window=max_window + self.stream_config.batch_duration
        )
        out = []
        for trx in trxs:
            lo = trx.timestamp - max_window
            visible = [row for row in history if lo <= row.timestamp < trx.timestamp]
            out.append(aggregate(trx, visible, self.aggregation))
        return out

    # ------------------------------------------------------------- rollover

    def _flush_day(self, day: int, report: RunReport) -> DayRecord:
        top_n = self.stream_config.top_n
        rec = DayRecord(
            day=day,
            phase=self.phase,
            alerts=flush_alert_table(self._table_combined, top_n),
            feedback_alerts=flush_alert_table(self._table_feedback, top_n),
            delayed_alerts=flush_alert_table(self._table_delayed, top_n),
        )
        rec.store_rows = len(self.store)
        rec.broker_records = self.topic.record_count()
        report.days.append(rec)
        self._table_combined = {}
        self._table_feedback = {}
        self._table_delayed = {}
        return rec

    def _rollover(self, finished_day: int, new_day: int, report: RunReport, now: float) -> None:
        cfg = self.ensemble_config
        rec = self._flush_day(finished_day, report)

        # Investigators check the alerted cards overnight; all of those
        # cards' transactions from the finished day come back labelled.
        alerted = [e.card_id for e in rec.alerts]
        if alerted:
            revealed = self.vault.reveal_feedback(finished_day, alerted, engine_day=new_day)
            self._ledger[finished_day] = [
                (trx, vec, revealed[trx.trx_id])
                for trx, vec in self._day_rows.get(finished_day, [])
                if trx.trx_id in revealed
            ]

        mature_day = new_day - cfg.delay_days
        if mature_day >= 0:
            labels = self.vault.reveal_day(mature_day, engine_day=new_day)
            day_rows = self._day_rows.get(mature_day, [])
            trxs = [trx for trx, _ in day_rows]
            y = [labels[trx.trx_id] for trx in trxs]
            if trxs:
                if self.rdict is None:
                    self.rdict = fit_risk_dictionary(trxs, y, self.schema.n_categorical)
                else:
                    self.rdict = refresh_risk_dictionary(self.rdict, trxs, y)
                self._median_days.append(trxs)
                self.medians = fit_median_table(
                    [trx for day in self._median_days for trx in day], self.schema.n_numeric
                )
                self._train_delayed(mature_day, day_rows, y, rec)

        self._train_feedback(new_day, rec)

        if self.ensemble.feedback is not None or self.ensemble.delayed:
            self.scorer = EnsembleScorer(self.ensemble)

        self.store.prune(before=now - self.aggregation.max_window)
        self.topic.retention_sweep(now=now)
        for day in [d for d in self._day_rows if d < new_day - cfg.delay_days]:
            del self._day_rows[day]
        for day in [d for d in self._ledger if d < new_day - cfg.feedback_days]:
            del self._ledger[day]

        if self.scorer is None:
            self.phase = INITIALIZATION
        elif len(self.ensemble.delayed) < cfg.delayed_models:
            self.phase = PARTIAL_ENSEMBLE
        else:
            self.phase = FULLY_OPERATIONAL
        rec.store_rows = len(self.store)
        rec.broker_records = self.topic.record_count()

    def _train_delayed(
        self,
        mature_day: int,
        day_rows: list[tuple[Transaction, np.ndarray]],
        y: list[int],
        rec: DayRecord,
    ) -> None:
        n_fraud = sum(1 for label in y if label == FRAUD)
        if n_fraud == 0 or n_fraud == len(y):
            note = f"day {mature_day}: single-class labels ({n_fraud} frauds), delayed model skipped"
            rec.notes.append(note)
            logger.warning(note)
            return
        assert self.rdict is not None and self.medians is not None
        X = np.stack(
            [
                np.concatenate([encode_transaction(trx, self.rdict, self.medians), vec])
                for trx, vec in day_rows
            ]
        )
        forest = train_balanced_forest(
            X,
            np.asarray(y),
            self.ensemble_config,
            random_state=int(self._rng.integers(0, 2**63)),
            trained_on_day=mature_day,
        )
        self.ensemble.roll_delayed(forest)
        rec.delayed_trained_day = mature_day

    def _train_feedback(self, new_day: int, rec: DayRecord) -> None:
        if self.rdict is None or self.medians is None:
            return
        cfg = self.ensemble_config
        rows = [
            row
            for day in range(new_day - cfg.feedback_days, new_day)
            for row in self._ledger.get(day, [])
        ]
        if not rows:
            return
        y = [label for _, _, label in rows]
        n_fraud = sum(1 for label in y if label == FRAUD)
        if n_fraud == 0 or n_fraud == len(y):
            note = f"feedback window at day {new_day}: single-class labels, feedback model kept"
            rec.notes.append(note)
            logger.warning(note)
            return
        X = np.stack(
            [
                np.concatenate([encode_transaction(trx, self.rdict, self.medians), vec])
                for trx, vec, _ in rows
            ]
        )
        forest = train_balanced_forest(
            X,
            np.asarray(y),
            cfg,
            random_state=int(self._rng.integers(0, 2**63)),
            trained_on_day=new_day,
        )
        self.ensemble.set_feedback(forest)
        rec.feedback_trained = True

    # ------------------------------------------------------------- finalize

    def _finalize(self, report: RunReport, current_day: int) -> None:
        self._flush_day(current_day, report)
        self.vault.mark_finished()
        report.evaluation = evaluate_run(report, self.vault, self.stream_config.top_n)


# ------------------------------------------------------------------ evaluation


def evaluate_run(report: RunReport, vault: LabelVault, budget: int) -> dict:
    """Offline evaluation against the vault: per-day card precision for each
    scoring strategy, detection timing, and (when scores were recorded)
    ranking AUC by phase."""
    truth = vault.reveal_for_evaluation()

    day_card_truth: dict[int, dict[str, int]] = {}
    last_fraud_day: dict[str, int] = {}
    for day, card, label in truth.values():
        per_day = day_card_truth.setdefault(day, {})
        if label == FRAUD:
            per_day[card] = FRAUD
            last_fraud_day[card] = max(last_fraud_day.get(card, -1), day)
        else:
            per_day.setdefault(card, GENUINE)

    day_phase = {rec.day: rec.phase for rec in report.days}
    per_day_rows: list[dict] = []
    day_scores: dict[int, list[TransactionScore]] = {}
    for s in report.scores:
        day_scores.setdefault(s.day, []).append(s)

    for rec in report.days:
        truth_d = day_card_truth.get(rec.day, {})
        entry: dict = {"day": rec.day, "phase": rec.phase}
        for name, alerts in (
            ("ensemble", rec.alerts),
            ("feedback", rec.feedback_alerts),
            ("delayed", rec.delayed_alerts),
        ):
            cp = card_precision([e.card_id for e in alerts], truth_d, budget)
            entry[name] = {
                "precision": cp.value,
                "precision_at_budget": cp.value_at_budget,
                "hits": cp.hits,
                "alerts": cp.n_alerted,
                "defined": cp.defined,
            }
        scored = day_scores.get(rec.day)
        if scored:
            try:
                entry["auc_transaction"] = auc(
                    [s.combined for s in scored], [truth[s.trx_id][2] for s in scored]
                )
            except DegenerateMetricError:
                entry["auc_transaction"] = None
        per_day_rows.append(entry)

    phase_means: dict[str, dict] = {}
    for phase in sorted({row["phase"] for row in per_day_rows}):
        rows = [row for row in per_day_rows if row["phase"] == phase]
        block: dict = {"days": len(rows)}
        for name in ("ensemble", "feedback", "delayed"):
            defined = [row[name]["precision"] for row in rows if row[name]["defined"]]
            block[name] = {
                "mean_precision": float(np.mean(defined)) if defined else None,
                "defined_days": len(defined),
            }
        phase_means[phase] = block

    first_alert_day: dict[str, int] = {}
    for rec in report.days:
        for e in rec.alerts:
            first_alert_day.setdefault(e.card_id, rec.day)
    detection = earlier_detection_rate(first_alert_day, last_fraud_day)

    auc_block: dict = {}
    if report.scores:
        by_phase: dict[str, list[TransactionScore]] = {}
        for s in report.scores:
            phase = day_phase.get(s.day)
            if phase is not None:
                by_phase.setdefault(phase, []).append(s)
        for phase, scored in sorted(by_phase.items()):
            labels = [truth[s.trx_id][2] for s in scored]
            combined = [s.combined for s in scored]
            block: dict = {"transactions": len(scored)}
            try:
                block["transaction"] = auc(combined, labels)
            except DegenerateMetricError:
                block["transaction"] = None
            try:
                block["card"] = auc(combined, labels, level="card", cards=[s.card_id for s in scored])
            except DegenerateMetricError:
                block["card"] = None
            auc_block[phase] = block

    alert_rows = [
        {
            "day": rec.day,
            "card_id": e.card_id,
            "trx_id": e.trx_id,
            "score": e.score,
            "card_compromised_that_day": int(day_card_truth.get(rec.day, {}).get(e.card_id, GENUINE)),
        }
        for rec in report.days
        for e in rec.alerts
    ]

    return {
        "per_day": per_day_rows,
        "phase_means": phase_means,
        "earlier_detection": {
            "rate": detection.value,
            "earlier_cards": detection.n_earlier,
            "fraud_cards": detection.n_fraud_cards,
            "defined": detection.defined,
        },
        "auc_by_phase": auc_block,
        "alerts": alert_rows,
        "timing": timing_report(report.batches),
        "memory_by_day": [
            {"day": rec.day, "store_rows": rec.store_rows, "broker_records": rec.broker_records}
            for rec in report.days
        ],
    }
