"""Streaming engine tests: alert tables, the label vault and its audit log,
wire payloads, scheduling-delay accounting, rollover scheduling, feature
staleness inside a batch, and end-to-end pipeline behaviour on a small
generated stream."""

from __future__ import annotations

import numpy as np
import pytest

from fraudstream.features import AggregationSpec, aggregate, augment
from fraudstream.generator import GeneratorConfig, generate
from fraudstream.learner import EnsembleConfig, TreeParams
from fraudstream.store import StoredRow
from fraudstream.streaming import (
    FULLY_OPERATIONAL,
    INITIALIZATION,
    PARTIAL_ENSEMBLE,
    THREADS_ENV_VAR,
    AlertEntry,
    BatchStats,
    LabelLeakError,
    LabelVault,
    LinearCostModel,
    QueueOverflowError,
    RunReport,
    StreamConfig,
    StreamConfigError,
    StreamingEngine,
    evaluate_run,
    flush_alert_table,
    merge_alert,
    payload_from_transaction,
    transaction_from_payload,
)
from fraudstream.transactions import DAY_SECONDS, Transaction


def mk(trx_id, card, ts, amount=10.0, label=0, cats=("a", "b", "c"),
       nums=(1.0, 2.0, 3.0, 4.0)):
    return Transaction(
        trx_id=trx_id, card_id=card, timestamp=float(ts), amount=amount,
        cat_values=tuple(cats), num_values=tuple(nums), true_label=label,
    )


class TestAlertTables:
    def test_higher_score_replaces_lower(self):
        table = {}
        merge_alert(table, AlertEntry("t1", "c1", 0.4, 0, 100.0))
        merge_alert(table, AlertEntry("t2", "c1", 0.7, 0, 200.0))
        assert table["c1"].trx_id == "t2"
        merge_alert(table, AlertEntry("t3", "c1", 0.5, 0, 300.0))
        assert table["c1"].trx_id == "t2"

    def test_score_tie_prefers_earlier_timestamp(self):
        table = {}
        merge_alert(table, AlertEntry("t1", "c1", 0.7, 0, 200.0))
        merge_alert(table, AlertEntry("t2", "c1", 0.7, 0, 100.0))
        assert table["c1"].trx_id == "t2"

    def test_full_tie_prefers_smaller_trx_id(self):
        table = {}
        merge_alert(table, AlertEntry("tb", "c1", 0.7, 0, 100.0))
        merge_alert(table, AlertEntry("ta", "c1", 0.7, 0, 100.0))
        assert table["c1"].trx_id == "ta"

    def test_flush_ranks_and_truncates(self):
        table = {}
        merge_alert(table, AlertEntry("t1", "c1", 0.5, 0, 100.0))
        merge_alert(table, AlertEntry("t2", "c2", 0.9, 0, 150.0))
        merge_alert(table, AlertEntry("t3", "c3", 0.9, 0, 120.0))
        merge_alert(table, AlertEntry("t4", "c4", 0.2, 0, 50.0))
        ranked = flush_alert_table(table, top_n=3)
        assert [e.card_id for e in ranked] == ["c3", "c2", "c1"]

    def test_flush_is_one_entry_per_card(self):
        table = {}
        for j in range(5):
            merge_alert(table, AlertEntry(f"t{j}", "c1", 0.1 * j, 0, float(j)))
        ranked = flush_alert_table(table, top_n=10)
        assert len(ranked) == 1
        assert ranked[0].trx_id == "t4"


class TestLabelVault:
    def test_reveal_day_returns_all_labels(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0, label=1))
        vault.deposit(mk("t2", "c2", 200.0, label=0))
        out = vault.reveal_day(0, engine_day=1)
        assert out == {"t1": 1, "t2": 0}
        assert len(vault) == 2

    def test_duplicate_deposit_rejected(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0))
        with pytest.raises(LabelLeakError, match="already deposited"):
            vault.deposit(mk("t1", "c1", 100.0))

    def test_unlabelled_transaction_cannot_be_deposited(self):
        vault = LabelVault()
        with pytest.raises(LookupError):
            vault.deposit(mk("t1", "c1", 100.0, label=None))

    def test_sealing_flag_is_set_only_during_deposit(self):
        class Probe:
            trx_id = "p1"
            card_id = "c1"
            day = 0

            @property
            def true_label(self):
                self.sealed_during_read = LabelVault.sealing()
                return 1

        probe = Probe()
        assert not LabelVault.sealing()
        LabelVault().deposit(probe)
        assert probe.sealed_during_read
        assert not LabelVault.sealing()

    def test_feedback_reveals_only_requested_cards(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0, label=1))
        vault.deposit(mk("t2", "c2", 200.0, label=0))
        vault.deposit(mk("t3", "c1", 300.0, label=0))
        vault.deposit(mk("t4", "c1", DAY_SECONDS + 5.0, label=1))  # next day
        out = vault.reveal_feedback(0, ["c1"], engine_day=1)
        assert out == {"t1": 1, "t3": 0}

    def test_premature_revelation_rejected(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0, label=1))
        with pytest.raises(LabelLeakError):
            vault.reveal_day(0, engine_day=0)
        with pytest.raises(LabelLeakError):
            vault.reveal_feedback(0, ["c1"], engine_day=0)

    def test_evaluation_requires_finished_run(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0, label=1))
        with pytest.raises(LabelLeakError, match="still running"):
            vault.reveal_for_evaluation()
        vault.mark_finished()
        assert vault.reveal_for_evaluation() == {"t1": (0, "c1", 1)}

    def test_every_door_is_logged(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0, label=1))
        vault.reveal_feedback(0, ["c1"], engine_day=1)
        vault.reveal_day(0, engine_day=2)
        vault.mark_finished()
        vault.reveal_for_evaluation()
        assert vault.access_log == [
            ("feedback", 0, 1),
            ("delayed", 0, 2),
            ("evaluation", None, None),
        ]


class TestWirePayload:
    def test_round_trip_preserves_attributes(self):
        trx = mk("t1", "c1", 123.5, amount=9.75, label=1,
                 cats=("x", None, "z"), nums=(1.0, None, 3.0, 4.0))
        back = transaction_from_payload(payload_from_transaction(trx))
        assert back.trx_id == trx.trx_id
        assert back.card_id == trx.card_id
        assert back.timestamp == trx.timestamp
        assert back.amount == trx.amount
        assert back.cat_values == trx.cat_values
        assert back.num_values == trx.num_values

    def test_payload_never_carries_the_label(self):
        payload = payload_from_transaction(mk("t1", "c1", 123.5, label=1))
        assert b"label" not in payload
        back = transaction_from_payload(payload)
        with pytest.raises(LookupError):
            back.true_label

    def test_missing_amount_survives(self):
        trx = mk("t1", "c1", 50.0, amount=None)
        assert transaction_from_payload(payload_from_transaction(trx)).amount is None


def one_per_window(n, duration, card="c1"):
    return [mk(f"t{i:03d}", card, i * duration + duration / 2) for i in range(n)]


class TestSchedulingDelay:
    def test_transient_overload_follows_the_recurrence(self):
        duration = 100.0
        costs = {i: (150.0 if i < 3 else 30.0) for i in range(7)}
        config = StreamConfig(batch_duration=duration, max_queue_delay=500.0,
                              num_partitions=1, top_n=1)
        engine = StreamingEngine(
            stream_config=config, cost_model=lambda stats: costs[stats.index]
        )
        report = engine.run(one_per_window(7, duration))
        assert len(report.batches) == 7
        observed = [b.scheduling_delay for b in report.batches]
        # Recompute the queue independently from the injected costs.
        expected, backlog = [], 0.0
        for i in range(7):
            expected.append(backlog)
            backlog = max(0.0, backlog + costs[i] - duration)
        assert observed == expected
        assert observed == [0.0, 50.0, 100.0, 150.0, 80.0, 10.0, 0.0]

    def test_sustained_overload_aborts_with_report(self):
        duration = 100.0
        config = StreamConfig(batch_duration=duration, max_queue_delay=400.0,
                              num_partitions=1, top_n=1)
        engine = StreamingEngine(stream_config=config, cost_model=lambda stats: 250.0)
        with pytest.raises(QueueOverflowError) as excinfo:
            engine.run(one_per_window(5, duration))
        report = excinfo.value.report
        assert report.aborted
        assert "batch 2" in report.abort_reason
        assert len(report.batches) == 3
        # The partial run is still evaluated before the abort surfaces.
        assert "per_day" in report.evaluation

    def test_wall_mode_measures_the_clock(self):
        config = StreamConfig(batch_duration=50.0, time_mode="WALL",
                              max_queue_delay=1e9, num_partitions=1, top_n=1)
        engine = StreamingEngine(stream_config=config,
                                 cost_model=lambda stats: 1e9)  # must be ignored
        report = engine.run(one_per_window(3, 50.0))
        assert all(0.0 < b.processing_time < 10.0 for b in report.batches)


class TestRunMechanics:
    def test_empty_stream(self):
        engine = StreamingEngine(stream_config=StreamConfig(num_partitions=1))
        report = engine.run([])
        assert report.batches == []
        assert [rec.day for rec in report.days] == [0]
        assert report.days[0].alerts == []
        assert "per_day" in report.evaluation

    def test_end_time_bounds_the_run(self):
        duration = 21600.0
        config = StreamConfig(batch_duration=duration, num_partitions=1,
                              max_queue_delay=1e9, top_n=1)
        engine = StreamingEngine(stream_config=config)
        stream = [mk(f"t{i}", "c1", i * 10000.0) for i in range(12)]  # 2 days' worth
        report = engine.run(stream, end_time=DAY_SECONDS)
        assert len(report.batches) == 4
        assert all(b.window_start < DAY_SECONDS for b in report.batches)

    def test_out_of_order_stream_rejected(self):
        engine = StreamingEngine(stream_config=StreamConfig(num_partitions=1))
        stream = [mk("t1", "c1", 500.0), mk("t2", "c1", 400.0)]
        with pytest.raises(Exception, match="out of order"):
            engine.run(stream)

    def test_pre_epoch_transaction_rejected(self):
        engine = StreamingEngine(stream_config=StreamConfig(num_partitions=1))
        with pytest.raises(Exception, match="epoch"):
            engine.run([mk("t1", "c1", 50.0)], epoch=100.0)

    def test_duplicate_transaction_id_rejected(self):
        engine = StreamingEngine(stream_config=StreamConfig(num_partitions=1))
        with pytest.raises(LabelLeakError, match="already deposited"):
            engine.run([mk("t1", "c1", 100.0), mk("t1", "c1", 200.0)])

    def test_quiet_days_still_produce_day_records(self):
        config = StreamConfig(batch_duration=43200.0, num_partitions=1,
                              max_queue_delay=1e9, top_n=1)
        engine = StreamingEngine(stream_config=config)
        stream = [mk("t1", "c1", 100.0), mk("t2", "c1", 3 * DAY_SECONDS + 100.0)]
        report = engine.run(stream)
        assert [rec.day for rec in report.days] == [0, 1, 2, 3]
        assert report.days[1].alerts == []


class TestThreadResolution:
    def test_env_var_supplies_default(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "3")
        assert StreamConfig().resolve_threads() == 3

    def test_explicit_threads_beat_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "3")
        assert StreamConfig(threads=2).resolve_threads() == 2

    def test_unset_env_means_single_thread(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
        assert StreamConfig().resolve_threads() == 1

    @pytest.mark.parametrize("bad", ["abc", "0", "-2"])
    def test_bad_env_values_rejected(self, monkeypatch, bad):
        monkeypatch.setenv(THREADS_ENV_VAR, bad)
        with pytest.raises(StreamConfigError):
            StreamConfig().resolve_threads()


class TestStreamConfigValidation:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"batch_duration": 0.0},
            {"top_n": 0},
            {"max_queue_delay": -1.0},
            {"time_mode": "CPU"},
            {"num_partitions": 0},
            {"retention_seconds": 0.0},
            {"threads": 0},
        ],
    )
    def test_invalid_settings_rejected(self, overrides):
        with pytest.raises(StreamConfigError):
            StreamConfig(**overrides).validate()

    def test_linear_cost_model(self):
        model = LinearCostModel(base_seconds=5.0, per_record=0.01, retrain_seconds=20.0)
        quiet = BatchStats(index=0, day=0, window_start=0.0, records=100)
        busy = BatchStats(index=1, day=0, window_start=0.0, records=100, retrained=True)
        assert model(quiet) == pytest.approx(6.0)
        assert model(busy) == pytest.approx(26.0)


class TestIntraBatchStaleness:
    def test_batch_mates_are_invisible_to_each_other(self):
        engine = StreamingEngine(stream_config=StreamConfig(num_partitions=1))
        spec = engine.aggregation
        older = mk("h1", "cX", 1000.0, amount=50.0)
        engine.store.insert_transaction(older)
        a = mk("a1", "cX", 2000.0, amount=30.0)
        b = mk("b1", "cX", 3000.0, amount=20.0)
        vec_a, vec_b = engine._card_features([a, b], window_end=3600.0)

        hist = [StoredRow.from_transaction(older)]
        assert np.array_equal(vec_a, aggregate(a, hist, spec))
        # b sees only the pre-batch store contents, not its batch-mate a.
        assert np.array_equal(vec_b, aggregate(b, hist, spec))
        assert vec_b[0] == 1.0

    def test_post_insert_recompute_would_differ(self):
        engine = StreamingEngine(stream_config=StreamConfig(num_partitions=1))
        older = mk("h1", "cX", 1000.0, amount=50.0)
        a = mk("a1", "cX", 2000.0, amount=30.0)
        b = mk("b1", "cX", 3000.0, amount=20.0)
        engine.store.insert_transaction(older)
        (_, vec_b) = engine._card_features([a, b], window_end=3600.0)
        engine.store.insert_transaction(a)
        engine.store.insert_transaction(b)
        recomputed = augment(b, engine.store, engine.aggregation, None, None).engineered
        assert recomputed[0] == 2.0  # batch-mate now visible
        assert vec_b[0] == 1.0


def small_pipeline_parts(threads=None):
    gen = GeneratorConfig(
        seed=5, num_cards=40, trx_per_card_per_day=3.0, fraud_trx_rate=0.05,
        fraud_card_rate=0.3, num_days=8, missing_rate=0.02, amount_inflation=4.0,
    )
    stream = list(generate(gen))
    ensemble = EnsembleConfig(
        feedback_days=4, delayed_models=3, delay_days=2, feedback_weight=0.5,
        trees_per_partition=2, num_partitions=2,
        tree=TreeParams(max_depth=6, min_samples_leaf=2),
    )
    config = StreamConfig(
        batch_duration=21600.0, top_n=5, max_queue_delay=1e9,
        time_mode="SIMULATED", num_partitions=2,
        retention_seconds=3 * DAY_SECONDS, record_scores=True, threads=threads,
    )
    aggregation = AggregationSpec(windows=(DAY_SECONDS, 2 * DAY_SECONDS))
    engine = StreamingEngine(stream_config=config, ensemble_config=ensemble,
                             aggregation=aggregation, seed=7)
    return engine, stream


@pytest.fixture(scope="module")
def pipeline():
    engine, stream = small_pipeline_parts()
    report = engine.run(stream)
    return engine, report, stream


class TestPipelineRun:
    def test_phase_schedule(self, pipeline):
        _, report, _ = pipeline
        phase_by_day = {rec.day: rec.phase for rec in report.days}
        # delay_days=2 delayed_models=3: scoring starts on day 2, the window
        # is full from day 4 on.
        assert phase_by_day[0] == INITIALIZATION
        assert phase_by_day[1] == INITIALIZATION
        assert phase_by_day[2] == PARTIAL_ENSEMBLE
        assert phase_by_day[3] == PARTIAL_ENSEMBLE
        for day in range(4, 8):
            assert phase_by_day[day] == FULLY_OPERATIONAL

    def test_delayed_models_cover_the_matured_day(self, pipeline):
        _, report, _ = pipeline
        for rec in report.days:
            if rec.delayed_trained_day is not None:
                # Finished day f rolls into f+1; the matured day is f+1-2.
                assert rec.delayed_trained_day == rec.day - 1

    def test_feedback_model_trains_once_alerts_flow(self, pipeline):
        _, report, _ = pipeline
        trained_days = [rec.day for rec in report.days if rec.feedback_trained]
        assert trained_days
        assert min(trained_days) == 2

    def test_scoring_starts_with_the_first_partial_day(self, pipeline):
        _, report, _ = pipeline
        assert report.scores
        assert min(s.day for s in report.scores) == 2

    def test_alerts_respect_budget_and_card_uniqueness(self, pipeline):
        _, report, _ = pipeline
        for rec in report.days:
            for alerts in (rec.alerts, rec.feedback_alerts, rec.delayed_alerts):
                assert len(alerts) <= 5
                cards = [e.card_id for e in alerts]
                assert len(set(cards)) == len(cards)
            if rec.phase != INITIALIZATION:
                assert len(rec.alerts) == 5

    def test_vault_access_log_discipline(self, pipeline):
        engine, _, _ = pipeline
        log = engine.vault.access_log
        assert log[-1] == ("evaluation", None, None)
        assert sum(1 for kind, _, _ in log if kind == "evaluation") == 1
        for kind, data_day, engine_day in log:
            if kind == "feedback":
                assert engine_day == data_day + 1
            elif kind == "delayed":
                assert engine_day == data_day + 2

    def test_broker_payloads_are_label_free(self, pipeline):
        engine, _, _ = pipeline
        seen = 0
        for p in range(engine.topic.num_partitions):
            for record in engine.topic.poll(p, 0, max_records=10**6):
                assert b"label" not in record.payload
                seen += 1
        assert seen > 0

    def test_state_is_pruned_to_the_windows(self, pipeline):
        engine, report, stream = pipeline
        assert len(engine.store) < len(stream)
        assert engine.topic.record_count() < len(stream)
        # Store is pruned to the largest aggregation window (2 days here), so
        # by the last rollover nothing older than day 5 survives.
        assert min(r.timestamp for r in engine.store.iter_rows()) >= 5 * DAY_SECONDS

    def test_evaluation_structure(self, pipeline):
        _, report, _ = pipeline
        ev = report.evaluation
        assert {row["day"] for row in ev["per_day"]} == set(range(8))
        for row in ev["per_day"]:
            for name in ("ensemble", "feedback", "delayed"):
                assert set(row[name]) >= {"precision", "hits", "alerts", "defined"}
        assert set(ev["phase_means"]) == {INITIALIZATION, PARTIAL_ENSEMBLE, FULLY_OPERATIONAL}
        assert len(ev["memory_by_day"]) == 8
        assert ev["timing"]["overall"]["batches"] == len(report.batches)
        assert FULLY_OPERATIONAL in ev["auc_by_phase"]

    def test_retrain_flag_marks_first_batch_of_each_day(self, pipeline):
        _, report, _ = pipeline
        retrain_days = [b.day for b in report.batches if b.retrained]
        assert retrain_days == list(range(1, 8))

    def test_thread_pool_does_not_change_results(self):
        engine_a, stream = small_pipeline_parts(threads=1)
        report_a = engine_a.run(stream)
        engine_b, stream_b = small_pipeline_parts(threads=2)
        report_b = engine_b.run(stream_b)
        assert [r.alerts for r in report_a.days] == [r.alerts for r in report_b.days]
        assert [s.combined for s in report_a.scores] == [s.combined for s in report_b.scores]
        assert [b.records for b in report_a.batches] == [b.records for b in report_b.batches]


class TestEvaluateRunGuards:
    def test_evaluation_on_live_vault_is_blocked(self):
        vault = LabelVault()
        vault.deposit(mk("t1", "c1", 100.0, label=1))
        with pytest.raises(LabelLeakError):
            evaluate_run(RunReport(), vault, budget=5)
