"""Metric tests: alert precision counting, rank AUC against a pairwise
oracle, detection timing, timing summaries, and the paired test."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from fraudstream.metrics import (
    DegenerateMetricError,
    auc,
    card_precision,
    earlier_detection_rate,
    paired_improvement_test,
    timing_report,
)

from serial_reference import serial_auc


class TestCardPrecision:
    def test_hand_counted_case(self):
        truth = {"a": 1, "b": 0, "c": 1, "d": 0}
        cp = card_precision(["a", "b", "c"], truth, budget=5)
        assert cp.hits == 2
        assert cp.n_alerted == 3
        assert cp.value == pytest.approx(2 / 3)
        assert cp.value_at_budget == pytest.approx(2 / 5)
        assert cp.defined

    def test_unknown_cards_count_as_genuine(self):
        cp = card_precision(["x", "y"], {"x": 1}, budget=2)
        assert cp.hits == 1
        assert cp.value == pytest.approx(0.5)

    def test_no_alerts_is_undefined(self):
        cp = card_precision([], {"a": 1}, budget=10)
        assert not cp.defined
        assert cp.value == 0.0
        assert cp.value_at_budget == 0.0

    def test_duplicate_alerts_rejected(self):
        with pytest.raises(DegenerateMetricError, match="unique"):
            card_precision(["a", "a"], {"a": 1}, budget=5)

    def test_over_budget_rejected(self):
        with pytest.raises(DegenerateMetricError, match="exceed"):
            card_precision(["a", "b", "c"], {}, budget=2)

    def test_bad_budget_rejected(self):
        with pytest.raises(DegenerateMetricError):
            card_precision(["a"], {"a": 1}, budget=0)

    def test_full_budget_alignment(self):
        # When exactly budget alerts go out the two precision views agree.
        truth = {c: i % 2 for i, c in enumerate("abcd")}
        cp = card_precision(list("abcd"), truth, budget=4)
        assert cp.value == cp.value_at_budget


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == pytest.approx(1.0)

    def test_perfectly_wrong(self):
        assert auc([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]) == pytest.approx(0.0)

    def test_constant_scores_give_half(self):
        assert auc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == pytest.approx(0.5)

    def test_matches_pairwise_oracle_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(5, 100))
            # Coarse rounding forces plenty of tied scores.
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            assert auc(scores, labels) == pytest.approx(
                serial_auc(scores.tolist(), labels.tolist()), abs=1e-12
            )

    def test_single_class_raises(self):
        with pytest.raises(DegenerateMetricError, match="undefined"):
            auc([0.1, 0.2], [1, 1])
        with pytest.raises(DegenerateMetricError, match="undefined"):
            auc([0.1, 0.2], [0, 0])

    def test_shape_mismatch_raises(self):
        with pytest.raises(DegenerateMetricError):
            auc([0.1, 0.2], [1])

    def test_unknown_level_raises(self):
        with pytest.raises(DegenerateMetricError):
            auc([0.1, 0.2], [1, 0], level="merchant")

    def test_card_level_reduces_to_max_score_any_fraud(self):
        scores = [0.2, 0.9, 0.5]
        labels = [0, 1, 0]
        cards = ["A", "A", "B"]
        # Card A becomes (0.9, fraud), card B (0.5, genuine).
        assert auc(scores, labels, level="card", cards=cards) == pytest.approx(1.0)

    def test_card_level_differs_from_transaction_level(self):
        scores = [0.9, 0.1, 0.5]
        labels = [0, 1, 0]
        cards = ["A", "A", "B"]
        trx = auc(scores, labels)
        card = auc(scores, labels, level="card", cards=cards)
        # The fraud ranks below both genuine rows transaction-wise, but card
        # A's max score carries its fraud flag to the top.
        assert trx == pytest.approx(0.0)
        assert card == pytest.approx(1.0)

    def test_card_level_requires_cards(self):
        with pytest.raises(DegenerateMetricError, match="card"):
            auc([0.1, 0.2], [1, 0], level="card")
        with pytest.raises(DegenerateMetricError, match="card"):
            auc([0.1, 0.2], [1, 0], level="card", cards=["A"])

    def test_card_level_single_class_after_reduction_raises(self):
        with pytest.raises(DegenerateMetricError):
            auc([0.2, 0.9], [0, 1], level="card", cards=["A", "A"])


class TestEarlierDetection:
    def test_strictly_before_counts(self):
        first_alert = {"a": 3, "b": 5, "c": 9}
        last_fraud = {"a": 5, "b": 5, "c": 2, "d": 4}
        r = earlier_detection_rate(first_alert, last_fraud)
        # Only card a was alerted strictly before its final fraud day.
        assert r.n_earlier == 1
        assert r.n_fraud_cards == 4
        assert r.value == pytest.approx(0.25)
        assert r.defined

    def test_no_fraud_cards_is_undefined(self):
        r = earlier_detection_rate({"a": 1}, {})
        assert not r.defined
        assert r.value == 0.0

    def test_never_alerted_cards_count_against(self):
        r = earlier_detection_rate({}, {"a": 3, "b": 7})
        assert r.n_earlier == 0
        assert r.value == 0.0


def _batch(phase, processing, delay, read=1.0, write=1.0, features=2.0,
           classify=3.0, retrain=0.0):
    return SimpleNamespace(
        phase=phase, processing_time=processing, scheduling_delay=delay,
        read_s=read, write_s=write, feature_s=features, classify_s=classify,
        retrain_s=retrain,
    )


class TestTimingReport:
    def test_groups_by_phase_and_summarizes(self):
        batches = [
            _batch("INITIALIZATION", 1.0, 0.0),
            _batch("INITIALIZATION", 3.0, 0.0),
            _batch("FULLY_OPERATIONAL", 5.0, 2.0),
        ]
        report = timing_report(batches)
        assert report["phases"]["INITIALIZATION"]["batches"] == 2
        assert report["phases"]["INITIALIZATION"]["processing_time"]["median"] == pytest.approx(2.0)
        assert report["phases"]["FULLY_OPERATIONAL"]["scheduling_delay"]["max"] == pytest.approx(2.0)
        assert report["overall"]["batches"] == 3

    def test_task_shares_sum_to_one(self):
        batches = [_batch("A", 1.0, 0.0), _batch("A", 1.0, 0.0, retrain=4.0)]
        shares = timing_report(batches)["overall"]["task_share"]
        assert sum(shares.values()) == pytest.approx(1.0)
        assert shares["retrain"] == pytest.approx(4.0 / 18.0)

    def test_retrain_share_measured_only_on_retrain_batches(self):
        batches = [
            _batch("A", 1.0, 0.0),
            _batch("A", 1.0, 0.0, read=1.0, write=1.0, features=1.0, classify=1.0, retrain=6.0),
        ]
        report = timing_report(batches)
        assert report["overall"]["retrain_share_when_retraining"] == pytest.approx(0.6)

    def test_no_retraining_omits_share(self):
        report = timing_report([_batch("A", 1.0, 0.0)])
        assert "retrain_share_when_retraining" not in report["overall"]

    def test_empty_input(self):
        report = timing_report([])
        assert report["phases"] == {}
        assert report["overall"]["batches"] == 0
        assert all(v == 0.0 for v in report["overall"]["task_share"].values())


class TestPairedImprovement:
    def test_consistent_improvement_is_significant(self):
        rng = np.random.default_rng(3)
        base = rng.normal(0.5, 0.05, size=12)
        better = base + rng.normal(0.08, 0.01, size=12)
        r = paired_improvement_test(better, base)
        assert r.defined
        assert r.p_value < 0.05
        assert r.mean_difference > 0

    def test_direction_matters(self):
        rng = np.random.default_rng(3)
        base = rng.normal(0.5, 0.05, size=12)
        better = base + rng.normal(0.08, 0.01, size=12)
        r = paired_improvement_test(base, better)
        assert r.p_value > 0.5

    def test_one_sided_is_half_of_two_sided_for_positive_t(self):
        rng = np.random.default_rng(4)
        b = rng.normal(size=10)
        a = b + rng.normal(0.5, 0.2, size=10)
        r = paired_improvement_test(a, b)
        two_sided = stats.ttest_rel(a, b).pvalue
        assert r.p_value == pytest.approx(two_sided / 2.0)

    def test_constant_positive_difference_is_undefined_but_directional(self):
        r = paired_improvement_test([1.5, 2.5, 3.5], [1.0, 2.0, 3.0])
        assert not r.defined
        assert r.p_value == 0.0
        assert r.mean_difference == pytest.approx(0.5)

    def test_identical_series_gives_pvalue_one(self):
        r = paired_improvement_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert not r.defined
        assert r.p_value == 1.0

    def test_shape_and_size_validation(self):
        with pytest.raises(DegenerateMetricError):
            paired_improvement_test([1.0, 2.0], [1.0])
        with pytest.raises(DegenerateMetricError):
            paired_improvement_test([1.0], [2.0])
