"""Tests for accuracy, calibration error and communication summaries."""

import numpy as np
import pytest

from compressed_bfl.core import ArgumentError, SparseDelta
from compressed_bfl.metrics import (
    PredictionRecord,
    PredictionRecords,
    accuracy,
    comm_summary,
    ece,
    pooled_and_mean_ece,
    reliability_bins,
)
from compressed_bfl.network import CommLedger, GraphKind, build_graph, exchange


def _binary_records(confidences, correctness) -> PredictionRecords:
    """Two-class predictions whose top class is 0; the label decides correctness."""
    confidences = np.asarray(confidences, dtype=float)
    probs = np.stack([confidences, 1 - confidences], axis=1)
    labels = np.where(np.asarray(correctness) == 1, 0, 1)
    return PredictionRecords(probs, labels)


def _random_records(rng: np.random.Generator, n: int, classes: int = 5) -> PredictionRecords:
    return PredictionRecords(rng.dirichlet(np.ones(classes), size=n), rng.integers(0, classes, n))


def _naive_ece(records: PredictionRecords, n_bins: int) -> tuple[list[int], float]:
    counts, total_gap = [], 0.0
    for o in range(1, n_bins + 1):
        lower, upper = (o - 1) / n_bins, o / n_bins
        members = [r for r in records if lower < r.confidence <= upper]
        counts.append(len(members))
        if members:
            acc = sum(r.correct for r in members) / len(members)
            conf = sum(r.confidence for r in members) / len(members)
            total_gap += len(members) / len(records) * abs(acc - conf)
    return counts, total_gap


class TestAccuracy:
    def test_fraction_correct(self):
        records = _binary_records([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 1])
        assert accuracy(records) == 0.75

    def test_from_record_list(self):
        records = [PredictionRecord(np.array([0.2, 0.8]), 1), PredictionRecord(np.array([0.5, 0.5]), 1)]
        assert accuracy(records) == 0.5

    def test_ties_pick_lowest_class(self):
        record = PredictionRecord(np.array([0.4, 0.4, 0.2]), 0)
        assert record.predicted == 0
        assert record.correct

    def test_empty(self):
        with pytest.raises(ArgumentError):
            accuracy([])


class TestReliabilityBins:
    def test_two_bins_calibrated(self):
        report = reliability_bins(_binary_records([0.9, 0.9, 0.6, 0.6], [1, 1, 1, 0]), 2)
        np.testing.assert_array_equal(report.counts, [0, 4])
        assert report.accuracy[1] == pytest.approx(0.75)
        assert report.confidence[1] == pytest.approx(0.75)
        assert ece(report) == pytest.approx(0.0, abs=1e-15)

    def test_confident_and_wrong(self):
        report = reliability_bins(_binary_records([0.95, 0.95], [0, 0]), 10)
        assert report.counts[9] == 2
        assert ece(report) == pytest.approx(0.95)

    def test_gaps_weighted_by_bin_mass(self):
        confidences = [0.9] * 10 + [0.6] * 10
        correctness = [1] * 8 + [0] * 2 + [1] * 3 + [0] * 7
        report = reliability_bins(_binary_records(confidences, correctness), 10)
        assert report.ece == pytest.approx(0.2)

    def test_single_bin(self):
        records = _random_records(np.random.default_rng(0), 50)
        report = reliability_bins(records, 1)
        assert report.ece == pytest.approx(abs(accuracy(records) - records.confidence.mean()))

    def test_bins_are_right_closed(self):
        report = reliability_bins(_binary_records([0.5, 1.0], [1, 1]), 2)
        np.testing.assert_array_equal(report.counts, [1, 1])

    def test_single_record(self):
        report = reliability_bins(_binary_records([0.7], [0]), 10)
        assert report.ece == pytest.approx(0.7, abs=1e-15)

    @pytest.mark.parametrize("n_bins", [1, 3, 10, 15])
    def test_mass_conservation(self, n_bins):
        records = _random_records(np.random.default_rng(n_bins), 137)
        assert reliability_bins(records, n_bins).total == 137

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        records = _random_records(rng, 200)
        order = rng.permutation(200)
        shuffled = PredictionRecords(records.probs[order], records.labels[order])
        assert reliability_bins(shuffled).ece == pytest.approx(reliability_bins(records).ece, abs=1e-15)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            records = _random_records(rng, int(rng.integers(1, 120)), int(rng.integers(2, 8)))
            n_bins = int(rng.integers(1, 21))
            report = reliability_bins(records, n_bins)
            counts, expected = _naive_ece(records, n_bins)
            np.testing.assert_array_equal(report.counts, counts)
            assert abs(report.ece - expected) <= 1e-12

    def test_bounded_by_largest_gap(self):
        report = reliability_bins(_random_records(np.random.default_rng(3), 300))
        occupied = report.counts > 0
        assert 0.0 <= report.ece <= np.max(np.abs(report.accuracy - report.confidence)[occupied]) + 1e-15

    def test_needs_a_bin(self):
        with pytest.raises(ArgumentError):
            reliability_bins(_binary_records([0.9], [1]), 0)

    def test_empty_report_has_no_ece(self):
        report = reliability_bins([], 10)
        assert report.total == 0
        with pytest.raises(ArgumentError):
            report.ece


class TestReliabilityReport:
    def test_rows_and_footer(self):
        report = reliability_bins(_random_records(np.random.default_rng(5), 40))
        rows = report.to_rows()
        assert len(rows) == 11
        assert rows[0]["lower"] == 0.0
        assert rows[9]["upper"] == 1.0
        assert sum(row["count"] for row in rows[:10]) == 40
        assert rows[-1]["lower"] == "ece"
        assert rows[-1]["confidence"] == report.ece

    def test_merge_equals_binning_the_union(self):
        rng = np.random.default_rng(6)
        a, b = _random_records(rng, 30), _random_records(rng, 70)
        union = PredictionRecords(np.vstack([a.probs, b.probs]), np.concatenate([a.labels, b.labels]))
        merged = reliability_bins(a).merge(reliability_bins(b))
        assert merged.ece == pytest.approx(reliability_bins(union).ece, abs=1e-12)

    def test_pooled_and_mean(self):
        calibrated = reliability_bins(_binary_records([0.9, 0.9, 0.6, 0.6], [1, 1, 1, 0]), 2)
        wrong = reliability_bins(_binary_records([0.95, 0.95], [0, 0]), 2)
        pooled, mean = pooled_and_mean_ece([calibrated, wrong])
        assert mean == pytest.approx(0.475)
        # bin 2 holds all six records: accuracy 3/6, confidence 4.9/6
        assert pooled == pytest.approx(abs(0.5 - 4.9 / 6))

    def test_merge_needs_same_bins(self):
        records = _binary_records([0.9], [1])
        with pytest.raises(ValueError):
            reliability_bins(records, 2).merge(reliability_bins(records, 3))


class TestCommSummary:
    def _top_k_ledger(self, graph, dim, kept, rounds):
        ledger = CommLedger(graph.n_devices)
        for _ in range(rounds):
            messages = [SparseDelta.from_dense(np.ones(dim), np.arange(kept)) for _ in range(graph.n_devices)]
            exchange(messages, graph, ledger)
        return ledger

    def test_top_one_percent_saves_ninety_nine_percent(self):
        graph = build_graph(GraphKind.COMPLETE, 10)
        ledger = self._top_k_ledger(graph, 200, 2, 4)
        summary = comm_summary(ledger, CommLedger.dense_reference(graph, 200, 4))
        assert summary.values_ratio == 0.01
        assert summary.savings_percent == pytest.approx(99.0)
        assert summary.bytes_ratio == pytest.approx(0.02)

    def test_identity_saves_nothing(self):
        graph = build_graph(GraphKind.RING, 5)
        baseline = CommLedger.dense_reference(graph, 30, 2)
        summary = comm_summary(CommLedger.dense_reference(graph, 30, 2), baseline)
        assert summary.to_dict() == {"values_ratio": 1.0, "bytes_ratio": 1.0, "savings_percent": 0.0}

    def test_tenth_of_the_traffic(self):
        graph = build_graph(GraphKind.RING, 5)
        summary = comm_summary(
            CommLedger.dense_reference(graph, 20, 3), CommLedger.dense_reference(graph, 200, 3)
        )
        assert summary.values_ratio == pytest.approx(0.1)
        assert summary.savings_percent == pytest.approx(90.0)

    def test_empty_baseline(self):
        with pytest.raises(ArgumentError):
            comm_summary(CommLedger(3), CommLedger(3))
