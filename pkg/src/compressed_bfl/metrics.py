"""
Accuracy, expected calibration error, reliability-diagram tables and
communication-overhead summaries.
"""

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import ArgumentError, DimensionError
from .network import CommLedger

DEFAULT_BINS = 10


@dataclass(frozen=True)
class PredictionRecord:
    probs: np.ndarray
    label: int

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.probs))

    @property
    def confidence(self) -> float:
        return float(np.max(self.probs))

    @property
    def correct(self) -> bool:
        return self.predicted == self.label


@dataclass(frozen=True, eq=False)
class PredictionRecords:
    """
    A set of predictions: class probabilities ``(n, R)`` and true labels ``(n,)``.

    Predicted labels are the argmax (lowest index on ties), confidence the
    maximum probability.
    """

    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        probs = np.atleast_2d(np.asarray(self.probs, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if probs.shape[0] != labels.shape[0]:
            raise DimensionError(
                f"Got {probs.shape[0]} probability rows but {labels.shape[0]} labels"
            )
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord]) -> "PredictionRecords":
        if not records:
            return cls(np.empty((0, 0)), np.empty(0, dtype=np.int64))
        return cls(np.stack([r.probs for r in records]), [r.label for r in records])

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[PredictionRecord]:
        for probs, label in zip(self.probs, self.labels):
            yield PredictionRecord(probs, int(label))

    @property
    def predicted(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)

    @property
    def confidence(self) -> np.ndarray:
        return np.max(self.probs, axis=1)

    @property
    def correct(self) -> np.ndarray:
        return (self.predicted == self.labels).astype(np.float64)


def _as_records(records) -> PredictionRecords:
    if isinstance(records, PredictionRecords):
        return records
    return PredictionRecords.from_records(list(records))


def accuracy(records) -> float:
    records = _as_records(records)
    if not len(records):
        raise ArgumentError("Accuracy of an empty record set is undefined")
    return float(np.mean(records.correct))


@dataclass(frozen=True, eq=False)
class ReliabilityReport:
    """
    Equal-width confidence bins over ``(0, 1]``, right-closed.

    Per bin the report keeps the count and the sums of correctness and
    confidence, so reports over disjoint record sets merge exactly.
    """

    edges: np.ndarray
    counts: np.ndarray
    correct_sums: np.ndarray
    confidence_sums: np.ndarray

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _mean(self, sums: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_bins)
        occupied = self.counts > 0
        out[occupied] = sums[occupied] / self.counts[occupied]
        return out

    @property
    def accuracy(self) -> np.ndarray:
        return self._mean(self.correct_sums)

    @property
    def confidence(self) -> np.ndarray:
        return self._mean(self.confidence_sums)

    @property
    def ece(self) -> float:
        return ece(self)

    def merge(self, other: "ReliabilityReport") -> "ReliabilityReport":
        if self.n_bins != other.n_bins:
            raise DimensionError(f"Cannot merge {self.n_bins} with {other.n_bins} bins")
        return ReliabilityReport(
            self.edges,
            self.counts + other.counts,
            self.correct_sums + other.correct_sums,
            self.confidence_sums + other.confidence_sums,
        )

    def to_rows(self) -> list[dict]:
        """One row per bin followed by an ``ece`` footer row."""
        rows = [
            {
                "lower": float(self.edges[o]),
                "upper": float(self.edges[o + 1]),
                "count": int(self.counts[o]),
                "accuracy": float(self.accuracy[o]),
                "confidence": float(self.confidence[o]),
            }
            for o in range(self.n_bins)
        ]
        rows.append(
            {"lower": "ece", "upper": "", "count": self.total, "accuracy": "", "confidence": self.ece}
        )
        return rows


def bin_edges(n_bins: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_bins + 1)


def reliability_bins(records, n_bins: int = DEFAULT_BINS) -> ReliabilityReport:
    """
    Group predictions into ``n_bins`` bins ``((o-1)/O, o/O]`` by confidence.

    Parameters
    ----------
    records : PredictionRecords or iterable of PredictionRecord
        Predictions to bin.
    n_bins : int
        Number of equal-width bins ``O``.

    Returns
    -------
    ReliabilityReport
        Per-bin counts, accuracy and confidence. Empty bins have count zero.
    """
    if n_bins < 1:
        raise ArgumentError(f"Need at least one bin, got {n_bins}")
    records = _as_records(records)
    edges = bin_edges(n_bins)
    confidence = records.confidence if len(records) else np.empty(0)
    correct = records.correct if len(records) else np.empty(0)
    index = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, n_bins - 1)
    return ReliabilityReport(
        edges=edges,
        counts=np.bincount(index, minlength=n_bins).astype(np.int64),
        correct_sums=np.bincount(index, weights=correct, minlength=n_bins),
        confidence_sums=np.bincount(index, weights=confidence, minlength=n_bins),
    )


def ece(report: ReliabilityReport) -> float:
    """Bin-weighted mean absolute gap between accuracy and confidence."""
    total = report.total
    if total == 0:
        raise ArgumentError("ECE of an empty reliability report is undefined")
    gaps = np.abs(report.accuracy - report.confidence)
    return float(np.sum(report.counts / total * gaps))


def pooled_and_mean_ece(reports: Sequence[ReliabilityReport]) -> tuple[float, float]:
    """ECE of the merged reports and the mean of the individual ECEs."""
    if not reports:
        raise ArgumentError("Need at least one reliability report")
    pooled = reports[0]
    for report in reports[1:]:
        pooled = pooled.merge(report)
    return pooled.ece, float(np.mean([r.ece for r in reports]))


@dataclass(frozen=True)
class CommSummary:
    values_ratio: float
    bytes_ratio: float
    savings_percent: float

    def to_dict(self) -> dict:
        return {
            "values_ratio": self.values_ratio,
            "bytes_ratio": self.bytes_ratio,
            "savings_percent": self.savings_percent,
        }


def comm_summary(ledger: CommLedger, baseline: CommLedger) -> CommSummary:
    """Transmitted values relative to ``baseline`` and the resulting savings."""
    if baseline.total_values == 0:
        raise ArgumentError("Baseline ledger has no transmitted values")
    ratio = ledger.total_values / baseline.total_values
    return CommSummary(
        values_ratio=ratio,
        bytes_ratio=ledger.total_bytes / baseline.total_bytes,
        savings_percent=100.0 * (1.0 - ratio),
    )
