"""
Labeled datasets: containers, a synthetic Gaussian-blob generator, the
distribution-shift emulation used for calibration studies, and CSV I/O.

CSV format: one row per example, columns ``x_1..x_d`` followed by an integer
label column. A header row is optional and detected automatically.
"""

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from ..core import ArgumentError, DataError, DimensionError, RngStream
from ..logging import logger


class LabeledExample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    A set of labeled examples, optionally owned by device ``owner``.

    Features are stored as an ``(n, d)`` float64 array and labels as an
    ``(n,)`` int64 array. Mini-batches are ``Dataset`` instances as well.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    owner: Optional[int] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise DimensionError(f"Features must be 2-D, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DimensionError(
                f"Got {features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError(
                f"Labels must lie in [0, {self.n_classes}), "
                f"got [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[LabeledExample]:
        for x, y in zip(self.features, self.labels):
            yield LabeledExample(x, int(y))

    @property
    def size(self) -> int:
        return len(self)

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices, owner: Optional[int] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.n_classes,
            self.owner if owner is None else owner,
        )

    def with_owner(self, owner: Optional[int]) -> "Dataset":
        return replace(self, owner=owner)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def concatenate(datasets: Sequence[Dataset], owner: Optional[int] = None) -> Dataset:
    if not datasets:
        raise ArgumentError("Need at least one dataset to concatenate")
    return Dataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        datasets[0].n_classes,
        owner,
    )


@dataclass(frozen=True, eq=False)
class SyntheticBlobs:
    """
    Multiclass Gaussian blobs: class ``r`` has center ``centers[r]`` and its
    examples are the center plus isotropic noise of standard deviation
    ``noise_std``.
    """

    centers: np.ndarray
    noise_std: float

    @classmethod
    def random(
        cls, classes: int, input_dim: int, spread: float, noise_std: float, rng: RngStream
    ) -> "SyntheticBlobs":
        if classes < 2 or input_dim < 1:
            raise ArgumentError(
                f"Need classes >= 2 and input_dim >= 1, got {classes}, {input_dim}"
            )
        if spread <= 0 or noise_std < 0:
            raise ArgumentError("spread must be positive and noise_std non-negative")
        centers = spread * rng.standard_normal((classes, input_dim))
        return cls(centers, float(noise_std))

    @property
    def classes(self) -> int:
        return int(self.centers.shape[0])

    def sample(self, per_class: int, rng: RngStream, shuffle: bool = True) -> Dataset:
        """Draw ``per_class`` examples of every class."""
        if per_class < 1:
            raise ArgumentError(f"per_class must be positive, got {per_class}")
        labels = np.repeat(np.arange(self.classes), per_class)
        noise = self.noise_std * rng.standard_normal((labels.size, self.centers.shape[1]))
        features = self.centers[labels] + noise
        if shuffle:
            order = rng.permutation(labels.size)
            features, labels = features[order], labels[order]
        return Dataset(features, labels, self.classes)


def generate_synthetic_dataset(
    classes: int,
    input_dim: int,
    per_class: int,
    spread: float,
    noise_std: float,
    rng: RngStream,
) -> Dataset:
    """Balanced Gaussian-blob classification data with random class centers."""
    blobs = SyntheticBlobs.random(classes, input_dim, spread, noise_std, rng)
    return blobs.sample(per_class, rng)


def shift_dataset(
    dataset: Dataset,
    keep_labels: Optional[Sequence[int]],
    noise_std: float,
    rng: RngStream,
) -> Dataset:
    """
    Emulate a change of the test distribution.

    Keeps only the examples whose label is in ``keep_labels`` (all when
    ``None``) and adds isotropic Gaussian noise of ``noise_std`` to the
    features. Labels keep their original indices.
    """
    mask = np.ones(len(dataset), dtype=bool)
    if keep_labels is not None:
        keep = np.asarray(list(keep_labels), dtype=np.int64)
        if keep.size and (keep.min() < 0 or keep.max() >= dataset.n_classes):
            raise ArgumentError(
                f"Label filter {keep.tolist()} outside [0, {dataset.n_classes})"
            )
        mask = np.isin(dataset.labels, keep)
    if not mask.any():
        raise DataError("Label filter removed every example")
    features = dataset.features[mask]
    if noise_std < 0:
        raise ArgumentError(f"noise_std must be non-negative, got {noise_std}")
    if noise_std > 0:
        features = features + noise_std * rng.standard_normal(features.shape)
    return Dataset(features, dataset.labels[mask], dataset.n_classes, dataset.owner)


def _is_header(row: Sequence[str]) -> bool:
    try:
        [float(cell) for cell in row]
    except ValueError:
        return True
    return False


def load_csv_dataset(path, n_classes: Optional[int] = None) -> Dataset:
    """
    Read a dataset from CSV (``x_1..x_d,label`` per row, optional header).

    Parameters
    ----------
    path : str or Path
        CSV file to read.
    n_classes : int, optional
        Number of classes; inferred as ``max(label) + 1`` when omitted.
    """
    path = Path(path)
    rows = []
    first = True
    with path.open(newline="") as handle:
        for row in csv.reader(handle):
            if not row or all(not cell.strip() for cell in row):
                continue
            if first:
                first = False
                if _is_header(row):
                    logger.debug(f"Skipping header of {path}: {row}")
                    continue
            rows.append(row)
    if not rows:
        raise DataError(f"No examples found in {path}")
    widths = {len(row) for row in rows}
    if len(widths) != 1 or widths.pop() < 2:
        raise DataError(f"Rows of {path} must all have the same width >= 2")
    try:
        table = np.array(rows, dtype=np.float64)
    except ValueError as e:
        raise DataError(f"Non-numeric entry in {path}: {e}") from e
    labels = table[:, -1]
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise DataError(f"Labels in {path} must be non-negative integers")
    labels = labels.astype(np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    logger.info(f"Loaded {len(rows)} examples with {table.shape[1] - 1} features from {path}")
    return Dataset(table[:, :-1], labels, n_classes)


def save_csv_dataset(dataset: Dataset, path, header: bool = True) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow([f"x_{i + 1}" for i in range(dataset.input_dim)] + ["label"])
        for x, y in dataset:
            writer.writerow([repr(float(v)) for v in x] + [y])
    return path
