"""
Parameter-space primitives shared by every other module.

Parameter vectors are plain one-dimensional ``numpy`` arrays of dtype
``float64``. Compressed updates travel as :class:`SparseDelta` objects, and
all randomness is drawn from :class:`RngStream` instances that are keyed by
``(seed, device, purpose)`` so that separate concerns (mini-batches, Langevin
noise, data generation, ...) never share a generator.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

ParameterVector = np.ndarray


class CompressedBFLError(Exception):
    """Base class for all errors raised by compressed_bfl"""


class DimensionError(CompressedBFLError, ValueError):
    """Error for mismatching vector or matrix dimensions"""


class SparseIndexError(CompressedBFLError, IndexError):
    """Error for sparse indices outside of the parameter range"""


class ArgumentError(CompressedBFLError, ValueError):
    """Error for arguments violating an operation's preconditions"""


class DataError(CompressedBFLError, ValueError):
    """Error for malformed datasets (e.g. labels out of range)"""


class NumericalError(CompressedBFLError, ArithmeticError):
    """Error for non-finite values appearing in a computation"""


class Purpose(IntEnum):
    """Purpose tags that separate the random streams of a device."""

    BATCH = 0
    NOISE = 1
    DATA = 2
    COMPRESSION = 3
    INIT = 4
    GRAPH = 5
    PARTITION = 6
    EVALUATION = 7


@dataclass
class RngStream:
    """
    A reproducible random stream identified by ``(seed, device, purpose)``.

    The stream is backed by a PCG64 generator whose seed sequence spawns from
    the experiment seed with the key ``(device, purpose)``. Streams are
    single-owner: never share one between threads.
    """

    seed: int
    device: int = 0
    purpose: Purpose = Purpose.BATCH
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        sequence = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.device), int(self.purpose))
        )
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    @property
    def stream_id(self) -> tuple[int, Purpose]:
        return (self.device, self.purpose)

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def choice_without_replacement(self, population: int, size: int) -> np.ndarray:
        return self.generator.choice(population, size=size, replace=False)

    def uniform(self, size) -> np.ndarray:
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


@dataclass(frozen=True, eq=False)
class SparseDelta:
    """
    Index/value pairs of a compressed update over a ``dim``-dimensional space.

    Indices are strictly increasing and lie in ``[0, dim)``.
    """

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if indices.shape != values.shape:
            raise DimensionError(
                f"Got {indices.size} indices but {values.size} values for sparse delta"
            )
        if indices.size > self.dim:
            raise DimensionError(
                f"Sparse delta holds {indices.size} entries for dimension {self.dim}"
            )
        if indices.size:
            if indices[0] < 0 or indices[-1] >= self.dim:
                raise SparseIndexError(
                    f"Sparse indices must lie in [0, {self.dim}), got "
                    f"[{indices.min()}, {indices.max()}]"
                )
            if np.any(np.diff(indices) <= 0):
                raise SparseIndexError("Sparse indices must be strictly increasing")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls, dim: int) -> "SparseDelta":
        return cls(np.empty(0, dtype=np.int64), np.empty(0), dim)

    @classmethod
    def from_dense(cls, x: ParameterVector, indices=None) -> "SparseDelta":
        """Build a delta from ``x``, keeping ``indices`` (all coordinates by default)."""
        x = np.asarray(x, dtype=np.float64)
        if indices is None:
            indices = np.arange(x.size)
        indices = np.sort(np.asarray(indices, dtype=np.int64))
        return cls(indices, x[indices], x.size)

    @classmethod
    def from_mapping(cls, entries: dict[int, float], dim: int) -> "SparseDelta":
        indices = sorted(entries)
        return cls(np.array(indices, dtype=np.int64), [entries[i] for i in indices], dim)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def is_dense(self) -> bool:
        return self.nnz == self.dim

    def __len__(self) -> int:
        return self.nnz

    def to_dense(self) -> ParameterVector:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}


def ensure_finite(x: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        bad = np.flatnonzero(~np.isfinite(x))
        raise NumericalError(
            f"Non-finite entries in {what} at indices {bad[:10].tolist()}"
        )
    return x


def weighted_combine(
    vectors: Sequence[ParameterVector], weights: Sequence[float]
) -> ParameterVector:
    """
    Return ``sum_i weights[i] * vectors[i]`` entrywise.

    The sum is accumulated in list order, which fixes the rounding for a given
    input and makes ``[v]`` with weight ``1.0`` return ``v`` bitwise.

    Parameters
    ----------
    vectors : sequence of ParameterVector
        Vectors of identical length.
    weights : sequence of float
        One weight per vector.

    Returns
    -------
    ParameterVector
        The weighted combination.
    """
    if len(vectors) != len(weights):
        raise DimensionError(
            f"Got {len(vectors)} vectors but {len(weights)} weights"
        )
    if not vectors:
        raise DimensionError("Cannot combine an empty list of vectors")
    dim = np.shape(vectors[0])[0]
    out = np.zeros(dim)
    for vector, weight in zip(vectors, weights):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (dim,):
            raise DimensionError(
                f"Vector of shape {vector.shape} does not match dimension {dim}"
            )
        out += weight * vector
    return out


def apply_sparse(
    dense: ParameterVector, delta: SparseDelta, scale: float = 1.0
) -> ParameterVector:
    """Return ``dense + scale * delta`` without modifying ``dense``."""
    dense = np.asarray(dense, dtype=np.float64)
    if delta.dim != dense.shape[0]:
        raise DimensionError(
            f"Sparse delta of dimension {delta.dim} cannot be applied to a vector "
            f"of length {dense.shape[0]}"
        )
    out = dense.copy()
    if delta.nnz:
        out[delta.indices] += scale * delta.values
    return out


def gaussian_noise(dim: int, scale: float, rng: RngStream) -> ParameterVector:
    """
    Draw ``dim`` i.i.d. samples from ``N(0, scale**2)``.

    A zero scale returns zeros without consuming draws from ``rng``.
    """
    if dim <= 0:
        raise ArgumentError(f"Noise dimension must be positive, got {dim}")
    if scale < 0:
        raise ArgumentError(f"Noise scale must be non-negative, got {scale}")
    if scale == 0:
        return np.zeros(dim)
    return scale * rng.standard_normal(dim)
