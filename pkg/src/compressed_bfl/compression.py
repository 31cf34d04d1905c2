"""
Compression operators Q(.) applied to the difference between a locally
updated model and its control sequence.

Every operator returns a :class:`~compressed_bfl.core.SparseDelta`; dense
operators (identity, uniform quantization) simply list every index.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ArgumentError, DimensionError, ParameterVector, RngStream, SparseDelta


class CompressorKind(str, Enum):
    TOP_K = "top-k"
    RANDOM_K = "random-k"
    UNIFORM_QUANTIZE = "uniform-quantize"
    IDENTITY = "identity"


@dataclass(frozen=True)
class CompressorConfig:
    """
    Configuration of a compression operator.

    ``ratio`` is the fraction of coordinates kept by the k-type kinds,
    ``levels`` the number of quantization levels of ``uniform-quantize``.
    """

    kind: CompressorKind = CompressorKind.TOP_K
    ratio: float = 0.01
    levels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", CompressorKind(self.kind))
        if not 0 < self.ratio <= 1:
            raise ArgumentError(f"Compression ratio must lie in (0, 1], got {self.ratio}")
        if self.levels < 1:
            raise ArgumentError(f"Quantization levels must be >= 1, got {self.levels}")

    @property
    def is_sparse(self) -> bool:
        return self.kind in (CompressorKind.TOP_K, CompressorKind.RANDOM_K)

    def k(self, dim: int) -> int:
        """Number of coordinates kept out of ``dim`` (``dim`` for dense kinds)."""
        if not self.is_sparse:
            return dim
        # 1e-9 keeps products such as 0.01 * 2.7e6 from flooring to 26999
        return min(dim, max(1, math.floor(self.ratio * dim + 1e-9)))


def top_k_indices(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest magnitudes; equal magnitudes prefer lower indices."""
    order = np.argsort(-np.abs(x), kind="stable")
    return np.sort(order[:k])


def _quantize(x: np.ndarray, levels: int, rng: RngStream) -> np.ndarray:
    scale = np.max(np.abs(x))
    if scale == 0:
        return np.zeros_like(x)
    level = np.abs(x) / scale * levels
    lower = np.floor(level)
    rounded = lower + (rng.uniform(x.shape) < level - lower)
    return np.sign(x) * scale * rounded / levels


def compress(cfg: CompressorConfig, x: ParameterVector, rng: RngStream) -> SparseDelta:
    """
    Apply the configured compression operator to ``x``.

    Parameters
    ----------
    cfg : CompressorConfig
        Which operator to apply and its parameters.
    x : ParameterVector
        Vector to compress.
    rng : RngStream
        Stream used by the randomized kinds (random-k, uniform-quantize).

    Returns
    -------
    SparseDelta
        The compressed representation with sorted, unique indices.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DimensionError("Cannot compress an empty vector")
    dim = x.size
    if cfg.kind is CompressorKind.IDENTITY:
        return SparseDelta.from_dense(x)
    if cfg.kind is CompressorKind.TOP_K:
        return SparseDelta.from_dense(x, top_k_indices(x, cfg.k(dim)))
    if cfg.kind is CompressorKind.RANDOM_K:
        return SparseDelta.from_dense(x, rng.choice_without_replacement(dim, cfg.k(dim)))
    return SparseDelta(np.arange(dim), _quantize(x, cfg.levels, rng), dim)


def contraction_ratio(cfg: CompressorConfig, x: ParameterVector, rng: RngStream) -> float:
    """Return ``||Q(x) - x||^2 / ||x||^2``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    energy = float(x @ x)
    if energy == 0:
        raise ArgumentError("Contraction ratio is undefined for the zero vector")
    residual = compress(cfg, x, rng).to_dense() - x
    return float(residual @ residual) / energy
