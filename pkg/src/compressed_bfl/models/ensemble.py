"""
Retained posterior samples and Bayesian model averaging.
"""

from pathlib import Path
from typing import Optional

import numpy as np

from ..core import ArgumentError, DimensionError, ParameterVector
from ..logging import logger
from .base import ModelSpec, predict_proba


class PosteriorEnsemble:
    """
    Posterior samples retained by one device after burn-in.

    Samples live in memory. When ``cap`` is set together with ``spill_dir``,
    every ``cap`` samples are flushed to an ``.npy`` chunk in ``spill_dir``
    and read back on access.
    """

    def __init__(
        self,
        owner: int,
        dim: int,
        cap: Optional[int] = None,
        spill_dir: Optional[Path] = None,
    ):
        if cap is not None and cap < 1:
            raise ArgumentError(f"Ensemble cap must be positive, got {cap}")
        self.owner = owner
        self.dim = dim
        self.cap = cap
        self.spill_dir = Path(spill_dir) if spill_dir is not None else None
        self._memory: list[np.ndarray] = []
        self._chunks: list[Path] = []
        self._spilled = 0
        if cap is not None and spill_dir is None:
            logger.warning(
                f"Ensemble of device {owner} has a cap but no spill directory; "
                "keeping all samples in memory"
            )

    def __len__(self) -> int:
        return self._spilled + len(self._memory)

    def append(self, theta: ParameterVector):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise DimensionError(
                f"Sample of shape {theta.shape} does not match dimension {self.dim}"
            )
        self._memory.append(theta.copy())
        if self.cap is not None and self.spill_dir is not None and len(self._memory) >= self.cap:
            self._spill()

    def _spill(self):
        self.spill_dir.mkdir(parents=True, exist_ok=True)
        path = self.spill_dir / f"ensemble_{self.owner}_{len(self._chunks):05d}.npy"
        np.save(path, np.stack(self._memory))
        logger.debug(f"Spilled {len(self._memory)} samples of device {self.owner} to {path}")
        self._chunks.append(path)
        self._spilled += len(self._memory)
        self._memory = []

    @property
    def samples(self) -> list[ParameterVector]:
        out = []
        for path in self._chunks:
            out.extend(np.load(path))
        out.extend(self._memory)
        return out

    def as_array(self) -> np.ndarray:
        if not len(self):
            return np.empty((0, self.dim))
        return np.stack(self.samples)

    @classmethod
    def from_samples(cls, samples, owner: int = 0) -> "PosteriorEnsemble":
        samples = [np.asarray(s, dtype=np.float64) for s in samples]
        if not samples:
            raise ArgumentError("Need at least one sample")
        ensemble = cls(owner, samples[0].shape[0])
        for sample in samples:
            ensemble.append(sample)
        return ensemble


def ensemble_predict(spec: ModelSpec, ensemble: PosteriorEnsemble, x) -> np.ndarray:
    """
    Bayesian model average: the mean of :func:`predict_proba` over all samples.

    Per-sample probabilities are sorted along the sample axis before summing,
    so the result does not depend on the order of the samples.
    """
    samples = ensemble.samples if isinstance(ensemble, PosteriorEnsemble) else list(ensemble)
    if not samples:
        raise ArgumentError("Cannot predict with an empty ensemble")
    stacked = np.stack([predict_proba(spec, theta, x) for theta in samples])
    return np.sort(stacked, axis=0).sum(axis=0) / len(samples)
