"""
Shared pieces of the training algorithms: hyperparameters, per-device state,
local objectives and mini-batch sampling.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

import numpy as np

from ..core import (
    ArgumentError,
    NumericalError,
    ParameterVector,
    Purpose,
    RngStream,
)
from ..models import Dataset, ModelSpec, PosteriorEnsemble, local_loss_grad


class DivergenceError(NumericalError):
    """Error raised when a chain produces non-finite parameters"""

    def __init__(self, message: str, round_index: int, device: Optional[int] = None):
        super().__init__(message)
        self.round_index = round_index
        self.device = device
        self.trace: list = []


@dataclass(frozen=True)
class HyperParams:
    """
    Hyperparameters shared by all samplers.

    Parameters
    ----------
    eta : float
        Learning rate.
    rounds : int
        Total number of rounds ``T``.
    burn_in : int
        Discarded rounds ``T_b``.
    local_steps : int
        Local gradient steps ``L`` per round (CD-BFL and CF-FL).
    zeta : float
        Consensus mixing weight. Zero disables the consensus correction.
    batch_size : int
        Mini-batch size ``M``.
    thinning : int
        Keep every ``thinning``-th post-burn-in sample.
    temperature : float
        Injected noise has standard deviation ``sqrt(2 * eta * temperature)``.
    prior_share : float, optional
        Fraction of the log-prior per device; defaults to ``1 / K``.
    unbiased : bool
        Rescale mini-batch likelihoods by ``E_k / M``.
    """

    eta: float = 1e-4
    rounds: int = 800
    burn_in: int = 700
    local_steps: int = 8
    zeta: float = 0.03
    batch_size: int = 16
    thinning: int = 1
    temperature: float = 1.0
    prior_share: Optional[float] = None
    unbiased: bool = False

    def __post_init__(self):
        if self.eta <= 0:
            raise ArgumentError(f"Learning rate must be positive, got {self.eta}")
        if not 0 <= self.burn_in < self.rounds:
            raise ArgumentError(
                f"Need 0 <= burn_in < rounds, got burn_in={self.burn_in}, rounds={self.rounds}"
            )
        if self.local_steps < 1:
            raise ArgumentError(f"Need at least one local step, got {self.local_steps}")
        if not 0 <= self.zeta <= 1:
            raise ArgumentError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.batch_size < 1:
            raise ArgumentError(f"Batch size must be positive, got {self.batch_size}")
        if self.thinning < 1:
            raise ArgumentError(f"Thinning must be >= 1, got {self.thinning}")
        if self.temperature < 0:
            raise ArgumentError(f"Temperature must be non-negative, got {self.temperature}")
        if self.prior_share is not None and self.prior_share <= 0:
            raise ArgumentError(f"prior_share must be positive, got {self.prior_share}")

    @property
    def noise_scale(self) -> float:
        return math.sqrt(2.0 * self.eta * self.temperature)

    @property
    def retained_samples(self) -> int:
        return len(range(self.burn_in + 1, self.rounds + 1, self.thinning))

    def retains(self, iterate_index: int) -> bool:
        """Whether ``theta_t`` with ``t = iterate_index`` joins the ensemble."""
        offset = iterate_index - self.burn_in - 1
        return iterate_index <= self.rounds and offset >= 0 and offset % self.thinning == 0

    def without_noise(self) -> "HyperParams":
        return replace(self, temperature=0.0)


class Objective(Protocol):
    """A device's local objective ``f_k`` as seen by the samplers."""

    dataset: Dataset

    def gradient(self, theta: ParameterVector, batch: Dataset) -> ParameterVector: ...


@dataclass(frozen=True, eq=False)
class ModelObjective:
    """The local objective of a classifier on one device's data."""

    spec: ModelSpec
    dataset: Dataset
    n_devices: int
    prior_share: Optional[float] = None
    unbiased: bool = False

    def gradient(self, theta: ParameterVector, batch: Dataset) -> ParameterVector:
        return local_loss_grad(
            self.spec,
            theta,
            batch,
            self.n_devices,
            self.prior_share,
            self.unbiased,
            len(self.dataset),
        )


def sample_batch(dataset: Dataset, batch_size: int, rng: RngStream) -> Dataset:
    """Uniform mini-batch without replacement."""
    if not 1 <= batch_size <= len(dataset):
        raise ArgumentError(
            f"Batch size {batch_size} must lie in [1, {len(dataset)}] for device {dataset.owner}"
        )
    if batch_size == len(dataset):
        return dataset
    return dataset.subset(np.sort(rng.choice_without_replacement(len(dataset), batch_size)))


def stochastic_gradient(
    objective: Objective, theta: ParameterVector, batch_size: int, rng: RngStream
) -> ParameterVector:
    return objective.gradient(theta, sample_batch(objective.dataset, batch_size, rng))


@dataclass
class NodeState:
    """
    Per-device sampler state: the iterate, its own control sequence ``v`` and
    the aggregated neighbor control sequence ``v_bar``.
    """

    device: int
    theta: ParameterVector
    v: ParameterVector
    v_bar: ParameterVector
    batch_rng: RngStream
    noise_rng: RngStream
    compress_rng: RngStream
    ensemble: Optional[PosteriorEnsemble] = None
    extras: dict = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        device: int,
        theta: ParameterVector,
        seed: int,
        ensemble: Optional[PosteriorEnsemble] = None,
    ) -> "NodeState":
        theta = np.array(theta, dtype=np.float64)
        return cls(
            device=device,
            theta=theta,
            v=np.zeros_like(theta),
            v_bar=np.zeros_like(theta),
            batch_rng=RngStream(seed, device, Purpose.BATCH),
            noise_rng=RngStream(seed, device, Purpose.NOISE),
            compress_rng=RngStream(seed, device, Purpose.COMPRESSION),
            ensemble=ensemble,
        )

    @property
    def dim(self) -> int:
        return int(self.theta.shape[0])


def check_finite(states: list[NodeState], round_index: int):
    for state in states:
        if not np.all(np.isfinite(state.theta)):
            raise DivergenceError(
                f"Device {state.device} diverged in round {round_index}: "
                "non-finite parameters (consider a smaller learning rate)",
                round_index=round_index,
                device=state.device,
            )


def control_imbalance(states: list[NodeState]) -> np.ndarray:
    """``sum_k (v_bar_k - v_k)``, which stays at zero for a doubly stochastic mixing matrix."""
    return np.sum([s.v_bar - s.v for s in states], axis=0)


def consensus_distance(states: list[NodeState]) -> float:
    """Mean squared distance of the iterates from their average."""
    thetas = np.stack([s.theta for s in states])
    return float(np.mean(np.sum((thetas - thetas.mean(axis=0)) ** 2, axis=1)))
