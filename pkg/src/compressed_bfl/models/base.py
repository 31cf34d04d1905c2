"""
Probabilistic classifiers with hand-written gradients.

Two model kinds share one flat parameter layout (row-major):

* ``softmax-linear``: ``[W (d_in x R), b (R)]``
* ``mlp-1-hidden``: ``[W1 (d_in x H), b1 (H), W2 (H x R), b2 (R)]`` with a
  ``tanh`` hidden layer.

The local objective of device ``k`` on a mini-batch ``M`` is

    f_k(theta) = -log p(M | theta) - prior_share * log p(theta)

with a standard Gaussian prior, so ``-grad log p(theta) = theta``.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from ..core import ArgumentError, DataError, DimensionError, ParameterVector, RngStream
from .data import Dataset


class ModelKind(str, Enum):
    SOFTMAX_LINEAR = "softmax-linear"
    MLP = "mlp-1-hidden"


@dataclass(frozen=True)
class ModelSpec:
    """Shape of the shared classifier."""

    kind: ModelKind
    input_dim: int
    classes: int
    hidden: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.input_dim < 1 or self.classes < 2:
            raise ArgumentError(
                f"Need input_dim >= 1 and classes >= 2, got {self.input_dim}, {self.classes}"
            )
        if self.kind is ModelKind.MLP and self.hidden < 1:
            raise ArgumentError("mlp-1-hidden models need at least one hidden unit")

    @property
    def n_params(self) -> int:
        if self.kind is ModelKind.SOFTMAX_LINEAR:
            return (self.input_dim + 1) * self.classes
        return (self.input_dim + 1) * self.hidden + (self.hidden + 1) * self.classes

    def layer_shapes(self) -> list[tuple[int, ...]]:
        d, r, h = self.input_dim, self.classes, self.hidden
        if self.kind is ModelKind.SOFTMAX_LINEAR:
            return [(d, r), (r,)]
        return [(d, h), (h,), (h, r), (r,)]


def unpack(spec: ModelSpec, theta: ParameterVector) -> list[np.ndarray]:
    """Split ``theta`` into layer arrays (views) following the fixed layout."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.n_params,):
        raise DimensionError(
            f"Expected {spec.n_params} parameters for {spec.kind.value}, got {theta.shape}"
        )
    arrays, offset = [], 0
    for shape in spec.layer_shapes():
        size = math.prod(shape)
        arrays.append(theta[offset : offset + size].reshape(shape))
        offset += size
    return arrays


def pack(arrays: list[np.ndarray]) -> ParameterVector:
    return np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1) for a in arrays])


def init_parameters(spec: ModelSpec, std: float, rng: RngStream) -> ParameterVector:
    """Draw an initial parameter vector from ``N(0, std**2 I)``."""
    if std == 0:
        return np.zeros(spec.n_params)
    return std * rng.standard_normal(spec.n_params)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _as_features(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError(
            f"Features of shape {x.shape} do not match input dimension {spec.input_dim}"
        )
    return x


def _forward(spec: ModelSpec, theta: ParameterVector, features: np.ndarray):
    layers = unpack(spec, theta)
    if spec.kind is ModelKind.SOFTMAX_LINEAR:
        weights, bias = layers
        return features @ weights + bias, None
    w1, b1, w2, b2 = layers
    hidden = np.tanh(features @ w1 + b1)
    return hidden @ w2 + b2, hidden


def predict_proba(spec: ModelSpec, theta: ParameterVector, x) -> np.ndarray:
    """
    Class probabilities from the softmax output layer.

    ``x`` may be a single feature vector (returns shape ``(R,)``) or a batch of
    shape ``(n, d_in)`` (returns ``(n, R)``).
    """
    single = np.ndim(x) == 1
    logits, _ = _forward(spec, theta, _as_features(spec, x))
    probs = softmax(logits)
    return probs[0] if single else probs


def _check_batch(spec: ModelSpec, batch: Dataset):
    if len(batch) == 0:
        raise ArgumentError("Mini-batch must not be empty")
    if batch.features.shape[1] != spec.input_dim:
        raise DimensionError(
            f"Batch features have {batch.features.shape[1]} columns, "
            f"model expects {spec.input_dim}"
        )
    labels = batch.labels
    if labels.min() < 0 or labels.max() >= spec.classes:
        raise DataError(
            f"Labels must lie in [0, {spec.classes}), got [{labels.min()}, {labels.max()}]"
        )


def log_prior(theta: ParameterVector) -> float:
    """Standard Gaussian log-density up to its additive constant."""
    theta = np.asarray(theta, dtype=np.float64)
    return -0.5 * float(theta @ theta)


def log_prior_grad(theta: ParameterVector) -> ParameterVector:
    return -np.asarray(theta, dtype=np.float64)


def _resolve_prior_share(K: int, prior_share: Optional[float]) -> float:
    if prior_share is None:
        if K < 1:
            raise ArgumentError(f"Number of devices must be positive, got {K}")
        prior_share = 1.0 / K
    if prior_share <= 0:
        raise ArgumentError(f"prior_share must be positive, got {prior_share}")
    return prior_share


def _likelihood_scale(batch: Dataset, unbiased: bool, dataset_size: Optional[int]) -> float:
    if not unbiased:
        return 1.0
    if dataset_size is None:
        raise ArgumentError("Unbiased scaling needs the local dataset size")
    return dataset_size / len(batch)


def negative_log_likelihood(spec: ModelSpec, theta: ParameterVector, batch: Dataset) -> float:
    """Summed negative log-likelihood of ``batch``."""
    _check_batch(spec, batch)
    logits, _ = _forward(spec, theta, batch.features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(batch)), batch.labels]
    return float(np.sum(log_norm - picked))


def negative_log_likelihood_grad(
    spec: ModelSpec, theta: ParameterVector, batch: Dataset
) -> ParameterVector:
    """Analytic gradient of the summed negative log-likelihood (manual backprop)."""
    _check_batch(spec, batch)
    features = batch.features
    logits, hidden = _forward(spec, theta, features)
    delta = softmax(logits)
    delta[np.arange(len(batch)), batch.labels] -= 1.0
    if spec.kind is ModelKind.SOFTMAX_LINEAR:
        return pack([features.T @ delta, delta.sum(axis=0)])
    _, _, w2, _ = unpack(spec, theta)
    grad_w2 = hidden.T @ delta
    grad_b2 = delta.sum(axis=0)
    delta_hidden = (delta @ w2.T) * (1.0 - hidden**2)
    grad_w1 = features.T @ delta_hidden
    grad_b1 = delta_hidden.sum(axis=0)
    return pack([grad_w1, grad_b1, grad_w2, grad_b2])


def local_loss(
    spec: ModelSpec,
    theta: ParameterVector,
    batch: Dataset,
    K: int,
    prior_share: Optional[float] = None,
    unbiased: bool = False,
    dataset_size: Optional[int] = None,
) -> float:
    """Value of the local stochastic objective ``f_k`` (prior constant dropped)."""
    share = _resolve_prior_share(K, prior_share)
    scale = _likelihood_scale(batch, unbiased, dataset_size)
    return scale * negative_log_likelihood(spec, theta, batch) - share * log_prior(theta)


def local_loss_grad(
    spec: ModelSpec,
    theta: ParameterVector,
    batch: Dataset,
    K: int,
    prior_share: Optional[float] = None,
    unbiased: bool = False,
    dataset_size: Optional[int] = None,
) -> ParameterVector:
    """
    Gradient of the local stochastic objective.

    Parameters
    ----------
    spec : ModelSpec
        The shared model.
    theta : ParameterVector
        Current parameters.
    batch : Dataset
        Non-empty mini-batch.
    K : int
        Number of devices; sets the default ``prior_share = 1 / K``.
    prior_share : float, optional
        Fraction of the log-prior assigned to this device.
    unbiased : bool
        Rescale the likelihood term by ``dataset_size / len(batch)``.
    dataset_size : int, optional
        Size of the local dataset, required when ``unbiased`` is set.

    Returns
    -------
    ParameterVector
        ``-grad log p(batch | theta) + prior_share * theta``.
    """
    share = _resolve_prior_share(K, prior_share)
    scale = _likelihood_scale(batch, unbiased, dataset_size)
    likelihood = negative_log_likelihood_grad(spec, theta, batch)
    if scale != 1.0:
        likelihood = scale * likelihood
    return likelihood - share * log_prior_grad(theta)


def central_difference(
    fn: Callable[[ParameterVector], float], theta: ParameterVector, h: float
) -> ParameterVector:
    """Coordinatewise central-difference gradient of a scalar function."""
    if h <= 0:
        raise ArgumentError(f"Finite-difference step must be positive, got {h}")
    theta = np.array(theta, dtype=np.float64).reshape(-1)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        original = theta[i]
        theta[i] = original + h
        upper = fn(theta)
        theta[i] = original - h
        lower = fn(theta)
        theta[i] = original
        grad[i] = (upper - lower) / (2.0 * h)
    return grad


def finite_diff_grad(
    spec: ModelSpec,
    theta: ParameterVector,
    batch: Dataset,
    K: int,
    prior_share: Optional[float] = None,
    h: float = 1e-5,
    unbiased: bool = False,
    dataset_size: Optional[int] = None,
) -> ParameterVector:
    """Central-difference oracle for :func:`local_loss_grad`."""
    return central_difference(
        lambda t: local_loss(spec, t, batch, K, prior_share, unbiased, dataset_size),
        theta,
        h,
    )
