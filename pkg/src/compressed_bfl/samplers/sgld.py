"""Centralized stochastic gradient Langevin dynamics."""

from typing import Optional

import numpy as np

from ..core import ArgumentError, ParameterVector, RngStream, ensure_finite, gaussian_noise


def sgld_step(
    theta: ParameterVector,
    gradient: ParameterVector,
    eta: float,
    rng: RngStream,
    noise_scale: Optional[float] = None,
) -> ParameterVector:
    """
    One Langevin step ``theta - eta * grad + sqrt(2 eta) * xi``.

    Parameters
    ----------
    theta : ParameterVector
        Current sample.
    gradient : ParameterVector
        Gradient of the (stochastic) negative log-posterior at ``theta``.
    eta : float
        Learning rate.
    rng : RngStream
        Noise stream.
    noise_scale : float, optional
        Overrides the noise standard deviation ``sqrt(2 eta)``; zero turns the
        step into plain gradient descent.
    """
    if eta <= 0:
        raise ArgumentError(f"Learning rate must be positive, got {eta}")
    theta = np.asarray(theta, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    ensure_finite(gradient, "Langevin step gradient")
    if noise_scale is None:
        noise_scale = float(np.sqrt(2.0 * eta))
    updated = theta - eta * gradient
    if noise_scale > 0:
        updated = updated + gaussian_noise(theta.shape[0], noise_scale, rng)
    return updated
