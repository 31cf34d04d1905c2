"""Decentralized SGLD: mix neighbor samples, then take a Langevin step."""

from typing import Optional, Sequence

import numpy as np

from ..core import DimensionError, SparseDelta, weighted_combine
from ..network import CommLedger, DeviceGraph, exchange
from .base import HyperParams, NodeState, Objective, stochastic_gradient
from .sgld import sgld_step


def dsgld_round(
    states: list[NodeState],
    omega: np.ndarray,
    hp: HyperParams,
    objectives: Sequence[Objective],
    graph: Optional[DeviceGraph] = None,
    ledger: Optional[CommLedger] = None,
) -> list[NodeState]:
    """
    Advance every device by one DSGLD round.

    Each device computes ``sum_j w_kj theta_j - eta * grad f_k(theta_k) + noise``
    from start-of-round values only. Full parameter vectors are exchanged and
    recorded in ``ledger`` when one is given.
    """
    K = len(states)
    if omega.shape != (K, K):
        raise DimensionError(f"Mixing matrix of shape {omega.shape} does not match {K} devices")
    snapshot = [s.theta.copy() for s in states]
    if graph is not None and ledger is not None:
        exchange([SparseDelta.from_dense(t) for t in snapshot], graph, ledger)
    gradients = [
        stochastic_gradient(objectives[s.device], snapshot[s.device], hp.batch_size, s.batch_rng)
        for s in states
    ]
    for state, gradient in zip(states, gradients):
        k = state.device
        members = [j for j in range(K) if omega[k, j] != 0]
        mixed = weighted_combine([snapshot[j] for j in members], [omega[k, j] for j in members])
        state.theta = sgld_step(mixed, gradient, hp.eta, state.noise_rng, hp.noise_scale)
    return states
