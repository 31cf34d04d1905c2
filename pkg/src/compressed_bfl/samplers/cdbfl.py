"""
Compressed decentralized Bayesian FL (CD-BFL) and its frequentist twin CF-FL.

A round on device ``k``:

1. ``L`` local stochastic gradient steps from ``theta_k``;
2. ``delta_k = Q(theta_k^(L) - v_k)`` is sent to the neighbors;
3. ``v_k += delta_k`` and ``v_bar_k += sum_{j in N_k} w_kj delta_j``
   (``N_k`` includes ``k``);
4. ``theta_k = theta_k^(L) + zeta (v_bar_k - v_k) + sqrt(2 eta tau) xi`` where
   ``tau`` is the sampling temperature (1 by default).

CF-FL runs the same round with the noise term removed.
"""

from concurrent.futures import Executor
from typing import Optional, Sequence

import numpy as np

from ..compression import CompressorConfig, compress
from ..core import (
    ArgumentError,
    DimensionError,
    ParameterVector,
    RngStream,
    apply_sparse,
    gaussian_noise,
)
from ..network import CommLedger, DeviceGraph, exchange
from .base import HyperParams, NodeState, Objective, stochastic_gradient


def cdbfl_local_phase(
    theta: ParameterVector,
    objective: Objective,
    local_steps: int,
    batch_size: int,
    eta: float,
    rng: RngStream,
) -> ParameterVector:
    """``local_steps`` noiseless SGD steps, each on a fresh mini-batch."""
    if local_steps < 1:
        raise ArgumentError(f"Need at least one local step, got {local_steps}")
    theta = np.asarray(theta, dtype=np.float64)
    for _ in range(local_steps):
        gradient = stochastic_gradient(objective, theta, batch_size, rng)
        theta = theta - eta * gradient
    return theta


def cdbfl_round(
    states: list[NodeState],
    omega: np.ndarray,
    cfg: CompressorConfig,
    hp: HyperParams,
    objectives: Sequence[Objective],
    graph: DeviceGraph,
    ledger: CommLedger,
    executor: Optional[Executor] = None,
) -> list[NodeState]:
    """
    Advance every device by one synchronous CD-BFL round.

    Parameters
    ----------
    states : list of NodeState
        One state per device, ordered by device index.
    omega : numpy.ndarray
        Doubly stochastic mixing matrix matching ``graph``.
    cfg : CompressorConfig
        Compression operator for the exchanged differences.
    hp : HyperParams
        Learning rate, local steps, ``zeta``, batch size and noise temperature.
    objectives : sequence of Objective
        Local objective per device.
    graph : DeviceGraph
        Communication graph.
    ledger : CommLedger
        Accumulates the round's traffic.
    executor : concurrent.futures.Executor, optional
        Runs the devices' local phases in parallel.

    Returns
    -------
    list of NodeState
        The same state objects, updated in place.
    """
    K = len(states)
    if omega.shape != (K, K) or graph.n_devices != K:
        raise DimensionError(
            f"Mixing matrix {omega.shape} and graph of {graph.n_devices} devices "
            f"do not match {K} states"
        )

    def local_phase(state: NodeState) -> ParameterVector:
        return cdbfl_local_phase(
            state.theta,
            objectives[state.device],
            hp.local_steps,
            hp.batch_size,
            hp.eta,
            state.batch_rng,
        )

    if executor is None:
        local = [local_phase(s) for s in states]
    else:
        local = list(executor.map(local_phase, states))

    deltas = [compress(cfg, local[s.device] - s.v, s.compress_rng) for s in states]
    delivered, ledger = exchange(deltas, graph, ledger, indexed=cfg.is_sparse)

    for state in states:
        k = state.device
        state.v = apply_sparse(state.v, deltas[k])
        received = dict(delivered[k])
        received[k] = deltas[k]
        for j in sorted(received):
            state.v_bar = apply_sparse(state.v_bar, received[j], omega[k, j])
        updated = local[k] + hp.zeta * (state.v_bar - state.v)
        if hp.noise_scale > 0:
            updated = updated + gaussian_noise(state.dim, hp.noise_scale, state.noise_rng)
        state.theta = updated
    return states


def cffl_round(
    states: list[NodeState],
    omega: np.ndarray,
    cfg: CompressorConfig,
    hp: HyperParams,
    objectives: Sequence[Objective],
    graph: DeviceGraph,
    ledger: CommLedger,
    executor: Optional[Executor] = None,
) -> list[NodeState]:
    """A CD-BFL round without the injected Langevin noise."""
    return cdbfl_round(
        states, omega, cfg, hp.without_noise(), objectives, graph, ledger, executor
    )
