"""
Chain management: run ``T`` rounds of one algorithm, discard burn-in, retain
posterior samples and collect per-round metrics and traffic.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..compression import CompressorConfig, CompressorKind
from ..core import ArgumentError, DimensionError, NumericalError, ParameterVector
from ..logging import logger
from ..models import PosteriorEnsemble
from ..network import CommLedger, DeviceGraph, metropolis_weights
from .base import (
    DivergenceError,
    HyperParams,
    NodeState,
    Objective,
    check_finite,
    consensus_distance,
    stochastic_gradient,
)
from .cdbfl import cdbfl_round, cffl_round
from .dsgld import dsgld_round
from .sgld import sgld_step

Monitor = Callable[[int, list[NodeState], CommLedger], Optional[dict]]


class Algorithm(str, Enum):
    SGLD = "sgld"
    DSGLD = "dsgld"
    CDBFL = "cd-bfl"
    CFFL = "cf-fl"

    @property
    def is_bayesian(self) -> bool:
        return self is not Algorithm.CFFL

    @property
    def is_decentralized(self) -> bool:
        return self is not Algorithm.SGLD


@dataclass
class ChainResult:
    """Outcome of :func:`run_chain`."""

    algorithm: Algorithm
    states: list[NodeState]
    ledger: CommLedger
    omega: np.ndarray
    trace: list[dict] = field(default_factory=list)

    @property
    def ensembles(self) -> list[PosteriorEnsemble]:
        if not self.algorithm.is_bayesian:
            raise ArgumentError(f"{self.algorithm.value} does not retain posterior samples")
        return [s.ensemble for s in self.states]

    @property
    def point_models(self) -> list[ParameterVector]:
        return [s.theta for s in self.states]


def _sgld_round(states: list[NodeState], hp: HyperParams, objectives: Sequence[Objective]):
    state = states[0]
    gradient = stochastic_gradient(objectives[0], state.theta, hp.batch_size, state.batch_rng)
    state.theta = sgld_step(state.theta, gradient, hp.eta, state.noise_rng, hp.noise_scale)
    return states


def _initial_parameters(initial, K: int) -> list[ParameterVector]:
    stacked = np.asarray(initial, dtype=np.float64)
    if stacked.ndim == 1:
        stacked = np.tile(stacked, (K, 1))
    if stacked.ndim != 2 or stacked.shape[0] != K:
        raise DimensionError(
            f"Initial parameters of shape {stacked.shape} do not fit {K} devices"
        )
    return [row.copy() for row in stacked]


def run_chain(
    algorithm: Algorithm,
    hp: HyperParams,
    objectives: Sequence[Objective],
    initial: ParameterVector | Sequence[ParameterVector],
    seed: int,
    graph: Optional[DeviceGraph] = None,
    cfg: Optional[CompressorConfig] = None,
    omega: Optional[np.ndarray] = None,
    monitor: Optional[Monitor] = None,
    workers: int = 1,
    ensemble_cap: Optional[int] = None,
    spill_dir: Optional[Path] = None,
) -> ChainResult:
    """
    Run ``hp.rounds`` rounds of ``algorithm``.

    Parameters
    ----------
    algorithm : Algorithm
        ``sgld`` (one objective over pooled data), ``dsgld``, ``cd-bfl`` or ``cf-fl``.
    hp : HyperParams
        Sampler hyperparameters.
    objectives : sequence of Objective
        Local objective per device.
    initial : ParameterVector or sequence of ParameterVector
        Shared or per-device initial parameters ``theta_{k,0}``.
    seed : int
        Experiment seed; every device derives its own streams from it.
    graph : DeviceGraph, optional
        Communication graph (required for the decentralized algorithms).
    cfg : CompressorConfig, optional
        Compression operator for CD-BFL and CF-FL (identity by default).
    omega : numpy.ndarray, optional
        Mixing matrix; Metropolis-Hastings weights of ``graph`` by default.
    monitor : callable, optional
        Called as ``monitor(round_index, states, ledger)`` after every round;
        returned dictionaries form the trace.
    workers : int
        Threads used for the devices' local phases.
    ensemble_cap, spill_dir
        Spill retained samples to ``spill_dir`` every ``ensemble_cap`` samples.

    Returns
    -------
    ChainResult
        Final states (ensembles or point models), ledger and trace.

    Raises
    ------
    DivergenceError
        When any device produces non-finite parameters. The partial trace is
        attached as ``error.trace``.
    """
    algorithm = Algorithm(algorithm)
    K = len(objectives)
    if K < 1:
        raise ArgumentError("Need at least one objective")
    if algorithm is Algorithm.SGLD:
        if K != 1:
            raise ArgumentError("Centralized SGLD runs on a single pooled objective")
        graph = DeviceGraph.single()
    elif graph is None:
        raise ArgumentError(f"{algorithm.value} needs a device graph")
    if graph.n_devices != K:
        raise DimensionError(f"Graph has {graph.n_devices} devices but {K} objectives")
    smallest = min(len(o.dataset) for o in objectives)
    if hp.batch_size > smallest:
        raise ArgumentError(
            f"Batch size {hp.batch_size} exceeds the smallest local dataset ({smallest})"
        )
    cfg = cfg or CompressorConfig(CompressorKind.IDENTITY)
    omega = metropolis_weights(graph) if omega is None else np.asarray(omega, dtype=np.float64)

    initial = _initial_parameters(initial, K)
    dim = initial[0].shape[0]
    states = [
        NodeState.create(
            k,
            initial[k],
            seed,
            PosteriorEnsemble(k, dim, ensemble_cap, spill_dir) if algorithm.is_bayesian else None,
        )
        for k in range(K)
    ]
    ledger = CommLedger(K)
    trace: list[dict] = []
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    logger.info(
        f"Running {algorithm.value}: K={K}, p={dim}, T={hp.rounds}, T_b={hp.burn_in}, "
        f"L={hp.local_steps}, zeta={hp.zeta}, eta={hp.eta}, compressor={cfg.kind.value}"
    )
    try:
        for round_index in range(hp.rounds):
            try:
                if algorithm is Algorithm.SGLD:
                    _sgld_round(states, hp, objectives)
                elif algorithm is Algorithm.DSGLD:
                    dsgld_round(states, omega, hp, objectives, graph, ledger)
                elif algorithm is Algorithm.CDBFL:
                    cdbfl_round(states, omega, cfg, hp, objectives, graph, ledger, executor)
                else:
                    cffl_round(states, omega, cfg, hp, objectives, graph, ledger, executor)
            except NumericalError as e:
                raise DivergenceError(f"Round {round_index}: {e}", round_index) from e
            check_finite(states, round_index)

            if algorithm.is_bayesian and hp.retains(round_index + 1):
                for state in states:
                    state.ensemble.append(state.theta)
            if round_index + 1 == hp.burn_in:
                logger.info(f"Burn-in of {hp.burn_in} rounds complete")
            if monitor is not None:
                row = monitor(round_index, states, ledger)
                if row is not None:
                    trace.append(row)
            if K > 1 and (round_index + 1) % 100 == 0:
                logger.debug(
                    f"Round {round_index + 1}: consensus distance {consensus_distance(states):.3e}"
                )
    except DivergenceError as e:
        e.trace = trace
        logger.error(str(e))
        raise
    finally:
        if executor is not None:
            executor.shutdown()

    logger.info(
        f"Finished {algorithm.value} after {hp.rounds} rounds, "
        f"{ledger.total_values} values sent"
    )
    return ChainResult(algorithm, states, ledger, omega, trace)
