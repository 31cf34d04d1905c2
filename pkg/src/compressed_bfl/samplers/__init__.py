from .base import (
    DivergenceError,
    HyperParams,
    ModelObjective,
    NodeState,
    Objective,
    consensus_distance,
    control_imbalance,
    sample_batch,
    stochastic_gradient,
)
from .cdbfl import cdbfl_local_phase, cdbfl_round, cffl_round
from .chain import Algorithm, ChainResult, run_chain
from .dsgld import dsgld_round
from .sgld import sgld_step

__all__ = [
    "Algorithm",
    "ChainResult",
    "DivergenceError",
    "HyperParams",
    "ModelObjective",
    "NodeState",
    "Objective",
    "cdbfl_local_phase",
    "cdbfl_round",
    "cffl_round",
    "consensus_distance",
    "control_imbalance",
    "dsgld_round",
    "run_chain",
    "sample_batch",
    "sgld_step",
    "stochastic_gradient",
]
