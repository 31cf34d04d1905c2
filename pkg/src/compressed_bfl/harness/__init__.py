from .config import SWEEP_ALIASES, ConfigError, ExperimentConfig
from .experiment import PreparedData, RoundEvaluator, evaluate_final, prepare_data, run_experiment
from .partition import partition_data, split_dataset
from .report import format_report, report
from .results import ResultsBundle, ResultsIOError, emit_results, read_summary

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PreparedData",
    "ResultsBundle",
    "ResultsIOError",
    "RoundEvaluator",
    "SWEEP_ALIASES",
    "emit_results",
    "evaluate_final",
    "format_report",
    "partition_data",
    "prepare_data",
    "read_summary",
    "report",
    "run_experiment",
    "split_dataset",
]
