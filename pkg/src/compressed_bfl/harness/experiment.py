"""
Experiment orchestration: data preparation, algorithm dispatch, per-round
evaluation and the final summary.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import Purpose, RngStream
from ..logging import logger
from ..metrics import (
    PredictionRecords,
    ReliabilityReport,
    accuracy,
    comm_summary,
    ece,
    pooled_and_mean_ece,
    reliability_bins,
)
from ..models import (
    Dataset,
    ModelSpec,
    SyntheticBlobs,
    ensemble_predict,
    init_parameters,
    load_csv_dataset,
    predict_proba,
    shift_dataset,
)
from ..network import CommLedger, DeviceGraph, build_graph
from ..samplers import Algorithm, DivergenceError, HyperParams, ModelObjective, NodeState, run_chain
from .config import ConfigError, ExperimentConfig
from .partition import partition_data, split_dataset
from .results import ResultsBundle, emit_results


@dataclass(frozen=True, eq=False)
class PreparedData:
    train: Dataset
    validation: Dataset
    test: Dataset
    shifted: dict[str, Dataset] = field(default_factory=dict)

    @property
    def evaluation_sets(self) -> dict[str, Dataset]:
        return {"validation": self.validation, "test": self.test, **self.shifted}


def _load_csv_sets(config: ExperimentConfig, rng: RngStream) -> tuple[Dataset, Dataset, Dataset]:
    full = load_csv_dataset(config.data.csv_path)
    if config.data.test_csv_path:
        test = load_csv_dataset(config.data.test_csv_path)
        classes = max(full.n_classes, test.n_classes)
        full = Dataset(full.features, full.labels, classes)
        test = Dataset(test.features, test.labels, classes)
        if test.input_dim != full.input_dim:
            raise ConfigError(
                f"{config.data.test_csv_path} has {test.input_dim} features, "
                f"{config.data.csv_path} has {full.input_dim}"
            )
        train, validation = split_dataset(full, [config.data.validation_fraction], rng)
    else:
        train, validation, test = split_dataset(
            full, [config.data.validation_fraction, config.data.test_fraction], rng
        )
    return train, validation, test


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Build the training, validation, test and shifted evaluation sets."""
    rng = RngStream(config.data_seed, 0, Purpose.DATA)
    d = config.data
    if d.source == "synthetic":
        blobs = SyntheticBlobs.random(d.classes, d.input_dim, d.spread, d.noise_std, rng)
        train = blobs.sample(d.train_per_class, rng)
        validation = blobs.sample(d.validation_per_class, rng)
        test = blobs.sample(d.test_per_class, rng)
    else:
        train, validation, test = _load_csv_sets(config, rng)
        config.check_label_filter(train.n_classes)

    ev = config.evaluation
    noise_levels = list(ev.shift_noise)
    if ev.label_filter and not noise_levels:
        noise_levels = [0.0]
    keep = [int(y) for y in ev.label_filter] or None
    shifted = {
        f"shifted-{i}": shift_dataset(
            test, keep, float(noise), RngStream(config.data_seed, i, Purpose.EVALUATION)
        )
        for i, noise in enumerate(noise_levels)
    }
    logger.info(
        f"Prepared data: {len(train)} train, {len(validation)} validation, "
        f"{len(test)} test, {len(shifted)} shifted set(s)"
    )
    return PreparedData(train, validation, test, shifted)


class RoundEvaluator:
    """
    Per-round monitor for :func:`run_chain`.

    Scores every device on the validation set with its current iterate
    before burn-in and with the running ensemble (mean of the retained
    samples' probabilities) afterwards, then averages over devices.
    """

    def __init__(
        self,
        spec: ModelSpec,
        validation: Dataset,
        hp: HyperParams,
        algorithm: Algorithm,
        n_bins: int = 10,
        every: int = 1,
    ):
        self.spec = spec
        self.validation = validation
        self.hp = hp
        self.algorithm = algorithm
        self.n_bins = n_bins
        self.every = every
        self._sums: dict[int, np.ndarray] = {}
        self._counts: dict[int, int] = {}

    def _probabilities(self, state: NodeState) -> np.ndarray:
        count = self._counts.get(state.device, 0)
        if count:
            return self._sums[state.device] / count
        return predict_proba(self.spec, state.theta, self.validation.features)

    def __call__(self, round_index: int, states: list[NodeState], ledger: CommLedger):
        t = round_index + 1
        if self.algorithm.is_bayesian and self.hp.retains(t):
            for state in states:
                probs = predict_proba(self.spec, state.theta, self.validation.features)
                self._sums[state.device] = self._sums.get(state.device, 0.0) + probs
                self._counts[state.device] = self._counts.get(state.device, 0) + 1
        if t % self.every and t != self.hp.rounds:
            return None

        accuracies, eces = [], []
        for state in states:
            records = PredictionRecords(self._probabilities(state), self.validation.labels)
            accuracies.append(accuracy(records))
            eces.append(ece(reliability_bins(records, self.n_bins)))
        return {
            "round": t,
            "acc": float(np.mean(accuracies)),
            "ece": float(np.mean(eces)),
            "cum_values_sent": ledger.total_values,
        }


def _device_probabilities(spec, state: NodeState, algorithm: Algorithm, x) -> np.ndarray:
    if algorithm.is_bayesian:
        return ensemble_predict(spec, state.ensemble, x)
    return predict_proba(spec, state.theta, x)


def evaluate_final(
    spec: ModelSpec,
    states: list[NodeState],
    algorithm: Algorithm,
    sets: dict[str, Dataset],
    n_bins: int,
) -> tuple[list[dict], dict[str, ReliabilityReport]]:
    """Score ensembles (or point models) on every evaluation set."""
    rows, reports = [], {}
    for name, dataset in sets.items():
        per_device = []
        for state in states:
            probs = _device_probabilities(spec, state, algorithm, dataset.features)
            records = PredictionRecords(probs, dataset.labels)
            per_device.append((accuracy(records), reliability_bins(records, n_bins)))
        pooled = per_device[0][1]
        for _, report in per_device[1:]:
            pooled = pooled.merge(report)
        reports[name] = pooled
        rows.append(
            {
                "set": name,
                "examples": len(dataset),
                "accuracy": float(np.mean([acc for acc, _ in per_device])),
                "ece": float(np.mean([report.ece for _, report in per_device])),
                "pooled_ece": pooled.ece,
            }
        )
    return rows, reports


def _communication(
    algorithm: Algorithm, graph: DeviceGraph, ledger: CommLedger, dim: int, rounds: int
) -> dict:
    summary = ledger.to_dict()
    if not algorithm.is_decentralized or graph.n_directed_edges == 0:
        summary.update(baseline_values=0, values_ratio=None, bytes_ratio=None, savings_percent=None)
        return summary
    baseline = CommLedger.dense_reference(graph, dim, rounds)
    summary["baseline_values"] = baseline.total_values
    summary.update(comm_summary(ledger, baseline).to_dict())
    return summary


def _provenance(config: ExperimentConfig) -> dict:
    return {
        "config_hash": config.config_hash,
        "seed": config.seeds.seed,
        "data_seed": config.data_seed,
        "version": __version__,
    }


def run_experiment(config: ExperimentConfig, out_dir=None) -> ResultsBundle:
    """
    Run one experiment end to end.

    Parameters
    ----------
    config : ExperimentConfig
        Validated experiment description.
    out_dir : str or Path, optional
        When given, the bundle is written there with :func:`emit_results`
        (also when the chain diverges, in which case the partial trace is
        written before the error propagates).

    Returns
    -------
    ResultsBundle
        Per-round trace, final summary and pooled reliability reports.
    """
    algorithm = config.algorithm
    hp = config.hyper_params()
    data = prepare_data(config)
    spec = config.model_spec(data.train.input_dim, data.train.n_classes)
    seed = config.seeds.seed

    if algorithm is Algorithm.SGLD:
        objectives = [ModelObjective(spec, data.train.with_owner(0), 1, None, hp.unbiased)]
        graph = DeviceGraph.single()
    else:
        K = config.network.devices
        shards = partition_data(
            data.train,
            K,
            config.partition.mode,
            RngStream(config.data_seed, 0, Purpose.PARTITION),
            config.partition.classes_per_device,
        )
        objectives = [
            ModelObjective(spec, shard, K, hp.prior_share, hp.unbiased) for shard in shards
        ]
        if K == 1:
            graph = DeviceGraph.single()
        else:
            graph = build_graph(
                config.network.topology,
                K,
                RngStream(seed, 0, Purpose.GRAPH),
                config.network.edge_prob,
            )

    initial = init_parameters(spec, config.model.init_std, RngStream(seed, 0, Purpose.INIT))
    evaluator = RoundEvaluator(
        spec, data.validation, hp, algorithm, config.evaluation.bins, config.evaluation.every
    )
    spill_dir = None
    if config.output.spill_ensembles and out_dir is not None:
        spill_dir = Path(out_dir) / "ensembles"

    try:
        result = run_chain(
            algorithm,
            hp,
            objectives,
            initial,
            seed,
            graph=graph,
            cfg=config.compressor(),
            monitor=evaluator,
            workers=config.training.workers,
            ensemble_cap=config.training.ensemble_cap,
            spill_dir=spill_dir,
        )
    except DivergenceError as e:
        bundle = ResultsBundle(
            config=config,
            trace=e.trace,
            summary={
                "algorithm": algorithm.value,
                "error": {"message": str(e), "round": e.round_index, "device": e.device},
                "provenance": _provenance(config),
            },
            error=str(e),
        )
        if out_dir is not None:
            emit_results(bundle, out_dir, config.output.format)
        raise

    rows, reports = evaluate_final(
        spec, result.states, algorithm, data.evaluation_sets, config.evaluation.bins
    )
    summary = {
        "algorithm": algorithm.value,
        "devices": len(result.states),
        "n_params": spec.n_params,
        "rounds": hp.rounds,
        "retained_samples": hp.retained_samples if algorithm.is_bayesian else 0,
        "final_round": result.trace[-1] if result.trace else None,
        "evaluations": rows,
        "communication": _communication(
            algorithm, graph, result.ledger, spec.n_params, hp.rounds
        ),
        "shifted": None,
        "provenance": _provenance(config),
    }
    if data.shifted:
        pooled, mean = pooled_and_mean_ece([reports[name] for name in data.shifted])
        summary["shifted"] = {"sets": sorted(data.shifted), "pooled_ece": pooled, "mean_ece": mean}

    bundle = ResultsBundle(config, result.trace, summary, reports)
    for row in rows:
        logger.info(
            f"{row['set']}: accuracy {row['accuracy']:.4f}, ECE {row['ece']:.4f} "
            f"({row['examples']} examples)"
        )
    savings = summary["communication"]["savings_percent"]
    if savings is not None:
        logger.info(f"Communication savings against dense exchange: {savings:.2f}%")
    if out_dir is not None:
        emit_results(bundle, out_dir, config.output.format)
    logger.success(f"Experiment {config.config_hash[:12]} ({algorithm.value}) finished")
    return bundle
