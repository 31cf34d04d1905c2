"""Tests for SGLD, DSGLD, CD-BFL, CF-FL and chain management."""

import numpy as np
import pytest

from compressed_bfl.compression import CompressorConfig, CompressorKind
from compressed_bfl.core import ArgumentError, NumericalError, Purpose, RngStream
from compressed_bfl.models import Dataset, ModelKind, ModelSpec, generate_synthetic_dataset
from compressed_bfl.network import (
    CommLedger,
    DeviceGraph,
    GraphKind,
    build_graph,
    metropolis_weights,
)
from compressed_bfl.samplers import (
    Algorithm,
    DivergenceError,
    HyperParams,
    ModelObjective,
    NodeState,
    cdbfl_local_phase,
    cdbfl_round,
    cffl_round,
    consensus_distance,
    control_imbalance,
    dsgld_round,
    run_chain,
    sgld_step,
)

IDENTITY = CompressorConfig(CompressorKind.IDENTITY)


def _placeholder_data(n: int = 1, dim: int = 1) -> Dataset:
    return Dataset(np.zeros((n, dim)), np.zeros(n, dtype=int), 2)


class QuadraticObjective:
    """``f(theta) = a/2 ||theta - center||^2``; ignores the mini-batch."""

    def __init__(self, a: float, center, n: int = 1):
        self.a = a
        self.center = np.asarray(center, dtype=float)
        self.dataset = _placeholder_data(n)

    def gradient(self, theta, batch):
        return self.a * (theta - self.center)


class ZeroObjective(QuadraticObjective):
    def __init__(self, dim: int):
        super().__init__(0.0, np.zeros(dim))


class ExplodingObjective(QuadraticObjective):
    def __init__(self):
        super().__init__(-1e10, np.zeros(1))


class GaussianMeanObjective:
    """Negative log-posterior of a Gaussian mean with unit variance and a N(0, 1) prior."""

    def __init__(self, x: np.ndarray):
        self.dataset = Dataset(x[:, None], np.zeros(x.size, dtype=int), 2)

    def gradient(self, theta, batch):
        x = batch.features[:, 0]
        return (1.0 + x.size) * theta - x.sum()


def _noiseless(**kwargs) -> HyperParams:
    defaults = dict(eta=0.1, rounds=20, burn_in=10, local_steps=1, zeta=1.0, batch_size=1)
    defaults.update(kwargs)
    return HyperParams(temperature=0.0, **defaults)


def _states(thetas, seed: int = 0) -> list[NodeState]:
    return [NodeState.create(k, np.asarray(t, dtype=float), seed) for k, t in enumerate(thetas)]


def _model_objectives(K: int, per_device: int = 20, seed: int = 0):
    spec = ModelSpec(ModelKind.SOFTMAX_LINEAR, input_dim=19, classes=10)
    data = generate_synthetic_dataset(10, 19, 2 * K, 2.0, 1.0, RngStream(seed))
    objectives = [
        ModelObjective(spec, data.subset(np.arange(k * per_device, (k + 1) * per_device), owner=k), K)
        for k in range(K)
    ]
    return spec, objectives


class TestHyperParams:
    def test_defaults_follow_reference_setting(self):
        hp = HyperParams()
        assert (hp.eta, hp.rounds, hp.burn_in, hp.local_steps, hp.zeta) == (1e-4, 800, 700, 8, 0.03)
        assert hp.retained_samples == 100
        assert hp.noise_scale == pytest.approx(np.sqrt(2e-4))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"eta": 0.0},
            {"burn_in": 800},
            {"local_steps": 0},
            {"zeta": 1.5},
            {"batch_size": 0},
            {"thinning": 0},
            {"temperature": -1.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ArgumentError):
            HyperParams(**kwargs)

    def test_thinning(self):
        hp = HyperParams(rounds=10, burn_in=4, thinning=3)
        assert [t for t in range(1, 11) if hp.retains(t)] == [5, 8]
        assert hp.retained_samples == 2


class TestSgldStep:
    def test_plain_gradient_step(self):
        out = sgld_step(np.array([1.0]), np.array([2.0]), 0.1, RngStream(0), noise_scale=0.0)
        np.testing.assert_allclose(out, [0.8])

    def test_noise_scale(self):
        theta = np.zeros(100_000)
        out = sgld_step(theta, np.zeros_like(theta), 1e-4, RngStream(1))
        assert np.std(out) == pytest.approx(np.sqrt(2e-4), rel=0.01)

    def test_non_finite_gradient(self):
        with pytest.raises(NumericalError):
            sgld_step(np.zeros(2), np.array([np.nan, 0.0]), 0.1, RngStream(0))


class TestDsgldRound:
    def test_single_device_is_sgld(self):
        hp = HyperParams(eta=0.05, rounds=2, burn_in=1, batch_size=1)
        objective = QuadraticObjective(2.0, [1.0, -1.0])
        states = _states([[0.5, 0.5]], seed=3)
        dsgld_round(states, np.ones((1, 1)), hp, [objective])
        expected = sgld_step(
            np.array([0.5, 0.5]),
            objective.gradient(np.array([0.5, 0.5]), None),
            hp.eta,
            RngStream(3, 0, Purpose.NOISE),
            hp.noise_scale,
        )
        np.testing.assert_array_equal(states[0].theta, expected)

    def test_uniform_mixing_jumps_to_average(self):
        thetas = [[0.0, 3.0], [3.0, 6.0], [6.0, 0.0]]
        states = _states(thetas)
        dsgld_round(states, np.full((3, 3), 1 / 3), _noiseless(), [ZeroObjective(2)] * 3)
        for state in states:
            np.testing.assert_allclose(state.theta, [3.0, 3.0], rtol=1e-12)

    def test_hand_computed_mixing(self):
        omega = np.array([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])
        states = _states([[1.0], [2.0], [4.0]])
        dsgld_round(states, omega, _noiseless(), [ZeroObjective(1)] * 3)
        np.testing.assert_allclose([s.theta[0] for s in states], [2.0, 2.25, 2.75], rtol=1e-12)

    def test_records_dense_traffic(self):
        graph = build_graph(GraphKind.RING, 4)
        ledger = CommLedger(4)
        states = _states(np.ones((4, 5)))
        dsgld_round(states, metropolis_weights(graph), _noiseless(), [ZeroObjective(5)] * 4, graph, ledger)
        assert ledger.total_values == 5 * graph.n_directed_edges


class TestCdbflLocalPhase:
    def test_two_exact_gradient_steps(self):
        out = cdbfl_local_phase(np.array([3.0]), QuadraticObjective(2.0, [1.0]), 2, 1, 0.1, RngStream(0))
        np.testing.assert_allclose(out, [2.28], rtol=1e-12)

    def test_single_step(self):
        out = cdbfl_local_phase(np.array([3.0]), QuadraticObjective(2.0, [1.0]), 1, 1, 0.1, RngStream(0))
        np.testing.assert_allclose(out, [2.6], rtol=1e-12)

    def test_needs_a_step(self):
        with pytest.raises(ArgumentError):
            cdbfl_local_phase(np.zeros(1), ZeroObjective(1), 0, 1, 0.1, RngStream(0))


class TestCdbflRound:
    def test_identity_gossip_every_round(self):
        K, dim = 5, 6
        graph = build_graph(GraphKind.RING, K)
        omega = metropolis_weights(graph)
        objectives = [QuadraticObjective(1.0 + k, np.full(dim, float(k))) for k in range(K)]
        hp = _noiseless(eta=0.05, local_steps=2, zeta=1.0)
        initial = np.random.default_rng(0).normal(size=(K, dim))
        states = _states(initial)
        ledger = CommLedger(K)
        reference = initial.copy()
        for _ in range(20):
            local = np.stack(
                [
                    cdbfl_local_phase(reference[k], objectives[k], 2, 1, 0.05, RngStream(0))
                    for k in range(K)
                ]
            )
            reference = omega @ local
            cdbfl_round(states, omega, IDENTITY, hp, objectives, graph, ledger)
            np.testing.assert_allclose(
                np.stack([s.theta for s in states]), reference, rtol=0, atol=1e-12
            )

    def test_zero_zeta_disables_consensus(self):
        graph = build_graph(GraphKind.COMPLETE, 3)
        states = _states([[1.0], [2.0], [3.0]])
        hp = _noiseless(zeta=0.0)
        cdbfl_round(states, metropolis_weights(graph), IDENTITY, hp, [ZeroObjective(1)] * 3, graph, CommLedger(3))
        np.testing.assert_array_equal([s.theta[0] for s in states], [1.0, 2.0, 3.0])

    def test_control_sequences_stay_balanced(self):
        K = 10
        spec, objectives = _model_objectives(K)
        graph = build_graph(GraphKind.COMPLETE, K)
        hp = HyperParams(eta=1e-3, rounds=200, burn_in=199, local_steps=2, zeta=0.5, batch_size=8)
        worst = []

        def monitor(round_index, states, ledger):
            worst.append(float(np.max(np.abs(control_imbalance(states)))))

        run_chain(
            Algorithm.CDBFL,
            hp,
            objectives,
            np.zeros(spec.n_params),
            seed=1,
            graph=graph,
            cfg=CompressorConfig(CompressorKind.TOP_K, 0.01),
            monitor=monitor,
        )
        assert len(worst) == 200
        assert max(worst) < 1e-8

    def test_top_k_sends_one_percent(self):
        K = 10
        spec, objectives = _model_objectives(K)
        graph = build_graph(GraphKind.COMPLETE, K)
        hp = HyperParams(eta=1e-3, rounds=5, burn_in=4, local_steps=2, batch_size=8)
        ledgers = {}
        for kind, ratio in ((CompressorKind.TOP_K, 0.01), (CompressorKind.IDENTITY, 1.0)):
            result = run_chain(
                Algorithm.CDBFL,
                hp,
                objectives,
                np.zeros(spec.n_params),
                seed=0,
                graph=graph,
                cfg=CompressorConfig(kind, ratio),
            )
            ledgers[kind] = result.ledger
        sparse, dense = ledgers[CompressorKind.TOP_K], ledgers[CompressorKind.IDENTITY]
        assert sparse.total_values / dense.total_values == 0.01
        assert dense.to_dict() == CommLedger.dense_reference(graph, spec.n_params, 5).to_dict()

    def test_full_ratio_top_k_pays_for_indices(self):
        graph = build_graph(GraphKind.COMPLETE, 3)
        ledger = CommLedger(3)
        states = _states(np.ones((3, 4)))
        cfg = CompressorConfig(CompressorKind.TOP_K, 1.0)
        cdbfl_round(states, metropolis_weights(graph), cfg, _noiseless(), [ZeroObjective(4)] * 3, graph, ledger)
        assert ledger.total_values == 4 * graph.n_directed_edges
        assert ledger.total_indices == ledger.total_values

    def test_one_step_exact_gossip_matches_dsgld(self):
        K, dim = 5, 4
        graph = build_graph(GraphKind.RING, K)
        omega = metropolis_weights(graph)
        hp = HyperParams(eta=1e-2, rounds=50, burn_in=49, local_steps=1, zeta=1.0, batch_size=1)
        objectives = [ZeroObjective(dim)] * K
        initial = np.random.default_rng(4).normal(size=(K, dim))
        gossip, langevin = _states(initial, seed=7), _states(initial, seed=7)
        ledger = CommLedger(K)
        for _ in range(50):
            cdbfl_round(gossip, omega, IDENTITY, hp, objectives, graph, ledger)
            dsgld_round(langevin, omega, hp, objectives)
        assert np.std([s.theta for s in langevin]) > 0.1
        for a, b in zip(gossip, langevin):
            np.testing.assert_allclose(a.theta, b.theta, rtol=0, atol=1e-10)


class TestCfflRound:
    def test_reaches_consensus_on_initial_average(self):
        K = 5
        graph = build_graph(GraphKind.RING, K)
        omega = metropolis_weights(graph)
        initial = np.random.default_rng(2).normal(size=(K, 3))
        states = _states(initial)
        hp = HyperParams(eta=0.1, rounds=2, burn_in=1, zeta=1.0, batch_size=1, local_steps=1)
        for _ in range(100):
            cffl_round(states, omega, IDENTITY, hp, [ZeroObjective(3)] * K, graph, CommLedger(K))
        assert consensus_distance(states) < 1e-12
        np.testing.assert_allclose(states[0].theta, initial.mean(axis=0), atol=1e-10)

    def test_noise_off_cdbfl_equals_cffl(self):
        K = 4
        spec, objectives = _model_objectives(K)
        graph = build_graph(GraphKind.COMPLETE, K)
        hp = HyperParams(eta=1e-3, rounds=30, burn_in=20, local_steps=3, zeta=0.3, batch_size=8)
        cfg = CompressorConfig(CompressorKind.TOP_K, 0.05)
        common = dict(graph=graph, cfg=cfg, seed=9)
        cdbfl = run_chain(Algorithm.CDBFL, hp.without_noise(), objectives, np.zeros(spec.n_params), **common)
        cffl = run_chain(Algorithm.CFFL, hp, objectives, np.zeros(spec.n_params), **common)
        for a, b in zip(cdbfl.point_models, cffl.point_models):
            np.testing.assert_array_equal(a, b)
        assert cdbfl.ledger.to_dict() == cffl.ledger.to_dict()
        with pytest.raises(ArgumentError):
            cffl.ensembles

    def test_ledger_matches_noisy_cdbfl(self):
        K = 4
        spec, objectives = _model_objectives(K)
        graph = build_graph(GraphKind.COMPLETE, K)
        hp = HyperParams(eta=1e-3, rounds=10, burn_in=5, local_steps=8, batch_size=8)
        cfg = CompressorConfig(CompressorKind.TOP_K, 0.01)
        a = run_chain(Algorithm.CDBFL, hp, objectives, np.zeros(spec.n_params), 0, graph, cfg)
        b = run_chain(Algorithm.CFFL, hp, objectives, np.zeros(spec.n_params), 0, graph, cfg)
        assert a.ledger.to_dict() == b.ledger.to_dict()


class TestSingleDeviceDegeneration:
    @pytest.mark.parametrize("zeta", [0.03, 1.0])
    def test_decentralized_algorithms_collapse_to_sgld(self, zeta):
        spec, objectives = _model_objectives(1)
        hp = HyperParams(eta=1e-3, rounds=25, burn_in=15, local_steps=1, zeta=zeta, batch_size=8)
        initial = np.random.default_rng(4).normal(scale=0.1, size=spec.n_params)
        single = DeviceGraph.single()
        sgld = run_chain(Algorithm.SGLD, hp, objectives, initial, seed=5)
        dsgld = run_chain(Algorithm.DSGLD, hp, objectives, initial, seed=5, graph=single)
        cdbfl = run_chain(Algorithm.CDBFL, hp, objectives, initial, seed=5, graph=single, cfg=IDENTITY)
        for other in (dsgld, cdbfl):
            np.testing.assert_array_equal(other.point_models[0], sgld.point_models[0])
            np.testing.assert_array_equal(other.ensembles[0].as_array(), sgld.ensembles[0].as_array())
        assert cdbfl.ledger.total_bytes == 0


class TestRunChain:
    def test_retains_samples_after_burn_in(self):
        hp = HyperParams(eta=0.01, rounds=800, burn_in=700, batch_size=1)
        graph = build_graph(GraphKind.COMPLETE, 2)
        result = run_chain(Algorithm.DSGLD, hp, [ZeroObjective(3)] * 2, np.zeros(3), 0, graph)
        assert [len(e) for e in result.ensembles] == [100, 100]

    def test_one_sample_when_burn_in_is_last_round(self):
        hp = HyperParams(eta=0.01, rounds=12, burn_in=11, batch_size=1)
        result = run_chain(Algorithm.SGLD, hp, [ZeroObjective(2)], np.zeros(2), 0)
        assert len(result.ensembles[0]) == 1
        np.testing.assert_array_equal(result.ensembles[0].as_array()[0], result.point_models[0])

    def test_deterministic(self):
        K = 3
        spec, objectives = _model_objectives(K)
        graph = build_graph(GraphKind.RING, K)
        hp = HyperParams(eta=1e-3, rounds=15, burn_in=10, local_steps=2, batch_size=8)
        cfg = CompressorConfig(CompressorKind.RANDOM_K, 0.1)
        runs = [
            run_chain(Algorithm.CDBFL, hp, objectives, np.zeros(spec.n_params), 11, graph, cfg)
            for _ in range(2)
        ]
        for a, b in zip(runs[0].ensembles, runs[1].ensembles):
            np.testing.assert_array_equal(a.as_array(), b.as_array())
        assert runs[0].ledger.to_dict() == runs[1].ledger.to_dict()

    def test_threads_do_not_change_results(self):
        K = 4
        spec, objectives = _model_objectives(K)
        graph = build_graph(GraphKind.COMPLETE, K)
        hp = HyperParams(eta=1e-3, rounds=10, burn_in=5, local_steps=3, batch_size=8)
        args = (Algorithm.CDBFL, hp, objectives, np.zeros(spec.n_params), 2, graph, IDENTITY)
        serial = run_chain(*args)
        threaded = run_chain(*args, workers=3)
        for a, b in zip(serial.point_models, threaded.point_models):
            np.testing.assert_array_equal(a, b)

    def test_per_device_initial_parameters(self):
        graph = build_graph(GraphKind.COMPLETE, 2)
        hp = _noiseless(zeta=0.0)
        result = run_chain(Algorithm.CDBFL, hp, [ZeroObjective(2)] * 2, [[1.0, 2.0], [3.0, 4.0]], 0, graph)
        np.testing.assert_array_equal(result.point_models[1], [3.0, 4.0])

    def test_divergence_reports_round_and_partial_trace(self):
        hp = HyperParams(eta=1.0, rounds=500, burn_in=10, batch_size=1, temperature=0.0)
        with pytest.raises(DivergenceError) as info:
            run_chain(
                Algorithm.SGLD,
                hp,
                [ExplodingObjective()],
                np.ones(1),
                0,
                monitor=lambda t, states, ledger: {"round": t + 1},
            )
        error = info.value
        assert 0 < error.round_index < 500
        assert len(error.trace) == error.round_index
        assert error.trace[-1] == {"round": error.round_index}

    def test_sgld_needs_one_pooled_objective(self):
        with pytest.raises(ArgumentError):
            run_chain(Algorithm.SGLD, _noiseless(), [ZeroObjective(1)] * 2, np.zeros(1), 0)

    def test_decentralized_needs_graph(self):
        with pytest.raises(ArgumentError):
            run_chain(Algorithm.DSGLD, _noiseless(), [ZeroObjective(1)] * 2, np.zeros(1), 0)

    def test_batch_larger_than_local_data(self):
        with pytest.raises(ArgumentError):
            run_chain(Algorithm.SGLD, _noiseless(batch_size=2), [ZeroObjective(1)], np.zeros(1), 0)


class TestConjugatePosterior:
    def test_sgld_recovers_gaussian_posterior(self):
        x = np.random.default_rng(12).normal(loc=2.0, scale=1.0, size=20)
        precision = 1.0 + x.size
        posterior_mean, posterior_var = x.sum() / precision, 1.0 / precision

        eta = 5e-3
        hp = HyperParams(eta=eta, rounds=61_000, burn_in=1_000, batch_size=x.size)
        result = run_chain(Algorithm.SGLD, hp, [GaussianMeanObjective(x)], np.zeros(1), seed=3)
        samples = result.ensembles[0].as_array()[:, 0]
        assert samples.size == 60_000

        # AR(1) chain: effective sample size from the lag-one autocorrelation
        rho = 1.0 - eta * precision
        ess = samples.size * (1 - rho) / (1 + rho)
        standard_error = np.sqrt(samples.var() / ess)
        assert abs(samples.mean() - posterior_mean) < 3 * standard_error
        assert samples.var() == pytest.approx(posterior_var, rel=0.2)
