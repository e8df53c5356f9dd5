import numpy as np
import pytest

from dualmatch.algorithms import AlgorithmConfig
from dualmatch.conftest import build_instance, random_path
from dualmatch.instances import ArrivalGenerator, GeneratorKind, Trace
from dualmatch.misc import InstanceTooLargeError
from dualmatch.model import Instance, ServiceMode, evaluate_objective
from dualmatch.offline import (
    brute_force_opt,
    certificate_dual_value,
    in_good_event,
    solve_opt,
    solve_static_dual,
    solve_surrogate_primal,
    static_dual_function,
    write_certificate,
)
from dualmatch.simulate import run_episode, sample_path

reward_grid = [0.0, 0.25, 0.5, 0.75, 1.0]


def unit_capacity_instance(T=1, gamma=0.0, alpha=3.0):
    generator = ArrivalGenerator(GeneratorKind.UNIFORM_SINGLE, m=1)
    return Instance(1, 1, T, np.array([[1.0 / T]]), 0.0, alpha, gamma,
                    ServiceMode.BERNOULLI, generator)


class TestSolveOpt:
    def test_single_step_served(self):
        instance = unit_capacity_instance(gamma=5.0)
        path = Trace([[0.7]], [0], services=[[1.0]])
        solution = solve_opt(path, instance)
        assert solution.objective_value == pytest.approx(0.7)
        np.testing.assert_allclose(solution.decisions, [[1.0]], atol=1e-9)

    def test_single_step_congested(self):
        instance = unit_capacity_instance(gamma=5.0)
        path = Trace([[0.7]], [0], services=[[0.0]])
        solution = solve_opt(path, instance)
        assert solution.objective_value == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(solution.decisions, [[0.0]], atol=1e-9)

    def test_tied_overflow_example(self):
        instance = build_instance([0.5], T=2, alpha=3.0, gamma=5.0)
        path = Trace([[0.6], [0.8]], [0, 1], services=[[1.0], [1.0]])
        lp = solve_opt(path, instance)
        exhaustive = brute_force_opt(path, instance)
        assert exhaustive.objective_value == pytest.approx(0.8)
        assert lp.objective_value == pytest.approx(0.8)
        assert in_good_event(path, instance)

    def test_zero_rewards(self, rng):
        instance = build_instance([0.3, 0.4], T=8, gamma=2.0)
        path = random_path(rng, 8, 2, tied_share=0.0, grid=[0.0])
        assert solve_opt(path, instance).objective_value == pytest.approx(0.0, abs=1e-9)
        exhaustive = brute_force_opt(path, instance)
        assert exhaustive.objective_value == 0.0
        np.testing.assert_array_equal(exhaustive.decisions, 0.0)

    def test_needs_services(self, single_instance):
        with pytest.raises(ValueError):
            solve_opt(Trace([[0.5]], [0]), single_instance)

    def test_idle_mode_not_supported(self):
        instance = build_instance([0.5], T=2, service_mode=ServiceMode.IDLE)
        path = Trace([[0.6], [0.8]], [0, 0], services=[[1.0], [0.0]])
        with pytest.raises(NotImplementedError):
            solve_opt(path, instance)
        assert brute_force_opt(path, instance).solver == "brute_force"

    def test_backlog_without_penalty(self, rng):
        instance = build_instance([0.4], T=10, gamma=0.0)
        path = random_path(rng, 10, 1, tied_share=0.0)
        solution = solve_opt(path, instance)
        assert solution.backlog_vars.shape == (10, 1, 1)
        assert np.all(solution.backlog_vars >= 0.0)

    def test_certificate_file(self, tmp_path, rng):
        instance = build_instance([0.3, 0.4], T=10, gamma=5.0, alpha=3.0)
        path = random_path(rng, 10, 2)
        write_certificate(solve_opt(path, instance), tmp_path / "certificate.json")
        assert '"theta"' in (tmp_path / "certificate.json").read_text()


def random_small_case(seed):
    rng = np.random.default_rng(seed)
    T, m = int(rng.integers(2, 11)), int(rng.integers(1, 4))
    rho = rng.choice([0.2, 0.3, 0.4, 0.5], size=m)
    instance = build_instance(rho, T=T, alpha=float(rng.choice([1.0, 2.0, 3.0])),
                              gamma=float(rng.choice([0.0, 1.0, 4.0])))
    path = random_path(rng, T, m, tied_share=0.25, grid=reward_grid)
    return instance, path


def check_oracles(seed):
    instance, path = random_small_case(seed)
    lp = solve_opt(path, instance)
    exhaustive = brute_force_opt(path, instance)
    assert lp.objective_value >= exhaustive.objective_value - 1e-6
    if lp.is_integral:
        assert lp.objective_value == pytest.approx(exhaustive.objective_value, abs=1e-6)
    if lp.in_good_event:
        dual = certificate_dual_value(lp.dual_certificate, path, instance)
        assert dual == pytest.approx(lp.objective_value, abs=1e-6)
    replay = evaluate_objective(exhaustive.decisions, path, instance)
    assert replay.objective == pytest.approx(exhaustive.objective_value)


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(15))
    def test_lp_against_exhaustive_search(self, seed):
        check_oracles(seed)

    @pytest.mark.slow
    def test_lp_against_exhaustive_search_full(self):
        for seed in range(100, 200):
            check_oracles(seed)

    def test_too_large(self, rng):
        instance = build_instance([0.3], T=13)
        with pytest.raises(InstanceTooLargeError):
            brute_force_opt(random_path(rng, 13, 1), instance)


def check_dominance(instance, num_paths):
    algorithms = [
        AlgorithmConfig("ca-dl", zeta=0.1),
        AlgorithmConfig("co-dl"),
        AlgorithmConfig("ro-learning", zeta=0.1),
        AlgorithmConfig("random"),
        AlgorithmConfig("min-backlog"),
        AlgorithmConfig("ro-learning-b", zeta=0.1, batch_size=10),
    ]
    for p in range(num_paths):
        path = sample_path(instance, 8, p)
        opt = solve_opt(path, instance).objective_value
        for algorithm in algorithms:
            value = run_episode(algorithm, instance, p, seed=8, path=path).objective
            assert opt >= value - 1e-6, algorithm.name


class TestRelaxationDominance:
    def test_offline_value_dominates(self, pair_instance):
        check_dominance(pair_instance, 5)

    @pytest.mark.slow
    def test_offline_value_dominates_many_paths(self):
        instance = build_instance([0.3, 0.4], T=100, alpha=3.0, gamma=5.0, tied_probs=[0.1, 0.1])
        check_dominance(instance, 200)


class TestSurrogate:
    def test_surrogate_ignores_congestion(self, rng):
        instance = build_instance([0.3, 0.4], T=12, gamma=50.0)
        path = random_path(rng, 12, 2)
        assert (solve_surrogate_primal(path, instance).objective_value
                >= solve_opt(path, instance).objective_value - 1e-9)


class TestStaticDual:
    def test_median_of_uniform_rewards(self):
        instance = build_instance([0.5], T=1000)
        rewards = np.linspace(0.0, 1.0, 1001)[:, None]
        solution = solve_static_dual(rewards, instance)
        np.testing.assert_allclose(solution.phi, [[0.5]], atol=1e-6)

    def test_sampled_uniform_rewards(self):
        instance = build_instance([0.5], T=1000)
        rewards = np.random.default_rng(4).random((20000, 1))
        solution = solve_static_dual(rewards, instance)
        np.testing.assert_allclose(solution.phi, [[0.5]], atol=0.02)

    def test_degenerate_rewards(self):
        generator = ArrivalGenerator(GeneratorKind.UNIFORM_SINGLE, m=1)
        instance = Instance(1, 1, 10, np.array([[1.0]]), 0.0, 3.0, 1.0,
                            ServiceMode.DETERMINISTIC, generator)
        solution = solve_static_dual(np.array([[0.7]]), instance, weights=np.array([1.0]))
        np.testing.assert_allclose(solution.phi, [[0.0]], atol=1e-9)
        assert solution.value == pytest.approx(0.7)

    def test_split_into_blocks(self):
        instance = build_instance([0.5], T=1000, alpha=0.2)
        solution = solve_static_dual(np.linspace(0.0, 1.0, 1001)[:, None], instance)
        np.testing.assert_allclose(solution.theta, [[0.2]])
        np.testing.assert_allclose(solution.lam, [[0.3]], atol=1e-6)

    def test_value_is_minimal(self):
        instance = build_instance([0.3, 0.4], T=100)
        rewards = np.random.default_rng(5).random((200, 2))
        targets = np.zeros(200, dtype=int)
        weights = np.ones(200)
        solution = solve_static_dual(rewards, instance)
        rho = instance.rho[:, 0]
        for shift in (np.array([0.05, 0.0]), np.array([0.0, -0.05]), np.array([0.03, 0.03])):
            phi = np.maximum(solution.phi[:, 0] + shift, 0.0)
            assert static_dual_function(phi, rewards, targets, weights, rho) >= (
                solution.value - 1e-7)

