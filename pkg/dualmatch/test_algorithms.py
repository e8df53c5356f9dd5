import math
from dataclasses import replace

import numpy as np
import pytest

from dualmatch.algorithms import (
    AlgorithmConfig,
    DualState,
    MatchingPolicy,
    cadl_decide,
    cadl_update,
    codl_update,
    min_backlog_decide,
    multiplicative_step,
    random_decide,
    random_probabilities,
    ro_learning_decide,
)
from dualmatch.batching import (
    batch_b_decide,
    batch_b_update,
    batch_iterate_decide,
)
from dualmatch.conftest import build_instance, random_path
from dualmatch.misc import ConfigurationError, InfeasibleDecisionError
from dualmatch.model import ArrivalType, PathState, ServiceMode
from dualmatch.offline import solve_surrogate_primal
from dualmatch.sampling import adjusted_reward, sampling_decide
from dualmatch.simulate import build_policy, run_episode, sample_path


def duals_from(theta, lam, zeta=0.0, eta=0.1):
    return DualState(np.asarray(theta, dtype=float).reshape(-1, 1),
                     np.asarray(lam, dtype=float).reshape(-1, 1), zeta=zeta, eta=eta)


class TestCongestionAware:
    def test_tied_case_is_forced(self, pair_instance):
        duals = DualState.initial(pair_instance, eta=0.1)
        state = PathState.initial(pair_instance)
        z = cadl_decide(duals, state, ArrivalType(np.array([0.1, 0.2]), 2))
        np.testing.assert_array_equal(z, [0.0, 1.0])

    def test_scores_with_backlog(self, pair_instance):
        duals = duals_from([0.1, 0.0], [0.2, 0.1], zeta=0.5)
        state = replace(PathState.initial(pair_instance), backlog=np.array([[0.0], [1.0]]))
        z = cadl_decide(duals, state, ArrivalType(np.array([0.9, 0.8]), 0))
        np.testing.assert_array_equal(z, [1.0, 0.0])

    def test_negative_scores_leave_case_unmatched(self, pair_instance):
        duals = DualState.initial(pair_instance, eta=0.1)
        state = PathState.initial(pair_instance)
        z = cadl_decide(duals, state, ArrivalType(np.array([0.1, 0.1]), 0))
        np.testing.assert_array_equal(z, [0.0, 0.0])

    def test_global_capacity_gate(self, pair_instance):
        duals = duals_from([0.0, 0.0], [0.0, 0.0])
        state = replace(PathState.initial(pair_instance), remaining=np.array([[0.0], [20.0]]))
        z = cadl_decide(duals, state, ArrivalType(np.array([0.2, 0.9]), 0))
        np.testing.assert_array_equal(z, [0.0, 0.0])


class TestDualUpdates:
    def test_zero_step(self, single_instance):
        duals = DualState.initial(single_instance, eta=0.0)
        updated = cadl_update(duals, np.array([1.0]), single_instance)
        np.testing.assert_array_equal(updated.theta, duals.theta)
        np.testing.assert_array_equal(updated.lam, duals.lam)
        assert updated.t == 2

    def test_closed_form_step(self, single_instance):
        duals = DualState.initial(single_instance, eta=0.1)
        updated = cadl_update(duals, np.array([1.0]), single_instance)
        np.testing.assert_allclose(updated.theta, [[0.386741]], rtol=1e-6)
        np.testing.assert_allclose(updated.lam, [[0.386741]], rtol=1e-6)

    def test_caps_bind(self, single_instance):
        duals = duals_from([3.0], [single_instance.lambda_cap], eta=0.1)
        updated = cadl_update(duals, np.array([1.0]), single_instance)
        np.testing.assert_array_equal(updated.theta, [[3.0]])
        np.testing.assert_array_equal(updated.lam, [[single_instance.lambda_cap]])

    @pytest.mark.parametrize("step", [0.05, 0.3, 2.0])
    def test_matches_entropic_mirror_step(self, step):
        instance = build_instance([0.2, 0.3, 0.4], T=100, alpha=1.5, l=2)
        rng = np.random.default_rng(11)
        theta = rng.uniform(0.01, instance.alpha, size=(3, 2))
        lam = rng.uniform(0.01, instance.lambda_cap, size=(3, 2))
        # first affiliate sits at both caps, a positive gradient must keep it there
        theta[0], lam[0] = instance.alpha, instance.lambda_cap
        gradient = rng.uniform(-1.0, 3.0, size=(3, 2))
        gradient[0] = 1.0
        duals = DualState(theta, lam, eta=step)
        updated = multiplicative_step(duals, gradient, instance, step)

        def mirror(x0, g, cap):
            # argmax over (0, cap] of step * g * x - (x log(x / x0) - x + x0)
            return min(math.exp(math.log(x0) + step * g), cap)

        for i in range(3):
            for j in range(2):
                expected_theta = mirror(theta[i, j], gradient[i, j], instance.alpha)
                expected_lam = mirror(lam[i, j], gradient[i, j], instance.lambda_cap)
                assert updated.theta[i, j] == pytest.approx(expected_theta, rel=1e-12)
                assert updated.lam[i, j] == pytest.approx(expected_lam, rel=1e-12)
        np.testing.assert_array_equal(updated.theta[0], instance.alpha)
        np.testing.assert_array_equal(updated.lam[0], instance.lambda_cap)
        assert updated.t == duals.t + 1

    def test_schedule(self):
        assert DualState(np.ones((1, 1)), np.ones((1, 1)), k=1.0, t=4).step_size() == 0.5

    def test_oblivious_update_needs_schedule(self, single_instance):
        duals = DualState.initial(single_instance, eta=0.1)
        with pytest.raises(ConfigurationError):
            codl_update(duals, np.array([1.0]), single_instance)

    @pytest.mark.parametrize("eta,k", [(None, None), (0.1, 1.0)])
    def test_exactly_one_step_rule(self, single_instance, eta, k):
        with pytest.raises(ConfigurationError):
            DualState.initial(single_instance, eta=eta, k=k)


class TestROLearning:
    def test_only_affiliate_with_room(self, pair_instance):
        duals = duals_from([0.0, 0.0], [0.0, 0.0])
        state = replace(PathState.initial(pair_instance), remaining=np.array([[0.0], [5.0]]),
                        cum_free=np.array([[15.0], [0.0]]))
        z = ro_learning_decide(duals, state, ArrivalType(np.array([0.9, 0.1]), 0))
        np.testing.assert_array_equal(z, [0.0, 1.0])

    def test_negative_scores_allowed(self, pair_instance):
        duals = duals_from([0.2, 0.2], [0.2, 0.2])
        state = PathState.initial(pair_instance)
        z = ro_learning_decide(duals, state, ArrivalType(np.array([0.1, 0.3]), 0))
        np.testing.assert_array_equal(z, [0.0, 1.0])

    def test_tied_case(self, pair_instance):
        duals = duals_from([0.2, 0.2], [0.2, 0.2])
        z = ro_learning_decide(duals, PathState.initial(pair_instance),
                               ArrivalType(np.array([0.1, 0.3]), 1))
        np.testing.assert_array_equal(z, [1.0, 0.0])

    def test_nothing_fits(self, pair_instance):
        duals = duals_from([0.0, 0.0], [0.0, 0.0])
        state = replace(PathState.initial(pair_instance), remaining=np.array([[0.0], [0.0]]))
        z = ro_learning_decide(duals, state, ArrivalType(np.array([0.9, 0.1]), 0))
        np.testing.assert_array_equal(z, [0.0, 0.0])


class TestBaselines:
    def test_random_proportional_to_capacity(self):
        instance = build_instance([0.4, 0.6], T=10)
        probs = random_probabilities(PathState.initial(instance),
                                     ArrivalType(np.array([0.5, 0.5]), 0))
        np.testing.assert_allclose(probs, [0.4, 0.6])

    def test_random_single_affiliate(self, single_instance, rng):
        state = PathState.initial(single_instance)
        for _ in range(5):
            z = random_decide(state, ArrivalType(np.array([0.3]), 0), rng)
            np.testing.assert_array_equal(z, [1.0])

    def test_min_backlog(self, rng):
        instance = build_instance([0.3, 0.3, 0.3], T=30)
        state = replace(PathState.initial(instance), backlog=np.array([[2.0], [0.0], [5.0]]))
        z = min_backlog_decide(state, ArrivalType(np.array([0.9, 0.1, 0.5]), 0), rng)
        np.testing.assert_array_equal(z, [0.0, 1.0, 0.0])


class TestSampling:
    def test_waiting_penalty(self):
        np.testing.assert_allclose(adjusted_reward(0.8, 3.0, 2.0, 10.0, 100), 0.7)

    def test_no_backlog_no_penalty(self):
        np.testing.assert_allclose(adjusted_reward([0.8, 0.4], [0.0, 0.0], [0.5, 0.5], 10.0, 100),
                                   [0.8, 0.4])

    @pytest.mark.parametrize("seed", range(5))
    def test_true_future_reproduces_hindsight_step(self, seed):
        rng = np.random.default_rng(seed)
        instance = build_instance([0.3, 0.4], T=20, alpha=3.0, gamma=0.0, tied_probs=[0.1, 0.1])
        path = random_path(rng, 20, 2, tied_share=0.2)
        targets = path.targets.copy()
        targets[0] = 0
        path = replace(path, targets=targets)
        z = sampling_decide(PathState.initial(instance), path[0], None, 1, rng, instance,
                            futures=[path.tail(1)])
        first = solve_surrogate_primal(path, instance).decisions[0]
        expected = np.zeros(2)
        if first.max() > 0.5:
            expected[int(np.argmax(first))] = 1.0
        np.testing.assert_array_equal(z, expected)

    def test_needs_pool(self, pair_instance):
        empty_pool = sample_path(pair_instance, 0, 0).tail(50)
        with pytest.raises(ConfigurationError):
            build_policy(AlgorithmConfig("sampling", pool=empty_pool), pair_instance)


class TestBatching:
    def test_two_cases_share_one_unit(self):
        instance = build_instance([0.1, 0.5], T=10)
        duals = duals_from([0.0, 0.0], [0.0, 0.0])
        batch = [ArrivalType(np.array([0.9, 0.5]), 0), ArrivalType(np.array([0.8, 0.6]), 0)]
        decisions = batch_b_decide(duals, PathState.initial(instance), batch, instance)
        np.testing.assert_array_equal(decisions[0], [1.0, 0.0])
        np.testing.assert_array_equal(decisions[1], [0.0, 1.0])

    def test_all_tied_batch(self, pair_instance):
        duals = DualState.initial(pair_instance, eta=0.2)
        batch = [ArrivalType(np.array([0.5, 0.5]), 1), ArrivalType(np.array([0.5, 0.5]), 1)]
        decisions = batch_b_decide(duals, PathState.initial(pair_instance), batch, pair_instance)
        for z in decisions:
            np.testing.assert_array_equal(z, [1.0, 0.0])
        updated = batch_b_update(duals, decisions, batch, pair_instance)
        gradient = np.array([[2.0], [0.0]]) - 2.0 * pair_instance.rho
        np.testing.assert_allclose(updated.theta, duals.theta * np.exp(0.2 * gradient))

    def test_single_iteration_matches_batch_program(self, rng):
        instance = build_instance([0.3, 0.4], T=30, gamma=0.0)
        duals = DualState.initial(instance, eta=0.2)
        state = PathState.initial(instance)
        batch = [ArrivalType(rng.random(2), 0) for _ in range(4)]
        iterated, _ = batch_iterate_decide(duals, state, batch, instance, L=1)
        single = batch_b_decide(duals, state, batch, instance)
        for a, b in zip(iterated, single):
            np.testing.assert_array_equal(a, b)

    def test_iterations_compose_to_one_step(self):
        instance = build_instance([0.5, 0.4], T=20, gamma=0.0)
        duals = DualState.initial(instance, eta=0.3)
        batch = [ArrivalType(np.array([0.5, 0.5]), 2)]
        decisions, iterated = batch_iterate_decide(duals, PathState.initial(instance), batch,
                                                   instance, L=4)
        np.testing.assert_array_equal(decisions[0], [0.0, 1.0])
        once = cadl_update(duals, decisions[0], instance)
        np.testing.assert_allclose(iterated.theta, once.theta, rtol=1e-12)
        np.testing.assert_allclose(iterated.lam, once.lam, rtol=1e-12)
        assert iterated.t == once.t

    def test_unit_batches_reduce_to_ro_learning(self, pair_instance):
        for p in range(3):
            runs = [
                run_episode(AlgorithmConfig(name, eta=0.2, zeta=0.1, batch_size=1),
                            pair_instance, p, seed=5, diagnostics=True)
                for name in ("ro-learning", "ro-learning-b")
            ]
            a, b = (r.diagnostics for r in runs)
            np.testing.assert_array_equal(a["decisions"], b["decisions"])
            np.testing.assert_array_equal(a["theta"], b["theta"])
            np.testing.assert_array_equal(a["lam"], b["lam"])

    def test_iterate_policy_runs(self, pair_instance):
        config = AlgorithmConfig("ro-learning-b-iterate", eta=0.2, zeta=0.1, batch_size=10,
                                 iterations=3)
        result = run_episode(config, pair_instance, 0, seed=1, diagnostics=True)
        assert np.all(result.diagnostics["backlog"] >= 0.0)
        assert np.isfinite(result.objective)

    def test_invalid_iteration_count(self, pair_instance):
        duals = DualState.initial(pair_instance, eta=0.1)
        with pytest.raises(ConfigurationError):
            batch_iterate_decide(duals, PathState.initial(pair_instance),
                                 [ArrivalType(np.array([0.5, 0.5]), 0)], pair_instance, L=0)


class AlwaysFirst(MatchingPolicy):
    name = "always-first"

    def decide(self, state, arrival):
        z = np.zeros(arrival.m)
        z[0] = 1.0
        return z


class TestRunEpisode:
    def test_deterministic(self, pair_instance):
        config = AlgorithmConfig("ca-dl", zeta=0.1)
        a = run_episode(config, pair_instance, 3, seed=2, diagnostics=True)
        b = run_episode(config, pair_instance, 3, seed=2, diagnostics=True)
        assert a.objective == b.objective
        np.testing.assert_array_equal(a.diagnostics["decisions"], b.diagnostics["decisions"])

    def test_common_random_numbers(self, pair_instance):
        a, b = sample_path(pair_instance, 4, 1), sample_path(pair_instance, 4, 1)
        np.testing.assert_array_equal(a.rewards, b.rewards)
        np.testing.assert_array_equal(a.services, b.services)
        c = sample_path(pair_instance, 4, 2)
        assert not np.array_equal(a.rewards, c.rewards)

    def test_oblivious_ignores_services(self):
        instance = build_instance([0.5], T=200, epsilon=0.1)
        reference = None
        for service_seed in range(10):
            path = sample_path(instance, 0, 0, service_seed=service_seed)
            result = run_episode(AlgorithmConfig("co-dl", k=1.0), instance, 0, path=path,
                                 diagnostics=True)
            if reference is None:
                reference = result.diagnostics["decisions"]
            np.testing.assert_array_equal(result.diagnostics["decisions"], reference)

    def test_oblivious_equals_aware_with_same_schedule(self, pair_instance):
        for p in range(5):
            aware = run_episode(AlgorithmConfig("ca-dl", k=1.0, zeta=0.0), pair_instance, p,
                                diagnostics=True)
            oblivious = run_episode(AlgorithmConfig("co-dl", k=1.0), pair_instance, p,
                                    diagnostics=True)
            np.testing.assert_array_equal(aware.diagnostics["decisions"],
                                          oblivious.diagnostics["decisions"])

    @pytest.mark.parametrize("name", ["co-dl", "ca-dl"])
    def test_runs_survive_tied_overflow(self, pair_instance, name):
        for p in range(5):
            path = sample_path(pair_instance, 8, p)
            result = run_episode(AlgorithmConfig(name, k=1.0), pair_instance, p, seed=8,
                                 path=path, diagnostics=True)
            free = path.targets == 0
            used = result.diagnostics["decisions"][free].sum(axis=0)
            assert np.all(used <= pair_instance.capacity[:, 0] + 1e-9)

    def test_backlog_price_is_scaled_backlog(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            m = int(rng.integers(1, 4))
            rho = rng.uniform(0.1, 0.3, size=m)
            instance = build_instance(rho, T=120, epsilon=rng.uniform(0.0, 0.2),
                                      tied_probs=rho * 0.3)
            zeta = float(rng.uniform(0.05, 1.0))
            path = sample_path(instance, trial, 0)
            result = run_episode(AlgorithmConfig("ca-dl", zeta=zeta), instance, 0, seed=trial,
                                 path=path, diagnostics=True)
            decisions = result.diagnostics["decisions"]
            backlog = result.diagnostics["backlog"][:, :, 0]
            beta = np.zeros(m)
            for t in range(instance.T):
                beta = np.maximum(beta + zeta * (decisions[t] - path.services[t, :, 0]), 0.0)
                np.testing.assert_allclose(beta, zeta * backlog[t], rtol=1e-9, atol=1e-12)

    def test_infeasible_policy(self, single_instance):
        with pytest.raises(InfeasibleDecisionError):
            run_episode(AlwaysFirst(single_instance), single_instance, 0)

    def test_unknown_algorithm(self, single_instance):
        with pytest.raises(NotImplementedError):
            build_policy(AlgorithmConfig("greedy"), single_instance)

    def test_simulated_backlog_variant(self):
        instance = build_instance([0.5], T=100, epsilon=0.01, gamma=10.0)
        config = AlgorithmConfig("ca-dl-sim", eta=0.5, zeta=0.5, service_estimate=0.6)
        policy = build_policy(config, instance, np.random.default_rng(0))
        result = run_episode(policy, instance, 0)
        assert np.all(policy.simulated_backlog >= 0.0)
        assert result.stopping_time <= instance.T

    @pytest.mark.parametrize("name", ["random", "min-backlog", "sampling", "co-dl"])
    def test_baselines_stay_feasible(self, pair_instance, name):
        instance = pair_instance.with_params(T=15)
        config = AlgorithmConfig(name, replications=2)
        result = run_episode(config, instance, 0, seed=3)
        assert result.over_allocation >= 0.0

    def test_invariants_on_random_instances(self):
        rng = np.random.default_rng(99)
        T = 200
        for _ in range(50):
            m = int(rng.integers(1, 4))
            rho = rng.uniform(0.1, 0.5, size=m)
            tied = rho * rng.uniform(0.0, 0.5, size=m)
            mode = ServiceMode.DETERMINISTIC if rng.random() < 0.2 else ServiceMode.BERNOULLI
            instance = build_instance(rho, T=T, epsilon=rng.uniform(0.0, 0.3), alpha=2.0,
                                      gamma=rng.uniform(0.0, 5.0), service_mode=mode,
                                      tied_probs=tied)
            config = AlgorithmConfig("ca-dl", eta=1.0 / math.sqrt(T), zeta=rng.uniform(0.0, 0.5))
            result = run_episode(config, instance, 0, seed=int(rng.integers(1000)),
                                 diagnostics=True)
            series = result.diagnostics
            assert np.all(series["theta"] > 0.0)
            assert np.all(series["theta"] <= instance.alpha + 1e-12)
            assert np.all(series["lam"] <= instance.lambda_cap + 1e-12)
            assert np.all(series["backlog"] >= 0.0)
            assert np.all(series["drift_lower"] <= series["drift"] + 1e-9)
            assert np.all(series["drift"] <= series["drift_upper"] + 1e-9)
            np.testing.assert_allclose(
                result.objective,
                result.total_reward - instance.alpha * result.over_allocation
                - instance.gamma * result.avg_backlog,
                atol=1e-9,
            )
