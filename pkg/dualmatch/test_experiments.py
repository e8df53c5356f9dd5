import math

import numpy as np
import pandas as pd
import pytest

from dualmatch.algorithms import AlgorithmConfig
from dualmatch.experiments import (
    ExperimentConfig,
    estimate_regret,
    make_shift_pair,
    recipe_batch_table,
    recipe_dp_gap,
    recipe_dual_concentration,
    recipe_impossibility,
    recipe_misspecified_backlog,
    recipe_near_critical_ratio,
    recipe_shift_robustness,
    regret_columns,
    result_columns,
    run_experiment,
    run_recipe,
    shift_pools,
    sweep,
)
from dualmatch.instances import validate_instance
from dualmatch.misc import ConfigurationError, seeded_stream

two_algorithms = [AlgorithmConfig("ca-dl", zeta=0.1), AlgorithmConfig("co-dl")]


class TestRunExperiment:
    def test_tables(self, pair_instance, tmp_path):
        config = ExperimentConfig(pair_instance, two_algorithms, num_paths=3, seed=1,
                                  out_dir=tmp_path, diagnostics=True)
        results = run_experiment(config)
        assert list(results.columns) == result_columns
        assert len(results) == 6
        np.testing.assert_allclose(
            results["objective"],
            results["reward"] - pair_instance.alpha * results["overalloc"]
            - pair_instance.gamma * results["avg_backlog"],
            atol=1e-9,
        )
        assert len(pd.read_csv(tmp_path / "results.csv")) == 6
        diagnostics = pd.read_csv(tmp_path / "diagnostics.csv")
        assert len(diagnostics) == 3 * 2 * pair_instance.T
        assert {"z_1", "b_2", "theta_1", "lambda_2", "drift"} <= set(diagnostics.columns)

    def test_json_output(self, pair_instance, tmp_path):
        config = ExperimentConfig(pair_instance, two_algorithms, num_paths=2, out_dir=tmp_path,
                                  fmt="json")
        run_experiment(config)
        assert len(pd.read_json(tmp_path / "results.json")) == 4

    def test_reproducible(self, pair_instance):
        config = ExperimentConfig(pair_instance, two_algorithms, num_paths=4, seed=9)
        pd.testing.assert_frame_equal(run_experiment(config), run_experiment(config))

    def test_thread_count_does_not_matter(self, pair_instance, monkeypatch):
        config = ExperimentConfig(pair_instance, two_algorithms, num_paths=6, seed=2)
        monkeypatch.setenv("DUALMATCH_THREADS", "1")
        serial = run_experiment(config)
        monkeypatch.setenv("DUALMATCH_THREADS", "4")
        pd.testing.assert_frame_equal(serial, run_experiment(config))

    @pytest.mark.parametrize("changes", [{"num_paths": 0}, {"fmt": "xml"}, {"recipe": "nope"}])
    def test_invalid_config(self, pair_instance, changes):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(pair_instance, two_algorithms, **changes)

    def test_unknown_algorithm(self, pair_instance):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(pair_instance, [AlgorithmConfig("greedy-oracle")])

    def test_labels_separate_configurations(self, pair_instance):
        algorithms = [AlgorithmConfig("ca-dl", zeta=0.0, label="ca-dl-0"),
                      AlgorithmConfig("ca-dl", zeta=1.0, label="ca-dl-1")]
        results = run_experiment(ExperimentConfig(pair_instance, algorithms, num_paths=2))
        assert list(results["algo"].unique()) == ["ca-dl-0", "ca-dl-1"]


class TestRegret:
    def test_regret_is_non_negative(self, pair_instance, tmp_path):
        config = ExperimentConfig(pair_instance, two_algorithms, num_paths=4, out_dir=tmp_path)
        estimates = estimate_regret(config)
        assert set(estimates) == {"ca-dl", "co-dl"}
        for estimate in estimates.values():
            assert np.all(estimate.table["regret"] >= -1e-6)
            assert estimate.mean_regret == pytest.approx(estimate.mean_opt - estimate.mean_alg)
            assert estimate.std_error >= 0.0
        table = pd.read_csv(tmp_path / "regret.csv")
        assert list(table.columns) == regret_columns
        assert len(table) == 8


class TestSweep:
    def test_grid(self, pair_instance):
        table = sweep(pair_instance, [AlgorithmConfig("ca-dl")],
                      {"alpha": [1.0, 2.0], "gamma": [0.0, 5.0], "zeta": [0.0, 0.2]},
                      num_paths=2)
        assert len(table) == 8
        assert {"alpha", "gamma", "zeta", "algo", "objective"} <= set(table.columns)
        assert set(table["alpha"]) == {1.0, 2.0}

    def test_horizon(self, pair_instance):
        table = sweep(pair_instance, two_algorithms, {"T": [20, 40]}, num_paths=1)
        assert len(table) == 4

    def test_unknown_key(self, pair_instance):
        with pytest.raises(ConfigurationError):
            sweep(pair_instance, two_algorithms, {"rho": [0.1]})


class TestRecipes:
    def test_dual_concentration(self, tmp_path):
        frames = recipe_dual_concentration(T=64, num_paths=3, out_dir=tmp_path)
        snapshots = frames["phi_snapshots"]
        assert sorted(snapshots["t"].unique()) == [8, 16, 32]
        assert len(snapshots) == 9
        assert len(frames["mean_backlog"]) == 64
        assert frames["acceptance"]["mean_acceptance"].between(0.0, 1.0).all()
        assert (tmp_path / "phi_snapshots.csv").exists()

    def test_near_critical_ratio(self):
        frames = recipe_near_critical_ratio(T_list=(40, 80), num_paths=2)
        ratio = frames["ratio"]
        assert len(ratio) == 6
        assert set(ratio["regime"]) == {"stable", "near_critical", "critical"}
        np.testing.assert_allclose(ratio["gamma"], np.sqrt(ratio["T"]))
        assert len(frames["avg_backlog"]) == 12
        assert len(frames["acceptance"]) == 2 * 3 * (40 + 80)

    def test_unknown_regime(self):
        with pytest.raises(ConfigurationError):
            recipe_near_critical_ratio(T_list=(40,), num_paths=1, regime_names=("unstable",))

    def test_impossibility(self):
        frames = run_recipe("impossibility", T=60, num_paths=3)
        paths = frames["impossibility_paths"]
        assert len(paths) == 3
        # without a congestion cost the offline value fills the capacity
        np.testing.assert_allclose(paths["opt"], 30.0, atol=1e-6)
        assert frames["impossibility"]["mean_opt"].iloc[0] >= frames["impossibility"][
            "opt_bound"].iloc[0]

    def test_impossibility_with_congestion_cost(self):
        paths = run_recipe("impossibility", T=60, gamma=5.0, num_paths=3)["impossibility_paths"]
        assert np.all(paths["opt"] >= paths["service_following"] - 1e-6)
        assert np.all(paths["opt"] <= 30.0 + 1e-6)

    def test_dp_gap(self):
        frames = run_recipe("dp_gap", T_list=(20, 40), gamma_list=(1.0,))
        assert list(frames["dp_gap"]["T"]) == [20, 40]
        assert (frames["dp_gap"]["gap"] > 0.0).all()

    def test_shift_pair(self):
        pool_year, run_year = make_shift_pair(100)
        assert validate_instance(pool_year).ok and validate_instance(run_year).ok
        assert pool_year.m == run_year.m == 3

    def test_shift_pools_use_pool_streams(self):
        pool_year, run_year = make_shift_pair(40)
        stale, fresh = shift_pools(pool_year, run_year, 40, seed=3)
        expected = pool_year.arrival.sample(40, seeded_stream(3, 1, "pool"))
        np.testing.assert_array_equal(stale.rewards, expected.rewards)
        np.testing.assert_array_equal(stale.targets, expected.targets)
        again, _ = shift_pools(pool_year, run_year, 40, seed=3)
        np.testing.assert_array_equal(again.rewards, stale.rewards)
        other, _ = shift_pools(pool_year, run_year, 40, seed=4)
        assert not np.array_equal(other.rewards, stale.rewards)
        assert len(fresh) == 40

    def test_batch_table(self):
        frames = recipe_batch_table(T=60, num_paths=2, batch_size=10, iterations=2)
        table = frames["batch_table"]
        assert list(table["algo"]) == ["ro-learning", "ro-learning-b", "ro-learning-b-iterate"]
        assert {"objective_se", "employment_rate", "flagged_affiliates"} <= set(table.columns)
        assert len(frames["batch_paths"]) == 6

    def test_shift_robustness(self):
        frames = recipe_shift_robustness(T=20, num_paths=2, replications=2)
        assert list(frames["shift_robustness"]["algo"]) == [
            "sampling-stale-pool", "sampling-fresh-pool", "ro-learning", "ca-dl"]

    def test_misspecified_backlog(self):
        frames = recipe_misspecified_backlog(T=50, num_paths=2)
        assert list(frames["misspecified"]["algo"]) == ["ca-dl", "ca-dl-sim", "co-dl"]
        assert len(frames["misspecified_backlog"]) == 150

    def test_unknown_recipe(self):
        with pytest.raises(ConfigurationError):
            run_recipe("nope")


@pytest.mark.slow
class TestAcceptance:
    @pytest.fixture(scope="class")
    def near_critical(self):
        return run_recipe("near_critical_ratio", T_list=(500, 1000, 2000, 4000), num_paths=500,
                          regime_names=("near_critical",), acceptance_series=False)

    def test_dual_concentrates_and_backlog_stays_bounded(self):
        T = 2000
        # the spread of phi scales with sqrt(k / sqrt(t)); k = 1 is too wide for +-0.05
        frames = run_recipe("dual_concentration", T=T, num_paths=1000, k=0.25)
        snapshots = frames["phi_snapshots"]
        phi = snapshots.loc[snapshots["t"] == T // 2, "phi"]
        assert abs(phi.mean() - 0.5) <= 0.02
        low, high = phi.quantile([0.05, 0.95])
        assert 0.45 <= low and high <= 0.55
        backlog = frames["mean_backlog"]["mean_backlog"].to_numpy()
        assert backlog.max() <= 15.0
        # no upward drift over the second half of the horizon
        third, fourth = backlog[T // 2:3 * T // 4], backlog[3 * T // 4:]
        assert fourth.mean() <= third.mean() + 0.5

    def test_oblivious_to_aware_ratio_grows(self, near_critical):
        ratio = near_critical["ratio"].set_index("T")["ratio"]
        assert ratio.is_monotonic_increasing
        assert ratio[4000] / ratio[500] >= 1.5

    def test_oblivious_backlog_grows_near_critical(self, near_critical):
        backlog = near_critical["avg_backlog"]
        co = backlog[backlog["algo"] == "co-dl"].set_index("T")["avg_backlog"]
        assert co[4000] >= 1.5 * co[1000]

    def test_impossibility_instance(self):
        T = 2500
        frames = run_recipe("impossibility", T=T, num_paths=1000)
        summary = frames["impossibility"].iloc[0]
        assert summary["mean_opt"] >= summary["opt_bound"]
        paths = frames["impossibility_paths"]
        busy = paths[paths["accepted"] >= 0.25 * T]
        if len(busy):
            bound = 0.5 * 0.25 * T - 3.0 * math.sqrt(T) * math.log(T)
            assert busy["total_backlog"].mean() >= bound

    def test_batched_ordering(self):
        table = run_recipe("batch_table", T=600, num_paths=20)["batch_table"].set_index("algo")
        objective = table["objective"]
        assert objective["ro-learning-b"] <= objective["ro-learning"]
        assert objective["ro-learning-b-iterate"] >= objective["ro-learning-b"]
