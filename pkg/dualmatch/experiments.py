#  Copyright (C) 2024 by the dualmatch authors
#
#  This file is part of dualmatch.
#
#  dualmatch is free software: you can redistribute it and/or modify
#  it under the terms of the GNU Lesser General Public License as published
#  by the Free Software Foundation, either version 3 of the License, or
#  (at your option) any later version.
#
#  dualmatch is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#  GNU Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public License
#  along with dualmatch. If not, see <http:www.gnu.org/licenses/>.
#
"""Monte-Carlo regret estimation, sweeps and canonical experiment recipes."""
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from dualmatch.algorithms import AlgorithmConfig
from dualmatch.dp_oracle import dp_oracle_single_affiliate
from dualmatch.instances import (
    Trace,
    make_lower_bound_instance,
    make_synthetic_multi,
    make_uniform_single,
    validate_instance,
)
from dualmatch.misc import ConfigurationError, SolverError, ordered_map, seeded_stream
from dualmatch.model import Instance, RunResult, flagged_over_allocation
from dualmatch.offline import solve_opt
from dualmatch.simulate import get_algorithm_by_name, run_episode, sample_path

result_columns = ["path", "algo", "reward", "overalloc", "avg_backlog", "objective",
                  "stopping_time"]
regret_columns = ["path", "opt", "algo", "alg_value", "regret"]


@dataclass
class ExperimentConfig:
    instance: Instance
    algorithms: list[AlgorithmConfig]
    num_paths: int = 100
    seed: int = 0
    out_dir: Optional[Path] = None
    fmt: str = "csv"
    diagnostics: bool = False
    recipe: Optional[str] = None
    verbose: bool = False

    def __post_init__(self):
        if self.num_paths < 1:
            raise ConfigurationError("num_paths must be at least 1.")
        if self.fmt not in ("csv", "json"):
            raise ConfigurationError(f"Unknown output format '{self.fmt}'.")
        if self.recipe is not None and self.recipe not in recipes:
            raise ConfigurationError(f"Unknown recipe '{self.recipe}'.")
        for algorithm in self.algorithms:
            try:
                get_algorithm_by_name(algorithm.name)
            except NotImplementedError as err:
                raise ConfigurationError(str(err))


@dataclass
class RegretEstimate:
    algo: str
    mean_opt: float
    mean_alg: float
    mean_regret: float
    std_error: float
    table: pd.DataFrame = field(repr=False)

    @classmethod
    def from_table(cls, algo: str, table: pd.DataFrame) -> "RegretEstimate":
        regret = table["regret"].to_numpy()
        std_error = float(regret.std(ddof=1) / math.sqrt(regret.size)) if regret.size > 1 else 0.0
        return cls(
            algo=algo,
            mean_opt=float(table["opt"].mean()),
            mean_alg=float(table["alg_value"].mean()),
            mean_regret=float(regret.mean()),
            std_error=std_error,
            table=table,
        )


def results_row(path: int, algo: str, result: RunResult) -> dict:
    return {
        "path": path,
        "algo": algo,
        "reward": result.total_reward,
        "overalloc": result.over_allocation,
        "avg_backlog": result.avg_backlog,
        "objective": result.objective,
        "stopping_time": result.stopping_time,
    }


def diagnostics_frame(path: int, algo: str, result: RunResult) -> pd.DataFrame:
    """Long-format per-period series of one run (base model columns per affiliate)."""
    series = result.diagnostics
    T, m = series["decisions"].shape
    frame = {"path": path, "algo": algo, "t": np.arange(1, T + 1)}
    for i in range(m):
        frame[f"z_{i + 1}"] = series["decisions"][:, i]
        frame[f"b_{i + 1}"] = series["backlog"][:, i].sum(axis=1)
        frame[f"theta_{i + 1}"] = series["theta"][:, i, 0]
        frame[f"lambda_{i + 1}"] = series["lam"][:, i, 0]
    for key in ("drift", "pseudo_reward", "drift_lower", "drift_upper"):
        if key in series:
            frame[key] = series[key]
    return pd.DataFrame(frame)


def write_table(frame: pd.DataFrame, out_dir: Union[str, Path], name: str, fmt: str = "csv"
                ) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{name}.{fmt}"
    if fmt == "csv":
        frame.to_csv(target, index=False)
    elif fmt == "json":
        frame.to_json(target, orient="records", indent=2)
    else:
        raise ConfigurationError(f"Unknown output format '{fmt}'.")
    return target


def _check_instance(instance: Instance, verbose: bool):
    report = validate_instance(instance)
    report.raise_for_errors()
    report.emit_warnings()
    if verbose:
        for message in report.warnings:
            print(f"Warning: {message}")


def run_experiment(config: ExperimentConfig) -> pd.DataFrame:
    """All configured algorithms on every path, one results row per (path, algorithm)."""
    _check_instance(config.instance, config.verbose)

    def job(p: int):
        path = sample_path(config.instance, config.seed, p)
        rows, frames = [], []
        for algorithm in config.algorithms:
            result = run_episode(algorithm, config.instance, p, config.seed, path=path,
                                 diagnostics=config.diagnostics)
            rows.append(results_row(p, algorithm.display_name, result))
            if config.diagnostics:
                frames.append(diagnostics_frame(p, algorithm.display_name, result))
        return rows, frames

    if config.verbose:
        print(f"Simulating {config.num_paths} paths ...")
    outcome = ordered_map(job, range(config.num_paths), verbose=config.verbose, desc="paths")
    results = pd.DataFrame([row for rows, _ in outcome for row in rows], columns=result_columns)
    if config.out_dir is not None:
        write_table(results, config.out_dir, "results", config.fmt)
        if config.diagnostics:
            frames = [frame for _, frames in outcome for frame in frames]
            write_table(pd.concat(frames, ignore_index=True), config.out_dir, "diagnostics",
                        config.fmt)
    return results


def estimate_regret(config: ExperimentConfig) -> dict[str, RegretEstimate]:
    """Paired OPT - ALG over common random numbers.

    Parameters
    ----------
    config: ExperimentConfig

    Returns
    ----------
    dict
        One RegretEstimate per algorithm label.
    """
    instance = config.instance
    _check_instance(instance, config.verbose)

    def job(p: int) -> list[dict]:
        path = sample_path(instance, config.seed, p)
        try:
            opt = solve_opt(path, instance).objective_value
        except SolverError as err:
            raise SolverError(f"{err} (path {p}, seed {config.seed})")
        rows = []
        for algorithm in config.algorithms:
            value = run_episode(algorithm, instance, p, config.seed, path=path).objective
            rows.append({"path": p, "opt": opt, "algo": algorithm.display_name,
                         "alg_value": value, "regret": opt - value})
        return rows

    if config.verbose:
        print(f"Estimating regret over {config.num_paths} paths ...")
    rows = ordered_map(job, range(config.num_paths), verbose=config.verbose, desc="paths")
    table = pd.DataFrame([row for chunk in rows for row in chunk], columns=regret_columns)
    if config.out_dir is not None:
        write_table(table, config.out_dir, "regret", config.fmt)
    estimates = {}
    for algorithm in config.algorithms:
        label = algorithm.display_name
        part = table[table["algo"] == label].reset_index(drop=True)
        estimates[label] = RegretEstimate.from_table(label, part)
    return estimates


sweep_instance_keys = ("alpha", "gamma", "epsilon", "T")
sweep_algorithm_keys = ("eta", "zeta", "k")


def sweep(
    instance: Instance,
    algorithms: Sequence[AlgorithmConfig],
    grid: dict[str, Sequence[float]],
    num_paths: int = 10,
    seed: int = 0,
    verbose: bool = False,
) -> pd.DataFrame:
    """Aggregate results over the Cartesian grid of instance and step-size parameters."""
    unknown = set(grid) - set(sweep_instance_keys) - set(sweep_algorithm_keys)
    if unknown:
        raise ConfigurationError(f"Cannot sweep over {sorted(unknown)}.")
    keys = list(grid)
    rows = []
    combos = list(itertools.product(*(grid[key] for key in keys)))
    if verbose:
        print(f"Sweeping {len(combos)} parameter combinations ...")
    for combo in combos:
        setting = dict(zip(keys, combo))
        changes = {k: v for k, v in setting.items() if k in sweep_instance_keys}
        if "T" in changes:
            changes["T"] = int(changes["T"])
        swept = instance.with_params(**changes) if changes else instance
        configs = [
            replace(a, **{k: v for k, v in setting.items() if k in sweep_algorithm_keys})
            for a in algorithms
        ]
        results = run_experiment(ExperimentConfig(swept, configs, num_paths, seed))
        for algo, part in results.groupby("algo", sort=False):
            row = dict(setting, algo=algo)
            for column in ("reward", "overalloc", "avg_backlog", "objective"):
                row[column] = float(part[column].mean())
            rows.append(row)
    return pd.DataFrame(rows)


#
# recipes
#


def _write_all(frames: dict[str, pd.DataFrame], out_dir, fmt: str) -> dict[str, pd.DataFrame]:
    if out_dir is not None:
        for name, frame in frames.items():
            write_table(frame, out_dir, name, fmt)
    return frames


def recipe_dual_concentration(
    T: int = 2000, num_paths: int = 1000, seed: int = 0, k: float = 1.0,
    out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    """CO-DL on a single affiliate with uniform rewards, rho = 0.5 and slack 0.1."""
    instance = make_uniform_single(T, rho=0.5, epsilon=0.1)
    algorithm = AlgorithmConfig("co-dl", k=k)
    snapshots = sorted({max(1, round(math.sqrt(T))), max(1, round(T ** (2.0 / 3.0))), T // 2})

    def job(p: int):
        result = run_episode(algorithm, instance, p, seed, diagnostics=True)
        series = result.diagnostics
        phi = (series["theta"] + series["lam"])[:, 0, 0]
        return (phi[[t - 1 for t in snapshots]], series["backlog"][:, 0, 0],
                series["decisions"][:, 0])

    if verbose:
        print(f"Running CO-DL on {num_paths} paths of length {T} ...")
    outcome = ordered_map(job, range(num_paths), verbose=verbose, desc="paths")
    phi = np.array([o[0] for o in outcome])
    backlog = np.array([o[1] for o in outcome])
    accepted = np.array([o[2] for o in outcome])
    frames = {
        "phi_snapshots": pd.DataFrame({
            "t": np.repeat(snapshots, num_paths),
            "path": np.tile(np.arange(num_paths), len(snapshots)),
            "phi": phi.T.ravel(),
        }),
        "mean_backlog": pd.DataFrame({"t": np.arange(1, T + 1), "mean_backlog": backlog.mean(0)}),
        "acceptance": pd.DataFrame({"t": np.arange(1, T + 1), "mean_acceptance": accepted.mean(0)}),
    }
    return _write_all(frames, out_dir, fmt)


regimes = {
    "stable": lambda T: 0.1,
    "near_critical": lambda T: 0.5 / math.sqrt(T),
    "critical": lambda T: 0.5 / T,
}


def _near_critical_algorithms(T: int, gamma: float, regime: str) -> list[AlgorithmConfig]:
    zeta = 10.0 / math.sqrt(T) if regime == "stable" else math.sqrt(gamma / T)
    return [
        AlgorithmConfig("ca-dl", eta=1.0 / math.sqrt(T), zeta=zeta),
        AlgorithmConfig("co-dl", k=1.0),
    ]


def recipe_near_critical_ratio(
    T_list: Sequence[int] = (500, 1000, 2000, 4000),
    num_paths: int = 500,
    seed: int = 0,
    regime_names: Sequence[str] = ("stable", "near_critical", "critical"),
    acceptance_series: bool = True,
    out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    """Diff^CO / Diff^CA with gamma = sqrt(T) across horizons and slack regimes."""
    ratio_rows, acceptance_frames, backlog_rows = [], [], []
    for T, regime in itertools.product(T_list, regime_names):
        if regime not in regimes:
            raise ConfigurationError(f"Unknown regime '{regime}'.")
        gamma = math.sqrt(T)
        epsilon = regimes[regime](T)
        instance = make_uniform_single(T, rho=0.5, epsilon=epsilon, gamma=gamma)
        algorithms = _near_critical_algorithms(T, gamma, regime)

        def job(p: int):
            path = sample_path(instance, seed, p)
            opt = solve_opt(path, instance).objective_value
            runs = [run_episode(a, instance, p, seed, path=path, diagnostics=acceptance_series)
                    for a in algorithms]
            return opt, runs

        if verbose:
            print(f"T = {T}, regime {regime}: {num_paths} paths ...")
        outcome = ordered_map(job, range(num_paths), verbose=verbose, desc=f"T={T}")
        opt = np.array([o[0] for o in outcome])
        diffs = {}
        for k, algorithm in enumerate(algorithms):
            results = [o[1][k] for o in outcome]
            diffs[algorithm.name] = float(np.mean(opt - np.array([r.objective for r in results])))
            backlog_rows.append({"T": T, "regime": regime, "algo": algorithm.name,
                                 "avg_backlog": float(np.mean([r.avg_backlog for r in results]))})
            if acceptance_series:
                accepted = np.mean([r.diagnostics["decisions"][:, 0] for r in results], axis=0)
                acceptance_frames.append(pd.DataFrame({
                    "T": T, "regime": regime, "algo": algorithm.name,
                    "t": np.arange(1, T + 1), "mean_acceptance": accepted,
                }))
        ratio_rows.append({
            "T": T, "regime": regime, "epsilon": epsilon, "gamma": gamma,
            "diff_co": diffs["co-dl"], "diff_ca": diffs["ca-dl"],
            "ratio": diffs["co-dl"] / diffs["ca-dl"] if diffs["ca-dl"] != 0.0 else np.inf,
        })
    frames = {"ratio": pd.DataFrame(ratio_rows), "avg_backlog": pd.DataFrame(backlog_rows)}
    if acceptance_series:
        frames["acceptance"] = pd.concat(acceptance_frames, ignore_index=True)
    return _write_all(frames, out_dir, fmt)


def recipe_impossibility(
    T: int = 2500, gamma: float = 0.0, num_paths: int = 1000, seed: int = 0,
    epsilon: float = 0.0, out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    """All-ones free arrivals at capacity T / 2: offline value against CA-DL congestion."""
    instance = make_lower_bound_instance("I3", T, epsilon, gamma=gamma)
    algorithm = AlgorithmConfig("ca-dl", eta=1.0 / math.sqrt(T), zeta=10.0 / math.sqrt(T))

    def job(p: int) -> dict:
        path = sample_path(instance, seed, p)
        opt = solve_opt(path, instance).objective_value
        result = run_episode(algorithm, instance, p, seed, path=path)
        # match exactly when the server is available, up to capacity
        following = min(float(path.services[:, 0, 0].sum()), 0.5 * T)
        return {
            "path": p,
            "opt": opt,
            "service_following": following,
            "alg_value": result.objective,
            "accepted": result.total_reward,
            "total_backlog": result.avg_backlog * T,
        }

    if verbose:
        print(f"Impossibility instance, T = {T}, gamma = {gamma} ...")
    table = pd.DataFrame(ordered_map(job, range(num_paths), verbose=verbose, desc="paths"))
    summary = pd.DataFrame([{
        "T": T,
        "gamma": gamma,
        "epsilon": epsilon,
        "mean_opt": table["opt"].mean(),
        "opt_bound": 0.5 * T - 2.0 * math.sqrt(T),
        "mean_accepted": table["accepted"].mean(),
        "mean_total_backlog": table["total_backlog"].mean(),
        "backlog_bound": (0.5 - epsilon) * table["accepted"].mean(),
    }])
    return _write_all({"impossibility_paths": table, "impossibility": summary}, out_dir, fmt)


def recipe_dp_gap(
    T_list: Sequence[int] = (100, 200, 400, 800),
    gamma_list: Sequence[float] = (1.0, 4.0),
    out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    rows = []
    for T, gamma in itertools.product(T_list, gamma_list):
        if verbose:
            print(f"DP oracle T = {T}, gamma = {gamma} ...")
        result = dp_oracle_single_affiliate(T, gamma)
        rows.append({"T": T, "gamma": gamma, "value": result.value, "gap": result.gap,
                     "threshold_violations": result.threshold_violations})
    return _write_all({"dp_gap": pd.DataFrame(rows)}, out_dir, fmt)


def make_shift_pair(T: int, gamma: float = 20.0, alpha: float = 3.0, epsilon: float = 0.05
                    ) -> tuple[Instance, Instance]:
    """Three affiliates whose tied shares and reward levels move between two years."""
    reward_spec = {"kind": "uniform", "low": [0.3, 0.2, 0.1], "high": [0.9, 0.7, 0.6]}
    pool_year = make_synthetic_multi(3, T, [0.10, 0.05, 0.05], reward_spec, [0.3, 0.3, 0.4],
                                     epsilon, alpha=alpha, gamma=gamma)
    shifted = {"kind": "uniform", "low": [0.1, 0.3, 0.2], "high": [0.6, 0.9, 0.7]}
    run_year = make_synthetic_multi(3, T, [0.05, 0.10, 0.10], shifted, [0.3, 0.3, 0.4],
                                    epsilon, alpha=alpha, gamma=gamma)
    return pool_year, run_year


def _summary(results: pd.DataFrame, instance: Instance, flags: dict) -> pd.DataFrame:
    rows = []
    for algo, part in results.groupby("algo", sort=False):
        objective = part["objective"].to_numpy()
        row = {
            "algo": algo,
            "objective": objective.mean(),
            "objective_se": objective.std(ddof=1) / math.sqrt(len(part)) if len(part) > 1 else 0.0,
            "reward": part["reward"].mean(),
            "employment_rate": part["reward"].mean() / instance.T,
            "overalloc": part["overalloc"].mean(),
            "avg_backlog": part["avg_backlog"].mean(),
        }
        row.update(flags.get(algo, {}))
        rows.append(row)
    return pd.DataFrame(rows)


def _flag_summary(instance: Instance, algorithms, num_paths: int, seed: int,
                  verbose: bool) -> tuple[pd.DataFrame, dict]:
    def job(p: int):
        path = sample_path(instance, seed, p)
        rows, flags = [], []
        for algorithm in algorithms:
            result = run_episode(algorithm, instance, p, seed, path=path)
            rows.append(results_row(p, algorithm.display_name, result))
            flags.append(flagged_over_allocation(result, instance))
        return rows, flags

    outcome = ordered_map(job, range(num_paths), verbose=verbose, desc="paths")
    results = pd.DataFrame([r for rows, _ in outcome for r in rows], columns=result_columns)
    flags = {}
    for k, algorithm in enumerate(algorithms):
        reports = [o[1][k] for o in outcome]
        flags[algorithm.display_name] = {
            "flagged_affiliates": float(np.mean([f.num_flagged for f in reports])),
            "max_flagged_excess": float(np.mean([f.max_excess for f in reports])),
        }
    return results, flags


def recipe_batch_table(
    T: int = 600, num_paths: int = 20, seed: int = 0, batch_size: int = 30,
    iterations: int = 10, gamma: float = 20.0,
    out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    """RO-Learning against its two batched variants on the shifted synthetic year."""
    _, instance = make_shift_pair(T, gamma=gamma)
    eta, zeta = 1.0 / math.sqrt(T), math.sqrt(gamma / T)
    algorithms = [
        AlgorithmConfig("ro-learning", eta=eta, zeta=zeta),
        AlgorithmConfig("ro-learning-b", eta=eta, zeta=zeta, batch_size=batch_size),
        AlgorithmConfig("ro-learning-b-iterate", eta=eta, zeta=zeta, batch_size=batch_size,
                        iterations=iterations),
    ]
    if verbose:
        print(f"Batched comparison, T = {T}, batch size {batch_size}, L = {iterations} ...")
    results, flags = _flag_summary(instance, algorithms, num_paths, seed, verbose)
    frames = {"batch_paths": results, "batch_table": _summary(results, instance, flags)}
    return _write_all(frames, out_dir, fmt)


def shift_pools(pool_year: Instance, run_year: Instance, T: int, seed: int = 0
                ) -> tuple[Trace, Trace]:
    """Pools for the sampling benchmark from last year and from the current year."""
    stale = pool_year.arrival.sample(T, seeded_stream(seed, 1, "pool"))
    fresh = run_year.arrival.sample(T, seeded_stream(seed, 2, "pool"))
    return stale, fresh


def recipe_shift_robustness(
    T: int = 100, num_paths: int = 10, seed: int = 0, replications: int = 5,
    gamma: float = 5.0, out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    """Sampling fed from last year's pool against sampling fed from the current year."""
    pool_year, run_year = make_shift_pair(T, gamma=gamma)
    stale_pool, fresh_pool = shift_pools(pool_year, run_year, T, seed)
    eta, zeta = 1.0 / math.sqrt(T), math.sqrt(gamma / T)
    algorithms = [
        AlgorithmConfig("sampling", pool=stale_pool, replications=replications,
                        label="sampling-stale-pool"),
        AlgorithmConfig("sampling", pool=fresh_pool, replications=replications,
                        label="sampling-fresh-pool"),
        AlgorithmConfig("ro-learning", eta=eta, zeta=zeta),
        AlgorithmConfig("ca-dl", eta=eta, zeta=zeta),
    ]
    if verbose:
        print(f"Distribution shift, T = {T}, {num_paths} paths ...")
    results, flags = _flag_summary(run_year, algorithms, num_paths, seed, verbose)
    frames = {"shift_paths": results, "shift_robustness": _summary(results, run_year, flags)}
    return _write_all(frames, out_dir, fmt)


def recipe_misspecified_backlog(
    T: int = 1000, num_paths: int = 200, seed: int = 0, service_estimate: float = 0.6,
    gamma: float = 10.0, out_dir=None, fmt: str = "csv", verbose: bool = False,
) -> dict[str, pd.DataFrame]:
    """CA-DL on the observed backlog against CA-DL on a backlog simulated at a wrong rate."""
    instance = make_uniform_single(T, rho=0.5, epsilon=0.01, gamma=gamma)
    step = 5.0 / math.sqrt(T)
    algorithms = [
        AlgorithmConfig("ca-dl", eta=step, zeta=step),
        AlgorithmConfig("ca-dl-sim", eta=step, zeta=step, service_estimate=service_estimate),
        AlgorithmConfig("co-dl", k=5.0),
    ]

    def job(p: int):
        path = sample_path(instance, seed, p)
        return [run_episode(a, instance, p, seed, path=path, diagnostics=True)
                for a in algorithms]

    if verbose:
        print(f"Mis-specified service rate {service_estimate}, {num_paths} paths ...")
    outcome = ordered_map(job, range(num_paths), verbose=verbose, desc="paths")
    rows, series = [], []
    for k, algorithm in enumerate(algorithms):
        results = [o[k] for o in outcome]
        rows.extend(results_row(p, algorithm.name, r) for p, r in enumerate(results))
        mean_backlog = np.mean([r.diagnostics["backlog"][:, 0, 0] for r in results], axis=0)
        series.append(pd.DataFrame({"algo": algorithm.name, "t": np.arange(1, T + 1),
                                    "mean_backlog": mean_backlog}))
    results = pd.DataFrame(rows, columns=result_columns)
    frames = {
        "misspecified": _summary(results, instance, {}),
        "misspecified_backlog": pd.concat(series, ignore_index=True),
    }
    return _write_all(frames, out_dir, fmt)


recipes: dict[str, Callable[..., dict[str, pd.DataFrame]]] = {
    "dual_concentration": recipe_dual_concentration,
    "near_critical_ratio": recipe_near_critical_ratio,
    "impossibility": recipe_impossibility,
    "dp_gap": recipe_dp_gap,
    "batch_table": recipe_batch_table,
    "shift_robustness": recipe_shift_robustness,
    "misspecified_backlog": recipe_misspecified_backlog,
}


def run_recipe(name: str, **kwargs) -> dict[str, pd.DataFrame]:
    if name not in recipes:
        raise ConfigurationError(f"Unknown recipe '{name}'; choose from {sorted(recipes)}.")
    with warnings.catch_warnings():
        # near-critical instances warn about epsilon by construction
        warnings.simplefilter("ignore", UserWarning)
        return recipes[name](**kwargs)
