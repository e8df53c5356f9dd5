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
from dataclasses import dataclass
from typing import Union

import numpy as np

from dualmatch.algorithms import (
    AlgorithmConfig,
    CongestionAwareDL,
    CongestionObliviousDL,
    MatchingPolicy,
    MinBacklogPolicy,
    RandomPolicy,
    ROLearning,
    SimulatedBacklogDL,
)
from dualmatch.batching import BatchedIterateROLearning, BatchedROLearning
from dualmatch.generalized import GeneralizedCADL, GeneralizedCODL
from dualmatch.instances import Trace
from dualmatch.misc import InfeasibleDecisionError, seeded_stream
from dualmatch.model import (
    Instance,
    PathState,
    RunResult,
    ServiceDraw,
    ServiceMode,
    check_capacity_feasibility,
    draw_services,
    drift_diagnostics,
    step_backlog,
)
from dualmatch.sampling import SamplingPolicy


@dataclass(frozen=True)
class Algorithm:
    name: str
    description: str
    batched: bool = False


available_algorithms = [
    Algorithm("ca-dl", "congestion-aware dual learning with global capacity gate"),
    Algorithm("co-dl", "congestion-oblivious dual learning, step k / sqrt(t)"),
    Algorithm("ro-learning", "dual learning that always places free cases while capacity lasts"),
    Algorithm("ca-dl-sim", "CA-DL steered by a backlog simulated at an assumed service rate"),
    Algorithm("sampling", "re-solving benchmark voting over simulated futures"),
    Algorithm("random", "placement in proportion to remaining capacity"),
    Algorithm("min-backlog", "placement at the smallest backlog"),
    Algorithm("ro-learning-b", "RO-Learning with one program per batch", batched=True),
    Algorithm("ro-learning-b-iterate", "batched primal-dual iterations", batched=True),
    Algorithm("ca-dl-m", "CA-DL over several resource types per affiliate"),
    Algorithm("co-dl-m", "CO-DL over several resource types per affiliate"),
]


def get_algorithm_by_name(name: str) -> Algorithm:
    for algorithm in available_algorithms:
        if algorithm.name == name:
            return algorithm
    raise NotImplementedError(f"The requested algorithm '{name}' is not implemented.")


def default_pool(instance: Instance, seed: int = 0) -> Trace:
    """One horizon drawn from the instance's own arrival distribution."""
    return instance.arrival.sample(instance.T, seeded_stream(seed, 0, "pool"))


def build_policy(
    config: AlgorithmConfig, instance: Instance, rng: np.random.Generator = None
) -> MatchingPolicy:
    name = get_algorithm_by_name(config.name).name
    if name == "ca-dl":
        return CongestionAwareDL(instance, eta=config.eta, zeta=config.zeta, k=config.k, rng=rng)
    elif name == "co-dl":
        return CongestionObliviousDL(instance, k=1.0 if config.k is None else config.k, rng=rng)
    elif name == "ro-learning":
        return ROLearning(instance, eta=config.eta, zeta=config.zeta, rng=rng)
    elif name == "ca-dl-sim":
        estimate = config.service_estimate
        if estimate is None:
            estimate = float(instance.service_rate.min())
        return SimulatedBacklogDL(instance, estimate, eta=config.eta, zeta=config.zeta, rng=rng)
    elif name == "sampling":
        pool = config.pool if config.pool is not None else default_pool(instance)
        return SamplingPolicy(instance, pool, replications=config.replications, rng=rng)
    elif name == "random":
        return RandomPolicy(instance, rng)
    elif name == "min-backlog":
        return MinBacklogPolicy(instance, rng)
    elif name == "ro-learning-b":
        return BatchedROLearning(instance, eta=config.eta, zeta=config.zeta,
                                 batch_size=config.batch_size, rng=rng)
    elif name == "ro-learning-b-iterate":
        return BatchedIterateROLearning(instance, eta=config.eta, zeta=config.zeta,
                                        batch_size=config.batch_size,
                                        iterations=config.iterations, rng=rng)
    elif name == "ca-dl-m":
        return GeneralizedCADL(instance, eta=config.eta, zeta=config.zeta, k=config.k, rng=rng)
    elif name == "co-dl-m":
        return GeneralizedCODL(instance, k=1.0 if config.k is None else config.k, rng=rng)
    else:
        raise NotImplementedError


def sample_path(instance: Instance, seed: int, path: int, service_seed: int = None) -> Trace:
    """Arrivals and services of one path; every algorithm sees the same path."""
    arrivals = instance.arrival.sample(instance.T, seeded_stream(seed, path, "arrival"))
    service_rng = seeded_stream(seed if service_seed is None else service_seed, path, "service")
    return arrivals.with_services(draw_services(instance, instance.T, service_rng))


class _Recorder:
    def __init__(self, instance: Instance, track_drift: bool):
        T, m, l = instance.T, instance.m, instance.l
        self.decisions = np.zeros((T, m))
        self.backlog = np.zeros((T, m, l))
        self.theta = np.full((T, m, l), np.nan)
        self.lam = np.full((T, m, l), np.nan)
        self.track_drift = track_drift
        self.drift = np.full((T, 6), np.nan)

    def record(self, t, decision, after: PathState, duals, drift=None):
        self.decisions[t] = decision
        self.backlog[t] = after.backlog
        if duals is not None:
            self.theta[t] = duals.theta
            self.lam[t] = duals.lam
        if drift is not None:
            self.drift[t] = (drift.psi_before, drift.psi_after, drift.drift,
                             drift.pseudo_reward, drift.lower_bound, drift.upper_bound)

    def as_dict(self) -> dict:
        series = {
            "decisions": self.decisions,
            "backlog": self.backlog,
            "theta": self.theta,
            "lam": self.lam,
        }
        if self.track_drift:
            for k, key in enumerate(("psi_before", "psi_after", "drift", "pseudo_reward",
                                     "drift_lower", "drift_upper")):
                series[key] = self.drift[:, k]
        return series


def run_episode(
    algorithm: Union[AlgorithmConfig, MatchingPolicy],
    instance: Instance,
    path_seed: int,
    seed: int = 0,
    path: Trace = None,
    diagnostics: bool = False,
) -> RunResult:
    """Run one policy over the full horizon of one sample path.

    Parameters
    ----------
    algorithm: AlgorithmConfig or MatchingPolicy
        A configuration is turned into a fresh policy whose own randomness
        comes from the algorithm stream of (seed, path_seed).

    instance: Instance

    path_seed: int
        Index of the sample path.

    seed: int, optional
        Experiment seed; by default 0.

    path: Trace, optional
        Realized path to replay instead of sampling one.

    diagnostics: bool, optional
        Record per-period decisions, backlog, duals and drift;
        by default 'False'.

    Returns
    ----------
    RunResult
    """
    if path is None:
        path = sample_path(instance, seed, path_seed)
    if isinstance(algorithm, AlgorithmConfig):
        policy = build_policy(algorithm, instance, seeded_stream(seed, path_seed, "algorithm"))
    else:
        policy = algorithm

    track_drift = (diagnostics and instance.l == 1
                   and instance.service_mode != ServiceMode.IDLE)
    recorder = _Recorder(instance, track_drift) if diagnostics else None
    arrivals = path.arrivals
    state = PathState.initial(instance)
    batch_size = getattr(policy, "batch_size", 1)

    t = 0
    while t < instance.T:
        batch = arrivals[t:t + batch_size]
        start = state
        duals = policy.duals
        if batch_size > 1:
            decisions = policy.decide_batch(state, batch)
        else:
            decisions = [policy.decide(state, batch[0])]
        for decision, arrival in zip(decisions, batch):
            if not check_capacity_feasibility(state, decision, arrival):
                raise InfeasibleDecisionError(
                    t + 1, f"{policy.name} emitted an infeasible decision in period {t + 1} "
                           f"of path {path_seed} (seed {seed})."
                )
            draw = ServiceDraw(path.services[t])
            after = step_backlog(instance, state, decision, draw, arrival)
            if recorder is not None:
                drift = None
                if track_drift and duals is not None:
                    drift = drift_diagnostics(state.backlog[:, 0], decision, draw, duals,
                                              arrival, instance.rho[:, 0])
                recorder.record(t, decision, after, duals, drift)
            state = after
            t += 1
        if batch_size > 1:
            policy.observe_batch(start, decisions, batch)
        else:
            policy.observe(start, decisions[0], batch[0])

    return RunResult.from_state(
        instance, state, recorder.as_dict() if recorder is not None else None
    )
