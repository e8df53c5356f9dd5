"""Batched dual learning: one program per batch of arrivals."""
import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from dualmatch.algorithms import (
    DualLearningPolicy,
    DualState,
    dual_adjusted_scores,
    multiplicative_step,
)
from dualmatch.misc import CAPACITY_TOL, ConfigurationError, SolverError, positive_part
from dualmatch.model import ArrivalType, Instance, PathState, forced_decision
from dualmatch.offline import MatchingProgram, ProgramSolution


def _batch_arrays(batch: Sequence[ArrivalType]):
    rewards = np.array([a.reward for a in batch])
    targets = np.array([a.target for a in batch])
    consumption = np.array([a.n for a in batch])
    return rewards, targets, consumption


def batch_scores(duals: DualState, state: PathState, batch: Sequence[ArrivalType]) -> np.ndarray:
    """Dual-adjusted scores, with the backlog term on the first case only."""
    return np.array([
        dual_adjusted_scores(duals, state.backlog, arrival, zeta=None if t == 0 else 0.0)
        for t, arrival in enumerate(batch)
    ])


def solve_batch_program(
    duals: DualState,
    state: PathState,
    batch: Sequence[ArrivalType],
    instance: Instance,
    alpha: float = 0.0,
    backlog_weight: float = 0.0,
) -> ProgramSolution:
    """Within-batch program; free cases go to an actual affiliate while capacity allows.

    With a backlog weight the batch is served at the deterministic rate rho.
    """
    _, targets, consumption = _batch_arrays(batch)
    scores = batch_scores(duals, state, batch)
    # a uniform bonus per match larger than any score spread maximizes matches first
    bonus = 1.0 + 2.0 * len(batch) * float(np.abs(scores).max(initial=0.0))
    services = np.broadcast_to(instance.rho, consumption.shape) if backlog_weight > 0.0 else None
    program = MatchingProgram(
        rewards=scores,
        targets=targets,
        capacity=instance.capacity,
        consumption=consumption,
        alpha=alpha,
        backlog_weight=backlog_weight,
        services=services,
        initial_backlog=state.backlog,
        prior_free=state.cum_free,
        prior_tied=state.cum_tied,
        match_bonus=bonus,
        integral_headroom=True,
    )
    return program.solve()


def round_batch(
    fractional: np.ndarray, state: PathState, batch: Sequence[ArrivalType]
) -> list[np.ndarray]:
    """Largest coordinate per case, falling back to the next one with headroom."""
    remaining = state.remaining.copy()
    cum_free = state.cum_free.copy()
    decisions = []
    for row, arrival in zip(fractional, batch):
        m = arrival.m
        z = np.zeros(m)
        if not arrival.is_free:
            z = forced_decision(arrival)
        else:
            headroom = positive_part(remaining + cum_free) - cum_free
            for i in np.argsort(-row, kind="stable"):
                if row[i] <= 1e-6:
                    break
                if np.all(arrival.n[i] <= headroom[i] + CAPACITY_TOL):
                    z[i] = 1.0
                    break
            cum_free = cum_free + arrival.n * z[:, None]
        remaining = remaining - arrival.n * z[:, None]
        decisions.append(z)
    return decisions


def batch_gradient(decisions, batch: Sequence[ArrivalType], instance: Instance) -> np.ndarray:
    return sum(a.n * np.asarray(z)[:, None] - instance.rho for z, a in zip(decisions, batch))


def batch_b_decide(
    duals: DualState, state: PathState, batch: Sequence[ArrivalType], instance: Instance
) -> list[np.ndarray]:
    solution = solve_batch_program(duals, state, batch, instance)
    return round_batch(solution.decisions, state, batch)


def batch_b_update(
    duals: DualState, decisions, batch: Sequence[ArrivalType], instance: Instance
) -> DualState:
    gradient = batch_gradient(decisions, batch, instance)
    return multiplicative_step(duals, gradient, instance, duals.step_size())


def batch_iterate_decide(
    duals: DualState,
    state: PathState,
    batch: Sequence[ArrivalType],
    instance: Instance,
    L: int,
) -> tuple[list[np.ndarray], DualState]:
    """L primal-dual rounds on the batch, rounding only the last primal iterate."""
    if L < 1:
        raise ConfigurationError("The iteration count L must be at least 1.")
    step = duals.step_size() / L
    current = duals
    for _ in range(L):
        solution = solve_batch_program(
            current, state, batch, instance,
            alpha=instance.alpha,
            backlog_weight=instance.gamma / len(batch),
        )
        gradient = batch_gradient(solution.decisions, batch, instance)
        current = multiplicative_step(current, gradient, instance, step)
    return round_batch(solution.decisions, state, batch), replace(current, t=duals.t + 1)


class BatchedROLearning(DualLearningPolicy):
    name = "ro-learning-b"

    def __init__(self, instance: Instance, eta: float = None, zeta: float = 0.0,
                 batch_size: int = 30, rng: np.random.Generator = None):
        eta = 1.0 / math.sqrt(instance.T) if eta is None else eta
        super().__init__(instance, DualState.initial(instance, eta=eta, zeta=zeta), rng)
        if batch_size < 1:
            raise ConfigurationError("Batch size must be at least 1.")
        self.batch_size = batch_size
        self._batches = 0

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return self.decide_batch(state, [arrival])[0]

    def _solve(self, state: PathState, batch: Sequence[ArrivalType]) -> list[np.ndarray]:
        return batch_b_decide(self._duals, state, batch, self._instance)

    def decide_batch(self, state: PathState, batch: Sequence[ArrivalType]) -> list[np.ndarray]:
        self._batches += 1
        try:
            return self._solve(state, batch)
        except SolverError as err:
            raise SolverError(f"Batch {self._batches} (periods from {state.t + 1}): {err}")

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        self.observe_batch(state, [decision], [arrival])

    def observe_batch(self, state: PathState, decisions, batch: Sequence[ArrivalType]):
        self._duals = batch_b_update(self._duals, decisions, batch, self._instance)


class BatchedIterateROLearning(BatchedROLearning):
    name = "ro-learning-b-iterate"

    def __init__(self, instance: Instance, eta: float = None, zeta: float = 0.0,
                 batch_size: int = 30, iterations: int = 10, rng: np.random.Generator = None):
        super().__init__(instance, eta=eta, zeta=zeta, batch_size=batch_size, rng=rng)
        if iterations < 1:
            raise ConfigurationError("The iteration count L must be at least 1.")
        self._iterations = iterations
        self._pending = None

    def _solve(self, state: PathState, batch: Sequence[ArrivalType]) -> list[np.ndarray]:
        decisions, self._pending = batch_iterate_decide(
            self._duals, state, batch, self._instance, self._iterations
        )
        return decisions

    def observe_batch(self, state: PathState, decisions, batch: Sequence[ArrivalType]):
        self._duals = self._pending
