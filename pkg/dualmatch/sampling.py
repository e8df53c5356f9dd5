import numpy as np

from dualmatch.algorithms import MatchingPolicy, fits
from dualmatch.instances import Trace
from dualmatch.misc import ConfigurationError, unit_decision, zero_decision
from dualmatch.model import ArrivalType, Instance, PathState, forced_decision
from dualmatch.offline import MatchingProgram


def adjusted_reward(reward, backlog, rho, gamma: float, T: int) -> np.ndarray:
    """Current reward minus (gamma / T) times the expected wait in periods."""
    reward = np.asarray(reward, dtype=float)
    backlog = np.asarray(backlog, dtype=float)
    rho = np.asarray(rho, dtype=float)
    waits = np.where(backlog > 0.0, np.ceil((backlog - rho) / rho), 0.0)
    return reward - (gamma / T) * waits


def draw_futures(pool: Trace, count: int, rng: np.random.Generator) -> Trace:
    rows = rng.integers(len(pool), size=count)
    consumption = None if pool.consumption is None else pool.consumption[rows]
    return Trace(pool.rewards[rows], pool.targets[rows], consumption)


def sampling_decide(
    state: PathState,
    arrival: ArrivalType,
    pool: Trace,
    K: int,
    rng: np.random.Generator,
    instance: Instance,
    futures: list[Trace] = None,
) -> np.ndarray:
    """Re-solve on K simulated futures and take the modal placement of the current case.

    `futures` replaces the draws from the pool when given.
    """
    if not arrival.is_free:
        return forced_decision(arrival)
    if instance.l != 1:
        raise NotImplementedError("The sampling benchmark covers the base model only.")
    if futures is None:
        if pool is None or len(pool) == 0:
            raise ConfigurationError("The sampling benchmark needs a non-empty pool.")
        horizon_left = instance.T - (state.t + 1)
        futures = [draw_futures(pool, horizon_left, rng) for _ in range(K)]

    m = arrival.m
    current = adjusted_reward(
        arrival.reward, state.backlog[:, 0], instance.rho[:, 0], instance.gamma, instance.T
    )
    votes = np.zeros(m + 1, dtype=int)
    for future in futures:
        program = MatchingProgram(
            rewards=np.vstack([current[None, :], future.rewards]),
            targets=np.concatenate([[0], future.targets]),
            capacity=instance.capacity,
            consumption=None if future.consumption is None else np.concatenate(
                [arrival.n[None], future.consumption]),
            alpha=instance.alpha,
            prior_free=state.cum_free,
            prior_tied=state.cum_tied,
        )
        first = program.solve().decisions[0]
        # index m counts "leave unmatched"
        votes[int(np.argmax(first)) if first.max() > 0.5 else m] += 1
    winner = int(np.argmax(votes))
    if winner == m or not fits(state, arrival)[winner]:
        return zero_decision(m)
    return unit_decision(m, winner)


class SamplingPolicy(MatchingPolicy):
    name = "sampling"

    def __init__(self, instance: Instance, pool: Trace, replications: int = 5,
                 rng: np.random.Generator = None):
        super().__init__(instance, rng)
        if replications < 1:
            raise ConfigurationError("The sampling benchmark needs at least one replication.")
        if pool is None or len(pool) == 0:
            raise ConfigurationError("The sampling benchmark needs a non-empty pool.")
        self._pool = pool
        self._replications = replications

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return sampling_decide(
            state, arrival, self._pool, self._replications, self._rng, self._instance
        )
