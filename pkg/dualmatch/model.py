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
"""Domain types, per-period dynamics and the penalized objective."""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from cached_property import cached_property

from dualmatch.misc import CAPACITY_TOL, InfeasibleDecisionError, positive_part

if TYPE_CHECKING:
    from dualmatch.instances import ArrivalGenerator, Trace


class ServiceMode(Enum):
    BERNOULLI = "bernoulli"
    DETERMINISTIC = "deterministic"
    IDLE = "idle"


@dataclass(frozen=True, eq=False)
class ArrivalType:
    reward: np.ndarray  # w_t, one entry per affiliate
    target: int  # 0: free case, i >= 1: tied to affiliate i
    consumption: Optional[np.ndarray] = None  # m x l, all-ones with l = 1 if absent

    def __post_init__(self):
        reward = np.asarray(self.reward, dtype=float)
        object.__setattr__(self, "reward", reward)
        if reward.ndim != 1:
            raise ValueError("Reward must be a vector with one entry per affiliate.")
        if reward.min() < 0.0 or reward.max() > 1.0:
            raise ValueError(f"Rewards must lie in [0, 1], got {reward}.")
        if not 0 <= self.target <= reward.size:
            raise ValueError(f"Target {self.target} out of range for {reward.size} affiliates.")
        if self.consumption is not None:
            consumption = np.asarray(self.consumption, dtype=float)
            if consumption.ndim != 2 or consumption.shape[0] != reward.size:
                raise ValueError("Consumption must be an m x l matrix.")
            if consumption.min() < 0.0:
                raise ValueError("Consumption must be non-negative.")
            object.__setattr__(self, "consumption", consumption)

    @property
    def m(self) -> int:
        return self.reward.size

    @property
    def is_free(self) -> bool:
        return self.target == 0

    @cached_property
    def n(self) -> np.ndarray:
        if self.consumption is None:
            return np.ones((self.m, 1))
        return self.consumption


@dataclass(frozen=True, eq=False)
class Instance:
    """Static description of a matching problem.

    Capacities c = rho * T and service rates r = rho + epsilon are derived
    and never stored on their own.
    """

    m: int
    l: int
    T: int
    rho: np.ndarray
    epsilon: float
    alpha: float
    gamma: float
    service_mode: ServiceMode
    arrival: "ArrivalGenerator"
    n_bar: float = 10.0

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim < 2:
            rho = rho.reshape(self.m, -1)
        object.__setattr__(self, "rho", rho)
        if not isinstance(self.service_mode, ServiceMode):
            object.__setattr__(self, "service_mode", ServiceMode(self.service_mode))
        if rho.shape != (self.m, self.l):
            raise ValueError(f"rho has shape {rho.shape}, expected {(self.m, self.l)}.")
        if self.T < 1:
            raise ValueError("The horizon T must be positive.")

    @cached_property
    def capacity(self) -> np.ndarray:
        return self.rho * self.T

    @cached_property
    def service_rate(self) -> np.ndarray:
        return self.rho + self.epsilon

    @property
    def rho_min(self) -> float:
        return float(self.rho.min())

    @property
    def lambda_cap(self) -> float:
        return (1.0 + 2.0 * self.alpha) / self.rho_min

    def with_params(self, **changes) -> "Instance":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "l": self.l,
            "T": self.T,
            "rho": self.rho.tolist(),
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "service_mode": self.service_mode.value,
            "arrival": self.arrival.to_dict(),
            "n_bar": self.n_bar,
        }


@dataclass(frozen=True, eq=False)
class ServiceDraw:
    s: np.ndarray
    u: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class PathState:
    """State of one sample path after `t` completed periods."""

    t: int
    remaining: np.ndarray  # c - cumulative usage, may turn negative through tied cases
    backlog: np.ndarray
    idle: np.ndarray
    cum_matched: np.ndarray
    cum_free: np.ndarray
    cum_tied: np.ndarray
    stopped: bool = False
    stopping_time: Optional[int] = None
    reward: float = 0.0
    backlog_sum: float = 0.0

    @classmethod
    def initial(cls, instance: Instance, backlog: np.ndarray = None) -> "PathState":
        shape = (instance.m, instance.l)
        return cls(
            t=0,
            remaining=instance.capacity.copy(),
            backlog=np.zeros(shape) if backlog is None else np.asarray(backlog, dtype=float),
            idle=np.zeros(shape, dtype=bool),
            cum_matched=np.zeros(instance.m),
            cum_free=np.zeros(shape),
            cum_tied=np.zeros(shape),
        )

    @property
    def free_headroom(self) -> np.ndarray:
        """Units still available to free cases, (c - tied)_+ - free."""
        return positive_part(self.remaining + self.cum_free) - self.cum_free


def effective_availability(idle: np.ndarray, s: np.ndarray) -> np.ndarray:
    return idle + (1.0 - idle) * s


def draw_services(instance: Instance, T: int, rng: np.random.Generator) -> np.ndarray:
    """Availability matrix for T periods, shape (T, m, l)."""
    shape = (T, instance.m, instance.l)
    if instance.service_mode == ServiceMode.DETERMINISTIC:
        return np.broadcast_to(instance.rho, shape).copy()
    return (rng.random(shape) < instance.service_rate).astype(float)


def _check_decision(z: np.ndarray, arrival: ArrivalType):
    if z.shape != (arrival.m,):
        raise ValueError(f"Decision has shape {z.shape}, expected ({arrival.m},).")
    if z.min() < 0.0 or z.sum() > 1.0 + CAPACITY_TOL:
        raise ValueError(f"Decision {z} is not in the type-feasibility set.")


def step_backlog(
    instance: Instance,
    state: PathState,
    decision: np.ndarray,
    draw: ServiceDraw,
    arrival: ArrivalType,
) -> PathState:
    z = np.asarray(decision, dtype=float)
    _check_decision(z, arrival)
    s = np.asarray(draw.s, dtype=float)
    n = arrival.n
    if s.shape != state.backlog.shape or n.shape != state.backlog.shape:
        raise ValueError(
            f"Service {s.shape} and consumption {n.shape} must match the state "
            f"{state.backlog.shape}."
        )
    if s.min() < 0.0:
        raise ValueError("Service availabilities must be non-negative.")

    use = n * z[:, None]
    queue = state.backlog + use
    if instance.service_mode == ServiceMode.IDLE:
        idle = state.idle.astype(float)
        u = effective_availability(idle, s)
        backlog = positive_part(queue - u)
        # an idle server that serves consumes its idle status, the fresh draw is lost
        new_idle = (queue == 0.0) & (state.idle | (s == 1.0))
    else:
        backlog = positive_part(queue - s)
        new_idle = state.idle

    if arrival.is_free:
        cum_free = state.cum_free + use
        cum_tied = state.cum_tied
    else:
        cum_free = state.cum_free
        cum_tied = state.cum_tied + use
    remaining = state.remaining - use
    t = state.t + 1
    stopped = state.stopped
    stopping_time = state.stopping_time
    if not stopped and np.any(remaining <= CAPACITY_TOL):
        stopped, stopping_time = True, t

    return PathState(
        t=t,
        remaining=remaining,
        backlog=backlog,
        idle=new_idle,
        cum_matched=state.cum_matched + z,
        cum_free=cum_free,
        cum_tied=cum_tied,
        stopped=stopped,
        stopping_time=stopping_time,
        reward=state.reward + float(arrival.reward @ z),
        backlog_sum=state.backlog_sum + float(backlog.sum()),
    )


def check_capacity_feasibility(
    state: PathState, decision: np.ndarray, arrival: ArrivalType
) -> bool:
    if not arrival.is_free:
        return True
    use = arrival.n * np.asarray(decision, dtype=float)[:, None]
    # headroom turns negative after tied overflow; only used resources are checked
    return bool(np.all((use <= 0.0) | (use <= state.free_headroom + CAPACITY_TOL)))


@dataclass(frozen=True, eq=False)
class RunResult:
    total_reward: float
    over_allocation: float
    avg_backlog: float
    objective: float
    stopping_time: int
    alpha: float
    gamma: float
    T: int
    usage: np.ndarray
    diagnostics: Optional[dict] = field(default=None, repr=False)

    @classmethod
    def from_state(
        cls, instance: Instance, state: PathState, diagnostics: dict = None
    ) -> "RunResult":
        usage = instance.capacity - state.remaining
        over_allocation = float(positive_part(usage - instance.capacity).sum())
        avg_backlog = state.backlog_sum / instance.T
        objective = state.reward - instance.alpha * over_allocation - instance.gamma * avg_backlog
        return cls(
            total_reward=state.reward,
            over_allocation=over_allocation,
            avg_backlog=avg_backlog,
            objective=objective,
            stopping_time=instance.T if state.stopping_time is None else state.stopping_time,
            alpha=instance.alpha,
            gamma=instance.gamma,
            T=instance.T,
            usage=usage,
            diagnostics=diagnostics,
        )

    @property
    def net_matching_reward(self) -> float:
        return self.total_reward - self.alpha * self.over_allocation

    @property
    def employment_rate(self) -> float:
        return self.total_reward / self.T


@dataclass(frozen=True)
class FlagReport:
    num_flagged: int
    max_excess: float
    total_excess: float


def flagged_over_allocation(
    result: RunResult, instance: Instance, threshold: float = 1.1
) -> FlagReport:
    """Affiliates whose usage exceeds `threshold` times their capacity."""
    limit = threshold * instance.capacity
    excess = result.usage - limit
    flagged = excess > CAPACITY_TOL
    if not flagged.any():
        return FlagReport(0, 0.0, 0.0)
    return FlagReport(
        num_flagged=int(flagged.sum()),
        max_excess=float(excess[flagged].max()),
        total_excess=float(excess[flagged].sum()),
    )


def evaluate_objective(
    decisions: Sequence[np.ndarray], path: "Trace", instance: Instance
) -> RunResult:
    """Replay a decision sequence on a realized path.

    Parameters
    ----------
    decisions: sequence of numpy.ndarray
        One decision vector per period.

    path: Trace
        Realized arrivals together with their service matrix.

    instance: Instance

    Returns
    ----------
    RunResult
        Raises InfeasibleDecisionError with the first violating period.
    """
    decisions = np.asarray(decisions, dtype=float).reshape(len(path), instance.m)
    if path.services is None:
        raise ValueError("Evaluating the objective requires the service matrix of the path.")
    state = PathState.initial(instance)
    for t, z in enumerate(decisions):
        arrival = path[t]
        if not arrival.is_free and not np.array_equal(z, forced_decision(arrival)):
            raise InfeasibleDecisionError(
                t + 1, f"Tied case in period {t + 1} must go to affiliate {arrival.target}."
            )
        if not check_capacity_feasibility(state, z, arrival):
            raise InfeasibleDecisionError(t + 1)
        state = step_backlog(instance, state, z, ServiceDraw(path.services[t]), arrival)
    return RunResult.from_state(instance, state)


def forced_decision(arrival: ArrivalType) -> np.ndarray:
    z = np.zeros(arrival.m)
    z[arrival.target - 1] = 1.0
    return z


@dataclass(frozen=True)
class DriftRecord:
    psi_before: float
    psi_after: float
    drift: float
    pseudo_reward: float
    lower_bound: float
    upper_bound: float


def lyapunov(backlog: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.square(backlog)))


def drift_diagnostics(
    prev_backlog: np.ndarray,
    decision: np.ndarray,
    draw: ServiceDraw,
    duals,
    arrival: ArrivalType,
    rho: np.ndarray,
) -> DriftRecord:
    """Drift of psi(b) = |b|^2 / 2 with its two-sided bound and the pseudo-reward K_t.

    `duals` are the dual values used to take the decision (base model, l = 1).
    """
    b = np.ravel(prev_backlog).astype(float)
    z = np.ravel(decision).astype(float)
    s = np.ravel(draw.s).astype(float)
    rho = np.ravel(rho)
    b_next = positive_part(b + z - s)
    psi_before, psi_after = lyapunov(b), lyapunov(b_next)
    drift = psi_after - psi_before
    lower = float(b @ (z - s))
    slack = rho - z
    pseudo_reward = (
        float(arrival.reward @ z)
        + float(np.ravel(duals.theta) @ slack)
        + float(np.ravel(duals.lam) @ slack)
        - duals.zeta * drift
    )
    return DriftRecord(
        psi_before=psi_before,
        psi_after=psi_after,
        drift=drift,
        pseudo_reward=pseudo_reward,
        lower_bound=lower,
        upper_bound=lower + (1.0 + b.size) / 2.0,
    )
