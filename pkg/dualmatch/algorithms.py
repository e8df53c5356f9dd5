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
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from dualmatch.misc import (
    CAPACITY_TOL,
    ConfigurationError,
    positive_part,
    unit_decision,
    zero_decision,
)
from dualmatch.model import ArrivalType, Instance, PathState, forced_decision


@dataclass(frozen=True, eq=False)
class DualState:
    """Learned prices theta (over-allocation) and lam (capacity), both m x l.

    Exactly one of `eta` (fixed step) and `k` (step k / sqrt(t)) is set.
    """

    theta: np.ndarray
    lam: np.ndarray
    zeta: float = 0.0
    eta: Optional[float] = None
    k: Optional[float] = None
    t: int = 1

    def __post_init__(self):
        if (self.eta is None) == (self.k is None):
            raise ConfigurationError("Give either a fixed step size eta or a schedule constant k.")
        if self.eta is not None and self.eta < 0.0:
            raise ConfigurationError("The step size eta must be non-negative.")
        if self.k is not None and self.k <= 0.0:
            raise ConfigurationError("The schedule constant k must be positive.")
        if self.zeta < 0.0:
            raise ConfigurationError("The backlog scale zeta must be non-negative.")

    @classmethod
    def initial(cls, instance: Instance, eta: float = None, k: float = None,
                zeta: float = 0.0) -> "DualState":
        start = np.full((instance.m, instance.l), math.exp(-1.0))
        return cls(theta=start, lam=start.copy(), zeta=zeta, eta=eta, k=k)

    def step_size(self) -> float:
        if self.eta is not None:
            return self.eta
        return self.k / math.sqrt(self.t)

    @property
    def phi(self) -> np.ndarray:
        return self.theta + self.lam


def dual_adjusted_scores(
    duals: DualState, backlog: np.ndarray, arrival: ArrivalType, zeta: float = None
) -> np.ndarray:
    """w_i - sum_j n_ij (theta_ij + lam_ij + zeta b_ij) for every affiliate i."""
    zeta = duals.zeta if zeta is None else zeta
    price = duals.theta + duals.lam + zeta * backlog
    return arrival.reward - (arrival.n * price).sum(axis=1)


def fits(state: PathState, arrival: ArrivalType) -> np.ndarray:
    """Affiliates that can take the free case without breaking capacity feasibility."""
    return np.all(arrival.n <= state.free_headroom + CAPACITY_TOL, axis=1)


def cadl_decide(
    duals: DualState, state: PathState, arrival: ArrivalType, zeta: float = None
) -> np.ndarray:
    if not arrival.is_free:
        return forced_decision(arrival)
    # global gate: free matching stops once any affiliate runs out
    if np.any(state.remaining < 1.0 - CAPACITY_TOL):
        return zero_decision(arrival.m)
    scores = dual_adjusted_scores(duals, state.backlog, arrival, zeta)
    best = int(np.argmax(scores))
    if scores[best] < 0.0 or not fits(state, arrival)[best]:
        return zero_decision(arrival.m)
    return unit_decision(arrival.m, best)


def multiplicative_step(
    duals: DualState, gradient: np.ndarray, instance: Instance, step: float
) -> DualState:
    """Entropic mirror step on both price blocks, projected onto their boxes."""
    factor = np.exp(step * gradient)
    return replace(
        duals,
        theta=np.minimum(duals.theta * factor, instance.alpha),
        lam=np.minimum(duals.lam * factor, instance.lambda_cap),
        t=duals.t + 1,
    )


def cadl_update(
    duals: DualState, decision: np.ndarray, instance: Instance, arrival: ArrivalType = None
) -> DualState:
    n = np.ones((instance.m, instance.l)) if arrival is None else arrival.n
    gradient = n * np.asarray(decision, dtype=float)[:, None] - instance.rho
    return multiplicative_step(duals, gradient, instance, duals.step_size())


def codl_decide(duals: DualState, state: PathState, arrival: ArrivalType) -> np.ndarray:
    return cadl_decide(duals, state, arrival, zeta=0.0)


def codl_update(
    duals: DualState, decision: np.ndarray, instance: Instance, arrival: ArrivalType = None
) -> DualState:
    if duals.k is None:
        raise ConfigurationError("CO-DL needs the time-varying schedule eta_t = k / sqrt(t).")
    return cadl_update(duals, decision, instance, arrival)


def ro_learning_decide(
    duals: DualState, state: PathState, arrival: ArrivalType
) -> np.ndarray:
    if not arrival.is_free:
        return forced_decision(arrival)
    candidates = fits(state, arrival)
    if not candidates.any():
        return zero_decision(arrival.m)
    scores = np.where(candidates, dual_adjusted_scores(duals, state.backlog, arrival), -np.inf)
    return unit_decision(arrival.m, int(np.argmax(scores)))


def random_probabilities(state: PathState, arrival: ArrivalType) -> np.ndarray:
    weights = np.where(fits(state, arrival), positive_part(state.free_headroom).sum(axis=1), 0.0)
    total = weights.sum()
    if total <= 0.0:
        return weights
    return weights / total


def random_decide(
    state: PathState, arrival: ArrivalType, rng: np.random.Generator
) -> np.ndarray:
    if not arrival.is_free:
        return forced_decision(arrival)
    probs = random_probabilities(state, arrival)
    if probs.sum() <= 0.0:
        return zero_decision(arrival.m)
    return unit_decision(arrival.m, int(rng.choice(arrival.m, p=probs)))


def min_backlog_decide(
    state: PathState, arrival: ArrivalType, rng: np.random.Generator
) -> np.ndarray:
    if not arrival.is_free:
        return forced_decision(arrival)
    candidates = fits(state, arrival)
    if not candidates.any():
        return zero_decision(arrival.m)
    load = np.where(candidates, state.backlog.sum(axis=1), np.inf)
    tied = load == load.min()
    if tied.sum() == 1:
        return unit_decision(arrival.m, int(np.argmax(tied)))
    weights = np.where(tied, positive_part(state.free_headroom).sum(axis=1), 0.0)
    return unit_decision(arrival.m, int(rng.choice(arrival.m, p=weights / weights.sum())))


@dataclass
class AlgorithmConfig:
    name: str
    eta: Optional[float] = None
    k: Optional[float] = None
    zeta: float = 0.0
    service_estimate: Optional[float] = None  # r-hat for the simulated-backlog variant
    replications: int = 5
    pool: Optional[object] = None  # Trace used by the sampling benchmark
    batch_size: int = 30
    iterations: int = 10
    label: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @property
    def display_name(self) -> str:
        return self.label or self.name


class MatchingPolicy(ABC):
    """Online policy over one sample path: decide on each arrival, then observe."""

    batch_size = 1

    def __init__(self, instance: Instance, rng: np.random.Generator = None):
        self._instance = instance
        self._rng = rng if rng is not None else np.random.default_rng(0)

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @property
    def duals(self) -> Optional[DualState]:
        return None

    @abstractmethod
    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        pass

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        pass


class DualLearningPolicy(MatchingPolicy):
    def __init__(self, instance: Instance, duals: DualState, rng: np.random.Generator = None):
        super().__init__(instance, rng)
        self._duals = duals

    @property
    def duals(self) -> DualState:
        return self._duals

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        self._duals = cadl_update(self._duals, decision, self._instance, arrival)


class CongestionAwareDL(DualLearningPolicy):
    name = "ca-dl"

    def __init__(self, instance: Instance, eta: float = None, zeta: float = 0.0,
                 k: float = None, rng: np.random.Generator = None):
        if eta is None and k is None:
            eta = 1.0 / math.sqrt(instance.T)
        super().__init__(instance, DualState.initial(instance, eta=eta, k=k, zeta=zeta), rng)

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return cadl_decide(self._duals, state, arrival)


class CongestionObliviousDL(DualLearningPolicy):
    name = "co-dl"

    def __init__(self, instance: Instance, k: float = 1.0, rng: np.random.Generator = None):
        super().__init__(instance, DualState.initial(instance, k=k), rng)

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return codl_decide(self._duals, state, arrival)

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        self._duals = codl_update(self._duals, decision, self._instance, arrival)


class ROLearning(DualLearningPolicy):
    name = "ro-learning"

    def __init__(self, instance: Instance, eta: float = None, zeta: float = 0.0,
                 rng: np.random.Generator = None):
        eta = 1.0 / math.sqrt(instance.T) if eta is None else eta
        super().__init__(instance, DualState.initial(instance, eta=eta, zeta=zeta), rng)

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return ro_learning_decide(self._duals, state, arrival)


class SimulatedBacklogDL(CongestionAwareDL):
    """CA-DL steered by a backlog it simulates itself at an assumed service rate."""

    name = "ca-dl-sim"

    def __init__(self, instance: Instance, service_estimate: float, eta: float = None,
                 zeta: float = 0.0, rng: np.random.Generator = None):
        super().__init__(instance, eta=eta, zeta=zeta, rng=rng)
        if not 0.0 < service_estimate <= 1.0:
            raise ConfigurationError("The assumed service rate must lie in (0, 1].")
        self._service_estimate = service_estimate
        self._simulated = np.zeros((instance.m, instance.l))

    @property
    def simulated_backlog(self) -> np.ndarray:
        return self._simulated

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return cadl_decide(self._duals, replace(state, backlog=self._simulated), arrival)

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        s = (self._rng.random(self._simulated.shape) < self._service_estimate).astype(float)
        self._simulated = positive_part(self._simulated + arrival.n * decision[:, None] - s)
        super().observe(state, decision, arrival)


class RandomPolicy(MatchingPolicy):
    name = "random"

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return random_decide(state, arrival, self._rng)


class MinBacklogPolicy(MatchingPolicy):
    name = "min-backlog"

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        return min_backlog_decide(state, arrival, self._rng)
