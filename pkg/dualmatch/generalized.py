"""Multi-knapsack affiliates and the idle-server service model.

Every affiliate carries l resource types and a matched case consumes
n_{t,i,j} units of each. Dual prices and backlogs are kept per resource
type; with l = 1 and unit consumption everything reduces to the base model.
Idleness is applied per (affiliate, resource type), which extends the
single-resource idle model to any l.
"""
import math

import numpy as np

from dualmatch.algorithms import (
    DualLearningPolicy,
    DualState,
    cadl_decide,
    cadl_update,
    codl_decide,
    codl_update,
)
from dualmatch.misc import ConfigurationError
from dualmatch.model import ArrivalType, Instance, PathState, ServiceDraw, ServiceMode, step_backlog

# same box and the same multiplicative step, with m x l blocks
GeneralizedDualState = DualState


def check_consumption(arrival: ArrivalType, instance: Instance):
    n = arrival.n
    if n.shape != (instance.m, instance.l):
        raise ValueError(f"Consumption {n.shape} does not match ({instance.m}, {instance.l}).")
    if n.max() > instance.n_bar:
        raise ConfigurationError(f"Consumption {n.max()} exceeds n_bar = {instance.n_bar}.")


def cadl_m_decide(duals: DualState, state: PathState, arrival: ArrivalType) -> np.ndarray:
    return cadl_decide(duals, state, arrival)


def cadl_m_update(
    duals: DualState, decision: np.ndarray, arrival: ArrivalType, instance: Instance
) -> DualState:
    return cadl_update(duals, decision, instance, arrival)


def codl_m_decide(duals: DualState, state: PathState, arrival: ArrivalType) -> np.ndarray:
    return codl_decide(duals, state, arrival)


def codl_m_update(
    duals: DualState, decision: np.ndarray, arrival: ArrivalType, instance: Instance
) -> DualState:
    return codl_update(duals, decision, instance, arrival)


def idle_step(
    instance: Instance, state: PathState, decision: np.ndarray, s: np.ndarray,
    arrival: ArrivalType
) -> PathState:
    if instance.service_mode != ServiceMode.IDLE:
        raise ValueError("idle_step needs an instance in idle service mode.")
    return step_backlog(instance, state, decision, ServiceDraw(np.asarray(s, dtype=float)), arrival)


class GeneralizedCADL(DualLearningPolicy):
    name = "ca-dl-m"

    def __init__(self, instance: Instance, eta: float = None, zeta: float = 0.0,
                 k: float = None, rng: np.random.Generator = None):
        if eta is None and k is None:
            eta = 1.0 / math.sqrt(instance.T)
        super().__init__(instance, DualState.initial(instance, eta=eta, k=k, zeta=zeta), rng)

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        check_consumption(arrival, self._instance)
        return cadl_m_decide(self._duals, state, arrival)

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        self._duals = cadl_m_update(self._duals, decision, arrival, self._instance)


class GeneralizedCODL(DualLearningPolicy):
    name = "co-dl-m"

    def __init__(self, instance: Instance, k: float = 1.0, rng: np.random.Generator = None):
        super().__init__(instance, DualState.initial(instance, k=k), rng)

    def decide(self, state: PathState, arrival: ArrivalType) -> np.ndarray:
        check_consumption(arrival, self._instance)
        return codl_m_decide(self._duals, state, arrival)

    def observe(self, state: PathState, decision: np.ndarray, arrival: ArrivalType):
        self._duals = codl_m_update(self._duals, decision, arrival, self._instance)
