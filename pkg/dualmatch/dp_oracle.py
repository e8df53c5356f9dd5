import warnings
from dataclasses import dataclass

import numpy as np

from dualmatch.misc import InstanceTooLargeError

MAX_DP_HORIZON = 5000

# accept and reject values closer than this (times T) count as a tie
TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DPOracleResult:
    T: int
    gamma: float
    value: float
    # accept a reward-one arrival in period t iff b_{t-1} < thresholds[t - 1]
    thresholds: np.ndarray
    threshold_violations: int

    @property
    def gap(self) -> float:
        return 0.5 * self.T - self.value


def dp_oracle_single_affiliate(T: int, gamma: float) -> DPOracleResult:
    """Exact backward induction for one affiliate without capacity.

    Rewards are Bernoulli(1/2) in {0, 1}, service is Bernoulli(1/2) and the
    payoff of period t is the accepted reward minus (gamma / T) b_{t-1}.
    """
    if T < 1:
        raise ValueError("T must be positive.")
    if T > MAX_DP_HORIZON:
        raise InstanceTooLargeError(f"The DP table is capped at T = {MAX_DP_HORIZON}.")
    if gamma < 0.0:
        raise ValueError("gamma must be non-negative.")

    states = np.arange(T + 2)
    down = np.maximum(states - 1, 0)
    up = np.minimum(states + 1, T + 1)
    value_next = np.zeros(T + 2)
    thresholds = np.zeros(T, dtype=int)
    violations = 0
    tol = TIE_TOL * max(1.0, float(T))
    for t in range(T, 0, -1):
        # expected continuation once q cases wait before service
        expected = 0.5 * value_next[down] + 0.5 * value_next
        accept_value = 1.0 + expected[up]
        reject_value = expected
        prefer_accept = accept_value > reject_value + tol
        prefer_reject = reject_value > accept_value + tol
        value_next = (
            -(gamma / T) * states
            + 0.5 * np.maximum(accept_value, reject_value)
            + 0.5 * reject_value
        )
        # ties may go either way, only strict preferences can break the threshold form
        rejected = np.flatnonzero(prefer_reject[:t])
        threshold = int(rejected[0]) if rejected.size else t
        thresholds[t - 1] = threshold
        if prefer_accept[threshold:t].any():
            violations += 1
    if violations:
        warnings.warn(f"DP policy is not of threshold type in {violations} periods.")
    return DPOracleResult(
        T=T,
        gamma=gamma,
        value=float(value_next[0]),
        thresholds=thresholds,
        threshold_violations=violations,
    )
