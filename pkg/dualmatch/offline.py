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
"""Hindsight benchmarks: offline LPs, exhaustive search and the static dual."""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, vstack

from dualmatch.instances import Trace
from dualmatch.misc import (
    CAPACITY_TOL,
    ConfigurationError,
    InstanceTooLargeError,
    SolverError,
    positive_part,
    unit_decision,
    zero_decision,
)
from dualmatch.model import (
    Instance,
    PathState,
    ServiceDraw,
    ServiceMode,
    check_capacity_feasibility,
    evaluate_objective,
    step_backlog,
)

# feasibility and optimality tolerance handed to HiGHS
SOLVER_TOL = 1e-7

solver_options = {
    "primal_feasibility_tolerance": SOLVER_TOL,
    "dual_feasibility_tolerance": SOLVER_TOL,
}


@dataclass(frozen=True, eq=False)
class DualCertificate:
    theta: np.ndarray  # m x l
    lam: np.ndarray  # m x l
    beta: Optional[np.ndarray] = None  # T x m x l

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "lambda": self.lam.tolist(),
            "beta": None if self.beta is None else self.beta.tolist(),
        }


@dataclass(frozen=True, eq=False)
class OfflineSolution:
    decisions: np.ndarray  # T x m, possibly fractional
    backlog_vars: Optional[np.ndarray]  # T x m x l
    objective_value: float
    dual_certificate: Optional[DualCertificate] = None
    in_good_event: bool = True
    solver: str = "lp"

    @property
    def is_integral(self) -> bool:
        return bool(np.all(np.minimum(self.decisions, 1.0 - self.decisions) < 1e-6))


@dataclass(frozen=True, eq=False)
class ProgramSolution:
    decisions: np.ndarray
    backlog: Optional[np.ndarray]
    over_allocation: np.ndarray
    value: float
    certificate: DualCertificate


class MatchingProgram:
    """Linear program over a block of cases with tied cases held fixed.

    maximize    sum w z + bonus * sum z_free - alpha * sum o - backlog_weight * sum b
    subject to  sum_i z_ti <= 1                          (every free case t)
                sum_free n z <= (c - prior_tied - tied)_+ - prior_free
                sum_free n z - o <= c - prior_free - prior_tied - tied
                n_t z_t + b_{t-1} - b_t <= s_t           (only if backlog_weight > 0)
    """

    def __init__(
        self,
        rewards: np.ndarray,
        targets: np.ndarray,
        capacity: np.ndarray,
        consumption: np.ndarray = None,
        alpha: float = 0.0,
        backlog_weight: float = 0.0,
        services: np.ndarray = None,
        initial_backlog: np.ndarray = None,
        prior_free: np.ndarray = None,
        prior_tied: np.ndarray = None,
        match_bonus: float = 0.0,
        integral_headroom: bool = False,
    ):
        self.rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
        self.targets = np.asarray(targets, dtype=int)
        self.capacity = np.asarray(capacity, dtype=float)
        T, m = self.rewards.shape
        l = self.capacity.shape[1]
        if consumption is None:
            consumption = np.ones((T, m, l))
        self.consumption = np.asarray(consumption, dtype=float)
        self.alpha = alpha
        self.backlog_weight = backlog_weight
        if backlog_weight > 0.0 and services is None:
            raise ValueError("A backlog penalty needs the service matrix.")
        self.services = services
        zeros = np.zeros((m, l))
        self.initial_backlog = zeros if initial_backlog is None else initial_backlog
        self.prior_free = zeros if prior_free is None else prior_free
        self.prior_tied = zeros if prior_tied is None else prior_tied
        self.match_bonus = match_bonus
        self.integral_headroom = integral_headroom

    @property
    def shape(self) -> tuple[int, int, int]:
        return (*self.rewards.shape, self.capacity.shape[1])

    def forced_use(self) -> np.ndarray:
        """Consumption of the tied cases, shape T x m x l."""
        T, m, l = self.shape
        use = np.zeros((T, m, l))
        tied = np.flatnonzero(self.targets > 0)
        affiliates = self.targets[tied] - 1
        use[tied, affiliates] = self.consumption[tied, affiliates]
        return use

    def tied_use(self) -> np.ndarray:
        return self.forced_use().sum(axis=0)

    def headroom(self) -> np.ndarray:
        room = positive_part(self.capacity - self.prior_tied - self.tied_use()) - self.prior_free
        room = positive_part(room)
        if self.integral_headroom:
            room = np.floor(room + CAPACITY_TOL)
        return room

    def solve(self) -> ProgramSolution:
        T, m, l = self.shape
        free = np.flatnonzero(self.targets == 0)
        F = free.size
        n_z = F * m
        use_backlog = self.backlog_weight > 0.0
        n_b = T * m * l if use_backlog else 0
        n_o = m * l
        b_off, o_off = n_z, n_z + n_b

        rows, cols, vals, rhs = [], [], [], []
        row = 0
        # one affiliate at most per free case
        for f in range(F):
            rows += [row] * m
            cols += list(range(f * m, (f + 1) * m))
            vals += [1.0] * m
            rhs.append(1.0)
            row += 1
        head_start = row
        headroom = self.headroom()
        over_rhs = self.capacity - self.prior_free - self.prior_tied - self.tied_use()
        for block in ("headroom", "over"):
            for i in range(m):
                for j in range(l):
                    for f, t in enumerate(free):
                        rows.append(row)
                        cols.append(f * m + i)
                        vals.append(self.consumption[t, i, j])
                    if block == "headroom":
                        rhs.append(headroom[i, j])
                    else:
                        rows.append(row)
                        cols.append(o_off + i * l + j)
                        vals.append(-1.0)
                        rhs.append(over_rhs[i, j])
                    row += 1
        backlog_start = row
        if use_backlog:
            forced = self.forced_use()
            position = np.full(T, -1)
            position[free] = np.arange(F)
            for t in range(T):
                for i in range(m):
                    for j in range(l):
                        if position[t] >= 0:
                            rows.append(row)
                            cols.append(position[t] * m + i)
                            vals.append(self.consumption[t, i, j])
                        rows.append(row)
                        cols.append(b_off + (t * m + i) * l + j)
                        vals.append(-1.0)
                        bound = self.services[t, i, j] - forced[t, i, j]
                        if t > 0:
                            rows.append(row)
                            cols.append(b_off + ((t - 1) * m + i) * l + j)
                            vals.append(1.0)
                        else:
                            bound -= self.initial_backlog[i, j]
                        rhs.append(bound)
                        row += 1

        cost = np.zeros(n_z + n_b + n_o)
        cost[:n_z] = -(self.rewards[free] + self.match_bonus).ravel()
        cost[b_off:o_off] = self.backlog_weight
        cost[o_off:] = self.alpha
        bounds = [(0.0, 1.0)] * n_z + [(0.0, None)] * (n_b + n_o)
        A_ub = coo_matrix((vals, (rows, cols)), shape=(row, cost.size)).tocsr()
        res = linprog(cost, A_ub=A_ub, b_ub=np.asarray(rhs), bounds=bounds, method="highs",
                      options=solver_options)
        if res.status != 0:
            raise SolverError(f"Matching program failed: {res.message}")

        x = res.x
        decisions = np.zeros((T, m))
        decisions[free] = x[:n_z].reshape(F, m)
        tied = np.flatnonzero(self.targets > 0)
        decisions[tied, self.targets[tied] - 1] = 1.0
        backlog = x[b_off:o_off].reshape(T, m, l) if use_backlog else None
        over = x[o_off:].reshape(m, l)
        value = float((self.rewards * decisions).sum() - self.alpha * over.sum())
        if use_backlog:
            value -= self.backlog_weight * float(backlog.sum())

        duals = -res.ineqlin.marginals
        certificate = DualCertificate(
            theta=duals[head_start + m * l:backlog_start].reshape(m, l),
            lam=duals[head_start:head_start + m * l].reshape(m, l),
            beta=duals[backlog_start:].reshape(T, m, l) if use_backlog else None,
        )
        return ProgramSolution(decisions, backlog, over, value, certificate)


def _backlog_recursion(decisions, consumption, services, initial=None) -> np.ndarray:
    T, m, l = services.shape
    backlog = np.zeros((T, m, l))
    current = np.zeros((m, l)) if initial is None else initial
    for t in range(T):
        current = positive_part(current + consumption[t] * decisions[t][:, None] - services[t])
        backlog[t] = current
    return backlog


def _path_consumption(path: Trace, instance: Instance) -> np.ndarray:
    if path.consumption is not None:
        return path.consumption
    return np.ones((len(path), instance.m, instance.l))


def in_good_event(path: Trace, instance: Instance) -> bool:
    """No tied overflow: tied consumption alone stays within every capacity."""
    program = MatchingProgram(path.rewards, path.targets, instance.capacity,
                              _path_consumption(path, instance))
    return bool(np.all(program.tied_use() <= instance.capacity + CAPACITY_TOL))


def solve_opt(path: Trace, instance: Instance) -> OfflineSolution:
    """Hindsight optimum OPT(alpha, gamma) on a realized path.

    Parameters
    ----------
    path: Trace
        Realized arrivals with their service matrix.

    instance: Instance

    Returns
    ----------
    OfflineSolution
        Primal solution, its value and the dual certificate (theta, lambda, beta).
    """
    if instance.service_mode == ServiceMode.IDLE:
        raise NotImplementedError(
            "Fractional benchmarks are undefined under idleness; use brute_force_opt."
        )
    if path.services is None:
        raise ValueError("solve_opt needs the realized service matrix.")
    consumption = _path_consumption(path, instance)
    program = MatchingProgram(
        path.rewards,
        path.targets,
        instance.capacity,
        consumption,
        alpha=instance.alpha,
        backlog_weight=instance.gamma / instance.T,
        services=path.services,
    )
    solution = program.solve()
    backlog = solution.backlog
    if backlog is None:
        backlog = _backlog_recursion(solution.decisions, consumption, path.services)
    return OfflineSolution(
        decisions=solution.decisions,
        backlog_vars=backlog,
        objective_value=solution.value,
        dual_certificate=solution.certificate,
        in_good_event=in_good_event(path, instance),
    )


def solve_surrogate_primal(arrivals: Trace, instance: Instance) -> OfflineSolution:
    """Offline value without the congestion term."""
    program = MatchingProgram(
        arrivals.rewards,
        arrivals.targets,
        instance.capacity,
        _path_consumption(arrivals, instance),
        alpha=instance.alpha,
    )
    solution = program.solve()
    return OfflineSolution(
        decisions=solution.decisions,
        backlog_vars=None,
        objective_value=solution.value,
        dual_certificate=solution.certificate,
        in_good_event=in_good_event(arrivals, instance),
        solver="surrogate",
    )


def certificate_dual_value(certificate: DualCertificate, path: Trace, instance: Instance) -> float:
    """Dual function of the offline program evaluated at a certificate (l = 1)."""
    if instance.l != 1:
        raise NotImplementedError("The dual function is only available for l = 1.")
    theta, lam = certificate.theta[:, 0], certificate.lam[:, 0]
    T = len(path)
    beta = np.zeros((T, instance.m)) if certificate.beta is None else certificate.beta[:, :, 0]
    rho = instance.rho[:, 0]
    value = 0.0
    for t in range(T):
        scores = path.rewards[t] - theta - lam - beta[t]
        target = path.targets[t]
        value += max(0.0, scores.max()) if target == 0 else scores[target - 1]
        value += rho @ (theta + lam)
        if certificate.beta is not None:
            value += path.services[t, :, 0] @ beta[t]
    return float(value)


def brute_force_opt(path: Trace, instance: Instance) -> OfflineSolution:
    """Best integral decision sequence by exhaustive memoised search."""
    T, m = len(path), instance.m
    if T > 12 or m > 3:
        raise InstanceTooLargeError(f"Brute force is limited to T <= 12 and m <= 3, got {T}, {m}.")
    if path.services is None:
        raise ValueError("brute_force_opt needs the realized service matrix.")
    arrivals = path.arrivals
    options = [zero_decision(m)] + [unit_decision(m, i) for i in range(m)]
    penalty = instance.gamma / instance.T
    memo = {}

    def search(state: PathState) -> tuple[float, Optional[np.ndarray]]:
        t = state.t
        if t == T:
            over = positive_part(-state.remaining)
            return -instance.alpha * float(over.sum()), None
        key = (t, state.cum_free.tobytes(), state.backlog.tobytes(), state.idle.tobytes())
        if key in memo:
            return memo[key]
        arrival = arrivals[t]
        choices = options if arrival.is_free else [options[arrival.target]]
        best = (-np.inf, None)
        for z in choices:
            if not check_capacity_feasibility(state, z, arrival):
                continue
            after = step_backlog(instance, state, z, ServiceDraw(path.services[t]), arrival)
            value = float(arrival.reward @ z) - penalty * float(after.backlog.sum())
            value += search(after)[0]
            if value > best[0]:
                best = (value, z)
        memo[key] = best
        return best

    state = PathState.initial(instance)
    decisions, backlog = [], []
    for t in range(T):
        z = search(state)[1]
        decisions.append(z)
        state = step_backlog(instance, state, z, ServiceDraw(path.services[t]), arrivals[t])
        backlog.append(state.backlog)
    result = evaluate_objective(decisions, path, instance)
    return OfflineSolution(
        decisions=np.array(decisions),
        backlog_vars=np.array(backlog),
        objective_value=result.objective,
        in_good_event=in_good_event(path, instance),
        solver="brute_force",
    )


@dataclass(frozen=True, eq=False)
class StaticDualSolution:
    theta: np.ndarray
    lam: np.ndarray
    value: float

    @property
    def phi(self) -> np.ndarray:
        return self.theta + self.lam


def static_dual_function(
    phi: np.ndarray, rewards: np.ndarray, targets: np.ndarray, weights: np.ndarray,
    rho: np.ndarray
) -> float:
    """Weighted sum of max_z (w - phi) z + rho phi over the arrival support."""
    scores = rewards - phi
    best = np.where(
        targets == 0,
        positive_part(scores.max(axis=1)),
        scores[np.arange(len(targets)), np.maximum(targets - 1, 0)],
    )
    return float(weights @ best + weights.sum() * (rho @ phi))


def solve_static_dual(
    rewards: np.ndarray,
    instance: Instance,
    targets: np.ndarray = None,
    weights: np.ndarray = None,
) -> StaticDualSolution:
    """Minimize the static dual function over the dual box.

    With `weights` left out every row counts once, which gives the empirical
    dual of a finite sample; probabilities give the expectation over an
    explicit discrete distribution. The smallest minimizer is returned.
    """
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    if rewards.shape[1] != instance.m and rewards.shape[0] == instance.m:
        rewards = rewards.T
    N, m = rewards.shape
    if N == 0:
        raise ConfigurationError("The static dual needs at least one arrival.")
    targets = np.zeros(N, dtype=int) if targets is None else np.asarray(targets, dtype=int)
    weights = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    if weights.shape != (N,) or weights.min() < 0.0 or weights.sum() <= 0.0:
        raise ConfigurationError("Weights must be non-negative with a positive sum.")
    if not np.all(np.isfinite(rewards)):
        raise ConfigurationError("Rewards must be finite.")
    rho = instance.rho[:, 0]
    upper = instance.alpha + instance.lambda_cap

    free = np.flatnonzero(targets == 0)
    F = free.size
    # variables: phi (m), epigraph u (one per free row)
    linear = weights.sum() * rho.copy()
    tied = np.flatnonzero(targets > 0)
    np.subtract.at(linear, targets[tied] - 1, weights[tied])
    cost = np.concatenate([linear, weights[free]])
    rows = np.repeat(np.arange(F * m), 2)
    cols = np.empty(2 * F * m, dtype=int)
    cols[0::2] = np.tile(np.arange(m), F)
    cols[1::2] = m + np.repeat(np.arange(F), m)
    A_ub = coo_matrix((-np.ones(2 * F * m), (rows, cols)), shape=(F * m, m + F)).tocsr()
    b_ub = -rewards[free].ravel()
    bounds = [(0.0, upper)] * m + [(0.0, None)] * F
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options=solver_options)
    if res.status != 0:
        raise SolverError(f"Static dual failed: {res.message}")

    # smallest minimizer: minimize sum phi over the optimal face
    tol = 1e-9 * max(1.0, abs(res.fun))
    face = coo_matrix(cost[None, :])
    A_face = vstack([A_ub, face]).tocsr()
    b_face = np.concatenate([b_ub, [res.fun + tol]])
    second = linprog(np.concatenate([np.ones(m), np.zeros(F)]), A_ub=A_face, b_ub=b_face,
                     bounds=bounds, method="highs", options=solver_options)
    phi = second.x[:m] if second.status == 0 else res.x[:m]
    theta = np.minimum(phi, instance.alpha)
    lam = phi - theta
    value = static_dual_function(phi, rewards, targets, weights, rho)
    return StaticDualSolution(theta=theta[:, None], lam=lam[:, None], value=value)


def write_certificate(solution: OfflineSolution, path: Union[str, Path]):
    payload = {
        "objective": solution.objective_value,
        "solver": solution.solver,
        "in_good_event": solution.in_good_event,
        "certificate": None if solution.dual_certificate is None
        else solution.dual_certificate.to_dict(),
    }
    Path(path).write_text(json.dumps(payload, indent=2))
