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
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from dualmatch.misc import ConfigurationError
from dualmatch.model import ArrivalType, Instance, ServiceMode


class GeneratorKind(Enum):
    UNIFORM_SINGLE = "uniform_single"
    LB_TIED_FREE = "lb_tied_free"
    LB_THREE_REWARD = "lb_three_reward"
    LB_DETERMINISTIC = "lb_deterministic"
    LB_BERNOULLI = "lb_bernoulli"
    SYNTHETIC_MULTI = "synthetic_multi"
    TRACE = "trace"


@dataclass(frozen=True, eq=False)
class Trace:
    """A realized arrival sequence, optionally with its service matrix."""

    rewards: np.ndarray  # T x m
    targets: np.ndarray  # T
    consumption: Optional[np.ndarray] = None  # T x m x l
    services: Optional[np.ndarray] = None  # T x m x l

    def __post_init__(self):
        rewards = np.atleast_2d(np.asarray(self.rewards, dtype=float))
        targets = np.asarray(self.targets, dtype=int).ravel()
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "targets", targets)
        if rewards.shape[0] != targets.size:
            raise ConfigurationError("Rewards and targets must have the same number of rows.")
        if rewards.size and (rewards.min() < 0.0 or rewards.max() > 1.0):
            row = int(np.argwhere((rewards < 0.0) | (rewards > 1.0))[0, 0])
            raise ConfigurationError(f"Reward out of [0, 1] in row {row + 1}.")
        if targets.size and (targets.min() < 0 or targets.max() > rewards.shape[1]):
            row = int(np.argwhere((targets < 0) | (targets > rewards.shape[1]))[0, 0])
            raise ConfigurationError(f"Target out of range in row {row + 1}.")
        for name in ("consumption", "services"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float)
            if value.ndim == 2:
                value = value[:, :, None]
            if value.shape[:2] != rewards.shape:
                raise ConfigurationError(f"The {name} matrix does not match the rewards.")
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return self.targets.size

    def __getitem__(self, t: int) -> ArrivalType:
        consumption = None if self.consumption is None else self.consumption[t]
        return ArrivalType(self.rewards[t], int(self.targets[t]), consumption)

    @property
    def m(self) -> int:
        return self.rewards.shape[1]

    @property
    def l(self) -> int:
        for value in (self.consumption, self.services):
            if value is not None:
                return value.shape[2]
        return 1

    @property
    def arrivals(self) -> list[ArrivalType]:
        return [self[t] for t in range(len(self))]

    def with_services(self, services: np.ndarray) -> "Trace":
        return Trace(self.rewards, self.targets, self.consumption, services)

    def tail(self, start: int) -> "Trace":
        return Trace(
            self.rewards[start:],
            self.targets[start:],
            None if self.consumption is None else self.consumption[start:],
            None if self.services is None else self.services[start:],
        )


@dataclass(frozen=True, eq=False)
class ArrivalGenerator:
    """i.i.d. arrival distribution for one horizon."""

    kind: GeneratorKind
    m: int
    params: dict = field(default_factory=dict)
    trace: Optional[Trace] = None

    def sample(self, T: int, rng: np.random.Generator) -> Trace:
        kind = self.kind
        if kind == GeneratorKind.TRACE:
            if self.trace is None:
                raise ConfigurationError("A trace generator needs a loaded trace.")
            if len(self.trace) != T:
                raise ConfigurationError(
                    f"Trace has {len(self.trace)} rows but the horizon is {T}."
                )
            return Trace(self.trace.rewards, self.trace.targets, self.trace.consumption)
        free = np.zeros(T, dtype=int)
        if kind == GeneratorKind.UNIFORM_SINGLE:
            return Trace(rng.random((T, 1)), free)
        elif kind == GeneratorKind.LB_TIED_FREE:
            tied = rng.random(T) < 0.5 - self.params["epsilon"]
            return Trace(np.ones((T, 1)), tied.astype(int))
        elif kind == GeneratorKind.LB_THREE_REWARD:
            horizon = self.params["T"]
            probs = [0.5 - 1.0 / math.sqrt(horizon), 1.0 / math.sqrt(horizon), 0.5]
            rewards = rng.choice(np.array([1.0 / 3.0, 2.0 / 3.0, 1.0]), size=T, p=probs)
            return Trace(rewards[:, None], free)
        elif kind == GeneratorKind.LB_DETERMINISTIC:
            return Trace(np.ones((T, 1)), free)
        elif kind == GeneratorKind.LB_BERNOULLI:
            return Trace((rng.random((T, 1)) < 0.5).astype(float), free)
        elif kind == GeneratorKind.SYNTHETIC_MULTI:
            return self._sample_synthetic(T, rng)
        else:
            raise NotImplementedError(f"Unknown generator kind {kind}.")

    def _sample_synthetic(self, T: int, rng: np.random.Generator) -> Trace:
        tied_probs = np.asarray(self.params["tied_probs"], dtype=float)
        u = rng.random(T)
        targets = np.searchsorted(np.cumsum(tied_probs), u, side="right") + 1
        targets[u >= tied_probs.sum()] = 0

        spec = self.params["reward_spec"]
        if spec["kind"] == "uniform":
            low = np.asarray(spec.get("low", 0.0), dtype=float)
            high = np.asarray(spec.get("high", 1.0), dtype=float)
            rewards = low + (high - low) * rng.random((T, self.m))
        elif spec["kind"] == "table":
            values = np.asarray(spec["values"], dtype=float)
            rewards = values[rng.choice(values.shape[0], size=T, p=spec["probs"])]
        else:
            raise NotImplementedError(f"Unknown reward spec '{spec['kind']}'.")

        consumption = None
        case_size = self.params.get("case_size")
        if case_size is not None:
            l = int(self.params.get("l", 1))
            sizes = rng.integers(1, int(case_size) + 1, size=T).astype(float)
            consumption = np.broadcast_to(sizes[:, None, None], (T, self.m, l)).copy()
        return Trace(rewards, targets, consumption)

    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.kind == GeneratorKind.TRACE:
            return {"kind": self.kind.value, "trace_path": params.get("trace_path")}
        return {"kind": self.kind.value, "params": params}


def make_uniform_single(
    T: int, rho: float, epsilon: float, alpha: float = 3.0, gamma: float = 1.0,
    service_mode: ServiceMode = ServiceMode.BERNOULLI,
) -> Instance:
    if not 0.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho}.")
    if epsilon < 0.0 or rho + epsilon >= 1.0:
        raise ConfigurationError(f"Service rate rho + epsilon = {rho + epsilon} must be below 1.")
    generator = ArrivalGenerator(GeneratorKind.UNIFORM_SINGLE, m=1)
    return Instance(1, 1, T, np.array([[rho]]), epsilon, alpha, gamma, service_mode, generator)


lower_bound_kinds = {
    "I1": GeneratorKind.LB_TIED_FREE,
    "I2": GeneratorKind.LB_THREE_REWARD,
    "I3": GeneratorKind.LB_DETERMINISTIC,
    "I4": GeneratorKind.LB_BERNOULLI,
}


def make_lower_bound_instance(
    which: str, T: int, epsilon: float, alpha: float = 3.0, gamma: float = 1.0
) -> Instance:
    """Single-affiliate lower-bound instances with capacity c = T/2."""
    if which not in lower_bound_kinds:
        raise ConfigurationError(f"Unknown lower-bound instance '{which}'.")
    if T < 4:
        raise ConfigurationError("Lower-bound instances need T >= 4.")
    if which == "I2" and 1.0 / math.sqrt(T) > 0.5:
        raise ConfigurationError("I2 needs 1/sqrt(T) <= 1/2.")
    if which == "I4":
        epsilon = 0.0
    if epsilon < 0.0 or 0.5 + epsilon >= 1.0:
        raise ConfigurationError(f"epsilon must lie in [0, 0.5), got {epsilon}.")
    params = {"T": T, "epsilon": epsilon}
    generator = ArrivalGenerator(lower_bound_kinds[which], m=1, params=params)
    return Instance(
        1, 1, T, np.array([[0.5]]), epsilon, alpha, gamma, ServiceMode.BERNOULLI, generator
    )


def make_synthetic_multi(
    m: int,
    T: int,
    tied_probs,
    reward_spec: dict,
    rho,
    epsilon: float,
    alpha: float = 3.0,
    gamma: float = 1.0,
    service_mode: ServiceMode = ServiceMode.BERNOULLI,
    l: int = 1,
    case_size: int = None,
) -> Instance:
    tied_probs = np.asarray(tied_probs, dtype=float)
    rho = np.asarray(rho, dtype=float).reshape(m, -1)
    if tied_probs.shape != (m,):
        raise ConfigurationError(f"tied_probs needs {m} entries.")
    if tied_probs.min() < 0.0 or tied_probs.sum() > 1.0:
        raise ConfigurationError("tied_probs must be non-negative and sum to at most 1.")
    for i in range(m):
        if tied_probs[i] >= rho[i].min():
            raise ConfigurationError(
                f"Affiliate {i + 1}: tied probability {tied_probs[i]} must be below "
                f"rho = {rho[i].min()}."
            )
    if rho.shape[1] != l:
        rho = np.broadcast_to(rho[:, :1], (m, l)).copy()
    params = {"tied_probs": tied_probs.tolist(), "reward_spec": reward_spec}
    if case_size is not None:
        params.update(case_size=int(case_size), l=l)
    generator = ArrivalGenerator(GeneratorKind.SYNTHETIC_MULTI, m=m, params=params)
    return Instance(m, l, T, rho, epsilon, alpha, gamma, service_mode, generator)


def trace_instance(trace: Trace, rho, epsilon: float, alpha: float, gamma: float,
                   service_mode: ServiceMode = ServiceMode.BERNOULLI,
                   trace_path: str = None) -> Instance:
    generator = ArrivalGenerator(
        GeneratorKind.TRACE, m=trace.m, params={"trace_path": trace_path}, trace=trace
    )
    rho = np.asarray(rho, dtype=float).reshape(trace.m, -1)
    return Instance(trace.m, rho.shape[1], len(trace), rho, epsilon, alpha, gamma,
                    service_mode, generator)


#
# trace files
#


def _trace_columns(m: int, l: int, consumption: bool, services: bool) -> list[str]:
    columns = ["t", "target"] + [f"w_{i + 1}" for i in range(m)]
    if consumption:
        columns += [f"n_{i + 1}_{j + 1}" for i in range(m) for j in range(l)]
    if services:
        if l == 1:
            columns += [f"s_{i + 1}" for i in range(m)]
        else:
            columns += [f"s_{i + 1}_{j + 1}" for i in range(m) for j in range(l)]
    return columns


def trace_to_frame(trace: Trace) -> pd.DataFrame:
    T, m, l = len(trace), trace.m, trace.l
    blocks = [np.arange(1, T + 1)[:, None], trace.targets[:, None], trace.rewards]
    if trace.consumption is not None:
        blocks.append(trace.consumption.reshape(T, m * l))
    if trace.services is not None:
        blocks.append(trace.services.reshape(T, m * l))
    columns = _trace_columns(m, l, trace.consumption is not None, trace.services is not None)
    frame = pd.DataFrame(np.hstack(blocks), columns=columns)
    return frame.astype({"t": int, "target": int})


def save_trace(trace: Trace, path: Union[str, Path]):
    trace_to_frame(trace).to_csv(path, index=False, float_format="%.17g")


def load_trace(path: Union[str, Path]) -> Trace:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise ConfigurationError(f"Trace file '{path}' has no rows.")
    if frame.empty:
        raise ConfigurationError(f"Trace file '{path}' has no rows.")
    if "target" not in frame.columns:
        raise ConfigurationError("Trace file lacks a 'target' column.")
    if frame.isna().any().any():
        row = int(np.argwhere(frame.isna().any(axis=1).to_numpy())[0, 0])
        raise ConfigurationError(f"Malformed trace row {row + 1}.")
    reward_cols = [c for c in frame.columns if c.startswith("w_")]
    if not reward_cols:
        raise ConfigurationError("Trace file lacks reward columns.")
    m, T = len(reward_cols), len(frame)
    n_cols = [c for c in frame.columns if c.startswith("n_")]
    s_cols = [c for c in frame.columns if c.startswith("s_")]
    l = max(len(n_cols), len(s_cols)) // m if (n_cols or s_cols) else 1
    try:
        targets = frame["target"].to_numpy()
        if not np.all(np.equal(np.mod(targets, 1), 0)):
            raise ConfigurationError("Targets must be integers.")
        consumption = frame[n_cols].to_numpy(float).reshape(T, m, l) if n_cols else None
        services = frame[s_cols].to_numpy(float).reshape(T, m, l) if s_cols else None
        return Trace(frame[reward_cols].to_numpy(float), targets.astype(int), consumption,
                     services)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigurationError):
            raise
        raise ConfigurationError(f"Malformed trace file '{path}': {err}")


#
# instance config files
#


def instance_from_dict(config: dict, base_dir: Union[str, Path] = ".") -> Instance:
    try:
        m, T = int(config["m"]), int(config["T"])
        l = int(config.get("l", 1))
        rho = np.asarray(config["rho"], dtype=float).reshape(m, l)
        arrival = config["arrival"]
        kind = GeneratorKind(arrival["kind"])
    except (KeyError, ValueError, TypeError) as err:
        raise ConfigurationError(f"Invalid instance config: {err}")
    trace = None
    params = dict(arrival.get("params", {}))
    if kind == GeneratorKind.TRACE:
        trace_path = Path(base_dir) / arrival["trace_path"]
        trace = load_trace(trace_path)
        params["trace_path"] = str(arrival["trace_path"])
    generator = ArrivalGenerator(kind, m=m, params=params, trace=trace)
    try:
        return Instance(
            m=m, l=l, T=T, rho=rho,
            epsilon=float(config.get("epsilon", 0.0)),
            alpha=float(config.get("alpha", 1.0)),
            gamma=float(config.get("gamma", 0.0)),
            service_mode=ServiceMode(config.get("service_mode", "bernoulli")),
            arrival=generator,
            n_bar=float(config.get("n_bar", 10.0)),
        )
    except ValueError as err:
        raise ConfigurationError(str(err))


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"Instance file '{path}' is not valid JSON: {err}")
    return instance_from_dict(config, base_dir=path.parent)


def save_instance(instance: Instance, path: Union[str, Path]):
    Path(path).write_text(json.dumps(instance.to_dict(), indent=2))


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self):
        if self.errors:
            raise ConfigurationError("; ".join(self.errors))

    def emit_warnings(self):
        for message in self.warnings:
            warnings.warn(message)


def validate_instance(instance: Instance) -> ValidationReport:
    report = ValidationReport()
    rho = instance.rho
    if np.any(rho <= 0.0):
        report.errors.append("rho must be positive for every affiliate and resource type.")
    if np.any(rho > 1.0):
        report.errors.append("rho must not exceed 1.")
    rate = instance.service_rate
    if instance.service_mode != ServiceMode.DETERMINISTIC and np.any(rate >= 1.0):
        report.errors.append(f"Service rate rho + epsilon reaches {rate.max():.6g} >= 1.")
    if instance.epsilon < 0.0:
        report.errors.append("epsilon must be non-negative.")
    if instance.alpha < 0.0 or instance.gamma < 0.0:
        report.errors.append("alpha and gamma must be non-negative.")
    if instance.l == 1 and rho[:, 0].sum() > 1.0 + 1e-12:
        report.warnings.append(f"Σρ > 1 (sum of capacity ratios is {rho[:, 0].sum():.6g}).")
    if instance.epsilon == 0.0:
        report.warnings.append("ε = 0: the instance is near-critical.")
    if instance.alpha < 1.0:
        report.warnings.append(f"α = {instance.alpha} < 1 weakens the over-allocation penalty.")

    generator = instance.arrival
    if generator.kind == GeneratorKind.TRACE and generator.trace is not None:
        trace = generator.trace
        if len(trace) != instance.T:
            report.errors.append(f"Trace length {len(trace)} differs from T = {instance.T}.")
        if trace.m != instance.m:
            report.errors.append(f"Trace has {trace.m} affiliates, instance has {instance.m}.")
        if trace.consumption is not None and trace.consumption.max() > instance.n_bar:
            report.errors.append(f"Consumption exceeds n_bar = {instance.n_bar}.")
    elif generator.kind == GeneratorKind.SYNTHETIC_MULTI:
        tied = np.asarray(generator.params["tied_probs"])
        for i in np.flatnonzero(tied >= rho.min(axis=1)):
            report.errors.append(
                f"Affiliate {i + 1}: tied probability {tied[i]} is not below rho."
            )
        if generator.params.get("case_size", 1) > instance.n_bar:
            report.errors.append(f"Case size exceeds n_bar = {instance.n_bar}.")
    if generator.m != instance.m:
        report.errors.append("Arrival generator and instance disagree on m.")
    return report
