import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np
from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")

# absolute tolerance for capacity comparisons on real-valued tallies
CAPACITY_TOL = 1e-9

# independent purposes so that arrivals never share randomness with services
stream_purposes = {
    "arrival": 0,
    "service": 1,
    "algorithm": 2,
    "pool": 3,
}


def seeded_stream(seed: int, path: int, purpose: str) -> np.random.Generator:
    """Counter-based generator keyed by (experiment seed, path index, purpose)."""
    if purpose not in stream_purposes:
        raise ValueError(f"Unknown stream purpose '{purpose}'.")
    if seed < 0 or path < 0:
        raise ValueError("Seeds and path indices must be non-negative.")
    sequence = np.random.SeedSequence([int(seed), int(path), stream_purposes[purpose]])
    return np.random.Generator(np.random.Philox(sequence))


def positive_part(x):
    return np.maximum(x, 0.0)


def unit_decision(m: int, i: int) -> np.ndarray:
    z = np.zeros(m)
    z[i] = 1.0
    return z


def zero_decision(m: int) -> np.ndarray:
    return np.zeros(m)


def worker_count() -> int:
    value = os.environ.get("DUALMATCH_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError:
        raise ValueError(f"DUALMATCH_THREADS must be an integer, got '{value}'.")
    if count < 1:
        raise ValueError("DUALMATCH_THREADS must be at least 1.")
    return count


def ordered_map(
    func: Callable[[T], R], items: Iterable[T], verbose: bool = False, desc: str = None
) -> list[R]:
    """Apply func to every item on the worker pool, results in input order."""
    items = list(items)
    workers = min(worker_count(), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in tqdm(items, desc=desc, disable=not verbose)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(func, items), total=len(items), desc=desc,
                         disable=not verbose))


class ConfigurationError(ValueError):
    """Invalid instance, trace or experiment parameters."""


class InfeasibleDecisionError(ValueError):
    def __init__(self, period: int, message: str = None):
        self.period = period
        super().__init__(message or f"Decision violates capacity feasibility in period {period}.")


class SolverError(RuntimeError):
    pass


class InstanceTooLargeError(ValueError):
    pass
