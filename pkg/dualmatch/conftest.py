import numpy as np
import pytest

from dualmatch.instances import ArrivalGenerator, GeneratorKind, Trace
from dualmatch.model import Instance, ServiceMode


def build_instance(rho, T, epsilon=0.1, alpha=3.0, gamma=1.0,
                   service_mode=ServiceMode.BERNOULLI, l=1, tied_probs=None):
    """Synthetic instance with uniform rewards, one row of rho per affiliate."""
    rho = np.asarray(rho, dtype=float).reshape(len(rho), -1)
    m = rho.shape[0]
    if rho.shape[1] != l:
        rho = np.broadcast_to(rho[:, :1], (m, l)).copy()
    params = {
        "tied_probs": [0.0] * m if tied_probs is None else list(tied_probs),
        "reward_spec": {"kind": "uniform", "low": 0.0, "high": 1.0},
    }
    generator = ArrivalGenerator(GeneratorKind.SYNTHETIC_MULTI, m=m, params=params)
    return Instance(m, l, T, rho, epsilon, alpha, gamma, service_mode, generator)


def random_path(rng, T, m, tied_share=0.2, grid=None, service_rate=0.6, l=1):
    """Arrivals and services drawn directly, rewards optionally on a finite grid."""
    if grid is None:
        rewards = rng.random((T, m))
    else:
        rewards = rng.choice(np.asarray(grid, dtype=float), size=(T, m))
    tied = rng.random(T) < tied_share
    targets = np.where(tied, rng.integers(1, m + 1, size=T), 0)
    services = (rng.random((T, m, l)) < service_rate).astype(float)
    return Trace(rewards, targets, services=services)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def single_instance():
    return build_instance([0.5], T=40, epsilon=0.1, alpha=3.0, gamma=2.0)


@pytest.fixture
def pair_instance():
    return build_instance([0.3, 0.4], T=50, epsilon=0.1, alpha=3.0, gamma=1.0,
                          tied_probs=[0.1, 0.1])
