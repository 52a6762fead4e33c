import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from swlq import CostSpec, RandomSystemConfig, SwitchedSystem, generate_random_system


@pytest.fixture
def showcase_system():
    """Two-mode planar benchmark pair; both modes individually unstable."""
    return SwitchedSystem.from_modes(
        [
            (np.array([[0.9, 0.0], [0.5, 1.5]]), np.array([2.0, 1.0])),
            (np.array([[1.1, 1.0], [0.0, 0.8]]), np.array([0.0, 1.0])),
        ]
    )


@pytest.fixture
def showcase_spec():
    return CostSpec.constant(np.eye(2), np.eye(1), 15)


@pytest.fixture
def showcase_x0():
    return np.array([1.0, 2.0])


def random_instance(seed, n, q, horizon, n_u=1, x0_covariance=20.0):
    """One deterministic random instance plus a matching unit-weight cost."""
    config = RandomSystemConfig(
        n=n, q=q, horizon=horizon, count=1, seed=seed, n_u=n_u, x0_covariance=x0_covariance
    )
    system, x0 = generate_random_system(config, 0)
    spec = CostSpec.constant(np.eye(n), np.eye(n_u), horizon)
    return system, spec, x0
