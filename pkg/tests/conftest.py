"""Shared fixtures: system defaults and a cheap coarse configuration."""

import numpy as np
import pytest

from reactmc import table1_defaults


@pytest.fixture(scope="session")
def defaults():
    return table1_defaults()


@pytest.fixture(scope="session")
def coarse(defaults):
    """Small fast grid for tests exercising logic rather than accuracy."""
    return defaults.replace(dr=20e-9, r_max=2e-6, dt=2e-6, t_max=500e-6,
                            t_symb=100e-6, t_samp=50e-6)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
