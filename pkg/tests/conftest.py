"""Shared fixtures."""

import logging
import math

import numpy as np
import pytest

from bermudan_fixpoint.harmonic_core import GeneratorParams, SupportGrid


@pytest.fixture(autouse=True)
def _reset_root_logger():
    """Keep handlers installed by one test from leaking into the next."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def bs_params() -> GeneratorParams:
    """r = delta = 5%, unit volatility, quarterly exercise."""
    return GeneratorParams.from_black_scholes(r=0.05, delta=0.05, sigma=1.0, t=0.25)


@pytest.fixture
def put_grid() -> SupportGrid:
    """201 nodes on [ln 0.1, ln 1]."""
    return SupportGrid.uniform(math.log(0.1), 0.0, 201)
