import numpy as np
import pytest

from phasecode.optics import DefocusSchedule, OpticalConfig, PhaseMask, psf_stack


@pytest.fixture(scope="session")
def config():
    return OpticalConfig()


@pytest.fixture(scope="session")
def mask():
    return PhaseMask.default()


@pytest.fixture(scope="session")
def linear_stack(mask, config):
    return psf_stack(mask, config, DefocusSchedule.linear(-4, 4, 49))


@pytest.fixture(scope="session")
def constant_stack(mask, config):
    return psf_stack(mask, config, DefocusSchedule.constant(0.0, 49))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
