import math

import pytest

from imcell.model import (
    ChannelState,
    RandomShapeLinkModel,
    ThreeGPPLinkModel,
)
from imcell.intensity import fit_link_model

KAPPA = (4.0 * math.pi * 2.1e9 / 3.0e8) ** 2
NOISE_RB = 10.0 ** ((-174.0 + 10.0 * math.log10(180e3) + 10.0) / 10.0) * 1e-3
LAMBDA_MT_DENSE = 1.0 / (math.pi * 3.9 ** 2)


def make_states(sigma_los=4.0, sigma_nlos=10.0):
    return (
        ChannelState("LOS", KAPPA, 2.6, 0.0, sigma_los, 2.8, 1.0),
        ChannelState("NLOS", KAPPA, 3.8, 0.0, sigma_nlos, 1.0, 1.0),
    )


@pytest.fixture(scope="session")
def states():
    return make_states()


@pytest.fixture(scope="session")
def rs_model():
    return RandomShapeLinkModel(1.0, 0.046)


@pytest.fixture(scope="session")
def gpp_model():
    return ThreeGPPLinkModel(18.0, 36.0, 1.0)


@pytest.fixture(scope="session")
def rs_fit1(rs_model, states):
    return fit_link_model(rs_model, list(states), 1, seed=5, n_starts=12)


@pytest.fixture(scope="session")
def gpp_fit1(gpp_model, states):
    return fit_link_model(gpp_model, list(states), 1, seed=5, n_starts=12)


@pytest.fixture(scope="session")
def rs_fit3(rs_model, states):
    return fit_link_model(rs_model, list(states), 3, seed=7, n_starts=12)
