import numpy as np
import pytest

from mfglam.inputs import InputModel, Marginal
from mfglam.simulators import synthetic_input_model, synthetic_pair


@pytest.fixture(scope="session")
def synth_pair():
    return synthetic_pair()


@pytest.fixture(scope="session")
def synth_input():
    return synthetic_input_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def input_1d():
    return InputModel((Marginal.uniform(0.0, 1.0),), ("x",))
