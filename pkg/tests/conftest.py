import numpy as np
import pytest

from flowfit import ModelConfig, init_model


@pytest.fixture
def tiny_config():
    """Smallest architecture worth testing: 4 embedding rows, 5-wide layer."""
    return ModelConfig(beta=10.0, n_embed=4, n_layers=1, layer_size=5)


@pytest.fixture
def tiny_model(tiny_config):
    return init_model(tiny_config, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_image(rng):
    """Smooth-ish random 8x8 test image in [0, 1]."""
    return rng.random((8, 8))


def zero_head(model):
    """Zero the output layer so the model maps every coordinate to (0, 0)."""
    model.weights[-1][:] = 0
    model.biases[-1][:] = 0
    return model
