import numpy as np
import pytest

from hybridsr.tensor import clear_graph


@pytest.fixture(autouse=True)
def _fresh_graph():
    # every test starts and ends with an empty autodiff tape
    clear_graph()
    yield
    clear_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    from hybridsr.network import ModelConfig

    return ModelConfig(
        channels=12, num_groups=1, blocks_per_group=1, heads=3, scale=2
    ).validate()
