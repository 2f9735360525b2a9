import numpy as np
import pytest

from pourlearn.catalog import default_catalog
from pourlearn.expert import ExpertPolicy
from pourlearn.harness import build_stack, generate_demos
from pourlearn.perception import NoiseConfig, TrainConfig

DEMO_SEED = 42
TRAIN_SEED = 7


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def demo_pool(catalog):
    """The standard 80-demonstration pool: 20 seen scenes x 4 trials."""
    rng = np.random.default_rng(DEMO_SEED)
    return generate_demos(
        catalog, catalog.ids("seen"), 4, ExpertPolicy(), NoiseConfig(), rng
    )


@pytest.fixture(scope="session")
def stack_and_heldout(demo_pool):
    """The trained deployment stack plus the held-out demo pool."""
    return build_stack(demo_pool, TrainConfig(epochs=60), np.random.default_rng(TRAIN_SEED))


@pytest.fixture(scope="session")
def stack(stack_and_heldout):
    return stack_and_heldout[0]


@pytest.fixture(scope="session")
def heldout_pool(stack_and_heldout):
    return stack_and_heldout[1]
