import numpy as np
import pytest

from qcopula.datasets import bundled_pseudo_samples


@pytest.fixture(scope="session")
def bundled_four():
    """(split, models, train_pseudo, test_pseudo) for all four synthetic indices."""
    return bundled_pseudo_samples()


@pytest.fixture(scope="session")
def bundled_three():
    return bundled_pseudo_samples(assets=("DJI", "VIX", "N225"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_prices(path, rows):
    path.write_text("date,close\n" + "".join(f"{d},{c}\n" for d, c in rows))
    return path
