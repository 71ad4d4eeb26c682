import numpy as np
import pytest

from jointrobust.data import Dataset
from jointrobust.simulation import DgpConfig, generate_dataset

ACCEPTANCE_LINES: list[str] = []


def random_dataset(seed: int, n: int = 200, d: int = 3) -> Dataset:
    """Confounded random data with a nonlinear outcome; both arms populated."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    p = 1.0 / (1.0 + np.exp(-(0.8 * x[:, 0] - 0.5 * x[:, -1])))
    z = (rng.random(n) < p).astype(int)
    z[:2] = [0, 1]
    y = 1.0 + x @ rng.normal(size=d) + 0.7 * x[:, 0] ** 2 + 1.5 * z + rng.normal(size=n)
    return Dataset(x, z, y)


def random_scores(seed: int, n: int) -> np.ndarray:
    return np.random.default_rng(seed + 10_000).uniform(0.1, 0.9, size=n)


@pytest.fixture
def small_data():
    return random_dataset(0)


@pytest.fixture(scope="session")
def sim_300():
    return generate_dataset(DgpConfig(300, 1.0, seed=11))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
