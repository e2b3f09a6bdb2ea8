import numpy as np
import pytest

from qualshift.core import QualSample
from qualshift.dgp import DgpSpec, gen_sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def soo_sample():
    return gen_sample(DgpSpec("soo-random", "multinomial", 2000, seed=42))


@pytest.fixture(scope="session")
def soo_obs_sample():
    return gen_sample(DgpSpec("soo-obs", "multinomial", 2000, seed=7))


def random_sample(rng, n=60, M=3, p=2, **kwargs):
    """Random sample with every category present in both arms."""
    y = np.tile(np.arange(1, M + 1), n // M + 1)[:n]
    rng.shuffle(y)
    d = rng.integers(0, 2, n)
    d[:2] = [0, 1]
    return QualSample(y, d, rng.normal(size=(n, p)), **kwargs)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
