import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ewdecay.geometry import gen_annulus_mesh, gen_shell_mesh

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def annulus_small():
    return gen_annulus_mesh(1.0, 2.0, 4, 32)


@pytest.fixture(scope="session")
def shell_small():
    return gen_shell_mesh(1.0, 2.0, 2, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sym(rng, n, size=None):
    shape = (n, n) if size is None else (size, n, n)
    e = rng.standard_normal(shape)
    return 0.5 * (e + np.swapaxes(e, -1, -2))


def annulus_points(n=400, R0=1.0, R1=2.0, seed=1, dim=2):
    rng = np.random.default_rng(seed)
    r = np.concatenate([[R0, R1], rng.uniform(R0, R1, n - 2)])
    d = rng.standard_normal((n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return r[:, None] * d


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
