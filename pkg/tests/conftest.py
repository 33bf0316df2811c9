import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bayestmle import DgpSpec, SamplerConfig, gen_dataset

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

# short chains for unit tests; the acceptance suite uses the full defaults
FAST = SamplerConfig(n_chains=2, n_warmup=300, n_draws=400, seed=11)


@pytest.fixture(scope="session")
def fast_config():
    return FAST


@pytest.fixture(scope="session")
def binary_500():
    return gen_dataset(DgpSpec(n=500, effect_size=0.15, seed=3))


@pytest.fixture(scope="session")
def continuous_500():
    return gen_dataset(DgpSpec(n=500, effect_size=0.25, outcome_kind="continuous", seed=4))


def finite_difference(f, x, rel=1e-5):
    """Central differences with step ``rel * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        h = rel * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
