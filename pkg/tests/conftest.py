import functools

import pytest

from sfdm.model import ModelParams
from sfdm.reduction import reduce


@functools.lru_cache(maxsize=None)
def cached_reduction(w_plus=2.45, delta_lambda=1e-3, beta=0.3, n_points=2001):
    return reduce(ModelParams(w_plus=w_plus, delta_lambda=delta_lambda, beta=beta), n_points=n_points)


@pytest.fixture(scope="session")
def red_245():
    """Reduction at w_plus = 2.45, delta_lambda = 1e-3, beta = 0.3."""
    return cached_reduction()


@pytest.fixture(scope="session")
def red_245_sym():
    return cached_reduction(delta_lambda=0.0)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
