import numpy as np
import pytest
from hypothesis import settings

from bsbo.constraint_space import GroundSet
from bsbo.objective import ObjectiveContext

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


def make_ctx(sizes, n, seed=0, sparsity=0.0):
    """Random-reward context on sites with the given alphabet sizes."""
    rng = np.random.default_rng(seed)
    ground = GroundSet(tuple(tuple(chr(65 + c) for c in range(k)) for k in sizes))
    rho = rng.random(ground.library_size)
    rho[rng.random(rho.size) < sparsity] = 0.0
    return ObjectiveContext(ground, rho, n)


@pytest.fixture
def acceptance():
    """Record a one-line verdict per acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
