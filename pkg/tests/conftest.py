import numpy as np
import pytest

from densecas.solver import GridSpec, RewardParams, value_iterate


@pytest.fixture(scope="session")
def tiny_grid():
    return GridSpec.uniform([0.0, 150.0, 300.0, 600.0, 1000.0, 1200.0], 8, [25.0, 35.0])


@pytest.fixture(scope="session")
def tiny_table(tiny_grid):
    return value_iterate(tiny_grid, RewardParams(), gamma=0.9, tol=1e-3, max_iters=500)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_table():
    from artifacts import default_table as load_default
    return load_default()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one pass/fail line per exit criterion; printed at the end of the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(name, ok, detail):
        lines[name] = f"{name} {'PASS' if ok else 'FAIL'}  {detail}"
        print("\n" + lines[name])
        return ok

    return record


_ACCEPTANCE = pytest.StashKey()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(lines[name])
