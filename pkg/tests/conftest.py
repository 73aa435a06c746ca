import numpy as np
import pytest

from ucplab.grid import make_grid
from ucplab.hamiltonian import PotentialSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid1():
    return make_grid(1, 1, 64, 4.0)


@pytest.fixture
def harmonic():
    return PotentialSpec.harmonic(1.0)


@pytest.fixture
def soft_coulomb():
    return PotentialSpec.soft_coulomb(1.0, 1.0)


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    # keep CLI output of every test inside its own temp dir
    monkeypatch.setenv("UCPLAB_OUTPUT_ROOT", str(tmp_path))


_ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one (criterion, passed, detail) line per acceptance criterion."""

    def record(num: int, passed: bool, detail: str):
        line = f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((num, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
