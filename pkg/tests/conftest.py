import numpy as np
import pytest

_RESULTS = []


class AcceptanceRecorder:
    def record(self, number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _RESULTS.append((number, line))
        print(line)
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceRecorder()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, shift=1.0):
    A = rng.normal(size=(n, n))
    return A.T @ A + shift * np.eye(n)


def random_tridiagonal(rng, n, scale=0.5):
    return scale * (np.diag(rng.normal(size=n)) + np.diag(rng.normal(size=n - 1), 1)
                    + np.diag(rng.normal(size=n - 1), -1))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
