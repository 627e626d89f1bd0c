import numpy as np
import pytest

from evosurf_ch.fem import assemble_forms
from evosurf_ch.geometry import make_surface

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sphere():
    """Stationary unit icospheres by level, built once per session."""
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = make_surface("unit-sphere", level)
        return cache[level]

    return get


@pytest.fixture(scope="session")
def forms(sphere):
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = assemble_forms(sphere(level).reference_mesh)
        return cache[level]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion; printed at the end of the run."""

    def record(number, title, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def _rk4_gronwall(alpha0, C, C0, eps, q, T, n=2000):
    """Classical RK4 for a' = C (C0 + a + eps a^(q+1)); returns (times, values)."""
    f = lambda a: C * (C0 + a + eps * a ** (q + 1))
    h = T / n
    a = np.empty(n + 1)
    a[0] = alpha0
    for k in range(n):
        k1 = f(a[k])
        k2 = f(a[k] + h / 2 * k1)
        k3 = f(a[k] + h / 2 * k2)
        k4 = f(a[k] + h * k3)
        a[k + 1] = a[k] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.linspace(0.0, T, n + 1), a


@pytest.fixture(scope="session")
def rk4_gronwall():
    return _rk4_gronwall
