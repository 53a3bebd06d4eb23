import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def fd_jacobian(F, u, eps=1e-7):
    """Forward-difference Jacobian, columns along the basis directions."""
    u = np.asarray(u, dtype=float)
    f0 = F(u)
    step = eps * (1.0 + np.max(np.abs(u)))
    cols = []
    for i in range(u.size):
        e = np.zeros(u.size)
        e[i] = step
        cols.append((F(u + e) - f0) / step)
    return np.column_stack(cols)


def assert_jacobian_consistent(J, F, u, rtol=1e-5):
    """Each column matches forward differences to ``rtol (1 + |J e_i|_inf)``."""
    J = np.asarray(J)
    Jfd = fd_jacobian(F, u)
    err = np.max(np.abs(J - Jfd), axis=0)
    scale = 1.0 + np.max(np.abs(J), axis=0)
    assert np.all(err <= rtol * scale), f"worst column error {np.max(err / scale):.3e}"


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
