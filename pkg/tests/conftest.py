import numpy as np
import pytest

from steinrisk.unroll import SolveConfig, solve

# (criterion number, passed, detail) lines collected by the acceptance module
ACCEPTANCE_LINES = []


def record(number, title, passed, detail):
    ACCEPTANCE_LINES.append((number, title, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:2d} {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fixed_steps(sol, cg_tol=1e-13):
    """Config that reruns exactly ``sol.iterations`` steps with the same step size."""
    return SolveConfig(sol.tape.algorithm, eta=sol.eta, tol=1e-300, max_iter=sol.iterations,
                       record_tape=False, cg_tol=cg_tol)


def fd_jacobian(A, r, y, cfg, h=1e-6):
    """Central-difference Jacobian of ``y -> beta^(l)(y)``, shape ``(p, d)``."""
    h = h * max(1.0, np.linalg.norm(y))
    cols = []
    for e in np.eye(y.size):
        plus = solve(A, r, y + h * e, cfg).beta_hat
        minus = solve(A, r, y - h * e, cfg).beta_hat
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=1)
