import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_check(objective, arrays, h=1e-4, n_pick=40, seed=0):
    """Max relative error of analytic vs central-difference gradients.

    Independent of the package's own ``grad_check`` so the two can vouch for
    each other.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    _, grads = objective(*arrays)
    scale = max(float(np.abs(g).max()) for g in grads)
    worst = 0.0
    for k, a in enumerate(arrays):
        flat = a.reshape(-1)
        for idx in rng.choice(flat.size, size=min(n_pick, flat.size), replace=False):
            v = flat[idx]
            flat[idx] = v + h
            fp = objective(*arrays)[0]
            flat[idx] = v - h
            fm = objective(*arrays)[0]
            flat[idx] = v
            fd = (fp - fm) / (2 * h)
            an = grads[k].reshape(-1)[idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6 * scale))
    return worst


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
