import numpy as np
import pytest

from einstein_ode.model import ModelParams


def surface_states(m, count, seed=0, box=1.0):
    """Random states on the conservation surface, Y from the larger root (solved here, not by the library)."""
    rng = np.random.default_rng(seed)
    n = 4 * m + 3
    out = []
    while len(out) < count:
        x1, x2, z = rng.uniform(-box, box, 3)
        z = abs(z)
        # 6Y^2 + bY + c = 0 from the conservation law written through X1 - X2
        b = 4 * m * (4 * m + 8) * z
        c = 12 * m / n * (x1 - x2) ** 2 - 12 * m * z * z - (1 - 1 / n)
        disc = b * b - 24 * c
        if disc < 0:
            continue
        y = (-b + np.sqrt(disc)) / 12
        if y < 0:
            continue
        out.append((x1, x2, y, z))
    return np.array(out)


def random_states(count, seed=0, box=1.0):
    return np.random.default_rng(seed).uniform(-box, box, (count, 4))


@pytest.fixture(params=[1, 2, 5])
def params(request):
    return ModelParams(request.param)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
