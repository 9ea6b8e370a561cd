import sys

import numpy as np
import pytest

from minaccel.gas import GasLaw, ParticleState


def random_state(rng, n, spread=1.0, vscale=1.0):
    x = np.sort(rng.uniform(-spread, spread, n))
    while np.any(np.diff(x) < 1e-3 * spread / n):
        x = np.sort(rng.uniform(-spread, spread, n))
    m = rng.uniform(0.5, 1.5, n)
    v = vscale * rng.normal(size=n)
    return ParticleState(x, m, v)


def uniform_state(n, lo=0.0, hi=1.0, v=None):
    x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    vel = np.zeros(n) if v is None else np.broadcast_to(v, (n,)).astype(float)
    return ParticleState(x, np.full(n, 1.0 / n), vel)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def law2():
    return GasLaw(kappa=1.0, gamma=2.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        entry = module.RESULTS[number]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number:2d} | " + "; ".join(entry["parts"]))
