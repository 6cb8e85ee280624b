import numpy as np
import pytest

from secure_isac.config import builtin_scenario
from secure_isac.model import Scenario
from secure_isac.pcrb import compute_sensing_matrices


def make_scenario(seed=0, **overrides):
    return builtin_scenario().scenario.build(seed, **overrides)


def random_psd(rng, n, rank=None, trace=1.0):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    R = G @ G.conj().T
    return R * (trace / np.trace(R).real)


def small_scenario(seed, n_tx=2, n_rx=2, n_an=1, angles=(0.4,), probs=(1.0,), **kw):
    rng = np.random.default_rng(seed)
    h = np.sqrt(1e-8 / 2) * (rng.standard_normal(n_tx) + 1j * rng.standard_normal(n_tx))
    base = dict(n_tx=n_tx, n_rx=n_rx, n_an=n_an, angles=angles, probs=probs,
                sigma_theta_sq=1e-4, range_m=1.0, beta0=1e-4, rcs_min_gain=0.32,
                noise_user=1e-8, noise_eve=1e-8, noise_radar=1e-8, power_budget=100.0,
                user_channel=h)
    base.update(kw)
    return Scenario(**base)


@pytest.fixture(scope="session")
def scenario():
    return make_scenario(0)


@pytest.fixture(scope="session")
def matrices(scenario):
    return compute_sensing_matrices(scenario)


# acceptance criteria report one verdict line each; collected here and printed
# after the run so the lines survive output capture
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
