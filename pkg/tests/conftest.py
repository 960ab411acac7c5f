import numpy as np
import pytest

from sdmtsptw import degradation as dg
from sdmtsptw.instance import generate_gendreau, select_maintenance_nodes
from sdmtsptw.maintcost import CostParams, build_cost_curve

# one line per acceptance criterion, filled by test_acceptance.py
CRITERIA = {}


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])


def calibrated_curve(m_samples=20_000, grid_step=0.25, seed=1):
    """Cost curve of the bundled calibrated vehicle."""
    model, prior = dg.default_model(), dg.default_prior()
    _, hist = dg.draw_truth(prior, model, dg.DEFAULT_OBS_TIMES, 1)
    post = dg.posterior_update(prior, hist, model)
    rld = dg.simulate_rld(post, model, m_samples, dg.DEFAULT_HORIZON, dg.DEFAULT_STEP, seed)
    return build_cost_curve(rld, CostParams(t_o=dg.DEFAULT_T_O), grid_step)


@pytest.fixture(scope="session")
def curve():
    return calibrated_curve()


def random_instances(count=20, width=40.0, p=2, first_seed=100):
    """Small instances with ``p`` maintenance nodes and n cycling through 5..8."""
    out = []
    for s in range(count):
        inst = generate_gendreau(5 + s % 4, width, first_seed + s, leg_slack=10.0)
        out.append(inst.with_maintenance(select_maintenance_nodes(inst, p, seed=s)))
    return out


@pytest.fixture(scope="session")
def small_instances():
    return random_instances()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
