import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdmtsptw import degradation as dg
from sdmtsptw import maintcost as mc
from sdmtsptw.errors import InvalidInputError, OutOfRangeError


def deterministic_curve(r, t_o, cp=1000.0, cf=4000.0, grid_step=0.25, grid_max=400.0):
    rld = dg.RemainingLifeDistribution(np.full(50, r), t_o, grid_max, grid_step)
    return mc.build_cost_curve(rld, mc.CostParams(cp, cf, t_o), grid_step, grid_max)


@pytest.mark.parametrize("r, t_o", [(100.0, 20.0), (37.3, 0.0), (150.0, 5.0)])
def test_deterministic_failure_closed_form(r, t_o):
    curve = deterministic_curve(r, t_o)
    t = curve.grid
    expected = np.where(t < r, 1000.0 / (t + t_o), 4000.0 / (r + t_o))
    assert np.max(np.abs(curve.values / expected - 1.0)) < 1e-6
    # best is the last grid point strictly before the failure
    assert curve.t_min == t[t < r].max()


def test_grid_starts_after_zero_without_history():
    curve = deterministic_curve(50.0, 0.0)
    assert curve.t_lo == 0.25


def test_cost_params_validation():
    with pytest.raises(InvalidInputError):
        mc.CostParams(cp=10.0, cf=5.0)
    with pytest.raises(InvalidInputError):
        mc.CostParams(t_o=-1.0)


def test_eval_cost_interpolates_and_checks_range():
    curve = mc.curve_from_values([0.0, 1.0, 3.0], [2.0, 4.0, 0.0])
    assert curve(0.5) == pytest.approx(3.0)
    assert np.allclose(curve(np.array([1.0, 2.0])), [4.0, 2.0])
    with pytest.raises(OutOfRangeError):
        curve(3.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=30),
       st.floats(0, 1), st.floats(0, 1))
def test_interval_bounds_match_dense_sampling(values, a, b):
    grid = np.arange(len(values), dtype=float)
    curve = mc.curve_from_values(grid, values)
    lo, hi = sorted((a * grid[-1], b * grid[-1]))
    fmin, fmax = mc.interval_cost_bounds(curve, lo, hi)
    dense = curve(np.linspace(lo, hi, 2001))
    assert fmin <= dense.min() + 1e-9 and fmax >= dense.max() - 1e-9
    # the bounds are attained (endpoints and grid points inside are sampled exactly)
    ts, vs = mc._interval_points(curve, lo, hi)
    assert fmin == vs.min() and fmax == vs.max()
    t_star, v_star = mc.interval_argmin(curve, lo, hi)
    assert lo <= t_star <= hi and v_star == fmin


def test_calibrated_curve_shape(curve):
    assert 60.0 < curve.t_min < 200.0
    assert curve.lambda_min == curve.values.min()
    # cheap early, then the rate falls to its minimum and rises towards cf / life
    assert curve.values[0] > curve.lambda_min


def test_envelope_below_curve(curve):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        env = mc.build_tangent_envelope(curve, 25, (40.0, 300.0))
    t = np.random.default_rng(0).uniform(curve.t_lo, curve.grid_max, 10_000)
    assert np.all(env(t) <= curve(t) + 1e-9)


def test_envelope_is_tight_for_convex_curve():
    grid = np.linspace(0.0, 10.0, 101)
    curve = mc.curve_from_values(grid, (grid - 4.0) ** 2)
    env = mc.build_tangent_envelope(curve, 50)
    assert not env.convex_warning
    t = np.linspace(0.0, 10.0, 1001)
    gap = curve(t) - env(t)
    assert gap.min() >= -1e-9 and gap.max() < 0.1


def test_envelope_warns_on_nonconvex_curve():
    grid = np.linspace(0.0, 10.0, 101)
    curve = mc.curve_from_values(grid, np.sin(grid))
    with pytest.warns(RuntimeWarning):
        env = mc.build_tangent_envelope(curve, 5)
    assert env.convex_warning
    assert np.all(env(grid) <= np.sin(grid) + 1e-12)


def test_envelope_needs_a_line(curve):
    with pytest.raises(InvalidInputError):
        mc.build_tangent_envelope(curve, 0)
