import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdmtsptw import iam
from sdmtsptw.baseline import solve_exact_sdm
from sdmtsptw.errors import InfeasibleError, InvalidInputError
from sdmtsptw.maintcost import curve_from_values, interval_cost_bounds
from sdmtsptw.tsptw import RouteEnumerator, solve_exact_dp


def check_partition(pieces, lo, hi, tol=1e-9):
    assert pieces[0].lo == lo and pieces[-1].hi == hi
    for a, b in zip(pieces, pieces[1:]):
        assert a.hi == b.lo and a.lo < a.hi


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=3, max_size=40), st.floats(0, 1), st.floats(0, 1),
       st.integers(2, 7))
def test_split_covers_interval_with_bounded_variation(values, a, c, b):
    grid = np.arange(len(values), dtype=float)
    curve = curve_from_values(grid, values)
    lo, hi = sorted((a * grid[-1], c * grid[-1]))
    pieces = iam.split_interval(curve, 3, lo, hi, b)
    check_partition(pieces, lo, hi)
    delta = pieces[0].delta
    for p in pieces:
        g_lo, g_hi = interval_cost_bounds(curve, p.lo, p.hi)
        assert (p.g_lo, p.g_hi) == (g_lo, g_hi)
        assert g_hi - g_lo <= delta + 1e-7 * max(1.0, delta)
        assert p.node == 3


def test_split_monotone_gives_b_equal_pieces():
    grid = np.linspace(0.0, 10.0, 11)
    curve = curve_from_values(grid, 2.0 * grid)
    pieces = iam.split_interval(curve, 1, 1.0, 9.0, 4)
    assert len(pieces) == 4
    assert [p.g_hi - p.g_lo for p in pieces] == pytest.approx([4.0] * 4)
    assert pieces[0].delta == pytest.approx(4.0)


def test_split_puts_a_boundary_at_the_minimum():
    grid = np.linspace(0.0, 10.0, 101)
    curve = curve_from_values(grid, (grid - 3.0) ** 2)
    pieces = iam.split_interval(curve, 1, 0.0, 10.0, 5)
    assert any(p.hi == pytest.approx(3.0) for p in pieces)


def test_split_degenerate_and_flat():
    grid = np.linspace(0.0, 10.0, 11)
    flat = curve_from_values(grid, np.full(11, 5.0))
    assert len(iam.split_interval(flat, 1, 2.0, 8.0, 5)) == 1
    point = iam.split_interval(flat, 1, 4.0, 4.0, 5)
    assert len(point) == 1 and point[0].delta == 0.0
    with pytest.raises(InvalidInputError):
        iam.split_interval(flat, 1, 4.0, 3.0, 5)
    with pytest.raises(InvalidInputError):
        iam.split_interval(flat, 1, 1.0, 3.0, 1)


def _sub(node, lo, hi, g_lo, g_hi, tau, status="solved"):
    return iam.Subinterval(node, lo, hi, g_lo, g_hi, 1.0, tau, status)


def test_elimination_keeps_undominated_slices():
    cr = 1.0
    a = _sub(1, 0, 1, 10.0, 12.0, 100.0)    # [110, 112]
    b = _sub(1, 1, 2, 11.0, 13.0, 100.0)    # [111, 113] overlaps a: kept
    c = _sub(1, 2, 3, 15.0, 16.0, 100.0)    # [115, 116] above a's upper: dropped
    d = _sub(2, 0, 1, 0.0, 0.0, 0.0, "infeasible")
    e = _sub(2, 1, 2, 1.0, 2.0, 113.5)      # [114.5, 115.5] above global U = 112
    ledger = iam.Ledger(survivors={1: [a, b, c], 2: [d, e]})
    iam.update_bounds(ledger, cr)
    assert (ledger.upper, ledger.lower) == (112.0, 110.0)
    iam.eliminate_dominated(ledger, cr)
    assert ledger.survivors == {1: [a, b], 2: []}
    assert {s.status for s in ledger.history} == {"dominated", "infeasible"}


def test_bounds_are_monotone_and_need_a_candidate():
    ledger = iam.Ledger(survivors={1: [_sub(1, 0, 1, 10.0, 12.0, 100.0)]})
    iam.update_bounds(ledger, 1.0)
    ledger.survivors = {1: [_sub(1, 0, 1, 5.0, 20.0, 100.0)]}
    iam.update_bounds(ledger, 1.0)
    assert (ledger.upper, ledger.lower) == (112.0, 110.0)
    with pytest.raises(InfeasibleError):
        iam.update_bounds(iam.Ledger(survivors={1: []}), 1.0)


def test_flat_cost_converges_in_one_iteration(small_instances):
    inst = small_instances[0]
    grid = np.linspace(0.0, 2000.0, 9)
    curve = curve_from_values(grid, np.full(grid.size, 300.0))
    res = iam.run_iam(inst, curve)
    assert res.converged and res.iterations == 1 and res.delta0 == 0.0
    tau = min(solve_exact_dp(inst, m).makespan for m in inst.maint_nodes)
    assert res.best.z == pytest.approx(inst.cr * tau + 300.0)


def test_iam_brackets_the_oracle(small_instances, curve):
    for inst in small_instances[:6]:
        res = iam.run_iam(inst, curve, iam.IamConfig(epsilon=0.01))
        od = solve_exact_sdm(inst, curve, allow_delay=True).z
        nd = solve_exact_sdm(inst, curve, allow_delay=False).z
        assert od - 1e-9 <= res.best.z <= nd + 0.01 + 2 * res.trace[-1]["delta"] / 5
        ups = [r["U"] for r in res.trace]
        los = [r["L"] for r in res.trace]
        assert ups == sorted(ups, reverse=True) and los == sorted(los)
        best, trace = res
        assert best is res.best and trace is res.trace


def test_heuristic_subsolver_stays_feasible(small_instances, curve):
    for inst in small_instances[:4]:
        res = iam.run_iam(inst, curve, iam.IamConfig(subsolver="heuristic"))
        od = solve_exact_sdm(inst, curve, allow_delay=True).z
        assert res.best.schedule.feasible and res.best.z >= od - 1e-9
        assert res.best.z == pytest.approx(
            iam.evaluate_total_cost(res.best.schedule, curve, inst))


def test_shared_enumerator_gives_same_answer(small_instances, curve):
    inst = small_instances[1]
    wide = RouteEnumerator(inst.with_maintenance(tuple(inst.customers)))
    a = iam.run_iam(inst, curve)
    b = iam.run_iam(inst, curve, enumerator=wide)
    assert a.best.z == pytest.approx(b.best.z)
    other = small_instances[5]
    with pytest.raises(InvalidInputError):
        iam.run_iam(other, curve, enumerator=RouteEnumerator(small_instances[1]))


def test_unreachable_maintenance_is_infeasible(small_instances):
    inst = small_instances[0]
    # curve ends before any node opens and the plain route is longer than T_min
    grid = np.linspace(0.0, 1.0, 5)
    curve = curve_from_values(grid, 10.0 - grid)
    late = inst.with_maintenance(tuple(i for i in inst.customers if inst.ready[i] > 1.0))
    with pytest.raises(InfeasibleError):
        iam.run_iam(late, curve)


def test_iteration_bound():
    assert iam.iteration_bound(0.0, 1.0, 5) == 1
    assert iam.iteration_bound(100.0, 1.0, 5) == math.ceil(math.log(200.0, 5)) + 1
    assert iam.iteration_bound(0.1, 1.0, 5) == 1


def test_config_validation():
    for kwargs in ({"b": 1}, {"epsilon": 0.0}, {"max_iterations": 0}, {"subsolver": "mip"}):
        with pytest.raises(InvalidInputError):
            iam.IamConfig(**kwargs)


def test_trace_csv(small_instances, curve):
    res = iam.run_iam(small_instances[2], curve)
    text = res.trace_csv("# hello\n")
    lines = text.splitlines()
    assert lines[0] == "# hello" and lines[1] == "iteration,U,L,delta,survivors,solved"
    assert len(lines) == 2 + len(res.trace)
