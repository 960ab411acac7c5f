import itertools
import math

import numpy as np
import pytest

from sdmtsptw import tsptw
from sdmtsptw.errors import BudgetError, InvalidInputError
from sdmtsptw.instance import Instance, generate_gendreau


def brute_force(inst, maint_node=None, tw_override=None, strict=False):
    best = math.inf
    for perm in itertools.permutations(inst.customers):
        s = tsptw.evaluate_route(inst, perm, maint_node, tw_override, strict)
        if s.feasible:
            best = min(best, s.makespan)
    return best


def instances(count, n_values=(4, 5, 6, 7), width=60, slack=10):
    for s in range(count):
        inst = generate_gendreau(n_values[s % len(n_values)], width, 300 + s, leg_slack=slack)
        yield s, inst.with_maintenance((1, inst.n))


def open_instance(n, seed, due=1e4):
    """Customers with windows [0, due]: only travel times matter."""
    base = generate_gendreau(n, 0, seed)
    zeros = np.zeros(n + 1)
    return Instance(name="open", coords=base.coords, ready=zeros, due=zeros + due,
                    service=zeros, demand=zeros)


def test_evaluate_route_by_hand():
    inst = generate_gendreau(3, 0, 1)
    route = (1, 2, 3)
    s = tsptw.evaluate_route(inst, route)
    t, prev = 0.0, 0
    for j in route:
        t = max(inst.ready[j], t + inst.d[prev, j])
        assert s.arrivals[j] == t
        prev = j
    assert s.makespan == t + inst.d[prev, 0]


def test_maintenance_adds_duration_after_the_node():
    inst = open_instance(5, 2).with_maintenance((2,), p_maint=7.0)
    order = tuple(inst.customers)
    plain = tsptw.evaluate_route(inst, order)
    maint = tsptw.evaluate_route(inst, order, maint_node=2)
    assert maint.maint_time == plain.arrivals[2]
    assert maint.makespan >= plain.makespan
    with pytest.raises(InvalidInputError):
        tsptw.evaluate_route(inst, order, maint_node=3)
    with pytest.raises(InvalidInputError):
        tsptw.evaluate_route(inst, (1, 2, 3))


def test_strict_restriction_counts_early_arrival_as_violation():
    inst = open_instance(4, 3).with_maintenance((1,))
    order = (1, 2, 3, 4)
    a = tsptw.evaluate_route(inst, order, 1).arrivals[1]
    lo = a + 5.0
    waiting = tsptw.evaluate_route(inst, order, 1, (1, (lo, lo + 10)))
    strict = tsptw.evaluate_route(inst, order, 1, (1, (lo, lo + 10)), strict=True)
    assert waiting.maint_time == lo and waiting.violation == 0.0
    assert strict.maint_time == a and strict.violation == pytest.approx(5.0)


def test_dp_matches_brute_force():
    for s, inst in instances(12):
        node = inst.maint_nodes[s % 2]
        for override in (None, (node, (inst.ready[node], inst.ready[node] + 40))):
            dp = tsptw.solve_exact_dp(inst, node, override)
            ref = brute_force(inst, node, override)
            assert (dp.makespan if dp.feasible else math.inf) == pytest.approx(ref)
            assert dp.optimal


def test_enumerator_strict_matches_brute_force():
    for s, inst in instances(12):
        enum = tsptw.RouteEnumerator(inst)
        node = inst.maint_nodes[s % 2]
        a = tsptw.solve_exact_dp(inst, node).maint_time or 0.0
        for lo, hi in ((a, a + 30), (a + 10, a + 20), (0.0, 1e4)):
            got = enum.solve(node, (node, (lo, hi)), strict=True)
            ref = brute_force(inst, node, (node, (lo, hi)), strict=True)
            assert (got.makespan if got.feasible else math.inf) == pytest.approx(ref)
            if got.feasible:
                assert lo - 1e-9 <= got.maint_time <= hi + 1e-9


def test_enumerator_waiting_mode_matches_dp():
    for s, inst in instances(8):
        enum = tsptw.RouteEnumerator(inst)
        node = inst.maint_nodes[0]
        override = (node, (inst.ready[node] + 15, inst.ready[node] + 45))
        got = enum.solve(node, override, strict=False)
        dp = tsptw.solve_exact_dp(inst, node, override)
        assert got.feasible == dp.feasible
        if dp.feasible:
            assert got.makespan == pytest.approx(dp.makespan)
    assert enum.solve().makespan == pytest.approx(tsptw.solve_exact_dp(inst).makespan)


def test_enumerator_limits():
    with pytest.raises(BudgetError):
        tsptw.RouteEnumerator(generate_gendreau(10, 50, 1))
    inst = generate_gendreau(4, 50, 1).with_maintenance((1,))
    enum = tsptw.RouteEnumerator(inst)
    with pytest.raises(InvalidInputError):
        enum.solve(2)
    with pytest.raises(InvalidInputError):
        enum.solve(None, (1, (0, 10)))


def test_heuristic_never_beats_dp_and_is_feasible():
    for s, inst in instances(15, n_values=(6, 8, 10), width=80):
        node = inst.maint_nodes[s % 2]
        dp = tsptw.solve_exact_dp(inst, node)
        h = tsptw.solve_heuristic(inst, node, config=tsptw.SolveConfig(restarts=4, seed=s))
        if h.feasible:
            assert tsptw.evaluate_route(inst, h.order, node).feasible
            assert h.makespan >= dp.makespan - 1e-9


def test_heuristic_is_deterministic_and_traced():
    inst = generate_gendreau(11, 100, 8)
    cfg = tsptw.SolveConfig(restarts=3, seed=2)
    trace = []
    a = tsptw.solve_heuristic(inst, config=cfg, trace=trace)
    b = tsptw.solve_heuristic(inst, config=cfg)
    assert a.order == b.order and a.makespan == b.makespan
    best = min(m for _, m in trace)
    assert best == pytest.approx(a.makespan)


def test_infeasible_instance_reported():
    # every due date is below the travel time from the depot
    tight = open_instance(5, 1, due=0.5)
    assert not tsptw.solve_exact_dp(tight).feasible
    assert not tsptw.solve_heuristic(tight, config=tsptw.SolveConfig(restarts=1)).feasible


def test_solve_config_validation():
    with pytest.raises(InvalidInputError):
        tsptw.SolveConfig(restarts=0)
    with pytest.raises(InvalidInputError):
        tsptw.SolveConfig(time_limit=0)


def test_schedule_serialises():
    inst = generate_gendreau(5, 100, 4)
    s = tsptw.solve_exact_dp(inst)
    d = s.to_dict()
    assert d["order"] == list(s.order) and d["arrivals"][0] == 0.0
    assert np.isfinite(d["makespan"])
