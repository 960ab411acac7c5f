import itertools

import numpy as np
import pytest

from sdmtsptw import fixtures
from sdmtsptw import instance as ins
from sdmtsptw.errors import BudgetError, InvalidInputError, ParseError
from sdmtsptw.tsptw import evaluate_route

SAMPLE = """!! tiny
CUST NO.  XCOORD.  YCOORD.  DEMAND  READY TIME  DUE DATE  SERVICE TIME
    1   0   0   0   0  500   0
    2   3   4   0   0  100   0
    3   6   8   0  10   50   2
  999   0   0   0   0    0   0
#maint: nodes=2 p_maint=5.0 cr=1.0
"""


def test_parse_sample():
    inst = ins.parse_instance(SAMPLE)
    assert inst.name == "tiny" and inst.n == 2
    assert inst.maint_nodes == (2,) and inst.p_maint == 5.0 and inst.cr == 1.0
    assert inst.dist[0, 1] == 5.0
    # service time of the origin is folded into outgoing arcs
    assert inst.d[2, 1] == inst.dist[2, 1] + 2.0 and inst.d[1, 2] == inst.dist[1, 2]


def test_serialize_round_trip():
    inst = ins.generate_gendreau(8, 60, 3, leg_slack=5).with_maintenance((2, 5))
    back = ins.parse_instance(ins.serialize_instance(inst), name=inst.name)
    assert back.same_as(inst)


@pytest.mark.parametrize("rounding, expected", [
    ("none", np.sqrt(2.0) * 1.55),
    ("one-decimal", 2.1),
    ("integer-truncate", 2.0),
])
def test_rounding_modes(rounding, expected):
    text = "0 0 0 0 0 100 0\n1 1.55 1.55 0 0 100 0\n"
    inst = ins.parse_instance(text, rounding=rounding)
    assert inst.dist[0, 1] == pytest.approx(expected)


@pytest.mark.parametrize("text, line", [
    ("0 0 0 0 0 100 0\n2 1 1 0 0 100 0\n", 2),
    ("0 0 0 0 0 100 0\n1 1 1 0 0\n", 2),
    ("0 0 0 0 0 100 0\n1 1 1 0 0 100 0\nfooter\n", 3),
    ("3 0 0 0 0 100 0\n", 1),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(ParseError) as info:
        ins.parse_instance(text)
    assert info.value.lineno == line


def test_parse_rejects_bad_windows_and_nodes():
    with pytest.raises(InvalidInputError):
        ins.parse_instance("0 0 0 0 0 100 0\n1 1 1 0 50 10 0\n")
    with pytest.raises(ParseError):
        ins.parse_instance("0 0 0 0 0 100 0\n")
    with pytest.raises(InvalidInputError):
        ins.parse_instance(SAMPLE).with_maintenance((0,))
    with pytest.raises(InvalidInputError):
        ins.parse_instance(SAMPLE, rounding="nearest")


def test_generator_reference_tour_is_feasible():
    for seed in range(10):
        inst = ins.generate_gendreau(10, 100, seed, leg_slack=10)
        # recover the reference order from window midpoints
        order = np.argsort(0.5 * (inst.ready[1:] + inst.due[1:])) + 1
        assert evaluate_route(inst, order).feasible


def test_generator_is_seeded():
    a = ins.generate_gendreau(12, 80, 4)
    b = ins.generate_gendreau(12, 80, 4)
    assert a.same_as(b)
    assert not a.same_as(ins.generate_gendreau(12, 80, 5))


def test_greedy_interchange_against_exact():
    # a local search: never better than enumeration, usually equal, never far off
    hits, total = 0, 0
    for seed in range(30):
        inst = ins.generate_gendreau(9, 50, seed)
        for p in (1, 2, 3):
            g = ins.pmedian_objective(inst, ins.select_maintenance_nodes(inst, p))
            e = ins.pmedian_objective(inst, ins.select_maintenance_nodes(inst, p, "exact"))
            assert e <= g + 1e-9 and g <= 1.10 * e
            hits += abs(g - e) < 1e-9
            total += 1
    assert hits >= 0.85 * total
    # with p = 1 there are no swaps to miss
    inst = ins.generate_gendreau(9, 50, 0)
    assert ins.select_maintenance_nodes(inst, 1) == ins.select_maintenance_nodes(inst, 1, "exact")


def test_pmedian_history_is_nonincreasing():
    inst = ins.generate_gendreau(25, 50, 1)
    history = []
    ins.select_maintenance_nodes(inst, 4, history=history)
    assert history and all(b <= a for a, b in zip(history, history[1:]))


def test_exact_pmedian_budget():
    inst = ins.generate_gendreau(40, 50, 1)
    with pytest.raises(BudgetError):
        ins.select_maintenance_nodes(inst, 10, method="exact")
    with pytest.raises(InvalidInputError):
        ins.select_maintenance_nodes(inst, 0)


def test_nested_sets_are_nested():
    inst = ins.generate_gendreau(20, 100, 2)
    sets = ins.nested_maintenance_sets(inst, [1, 2, 3, 5, 7])
    for a, b in itertools.pairwise(sorted(sets)):
        assert set(sets[a]) < set(sets[b]) and len(sets[b]) == b


def test_triangle_violation_report():
    inst = ins.parse_instance(SAMPLE)
    count, worst = inst.triangle_violations()
    assert count >= 0 and worst >= 0.0


def test_bundled_instances():
    names = ins.bundled_names()
    assert {"n20w200.001", "n9w150.001", "n7w100.001"} <= set(names)
    inst = ins.bundled_instance("n9w150.001")
    assert inst.n == 9 and len(inst.maint_nodes) == 3


@pytest.mark.parametrize("spec", [s for s in fixtures.FIXTURES if s.n <= 9],
                         ids=lambda s: s.name)
def test_bundled_fixtures_follow_recipe(spec):
    assert fixtures.matches_recipe(spec)
