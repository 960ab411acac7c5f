import numpy as np
import pytest

from sdmtsptw import simulate as sim
from sdmtsptw.errors import InvalidInputError
from sdmtsptw.iam import run_iam
from sdmtsptw.instance import bundled_instance, nested_maintenance_sets


def plan(age, makespan=200.0, cr=1.0):
    return sim.Plan("SDM", makespan, age, cr, 3, 0.0)


def scenario(life):
    return sim.Scenario((-3.0, 0.02), life, 0)


def test_policy_accounting():
    ok = sim.simulate_policy(plan(90.0), scenario(100.0), 1000.0, 4000.0)
    assert (ok.routing_cost, ok.maintenance_cost, ok.total_cost, ok.failed) == \
        (200.0, 1000.0, 1200.0, False)
    bad = sim.simulate_policy(plan(110.0), scenario(100.0), 1000.0, 4000.0)
    assert bad.maintenance_cost == 4000.0 and bad.failed
    # maintenance exactly at the failure time is still preventive
    assert not sim.simulate_policy(plan(100.0), scenario(100.0)).failed


def test_scenario_validation():
    with pytest.raises(InvalidInputError):
        sim.Scenario((0.0, 0.0), 0.0, 1)


def test_scenarios_are_seeded_and_follow_protocol():
    setup = sim.SimulationSetup(m_samples=200)
    a = sim.make_scenarios(setup, 6, 11)
    b = sim.make_scenarios(setup, 6, 11)
    assert [s.failure_time for s in a] == [s.failure_time for s in b]
    assert len({s.true_theta for s in a}) == 6
    fixed = sim.make_scenarios(setup, 6, 11, protocol="fixed")
    assert len({s.true_theta for s in fixed}) == 1
    assert len({s.failure_time for s in fixed}) > 1
    with pytest.raises(InvalidInputError):
        sim.make_scenarios(setup, 6, 11, protocol="other")
    with pytest.raises(InvalidInputError):
        sim.make_scenarios(setup, 0, 11)


def test_fleet_life_matches_calibration():
    setup = sim.SimulationSetup()
    lives = np.array([s.failure_time for s in sim.make_scenarios(setup, 400, 3)])
    assert 115.0 < lives.mean() < 135.0


def test_no_maintenance_plan_defers_to_t_min(curve):
    from sdmtsptw.iam import PoolEntry
    from sdmtsptw.tsptw import evaluate_route

    inst = bundled_instance("n7w100.001")
    s = evaluate_route(inst, tuple(inst.customers))
    p = sim.sdm_plan(PoolEntry(1.0, s, None), curve, inst)
    assert p.planned_age == curve.t_min and p.maint_node is None


@pytest.fixture(scope="module")
def small_report():
    inst = bundled_instance("n7w100.001")
    setup = sim.SimulationSetup(m_samples=500)
    return sim.compare_policies([inst], 8, seeds=5, setup=setup), setup


def test_report_accounting(small_report):
    report, setup = small_report
    (case,) = report.cases
    rows = case["scenarios"]
    assert len(rows) == 8
    for side in ("sdm", "pm"):
        totals = [r[side]["total_cost"] for r in rows]
        assert case[side]["total_cost"] == pytest.approx(np.mean(totals))
        assert case[side]["failures"] == sum(r[side]["failed"] for r in rows)
        for r in rows:
            failed = r[side]["planned_age"] > r["failure_time"]
            assert r[side]["failed"] == failed
            assert r[side]["maintenance_cost"] == (setup.cf if failed else setup.cp)
    # PM plans once: every scenario shares its route
    assert len({r["pm"]["makespan"] for r in rows}) == 1
    lines = report.costs_csv("# x\n").splitlines()
    assert lines[0] == "# x" and lines[2].startswith("n7w100.001,7,2,")
    assert report.failures_csv().splitlines()[1].endswith(
        f",8,{case['sdm']['failures']},{case['pm']['failures']}")


def test_worker_count_does_not_change_results(small_report):
    report, setup = small_report
    inst = bundled_instance("n7w100.001")
    again = sim.compare_policies([inst], 8, seeds=5, setup=setup, workers=2)
    assert again.to_json() == report.to_json()


def test_objective_nonincreasing_over_nested_sets():
    # nested node sets only enlarge the feasible set, so each optimum can only drop;
    # the IAM answer is within its final gap of that optimum
    base = bundled_instance("n9w150.001")
    sets = nested_maintenance_sets(base, [1, 2, 3, 5, 7])
    setup = sim.SimulationSetup(m_samples=2000)
    for sc in sim.make_scenarios(setup, 4, 2024):
        curve = sim.vehicle_curve(setup, sc.history, sim._seed(sc.seed, 1))
        prev = np.inf
        for p in sorted(sets):
            res = run_iam(base.with_maintenance(sets[p]), curve, setup.iam)
            assert res.best.z <= prev + res.gap + 1e-9
            prev = res.best.z


def test_flex_sweep_rows():
    inst = bundled_instance("n7w100.001")
    report = sim.compare_policies([inst], 3, seeds=1, flex_sweep=[1, 2, 3],
                                  setup=sim.SimulationSetup(m_samples=300))
    assert [c["p"] for c in report.cases] == [1, 2, 3]
    text = sim.flex_csv(report)
    assert text.splitlines()[0].startswith("instance,p,sdm_total")
    with pytest.raises(InvalidInputError):
        sim.compare_policies([inst], 3, workers=0)
