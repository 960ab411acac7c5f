"""Monte-Carlo comparison of sensor-driven (SDM) and periodic (PM) maintenance plans.

A plan fixes a route and the vehicle age at which maintenance happens.  Each
scenario supplies the vehicle's true failure time; a plan whose maintenance age
exceeds it pays corrective instead of preventive maintenance.  Both policies
see the same scenarios (common random numbers).

Two protocols are supported:

``fixed``
    one vehicle with one sensor history; SDM and PM are solved once and
    evaluated against fresh failure draws of that vehicle.
``resolve``
    every scenario is a new vehicle drawn from the fleet prior, so SDM is
    re-solved on the curve built from that vehicle's history; PM ignores the
    sensors and is solved once.
"""

from __future__ import annotations

import concurrent.futures
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import degradation as dg
from .baseline import PmPolicy, solve_pm
from .errors import InfeasibleError, InvalidInputError
from .iam import IamConfig, run_iam
from .instance import nested_maintenance_sets
from .maintcost import DEFAULT_GRID_STEP, CostParams, build_cost_curve
from .tsptw import RouteEnumerator, SolveConfig

log = logging.getLogger(__name__)

_STREAM_SCENARIO = 53


@dataclass(frozen=True)
class Scenario:
    true_theta: tuple
    failure_time: float
    seed: int
    history: dg.SignalHistory | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.failure_time > 0:
            raise InvalidInputError("failure_time must be > 0")


@dataclass(frozen=True)
class PolicyOutcome:
    routing_cost: float
    maintenance_cost: float
    total_cost: float
    failed: bool


@dataclass(frozen=True)
class Plan:
    """Route duration, routing cost rate and the planned maintenance age."""

    policy: str
    makespan: float
    planned_age: float
    cr: float
    maint_node: int | None = None
    objective: float = math.nan

    @property
    def routing_cost(self):
        return self.cr * self.makespan

    def to_dict(self):
        return {"policy": self.policy, "makespan": self.makespan, "planned_age": self.planned_age,
                "maint_node": self.maint_node, "objective": self.objective}


def sdm_plan(entry, curve, inst):
    """Plan from an IAM pool entry; a route without maintenance defers it to ``T_min``."""
    s = entry.schedule
    age = s.maint_time if s.maint_node is not None else curve.t_min
    return Plan("SDM", float(s.makespan), float(age), inst.cr, s.maint_node, float(entry.z))


def pm_plan(solution, inst):
    s = solution.schedule
    return Plan("PM", float(s.makespan), float(s.maint_time), inst.cr, s.maint_node,
                float(solution.z))


def simulate_policy(plan, scenario, cp=1000.0, cf=4000.0):
    """Realised costs of a plan; maintenance exactly at the failure time counts as preventive."""
    failed = plan.planned_age > scenario.failure_time
    maint = cf if failed else cp
    routing = plan.routing_cost
    return PolicyOutcome(routing, maint, routing + maint, bool(failed))


# --------------------------------------------------------------------------- setup


@dataclass(frozen=True)
class SimulationSetup:
    model: dg.DegradationModel = field(default_factory=dg.default_model)
    prior: dg.ThetaPrior = field(default_factory=dg.default_prior)
    obs_times: tuple = dg.DEFAULT_OBS_TIMES
    m_samples: int = 2000
    horizon: float = dg.DEFAULT_HORIZON
    step: float = dg.DEFAULT_STEP
    cp: float = 1000.0
    cf: float = 4000.0
    grid_step: float = DEFAULT_GRID_STEP
    iam: IamConfig = field(default_factory=IamConfig)
    pm: PmPolicy = field(default_factory=PmPolicy)
    solver: SolveConfig = field(default_factory=SolveConfig)

    @property
    def t_o(self):
        return float(self.obs_times[-1])

    def cost_params(self):
        return CostParams(self.cp, self.cf, self.t_o)

    def to_dict(self):
        return {"model": [self.model.offset_phi, self.model.noise_sigma, self.model.threshold],
                "prior_mean": self.prior.mean.tolist(), "prior_cov": self.prior.cov.tolist(),
                "obs_times": list(self.obs_times), "m_samples": self.m_samples,
                "horizon": self.horizon, "step": self.step, "cp": self.cp, "cf": self.cf,
                "grid_step": self.grid_step,
                "iam": {"b": self.iam.b, "epsilon": self.iam.epsilon,
                        "max_iterations": self.iam.max_iterations,
                        "subsolver": self.iam.subsolver},
                "pm": {"age_window": list(self.pm.age_window), "flat_cost": self.pm.flat_cost},
                "solver": {"restarts": self.solver.restarts,
                           "max_no_improve": self.solver.max_no_improve,
                           "seed": self.solver.seed}}


def vehicle_curve(setup, history, seed):
    """Posterior, remaining-life simulation and cost curve for one sensor history."""
    post = dg.posterior_update(setup.prior, history, setup.model)
    rld = dg.simulate_rld(post, setup.model, setup.m_samples, setup.horizon, setup.step, seed)
    return build_cost_curve(rld, setup.cost_params(), setup.grid_step)


def _seed(*key):
    return int(np.random.SeedSequence(key[0], spawn_key=key[1:]).generate_state(1)[0])


def draw_vehicle(setup, seed):
    """A vehicle from the fleet prior: ``(theta, history)``."""
    return dg.draw_truth(setup.prior, setup.model, setup.obs_times, seed)


def failure_scenario(setup, theta, history, seed):
    life = dg.sample_true_failure(setup.model, theta, setup.t_o, history.amplitudes[-1],
                                  setup.step, seed)
    return Scenario(tuple(float(x) for x in theta), float(life), int(seed), history)


def make_scenarios(setup, n_scenarios, seed, protocol="resolve"):
    """Scenario list shared by every policy and instance of a run."""
    if n_scenarios < 1:
        raise InvalidInputError("n_scenarios must be >= 1")
    out = []
    if protocol == "fixed":
        theta, hist = draw_vehicle(setup, _seed(seed, _STREAM_SCENARIO, 0))
        for j in range(n_scenarios):
            out.append(failure_scenario(setup, theta, hist, _seed(seed, _STREAM_SCENARIO, 1, j)))
    elif protocol == "resolve":
        for j in range(n_scenarios):
            s = _seed(seed, _STREAM_SCENARIO, 2, j)
            theta, hist = draw_vehicle(setup, s)
            out.append(failure_scenario(setup, theta, hist, s))
    else:
        raise InvalidInputError("protocol must be 'fixed' or 'resolve'")
    return out


# --------------------------------------------------------------------------- comparison


def _solve_sdm(setup, inst, scenario, enumerator):
    curve = vehicle_curve(setup, scenario.history, _seed(scenario.seed, 1))
    res = run_iam(inst, curve, setup.iam, enumerator=enumerator)
    return sdm_plan(res.best, curve, inst), res.converged


def _summary(outcomes):
    arr = np.array([[o.routing_cost, o.maintenance_cost, o.total_cost] for o in outcomes])
    mean = arr.mean(axis=0)
    return {"routing_cost": float(mean[0]), "maintenance_cost": float(mean[1]),
            "total_cost": float(mean[2]), "failures": int(sum(o.failed for o in outcomes))}


_ENUM_CACHE = {}


def _enumerator(setup, inst, nodes):
    """Route table shared by all cases of one instance within a process."""
    if not setup.iam.use_exact(inst):
        return None
    key = (inst.name, nodes)
    if key not in _ENUM_CACHE:
        _ENUM_CACHE.clear()
        _ENUM_CACHE[key] = RouteEnumerator(inst.with_maintenance(nodes))
    return _ENUM_CACHE[key]


def _evaluate_case(task):
    """One (instance, p) case: solve both policies and simulate every scenario."""
    setup, inst, scenarios, protocol, nodes = task
    enumerator = _enumerator(setup, inst, nodes)
    pm = solve_pm(inst, setup.pm, setup.solver,
                  exact=setup.iam.use_exact(inst) and inst.n <= 12)
    pm_p = pm_plan(pm, inst)
    if protocol == "fixed":
        sdm_p, conv = _solve_sdm(setup, inst, scenarios[0], enumerator)
        sdm_plans, converged = [sdm_p] * len(scenarios), [conv]
    else:
        sdm_plans, converged = [], []
        for sc in scenarios:
            plan, conv = _solve_sdm(setup, inst, sc, enumerator)
            sdm_plans.append(plan)
            converged.append(conv)
    rows = []
    for j, (sc, plan) in enumerate(zip(scenarios, sdm_plans)):
        so = simulate_policy(plan, sc, setup.cp, setup.cf)
        po = simulate_policy(pm_p, sc, setup.cp, setup.cf)
        rows.append({"scenario": j, "seed": sc.seed, "failure_time": sc.failure_time,
                     "true_slope": sc.true_theta[1],
                     "sdm": {**plan.to_dict(), **so.__dict__},
                     "pm": {**pm_p.to_dict(), **po.__dict__}})
    sdm_out = [simulate_policy(p, sc, setup.cp, setup.cf) for p, sc in zip(sdm_plans, scenarios)]
    pm_out = [simulate_policy(pm_p, sc, setup.cp, setup.cf) for sc in scenarios]
    sdm_sum, pm_sum = _summary(sdm_out), _summary(pm_out)
    return {"instance": inst.name, "n": inst.n, "p": len(inst.maint_nodes),
            "maint_nodes": list(inst.maint_nodes), "sdm": sdm_sum, "pm": pm_sum,
            "reduction_pct": 100.0 * (pm_sum["total_cost"] / sdm_sum["total_cost"] - 1.0),
            "pm_window_violation": pm.window_violation,
            "sdm_converged": all(converged), "scenarios": rows}


def _run_case(task):
    try:
        return _evaluate_case(task)
    except InfeasibleError as exc:
        inst = task[1]
        return {"instance": inst.name, "p": len(inst.maint_nodes), "skipped": str(exc)}


@dataclass
class ComparisonReport:
    protocol: str
    n_scenarios: int
    seed: int
    cases: list
    skipped: list
    setup: dict

    def to_dict(self):
        return {"protocol": self.protocol, "n_scenarios": self.n_scenarios, "seed": self.seed,
                "setup": self.setup, "cases": self.cases, "skipped": self.skipped}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def costs_csv(self, header=""):
        """Mean costs per policy (Table-3 layout)."""
        buf = io.StringIO(header)
        buf.seek(0, 2)
        buf.write("instance,n,p,sdm_total,sdm_routing,sdm_maintenance,"
                  "pm_total,pm_routing,pm_maintenance,reduction_pct\n")
        for c in self.cases:
            s, m = c["sdm"], c["pm"]
            buf.write(f"{c['instance']},{c['n']},{c['p']},{s['total_cost']:.4f},"
                      f"{s['routing_cost']:.4f},{s['maintenance_cost']:.4f},{m['total_cost']:.4f},"
                      f"{m['routing_cost']:.4f},{m['maintenance_cost']:.4f},"
                      f"{c['reduction_pct']:.4f}\n")
        return buf.getvalue()

    def failures_csv(self, header=""):
        """Failure counts per policy (Table-4 layout)."""
        buf = io.StringIO(header)
        buf.seek(0, 2)
        buf.write("instance,n,p,scenarios,sdm_failures,pm_failures\n")
        for c in self.cases:
            buf.write(f"{c['instance']},{c['n']},{c['p']},{self.n_scenarios},"
                      f"{c['sdm']['failures']},{c['pm']['failures']}\n")
        return buf.getvalue()


def _cases(instances, flex_sweep, seed):
    for inst in instances:
        if flex_sweep:
            sets = nested_maintenance_sets(inst, flex_sweep, seed=seed)
            for p in sorted(sets):
                yield inst.with_maintenance(sets[p])
        else:
            yield inst


def compare_policies(instances, n_scenarios, seeds=0, flex_sweep=None, setup=None,
                     protocol="resolve", workers=1):
    """Simulate SDM and PM on every instance (and every ``p`` of a flexibility sweep).

    ``workers`` caps the process pool; results do not depend on it because every
    case draws its randomness from ``seeds`` and its scenario index only.
    Infeasible cases are skipped and listed in the report.
    """
    setup = setup or SimulationSetup()
    if workers is None:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise InvalidInputError("workers must be >= 1")
    scenarios = make_scenarios(setup, n_scenarios, seeds, protocol)
    cases = list(_cases(instances, flex_sweep, seeds))

    union = {}
    for inst in cases:
        union.setdefault(inst.name, set()).update(inst.maint_nodes)
    tasks = [(setup, inst, scenarios, protocol, tuple(sorted(union[inst.name])))
             for inst in cases]

    try:
        if workers == 1:
            results = [_run_case(t) for t in tasks]
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_case, tasks))
    finally:
        _ENUM_CACHE.clear()

    done = [r for r in results if "skipped" not in r]
    skipped = [r for r in results if "skipped" in r]
    for r in skipped:
        log.warning("skipping %s (p=%s): %s", r["instance"], r["p"], r["skipped"])
    return ComparisonReport(protocol, n_scenarios, seeds, done, skipped, setup.to_dict())


def flex_csv(report, header=""):
    """SDM and PM mean costs against the number of maintenance nodes (Table-5 layout)."""
    buf = io.StringIO(header)
    buf.seek(0, 2)
    buf.write("instance,p,sdm_total,sdm_routing,sdm_maintenance,"
              "pm_total,pm_routing,pm_maintenance\n")
    for c in report.cases:
        s, m = c["sdm"], c["pm"]
        buf.write(f"{c['instance']},{c['p']},{s['total_cost']:.4f},{s['routing_cost']:.4f},"
                  f"{s['maintenance_cost']:.4f},{m['total_cost']:.4f},{m['routing_cost']:.4f},"
                  f"{m['maintenance_cost']:.4f}\n")
    return buf.getvalue()
