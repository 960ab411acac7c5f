"""Iterative Alignment Method for joint routing and maintenance timing.

Every maintenance-capable node's time window is cut into subintervals over which
the maintenance cost moves by a fixed amount ``delta``.  For each subinterval a
TSPTW is solved with maintenance at that node and its window restricted to the
subinterval.  The routing time plus the cost range over the subinterval bounds
the objective of any solution maintaining there; dominated subintervals are
dropped, the survivors are split again with ``delta / b``, and the loop stops
once the global bounds are close enough.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConstraintViolation, InfeasibleError, InvalidInputError
from .maintcost import _interval_points, eval_cost, interval_argmin, interval_cost_bounds
from .tsptw import (FEAS_TOL, MAX_ENUM_CUSTOMERS, RouteEnumerator, SolveConfig,
                    solve_exact_dp, solve_heuristic)

AUTO_EXACT_MAX_N = MAX_ENUM_CUSTOMERS
_DOMINANCE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Subinterval:
    node: int
    lo: float
    hi: float
    g_lo: float
    g_hi: float
    delta: float = 0.0
    tau: float | None = None
    status: str = "pending"
    schedule: object = None

    def lower(self, cr):
        return cr * self.tau + self.g_lo

    def upper(self, cr):
        return cr * self.tau + self.g_hi


@dataclass(frozen=True)
class IamConfig:
    b: int = 5
    epsilon: float = 1.0
    max_iterations: int = 50
    solver: SolveConfig = field(default_factory=SolveConfig)
    subsolver: str = "auto"

    def __post_init__(self):
        if self.b < 2:
            raise InvalidInputError("b must be >= 2")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if self.subsolver not in ("auto", "exact", "heuristic"):
            raise InvalidInputError("subsolver must be 'auto', 'exact' or 'heuristic'")

    def use_exact(self, inst):
        if self.subsolver == "auto":
            return inst.n <= AUTO_EXACT_MAX_N
        return self.subsolver == "exact"


@dataclass(frozen=True, eq=False)
class PoolEntry:
    z: float
    schedule: object
    maint_node: int | None
    lo: float | None = None
    hi: float | None = None
    iteration: int = 0

    def to_dict(self):
        return {"z": float(self.z), "maint_node": self.maint_node, "lo": self.lo, "hi": self.hi,
                "iteration": self.iteration, "schedule": self.schedule.to_dict()}


@dataclass
class Ledger:
    """Mutable search state: surviving subintervals per node, bounds and solution pool."""

    survivors: dict
    iteration: int = 0
    delta: float = 0.0
    upper: float = math.inf
    lower: float = -math.inf
    pool: list = field(default_factory=list)
    no_maint: PoolEntry | None = None
    history: list = field(default_factory=list)

    def surviving(self):
        return [s for subs in self.survivors.values() for s in subs]


# --------------------------------------------------------------------------- splitting


def _equal_variation_cuts(ts, vs, k):
    """Interior points splitting the total variation of a polyline into ``k`` equal parts."""
    if k <= 1:
        return []
    tv = np.concatenate(([0.0], np.cumsum(np.abs(np.diff(vs)))))
    total = tv[-1]
    cuts = []
    for q in range(1, k):
        target = total * q / k
        i = int(np.searchsorted(tv, target, side="left"))
        i = min(max(i, 1), tv.size - 1)
        span = tv[i] - tv[i - 1]
        frac = 0.0 if span <= 0 else (target - tv[i - 1]) / span
        cuts.append(float(ts[i - 1] + frac * (ts[i] - ts[i - 1])))
    return cuts


def _side(curve, a, c, delta):
    ts, vs = _interval_points(curve, a, c)
    tv = float(np.abs(np.diff(vs)).sum())
    k = max(1, math.ceil(tv / delta - 1e-9)) if delta > 0 else 1
    return _equal_variation_cuts(ts, vs, k)


def split_interval(curve, node, lo, hi, b):
    """Cut ``[lo, hi]`` into consecutive pieces with bounded cost change.

    Monotone cost: ``b`` pieces with equal cost change ``|f(hi) - f(lo)| / b``.
    Otherwise ``delta = (|f(lo) - m| + |f(hi) - m|) / b`` with ``m`` the minimum,
    the minimiser becomes a boundary and each side is cut so that the cost
    variation within every piece is at most ``delta``.
    """
    if b < 2:
        raise InvalidInputError("b must be >= 2")
    if hi < lo:
        raise InvalidInputError("need lo <= hi")
    if hi == lo:
        f = eval_cost(curve, lo)
        return [Subinterval(node, lo, hi, f, f, 0.0)]
    ts, vs = _interval_points(curve, lo, hi)
    steps = np.diff(vs)
    if np.all(steps >= 0) or np.all(steps <= 0):
        delta = abs(vs[-1] - vs[0]) / b
        cuts = _equal_variation_cuts(ts, vs, b) if delta > 0 else []
    else:
        t_star, m = interval_argmin(curve, lo, hi)
        delta = (abs(vs[0] - m) + abs(vs[-1] - m)) / b
        cuts = []
        if t_star > lo:
            cuts += _side(curve, lo, t_star, delta)
        if lo < t_star < hi:
            cuts.append(t_star)
        if t_star < hi:
            cuts += _side(curve, t_star, hi, delta)
    bounds = [lo]
    for c in cuts:
        if c > bounds[-1] and c < hi:
            bounds.append(c)
    bounds.append(hi)
    out = []
    for a, c in zip(bounds[:-1], bounds[1:]):
        g_lo, g_hi = interval_cost_bounds(curve, a, c)
        out.append(Subinterval(node, a, c, g_lo, g_hi, float(delta)))
    return out


# --------------------------------------------------------------------------- solving / bounds


def solve_subinterval(inst, sub, config=None, enumerator=None):
    """Route with maintenance at ``sub.node`` starting inside ``[lo, hi]``.

    The restriction is strict: the earliest-start arrival at the node must fall
    in the subinterval, so the vehicle never waits just to reach a cheaper
    maintenance time.  ``enumerator`` (a :class:`RouteEnumerator`) gives exact
    solves; otherwise the local search is used.
    """
    e, l = inst.ready[sub.node], inst.due[sub.node]
    if max(e, sub.lo) > min(l, sub.hi):
        return replace(sub, status="infeasible")
    override = (sub.node, (sub.lo, sub.hi))
    if enumerator is not None:
        sched = enumerator.solve(sub.node, override, strict=True)
    else:
        sched = solve_heuristic(inst, sub.node, override, config, strict=True)
    if not sched.feasible:
        return replace(sub, status="infeasible", schedule=sched)
    return replace(sub, tau=sched.makespan, status="solved", schedule=sched)


def evaluate_total_cost(schedule, curve, inst):
    """Total cost ``cr * makespan + maintenance cost`` of a feasible schedule.

    Without maintenance the route must end by ``T_min`` and is charged the minimum
    cost rate ``lambda``.
    """
    if not schedule.feasible:
        raise ConstraintViolation("schedule is infeasible")
    if schedule.maint_node is not None:
        return inst.cr * schedule.makespan + eval_cost(curve, schedule.maint_time)
    if schedule.makespan > curve.t_min + FEAS_TOL:
        raise ConstraintViolation(
            f"route of duration {schedule.makespan:.4f} exceeds T_min={curve.t_min} "
            "without maintenance")
    return inst.cr * schedule.makespan + curve.lambda_min


def eliminate_dominated(ledger, cr):
    """Drop infeasible subintervals and those that cannot hold the optimum.

    A subinterval is dominated when its lower bound exceeds the upper bound of
    another subinterval of the same node, or the global upper bound.
    """
    for node, subs in ledger.survivors.items():
        solved = [s for s in subs if s.status == "solved"]
        best_upper = min((s.upper(cr) for s in solved), default=math.inf)
        cap = min(best_upper, ledger.upper)
        kept = []
        for s in solved:
            if s.lower(cr) > cap + _DOMINANCE_TOL * max(1.0, abs(cap)):
                ledger.history.append(replace(s, status="dominated"))
            else:
                kept.append(s)
        ledger.history.extend(s for s in subs if s.status == "infeasible")
        ledger.survivors[node] = kept
    return ledger


def update_bounds(ledger, cr):
    """Tighten the global bounds from the current subintervals (monotone by construction)."""
    subs = [s for s in ledger.surviving() if s.status == "solved"]
    uppers = [s.upper(cr) for s in subs]
    lowers = [s.lower(cr) for s in subs]
    if ledger.no_maint is not None:
        uppers.append(ledger.no_maint.z)
        lowers.append(ledger.no_maint.z)
    if not uppers:
        raise InfeasibleError("no feasible routing/maintenance candidate remains")
    ledger.upper = min(ledger.upper, min(uppers))
    ledger.lower = max(ledger.lower, min(lowers))
    return ledger.upper, ledger.lower


# --------------------------------------------------------------------------- driver


@dataclass(frozen=True, eq=False)
class IamResult:
    """Outcome of ``run_iam``.

    ``lower`` is a valid bound only when every restricted solve was exact; with
    heuristic subsolves it is an estimate.
    """

    best: PoolEntry
    trace: list
    converged: bool
    iterations: int
    delta0: float
    upper: float
    lower: float

    @property
    def gap(self):
        return self.upper - self.lower

    def __iter__(self):
        return iter((self.best, self.trace))

    def trace_csv(self, header=""):
        buf = io.StringIO()
        if header:
            buf.write(header)
        buf.write("iteration,U,L,delta,survivors,solved\n")
        for row in self.trace:
            buf.write(f"{row['iteration']},{row['U']!r},{row['L']!r},{row['delta']!r},"
                      f"{row['survivors']},{row['solved']}\n")
        return buf.getvalue()


def iteration_bound(delta0, epsilon, b):
    """Iterations needed once cost resolution ``delta0 / b^v`` is fine enough."""
    if delta0 <= 0:
        return 1
    return max(1, math.ceil(math.log(2 * delta0 / epsilon) / math.log(b)) + 1)


def _node_window(inst, curve, node):
    lo = max(float(inst.ready[node]), curve.t_lo)
    hi = min(float(inst.due[node]), curve.grid_max)
    return (lo, hi) if lo <= hi else None


def run_iam(inst, curve, config=None, enumerator=None):
    """Solve the joint problem; returns an :class:`IamResult` (unpacks to ``best, trace``).

    A prebuilt ``enumerator`` (for this instance or one with a superset of its
    maintenance nodes) is reused instead of tabulating the routes again.
    """
    config = config or IamConfig()
    cr = inst.cr
    if enumerator is None and config.use_exact(inst):
        enumerator = RouteEnumerator(inst)
    elif enumerator is not None and config.subsolver == "heuristic":
        enumerator = None
    if enumerator is not None and not (
            enumerator.inst.n == inst.n and np.array_equal(enumerator.inst.d, inst.d)
            and set(inst.maint_nodes) <= set(enumerator.tables)):
        raise InvalidInputError("enumerator was built for a different instance")

    if enumerator is not None:
        plain = solve_exact_dp(inst)
    else:
        plain = solve_heuristic(inst, None, None, config.solver)
    no_maint = None
    if plain.feasible and plain.makespan <= curve.t_min + FEAS_TOL:
        no_maint = PoolEntry(evaluate_total_cost(plain, curve, inst), plain, None)

    windows = {i: _node_window(inst, curve, i) for i in inst.maint_nodes}
    ledger = Ledger(survivors={i: [Subinterval(i, w[0], w[1], 0.0, 0.0)]
                               for i, w in windows.items() if w is not None},
                    no_maint=no_maint)
    if no_maint is not None:
        ledger.pool.append(no_maint)
    if not ledger.survivors and no_maint is None:
        raise InfeasibleError("no maintenance node reachable and the plain route exceeds T_min")

    trace, delta0, converged, v = [], None, False, 0
    for v in range(config.max_iterations):
        pieces = {}
        used_delta = 0.0
        for node, subs in ledger.survivors.items():
            pieces[node] = []
            for s in subs:
                for piece in split_interval(curve, node, s.lo, s.hi, config.b):
                    used_delta = max(used_delta, piece.delta)
                    pieces[node].append(solve_subinterval(inst, piece, config.solver, enumerator))
        if delta0 is None:
            delta0 = used_delta
        ledger.delta = delta0 / config.b**v
        ledger.survivors = pieces
        ledger.iteration = v

        # bounds first so cross-node pruning sees this iteration's upper bound
        update_bounds(ledger, cr)
        eliminate_dominated(ledger, cr)
        update_bounds(ledger, cr)
        for s in ledger.surviving():
            ledger.pool.append(PoolEntry(evaluate_total_cost(s.schedule, curve, inst), s.schedule,
                                         s.node, s.lo, s.hi, v))
        solved = sum(1 for subs in pieces.values() for s in subs if s.status == "solved")
        trace.append({"iteration": v, "U": ledger.upper, "L": ledger.lower,
                      "delta": ledger.delta, "survivors": len(ledger.surviving()),
                      "solved": solved})
        if ledger.upper - ledger.lower <= config.epsilon + 2 * ledger.delta / config.b:
            converged = True
            break
        if not ledger.surviving():
            converged = True
            break

    best = min(ledger.pool, key=lambda p: (p.z, -1 if p.maint_node is None else p.maint_node,
                                           p.lo if p.lo is not None else -1.0))
    return IamResult(best, trace, converged, v + 1, float(delta0 or 0.0),
                     ledger.upper, ledger.lower)
