"""Single-vehicle TSPTW with an optional maintenance stop.

Schedules use earliest-start propagation: the vehicle leaves the depot at time 0,
waits at a customer only until its window opens, and spends ``p_maint`` extra time
at the maintenance node before leaving.  The makespan is the return time to the
depot.  Two solvers minimise the makespan: an exact bitmask dynamic program for
small instances and a multistart local search (relocate + 2-opt moves).
"""

from __future__ import annotations

import functools
import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, InvalidInputError

FEAS_TOL = 1e-9
MAX_DP_CUSTOMERS = 16
MAX_ENUM_CUSTOMERS = 9


@dataclass(frozen=True)
class SolveConfig:
    restarts: int = 8
    max_no_improve: int = 30
    seed: int = 0
    time_limit: float = 30.0

    def __post_init__(self):
        if self.restarts < 1 or self.max_no_improve < 1 or self.time_limit <= 0:
            raise InvalidInputError("solver settings must be positive")


@dataclass(frozen=True, eq=False)
class Schedule:
    order: tuple
    arrivals: np.ndarray
    makespan: float
    maint_node: int | None = None
    maint_time: float | None = None
    feasible: bool = True
    violation: float = 0.0
    optimal: bool = False
    timed_out: bool = False

    def to_dict(self):
        return {
            "order": [int(i) for i in self.order],
            "arrivals": [None if math.isnan(a) else float(a) for a in self.arrivals],
            "makespan": float(self.makespan),
            "maint_node": self.maint_node,
            "maint_time": self.maint_time,
            "feasible": bool(self.feasible),
            "optimal": bool(self.optimal),
            "timed_out": bool(self.timed_out),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_summary(self):
        maint = "" if self.maint_node is None else self.maint_node
        mt = "" if self.maint_time is None else repr(float(self.maint_time))
        route = "-".join(str(i) for i in self.order)
        return f"{route},{self.makespan!r},{maint},{mt},{int(self.feasible)}"


def infeasible_schedule(n, maint_node=None, optimal=False, timed_out=False):
    return Schedule((), np.full(n + 1, np.nan), math.inf, maint_node, None, False, math.inf,
                    optimal, timed_out)


def _check_maint(inst, maint_node):
    if maint_node is not None and maint_node not in inst.maint_nodes:
        raise InvalidInputError(f"node {maint_node} is not maintenance-capable")


def windows(inst, tw_override=None):
    """Ready and due times after intersecting one node's window with an override."""
    e = inst.ready.copy()
    l = inst.due.copy()
    if tw_override is not None:
        node, (lo, hi) = tw_override
        e[node] = max(e[node], lo)
        l[node] = min(l[node], hi)
    return e, l


def arc_times(inst, maint_node=None):
    """Travel matrix with the maintenance duration added to arcs leaving ``maint_node``."""
    d = inst.d
    if maint_node is None:
        return d
    d = d.copy()
    row = d[maint_node]
    row += inst.p_maint
    row[maint_node] -= inst.p_maint
    return d


def _validate_route(inst, route):
    route = tuple(int(i) for i in route)
    if sorted(route) != list(range(1, inst.n + 1)):
        raise InvalidInputError("route must visit every customer exactly once")
    return route


def _strict_bound(inst, tw_override, strict):
    """Node and lower limit that an arrival must reach without waiting (or None)."""
    if not strict or tw_override is None:
        return None, -math.inf
    node, (lo, _) = tw_override
    return node, lo


def evaluate_route(inst, route, maint_node=None, tw_override=None, strict=False):
    """Earliest-start schedule for a fixed visiting order.

    With ``strict`` the override's lower limit is a constraint on the earliest-start
    arrival rather than an opening time: the vehicle does not wait for it, and an
    earlier arrival counts as a violation.
    """
    _check_maint(inst, maint_node)
    route = _validate_route(inst, route)
    e, l = windows(inst, tw_override)
    s_node, s_lo = _strict_bound(inst, tw_override, strict)
    if s_node is not None:
        e[s_node] = inst.ready[s_node]
    d = arc_times(inst, maint_node)
    arrivals = np.full(inst.n + 1, np.nan)
    arrivals[0] = 0.0
    t, prev, late = 0.0, 0, 0.0
    for j in route:
        t = max(e[j], t + d[prev, j])
        arrivals[j] = t
        late += max(0.0, t - l[j])
        if j == s_node:
            late += max(0.0, s_lo - t)
        prev = j
    makespan = t + d[prev, 0]
    feasible = late <= FEAS_TOL
    mt = float(arrivals[maint_node]) if maint_node is not None else None
    return Schedule(route, arrivals, float(makespan), maint_node, mt, feasible, late)


# --------------------------------------------------------------------------- exact DP


@functools.lru_cache(maxsize=None)
def _layers(n):
    masks = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        counts += (masks >> b) & 1
    out = []
    for c in range(1, n + 1):
        layer = masks[counts == c]
        out.append([layer[(layer >> k) & 1 == 1] for k in range(n)])
    return out


def solve_exact_dp(inst, maint_node=None, tw_override=None):
    """Minimum-makespan schedule by dynamic programming over (visited set, last node).

    With earliest-start propagation an earlier arrival at the same state dominates a
    later one, so storing the minimum arrival per state is exact.  Ties go to the
    smallest predecessor index.
    """
    n = inst.n
    if n > MAX_DP_CUSTOMERS:
        raise BudgetError(f"exact DP supports at most {MAX_DP_CUSTOMERS} customers")
    _check_maint(inst, maint_node)
    e, l = windows(inst, tw_override)
    d = arc_times(inst, maint_node)
    ec, lc = e[1:], l[1:]
    dc = d[1:, 1:]

    size = 1 << n
    best = np.full((size, n), np.inf)
    parent = np.full((size, n), -1, dtype=np.int8)
    for k in range(n):
        t = max(ec[k], d[0, k + 1])
        if t <= lc[k] + FEAS_TOL:
            best[1 << k, k] = t

    layers = _layers(n)
    for c in range(1, n):
        for k in range(n):
            sub = layers[c][k]
            if sub.size == 0:
                continue
            prev = sub ^ (1 << k)
            cand = best[prev] + dc[:, k][None, :]
            j = np.argmin(cand, axis=1)
            t = np.maximum(cand[np.arange(sub.size), j], ec[k])
            ok = t <= lc[k] + FEAS_TOL
            best[sub[ok], k] = t[ok]
            parent[sub[ok], k] = j[ok]

    full = size - 1
    total = best[full] + d[1:, 0]
    last = int(np.argmin(total))
    if not np.isfinite(total[last]):
        return infeasible_schedule(n, maint_node, optimal=True)
    order, mask, k = [], full, last
    while k >= 0:
        order.append(k + 1)
        pk = int(parent[mask, k])
        mask ^= 1 << k
        k = pk if mask else -1
    order.reverse()
    sched = evaluate_route(inst, order, maint_node, tw_override)
    return Schedule(sched.order, sched.arrivals, sched.makespan, sched.maint_node,
                    sched.maint_time, sched.feasible, sched.violation, optimal=True)


# --------------------------------------------------------------------------- local search


class _Evaluator:
    """Scalar route evaluation on plain Python lists (hot loop of the heuristic)."""

    def __init__(self, inst, maint_node, tw_override, strict=False):
        e, l = windows(inst, tw_override)
        self.s_node, self.s_lo = _strict_bound(inst, tw_override, strict)
        if self.s_node is not None:
            e[self.s_node] = inst.ready[self.s_node]
        self.e = e.tolist()
        self.l = l.tolist()
        self.d = arc_times(inst, maint_node).tolist()

    def cost(self, route):
        d, e, l, s_node = self.d, self.e, self.l, self.s_node
        t, prev, late = 0.0, 0, 0.0
        for j in route:
            t = t + d[prev][j]
            if t < e[j]:
                t = e[j]
            elif t > l[j]:
                late += t - l[j]
            if j == s_node and t < self.s_lo:
                late += self.s_lo - t
            prev = j
        return late, t + d[prev][0]


def _better(a, b):
    """Lexicographic (lateness, makespan) comparison with tolerance."""
    if a[0] < b[0] - FEAS_TOL:
        return True
    if a[0] > b[0] + FEAS_TOL:
        return False
    return a[1] < b[1] - 1e-9


def _construct(ev, customers, rng):
    """Randomised insertion in order of perturbed due dates."""
    keys = [ev.l[j] + rng.uniform(0.0, 1.0) * (ev.l[j] - ev.e[j] + 1.0) for j in customers]
    route = []
    for j in [c for _, c in sorted(zip(keys, customers))]:
        best, best_route = None, None
        for pos in range(len(route) + 1):
            trial = route[:pos] + [j] + route[pos:]
            c = ev.cost(trial)
            if best is None or _better(c, best):
                best, best_route = c, trial
        route = best_route
    return route


def _local_search(ev, route, deadline):
    current = ev.cost(route)
    n = len(route)
    improved = True
    while improved:
        improved = False
        best, best_route = current, None
        for i in range(n):
            node = route[i]
            rest = route[:i] + route[i + 1:]
            for pos in range(n):
                if pos == i:
                    continue
                trial = rest[:pos] + [node] + rest[pos:]
                c = ev.cost(trial)
                if _better(c, best):
                    best, best_route = c, trial
        for i in range(n - 1):
            for j in range(i + 1, n):
                trial = route[:i] + route[i:j + 1][::-1] + route[j + 1:]
                c = ev.cost(trial)
                if _better(c, best):
                    best, best_route = c, trial
        if best_route is not None:
            route, current, improved = best_route, best, True
        if time.monotonic() > deadline:
            break
    return route, current


def _kick(route, rng):
    """Move a random segment of 1-3 customers to a random position."""
    n = len(route)
    if n < 3:
        return list(route)
    length = int(rng.integers(1, min(3, n - 1) + 1))
    i = int(rng.integers(0, n - length + 1))
    seg = route[i:i + length]
    rest = route[:i] + route[i + length:]
    pos = int(rng.integers(0, len(rest) + 1))
    return rest[:pos] + seg + rest[pos:]


def solve_heuristic(inst, maint_node=None, tw_override=None, config=None, trace=None,
                    strict=False):
    """Multistart local search for the minimum-makespan TSPTW route.

    Each restart builds a route by randomised insertion, improves it with relocate
    and 2-opt moves, and then perturbs the incumbent up to ``max_no_improve`` times
    without improvement.  Moves are ranked by (lateness, makespan) so the search
    can climb out of infeasible starts; only feasible routes are returned.
    ``trace`` (a list) receives the incumbent makespan after every improvement.
    ``strict`` has the meaning of :func:`evaluate_route`.
    """
    config = config or SolveConfig()
    _check_maint(inst, maint_node)
    ev = _Evaluator(inst, maint_node, tw_override, strict)
    customers = list(inst.customers)
    deadline = time.monotonic() + config.time_limit
    overall, overall_route, timed_out = None, None, False

    for restart in range(config.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(restart,)))
        route, cur = _local_search(ev, _construct(ev, customers, rng), deadline)
        if trace is not None and cur[0] <= FEAS_TOL:
            trace.append((restart, cur[1]))
        stale = 0
        while stale < config.max_no_improve and time.monotonic() <= deadline:
            cand, c = _local_search(ev, _kick(route, rng), deadline)
            if _better(c, cur):
                route, cur, stale = cand, c, 0
                if trace is not None and cur[0] <= FEAS_TOL:
                    trace.append((restart, cur[1]))
            else:
                stale += 1
        if overall is None or _better(cur, overall):
            overall, overall_route = cur, route
        if time.monotonic() > deadline:
            timed_out = True
            break

    if overall is None or overall[0] > FEAS_TOL:
        return infeasible_schedule(inst.n, maint_node, timed_out=timed_out)
    sched = evaluate_route(inst, overall_route, maint_node, tw_override, strict)
    return Schedule(sched.order, sched.arrivals, sched.makespan, sched.maint_node,
                    sched.maint_time, sched.feasible, sched.violation, timed_out=timed_out)


def solve(inst, maint_node=None, tw_override=None, config=None, exact=False):
    if exact:
        return solve_exact_dp(inst, maint_node, tw_override)
    return solve_heuristic(inst, maint_node, tw_override, config)


# --------------------------------------------------------------------------- enumeration


def order_tables(inst, perms):
    """Forward and backward timing tables for a block of visiting orders.

    Returns earliest arrivals ``arr`` and prefix feasibility ``ok`` per position,
    the plain makespan ``tau0``, and for every position ``k`` the return-time
    function after leaving it at time ``x``: ``max(x + A, B)``, feasible iff
    ``x <= X``.
    """
    d, e, l = inst.d, inst.ready, inst.due
    N, n = perms.shape
    arr = np.empty((N, n))
    ok = np.empty((N, n), dtype=bool)
    t = np.maximum(e[perms[:, 0]], d[0, perms[:, 0]])
    good = t <= l[perms[:, 0]] + FEAS_TOL
    arr[:, 0], ok[:, 0] = t, good
    for k in range(1, n):
        u, v = perms[:, k - 1], perms[:, k]
        t = np.maximum(e[v], t + d[u, v])
        good = good & (t <= l[v] + FEAS_TOL)
        arr[:, k], ok[:, k] = t, good
    tau0 = t + d[perms[:, -1], 0]

    A = np.empty((N, n))
    B = np.empty((N, n))
    X = np.empty((N, n))
    A[:, -1] = d[perms[:, -1], 0]
    B[:, -1] = -np.inf
    X[:, -1] = np.inf
    for k in range(n - 2, -1, -1):
        u, v = perms[:, k], perms[:, k + 1]
        duv = d[u, v]
        A[:, k] = duv + A[:, k + 1]
        B[:, k] = np.maximum(e[v] + A[:, k + 1], B[:, k + 1])
        xk = np.minimum(l[v] + FEAS_TOL, X[:, k + 1]) - duv
        X[:, k] = np.where(e[v] <= X[:, k + 1], xk, -np.inf)
    return arr, ok, tau0, A, B, X


def permutation_blocks(inst):
    """All customer orders, one block per first customer."""
    customers = list(inst.customers)
    for first in customers:
        rest = [c for c in customers if c != first]
        tail = np.array(list(itertools.permutations(rest)), dtype=np.int64)
        tail = tail.reshape(-1, len(customers) - 1)
        head = np.full((tail.shape[0], 1), first, dtype=np.int64)
        yield np.concatenate((head, tail), axis=1)


class RouteEnumerator:
    """Exact restricted solves by tabulating every visiting order once.

    For each maintenance node the table keeps, per order, the earliest arrival at
    the node and the return-time function of the remainder of the route, so a
    solve with a window restriction is a masked minimum.  Unlike the dynamic
    program this is exact for strict restrictions (no waiting for the lower
    limit), which the program's min-arrival dominance does not cover.
    """

    def __init__(self, inst, max_n=MAX_ENUM_CUSTOMERS):
        if inst.n > max_n:
            raise BudgetError(f"route enumeration supports at most {max_n} customers")
        self.inst = inst
        perms, arrs, taus, oks = [], {m: [] for m in inst.maint_nodes}, [], []
        for block in permutation_blocks(inst):
            arr, ok, tau0, A, B, X = order_tables(inst, block)
            base = sum(len(p) for p in perms)
            perms.append(block.astype(np.int8))
            taus.append(tau0)
            oks.append(ok[:, -1])
            for m in inst.maint_nodes:
                r, k = np.nonzero((block == m) & ok)
                arrs[m].append((base + r, arr[r, k], A[r, k], B[r, k], X[r, k]))
        self.perms = np.concatenate(perms)
        self.tau0 = np.where(np.concatenate(oks), np.concatenate(taus), np.inf)
        self.tables = {m: tuple(np.concatenate([t[i] for t in arrs[m]]) for i in range(5))
                       for m in inst.maint_nodes}

    def _schedule(self, idx, maint_node, tw_override, strict):
        sched = evaluate_route(self.inst, self.perms[idx].tolist(), maint_node, tw_override,
                               strict)
        return Schedule(sched.order, sched.arrivals, sched.makespan, sched.maint_node,
                        sched.maint_time, sched.feasible, sched.violation, optimal=True)

    def solve(self, maint_node=None, tw_override=None, strict=True):
        inst = self.inst
        if maint_node is None:
            if tw_override is not None:
                raise InvalidInputError("window restriction needs a maintenance node")
            if not np.isfinite(self.tau0).any():
                return infeasible_schedule(inst.n, None, optimal=True)
            return self._schedule(int(np.argmin(self.tau0)), None, None, False)
        if maint_node not in self.tables:
            raise InvalidInputError(f"node {maint_node} is not maintenance-capable")
        rows, a, A, B, X = self.tables[maint_node]
        lo, hi = -math.inf, math.inf
        if tw_override is not None:
            node, (lo, hi) = tw_override
            if node != maint_node:
                raise InvalidInputError("restriction must apply to the maintenance node")
        pi = a if strict else np.maximum(a, lo)
        x = pi + inst.p_maint
        feas = ((pi >= lo - FEAS_TOL) & (pi <= hi + FEAS_TOL)
                & (pi <= inst.due[maint_node] + FEAS_TOL) & (x <= X))
        if not feas.any():
            return infeasible_schedule(inst.n, maint_node, optimal=True)
        tau = np.where(feas, np.maximum(x + A, B), np.inf)
        return self._schedule(int(rows[int(np.argmin(tau))]), maint_node, tw_override, strict)
