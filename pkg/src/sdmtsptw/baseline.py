"""Brute-force oracle, envelope lower bound and the periodic-maintenance benchmark.

The oracle enumerates every customer permutation.  For a fixed permutation and
maintenance position the return time after leaving the maintenance node at ``x``
is ``max(x + A, B)`` (feasible while ``x <= Xmax``), so the objective as a
function of the maintenance start ``pi`` is::

    g(pi) = cr * max(pi + p + A, B) + f(pi)

``f`` is piecewise linear, hence so is ``g`` and its minimum over an interval
sits at an endpoint, the kink ``pi = B - p - A`` or a breakpoint of ``f``.  Range
minimum queries over the breakpoints make the search exact and vectorised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, InfeasibleError, InvalidInputError
from .maintcost import eval_cost
from .tsptw import (FEAS_TOL, Schedule, SolveConfig, arc_times, order_tables,
                    permutation_blocks, solve_exact_dp, solve_heuristic)

MAX_ORACLE_N = 9


@dataclass(frozen=True)
class OracleConfig:
    """``pi_grid_step=None`` searches maintenance times exactly over the curve's
    breakpoints; a positive step restricts the search to that grid instead."""

    max_n: int = MAX_ORACLE_N
    pi_grid_step: float | None = None

    def __post_init__(self):
        if not 1 <= self.max_n <= MAX_ORACLE_N:
            raise InvalidInputError(f"max_n must lie in [1, {MAX_ORACLE_N}]")
        if self.pi_grid_step is not None and not self.pi_grid_step > 0:
            raise InvalidInputError("pi_grid_step must be positive")


@dataclass(frozen=True)
class PmPolicy:
    age_window: tuple = (100.0, 112.0)
    flat_cost: float = 1000.0

    def __post_init__(self):
        lo, hi = self.age_window
        if not lo < hi:
            raise InvalidInputError("PM age window needs lo < hi")
        if self.flat_cost < 0:
            raise InvalidInputError("flat_cost must be >= 0")


@dataclass(frozen=True, eq=False)
class OracleResult:
    z: float
    schedule: Schedule

    @property
    def maint_node(self):
        return self.schedule.maint_node

    @property
    def maint_time(self):
        return self.schedule.maint_time

    def to_dict(self):
        return {"z": float(self.z), "route": list(self.schedule.order),
                "maint_node": self.maint_node, "maint_time": self.maint_time,
                "makespan": float(self.schedule.makespan)}


# --------------------------------------------------------------------------- helpers


class _SparseMin:
    """Static range-minimum table over a 1-d array."""

    def __init__(self, values):
        self.levels = [np.asarray(values, dtype=float)]
        k = 1
        while 2 * k <= self.levels[0].size:
            prev = self.levels[-1]
            self.levels.append(np.minimum(prev[:-k], prev[k:]))
            k *= 2

    def query(self, lo, hi):
        """Minimum over ``[lo, hi]`` index ranges (inclusive); ``inf`` when empty."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        empty = hi < lo
        length = np.where(empty, 1, hi - lo + 1)
        j = np.floor(np.log2(length)).astype(int)
        out = np.full(lo.shape, np.inf)
        for level in np.unique(j[~empty]):
            sel = (~empty) & (j == level)
            tab = self.levels[level]
            out[sel] = np.minimum(tab[lo[sel]], tab[hi[sel] - (1 << level) + 1])
        return out


class _Pwl:
    """Piecewise-linear maintenance cost with RMQ tables for ``V`` and ``V + cr t``."""

    def __init__(self, xs, vs, cr):
        self.x = np.asarray(xs, dtype=float)
        self.v = np.asarray(vs, dtype=float)
        self.cr = cr
        self.flat = _SparseMin(self.v)
        self.slanted = _SparseMin(self.v + cr * self.x)

    def g(self, pi, p, A, B):
        return self.cr * np.maximum(pi + p + A, B) + np.interp(pi, self.x, self.v)

    def minimise(self, lo, hi, p, A, B):
        """Minimum of ``g`` over ``[lo, hi]`` for arrays of ranges (``lo <= hi``)."""
        kink = B - p - A
        best = np.minimum(self.g(lo, p, A, B), self.g(hi, p, A, B))
        best = np.minimum(best, self.g(np.clip(kink, lo, hi), p, A, B))
        i_lo = np.searchsorted(self.x, lo, side="left")
        i_hi = np.searchsorted(self.x, hi, side="right") - 1
        k_left = np.searchsorted(self.x, kink, side="right") - 1
        k_right = np.searchsorted(self.x, kink, side="left")
        flat = self.flat.query(i_lo, np.minimum(i_hi, k_left))
        with np.errstate(invalid="ignore"):
            flat = np.where(np.isfinite(flat), self.cr * B + flat, np.inf)
        slanted = self.slanted.query(np.maximum(i_lo, k_right), i_hi)
        slanted = np.where(np.isfinite(slanted), self.cr * (p + A) + slanted, np.inf)
        return np.minimum(best, np.minimum(flat, slanted))

    def argmin(self, lo, hi, p, A, B):
        """Scalar minimiser of ``g`` on ``[lo, hi]`` (earliest on ties)."""
        inner = self.x[(self.x >= lo) & (self.x <= hi)]
        cands = np.unique(np.concatenate(([lo, hi, min(max(B - p - A, lo), hi)], inner)))
        vals = self.g(cands, p, A, B)
        i = int(np.argmin(vals))
        return float(cands[i]), float(vals[i])


def _curve_pwl(curve, cr, config):
    if config.pi_grid_step is None:
        return _Pwl(curve.grid, curve.values, cr)
    n = int(math.floor((curve.grid_max - curve.t_lo) / config.pi_grid_step + 1e-9))
    xs = curve.t_lo + config.pi_grid_step * np.arange(n + 1)
    return _Pwl(xs, eval_cost(curve, xs), cr)


def _envelope_pwl(env, curve, cr):
    lo, hi = curve.t_lo, curve.grid_max
    pts = [curve.grid]
    s, c = env.slopes, env.intercepts
    ds = s[:, None] - s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (c[None, :] - c[:, None]) / ds
    cross = cross[np.isfinite(cross)]
    pts.append(cross[(cross >= lo) & (cross <= hi)])
    xs = np.unique(np.concatenate(pts))
    return _Pwl(xs, env(xs), cr)


def delayed_schedule(inst, route, maint_node, pi):
    """Schedule for a fixed order with maintenance deliberately started at ``pi``."""
    d = arc_times(inst, maint_node)
    arrivals = np.full(inst.n + 1, np.nan)
    arrivals[0] = 0.0
    t, prev, late = 0.0, 0, 0.0
    for j in route:
        t = max(inst.ready[j], t + d[prev, j])
        if j == maint_node:
            if pi < t - FEAS_TOL:
                raise InvalidInputError("maintenance cannot start before arrival")
            t = max(t, pi)
        arrivals[j] = t
        late += max(0.0, t - inst.due[j])
        prev = j
    makespan = t + d[prev, 0]
    mt = float(arrivals[maint_node]) if maint_node is not None else None
    return Schedule(tuple(route), arrivals, float(makespan), maint_node, mt, late <= FEAS_TOL, late,
                    optimal=True)


# --------------------------------------------------------------------------- enumeration


def _enumerate(inst, curve, pwl, allow_delay, max_n, no_maint_cost):
    n = inst.n
    if n > max_n:
        raise BudgetError(f"oracle enumeration supports at most {max_n} customers (got {n})")
    if n < 1:
        raise InvalidInputError("instance has no customers")
    p, cr = inst.p_maint, inst.cr
    t_lo, t_hi = curve.t_lo, curve.grid_max
    best = (math.inf, None)
    for perms in permutation_blocks(inst):
        arr, ok, tau0, A, B, X = order_tables(inst, perms)

        full_ok = ok[:, -1] & (tau0 <= curve.t_min + FEAS_TOL)
        if full_ok.any():
            z = np.where(full_ok, cr * tau0 + no_maint_cost, np.inf)
            i = int(np.argmin(z))
            if z[i] < best[0]:
                best = (float(z[i]), ("none", perms[i]))

        for m in inst.maint_nodes:
            for k in range(n):
                rows = np.flatnonzero((perms[:, k] == m) & ok[:, k])
                if rows.size == 0:
                    continue
                a = arr[rows, k]
                Ak, Bk, Xk = A[rows, k], B[rows, k], X[rows, k]
                if allow_delay:
                    lo = np.maximum(a, t_lo)
                    # Xk carries the feasibility tolerance; a delayed start stays clear of
                    # it, while starting on arrival remains allowed whenever it is valid
                    hi = np.minimum(np.minimum(inst.due[m], Xk - FEAS_TOL - p), t_hi)
                    on_time = (a >= t_lo) & (a <= t_hi) & (a + p <= Xk)
                    hi = np.where(on_time, np.maximum(hi, a), hi)
                else:
                    lo = a
                    hi = np.where((a >= t_lo) & (a <= t_hi) & (a + p <= Xk), a, -np.inf)
                valid = lo <= hi
                if not valid.any():
                    continue
                rows, lo, hi = rows[valid], lo[valid], hi[valid]
                Ak, Bk = Ak[valid], Bk[valid]
                z = pwl.minimise(lo, hi, p, Ak, Bk)
                i = int(np.argmin(z))
                if z[i] < best[0] - 1e-12:
                    best = (float(z[i]), ("maint", perms[rows[i]], m, k,
                                          float(lo[i]), float(hi[i]), float(Ak[i]), float(Bk[i])))
    return best


def _reconstruct(inst, curve, pwl, best):
    z, info = best
    if info is None:
        return None
    if info[0] == "none":
        route = [int(j) for j in info[1]]
        return delayed_schedule(inst, route, None, 0.0)
    _, perm, m, _, lo, hi, A, B = info
    pi, _ = pwl.argmin(lo, hi, inst.p_maint, A, B)
    return delayed_schedule(inst, [int(j) for j in perm], int(m), pi)


def solve_exact_sdm(inst, curve, config=None, allow_delay=True):
    """Global optimum by enumeration of routes, maintenance node and start time.

    With ``allow_delay=False`` maintenance starts on arrival (earliest start),
    which is the search space of the subinterval method.  Raises
    :class:`InfeasibleError` when no candidate is feasible.
    """
    config = config or OracleConfig()
    pwl = _curve_pwl(curve, inst.cr, config)
    best = _enumerate(inst, curve, pwl, allow_delay, config.max_n, curve.lambda_min)
    if best[1] is None:
        raise InfeasibleError("no feasible route with or without maintenance")
    sched = _reconstruct(inst, curve, pwl, best)
    return OracleResult(best[0], sched)


def solve_envelope_lb(inst, env, curve, config=None):
    """Oracle objective with the maintenance cost replaced by the tangent envelope."""
    config = config or OracleConfig()
    pwl = _envelope_pwl(env, curve, inst.cr)
    best = _enumerate(inst, curve, pwl, True, config.max_n, curve.lambda_min)
    if best[1] is None:
        raise InfeasibleError("no feasible route with or without maintenance")
    return best[0]


def oracle_report(inst, curve, env=None, config=None):
    """JSON-ready record with both oracle variants and the envelope bound."""
    delay = solve_exact_sdm(inst, curve, config, allow_delay=True)
    plain = solve_exact_sdm(inst, curve, config, allow_delay=False)
    out = {"instance": inst.name, "n": inst.n, "oracle": delay.to_dict(),
           "oracle_no_delay": plain.to_dict()}
    if env is not None:
        out["envelope_lb"] = solve_envelope_lb(inst, env, curve, config)
        out["envelope_lines"] = len(env.slopes)
    return out


# --------------------------------------------------------------------------- periodic maintenance


@dataclass(frozen=True, eq=False)
class PmSolution:
    schedule: Schedule
    z: float
    window_violation: float = 0.0

    def to_dict(self):
        return {"z": float(self.z), "window_violation": float(self.window_violation),
                "schedule": self.schedule.to_dict()}


def _pm_solve(inst, node, window, config, exact):
    override = (node, window)
    if exact:
        return solve_exact_dp(inst, node, override)
    return solve_heuristic(inst, node, override, config)


def solve_pm(inst, policy=None, config=None, exact=False):
    """Route with maintenance forced into the vehicle-age window at a flat cost.

    When no maintenance node can be reached inside the window, the window is
    widened symmetrically by the smallest amount (found by bisection) that
    admits a feasible route and the widening is reported as a violation.
    """
    policy = policy or PmPolicy()
    config = config or SolveConfig()
    if not inst.maint_nodes:
        raise InvalidInputError("instance has no maintenance-capable node")
    lo, hi = policy.age_window

    def best_for(window):
        out = None
        for node in inst.maint_nodes:
            s = _pm_solve(inst, node, window, config, exact)
            if s.feasible and (out is None or s.makespan < out.makespan - 1e-9):
                out = s
        return out

    sched = best_for((lo, hi))
    widen = 0.0
    if sched is None:
        step = max(hi - lo, 1.0)
        upper = step
        while best_for((lo - upper, hi + upper)) is None:
            upper *= 2.0
            if upper > 1e6:
                raise InfeasibleError("no feasible route with a maintenance stop")
        lower = 0.0
        for _ in range(40):
            mid = 0.5 * (lower + upper)
            if best_for((lo - mid, hi + mid)) is None:
                lower = mid
            else:
                upper = mid
        widen = upper
        sched = best_for((lo - widen, hi + widen))
    return PmSolution(sched, inst.cr * sched.makespan + policy.flat_cost, widen)


def dumps_report(report):
    return json.dumps(report, sort_keys=True, indent=2)
