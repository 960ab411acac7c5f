"""Dynamic maintenance cost-rate curve and its tangent lower envelope.

For a remaining-life distribution ``R`` observed at vehicle age ``t_o`` the
long-run cost rate of maintaining ``t`` time units after dispatch is::

    f(t) = (P(R > t) * cp + P(R < t) * cf) / (int_0^t P(R > z) dz + t_o)

The curve is tabulated on a regular grid and treated as its piecewise-linear
interpolant everywhere else.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, OutOfRangeError

DEFAULT_GRID_STEP = 0.25
TOL_ENVELOPE = 1e-9


@dataclass(frozen=True)
class CostParams:
    cp: float = 1000.0
    cf: float = 4000.0
    t_o: float = 0.0

    def __post_init__(self):
        if not 0 < self.cp < self.cf:
            raise InvalidInputError("need 0 < cp < cf")
        if self.t_o < 0:
            raise InvalidInputError("t_o must be >= 0")


@dataclass(frozen=True)
class CostCurve:
    grid: np.ndarray
    values: np.ndarray
    cum_survival_integral: np.ndarray
    t_min: float
    lambda_min: float
    params: CostParams

    @property
    def grid_step(self):
        return float(self.grid[1] - self.grid[0]) if self.grid.size > 1 else 0.0

    @property
    def t_lo(self):
        return float(self.grid[0])

    @property
    def grid_max(self):
        return float(self.grid[-1])

    def __call__(self, t):
        return eval_cost(self, t)

    def to_csv(self, header=""):
        buf = io.StringIO()
        if header:
            buf.write(header)
        buf.write(f"# t_min={self.t_min!r} lambda={self.lambda_min!r}\n")
        buf.write("t,f,survival_integral\n")
        for t, f, s in zip(self.grid, self.values, self.cum_survival_integral):
            buf.write(f"{t!r},{f!r},{s!r}\n")
        return buf.getvalue()


def make_grid(grid_step, grid_max, start_at_step=False):
    if not grid_step > 0 or grid_max < grid_step:
        raise InvalidInputError("need grid_step > 0 and grid_max >= grid_step")
    n = int(math.floor(grid_max / grid_step + 1e-9))
    first = 1 if start_at_step else 0
    return grid_step * np.arange(first, n + 1, dtype=float)


def curve_from_values(grid, values, params=None, cum_survival_integral=None):
    """Wrap an arbitrary tabulated curve (used for synthetic curves and tests)."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or values.shape != grid.shape:
        raise InvalidInputError("grid and values must be matching 1-d arrays of length >= 2")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    if cum_survival_integral is None:
        cum_survival_integral = np.full_like(grid, np.nan)
    i = int(np.argmin(values))
    return CostCurve(grid, values, np.asarray(cum_survival_integral, dtype=float),
                     float(grid[i]), float(values[i]), params or CostParams())


def build_cost_curve(rld, params, grid_step=DEFAULT_GRID_STEP, grid_max=None):
    """Tabulate the cost rate on ``grid_step`` spacing up to ``grid_max``.

    ``grid_max`` defaults to twice the simulation horizon.  When ``t_o = 0`` the
    rate is undefined at ``t = 0`` and the grid starts at ``grid_step``.
    """
    if grid_max is None:
        grid_max = 2.0 * rld.horizon
    grid = make_grid(grid_step, grid_max, start_at_step=params.t_o == 0)
    surv = rld.survival(grid)
    integral = rld.integrated_survival(grid)
    denom = integral + params.t_o
    if np.any(denom <= 0):
        raise InvalidInputError("cost-rate denominator vanishes on the grid")
    values = (surv * params.cp + (1.0 - surv) * params.cf) / denom
    i = int(np.argmin(values))
    return CostCurve(grid, values, integral, float(grid[i]), float(values[i]), params)


def _check_range(curve, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < curve.grid[0]) or np.any(t > curve.grid[-1]):
        raise OutOfRangeError(
            f"t outside curve range [{curve.grid[0]}, {curve.grid[-1]}]; extend the grid")
    return t


def eval_cost(curve, t):
    t = _check_range(curve, t)
    out = np.interp(t, curve.grid, curve.values)
    return out if out.ndim else float(out)


def _interval_points(curve, lo, hi):
    """Breakpoints of the interpolant on ``[lo, hi]`` with their values."""
    g = curve.grid
    i0 = int(np.searchsorted(g, lo, side="right"))
    i1 = int(np.searchsorted(g, hi, side="left"))
    ts = np.concatenate(([lo], g[i0:i1], [hi]))
    vs = np.concatenate(([eval_cost(curve, lo)], curve.values[i0:i1], [eval_cost(curve, hi)]))
    return ts, vs


def interval_cost_bounds(curve, lo, hi):
    """Minimum and maximum of the interpolated cost over ``[lo, hi]``.

    Extremes of a piecewise-linear function sit at its breakpoints, so the
    endpoints plus interior grid points give exact values without assuming
    unimodality.
    """
    if lo > hi:
        raise InvalidInputError("need lo <= hi")
    _check_range(curve, [lo, hi])
    _, vs = _interval_points(curve, lo, hi)
    return float(vs.min()), float(vs.max())


def interval_argmin(curve, lo, hi):
    """First minimiser of the interpolant over ``[lo, hi]`` and its value."""
    ts, vs = _interval_points(curve, lo, hi)
    i = int(np.argmin(vs))
    return float(ts[i]), float(vs[i])


@dataclass(frozen=True)
class TangentEnvelope:
    intercepts: np.ndarray
    slopes: np.ndarray
    anchors: np.ndarray
    shifts: np.ndarray
    convex_warning: bool = False

    @property
    def lines(self):
        return list(zip(self.intercepts.tolist(), self.slopes.tolist()))

    def __call__(self, t):
        return envelope_lower_bound(self, t)


def build_tangent_envelope(curve, k_lines, range=None, tol_convex=None):
    """Piecewise-linear lower envelope from ``k_lines`` tangents.

    Anchors sit at the centres of ``k_lines`` equal cells of ``range``.  Slopes
    come from central differences of the interpolant at one grid step; each line
    is then lowered by its largest violation over the whole grid, which makes the
    envelope valid on every grid point and hence on the whole interpolant.
    """
    if k_lines < 1:
        raise InvalidInputError("k_lines must be >= 1")
    lo, hi = (curve.grid[0], curve.grid[-1]) if range is None else range
    _check_range(curve, [lo, hi])
    if tol_convex is None:
        tol_convex = 1e-6 * curve.params.cf

    inside = (curve.grid >= lo) & (curve.grid <= hi)
    second = np.diff(curve.values[inside], 2)
    convex_warning = bool(second.size and second.min() < -tol_convex)
    if convex_warning:
        warnings.warn("cost curve is not convex on the envelope range; lines were lowered",
                      RuntimeWarning, stacklevel=2)

    h = lo + (np.arange(k_lines) + 0.5) * (hi - lo) / k_lines
    dt = curve.grid_step
    left = np.clip(h - dt, curve.grid[0], curve.grid[-1])
    right = np.clip(h + dt, curve.grid[0], curve.grid[-1])
    slopes = (eval_cost(curve, right) - eval_cost(curve, left)) / np.maximum(right - left, 1e-300)
    slopes = np.atleast_1d(slopes)
    intercepts = np.atleast_1d(eval_cost(curve, h)) - slopes * h

    excess = intercepts[:, None] + slopes[:, None] * curve.grid[None, :] - curve.values[None, :]
    shifts = np.maximum(excess.max(axis=1), 0.0)
    intercepts = intercepts - shifts
    return TangentEnvelope(intercepts, slopes, np.atleast_1d(h), shifts, convex_warning)


def envelope_lower_bound(env, t):
    t = np.asarray(t, dtype=float)
    out = np.max(env.intercepts[:, None] + env.slopes[:, None] * t.reshape(1, -1), axis=0)
    return out.reshape(t.shape) if t.ndim else float(out[0])
