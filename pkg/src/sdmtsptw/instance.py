"""TSPTW instances: Gendreau-format parsing, canonical serialisation, p-median node selection."""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import BudgetError, InvalidInputError, ParseError

ROUNDINGS = ("none", "one-decimal", "integer-truncate")
DEFAULT_CR = 0.72
DEFAULT_P_MAINT = 10.0
EXACT_PMEDIAN_BUDGET = 10**7


def euclidean(coords, rounding="none"):
    coords = np.asarray(coords, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    if rounding == "none":
        return dist
    if rounding == "one-decimal":
        return np.floor(dist * 10.0 + 1e-9) / 10.0
    if rounding == "integer-truncate":
        return np.floor(dist + 1e-9)
    raise InvalidInputError(f"unknown rounding {rounding!r}; choose from {ROUNDINGS}")


@dataclass(frozen=True, eq=False)
class Instance:
    """Single-vehicle TSPTW with maintenance data.  Node 0 is the depot.

    ``dist`` is the symmetric travel-time matrix from coordinates; ``d`` adds the
    service time of the origin node to every outgoing arc, so schedules need no
    separate service term.
    """

    name: str
    coords: np.ndarray
    ready: np.ndarray
    due: np.ndarray
    service: np.ndarray
    demand: np.ndarray
    rounding: str = "none"
    maint_nodes: tuple = ()
    p_maint: float = DEFAULT_P_MAINT
    cr: float = DEFAULT_CR
    dist: np.ndarray = field(init=False, repr=False)
    d: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("coords", "ready", "due", "service", "demand"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n1 = self.coords.shape[0]
        if self.coords.shape != (n1, 2) or n1 < 2:
            raise InvalidInputError("coords must be (n+1) x 2 with at least one customer")
        for name in ("ready", "due", "service", "demand"):
            if getattr(self, name).shape != (n1,):
                raise InvalidInputError(f"{name} must have one entry per node")
        bad = np.flatnonzero(self.ready > self.due)
        if bad.size:
            raise InvalidInputError(f"time window with e > l at node {int(bad[0])}")
        maint = tuple(sorted(int(i) for i in self.maint_nodes))
        if any(i < 1 or i >= n1 for i in maint) or len(set(maint)) != len(maint):
            raise InvalidInputError("maintenance nodes must be distinct customers 1..n")
        object.__setattr__(self, "maint_nodes", maint)
        if self.p_maint < 0 or self.cr < 0:
            raise InvalidInputError("p_maint and cr must be >= 0")
        dist = euclidean(self.coords, self.rounding)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "d", dist + self.service[:, None] * (1 - np.eye(n1)))

    @property
    def n(self):
        return self.coords.shape[0] - 1

    @property
    def customers(self):
        return range(1, self.n + 1)

    @property
    def tw(self):
        return np.column_stack([self.ready, self.due])

    def with_maintenance(self, nodes=None, p_maint=None, cr=None):
        return replace(self,
                       maint_nodes=self.maint_nodes if nodes is None else tuple(nodes),
                       p_maint=self.p_maint if p_maint is None else p_maint,
                       cr=self.cr if cr is None else cr)

    def same_as(self, other):
        return (self.name == other.name and self.rounding == other.rounding
                and self.maint_nodes == other.maint_nodes and self.p_maint == other.p_maint
                and self.cr == other.cr
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("coords", "ready", "due", "service", "demand")))

    def triangle_violations(self, tol=1e-9):
        """Number and size of triangle-inequality violations in ``d``."""
        d = self.d
        via = (d[:, :, None] + d[None, :, :]).min(axis=1)
        excess = d - via
        return int(np.count_nonzero(excess > tol)), float(max(excess.max(), 0.0))


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_instance(text, rounding="none", name=None):
    """Parse Gendreau/Dumas-style TSPTW text.

    Rows are ``index x y demand ready due service``; the first row is the depot.
    Indices may start at 0 or 1 but must increase by one; a row with index 999
    ends the node list (only comments are read after it).  Lines before the
    first row are headers.  A
    ``#maint: nodes=.. p_maint=.. cr=..`` comment restores maintenance data.
    """
    if rounding not in ROUNDINGS:
        raise InvalidInputError(f"unknown rounding {rounding!r}; choose from {ROUNDINGS}")
    rows, meta, first_index = [], {}, None
    title, ended = None, False
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if ended and not s.startswith("#"):
            continue
        if s.startswith("#"):
            if s.lower().startswith("#maint:"):
                for item in s.split(":", 1)[1].split():
                    if "=" not in item:
                        raise ParseError(f"bad #maint entry {item!r}", lineno)
                    k, v = item.split("=", 1)
                    meta[k] = (v, lineno)
            continue
        toks = s.split()
        if not _is_number(toks[0]):
            if rows:
                raise ParseError(f"unexpected text after node rows: {s!r}", lineno)
            if title is None and s.startswith("!!"):
                title = s[2:].split()[0] if len(s) > 2 and s[2:].split() else None
            continue
        if len(toks) != 7 or not all(_is_number(t) for t in toks):
            raise ParseError(f"expected 7 numeric columns, got {len(toks)}", lineno)
        vals = [float(t) for t in toks]
        idx = vals[0]
        if idx != int(idx):
            raise ParseError("node index must be an integer", lineno)
        idx = int(idx)
        if idx == 999:
            ended = True
            continue
        if first_index is None:
            if idx not in (0, 1):
                raise ParseError("first node index must be 0 or 1", lineno)
            first_index = idx
        elif idx != first_index + len(rows):
            raise ParseError(f"node index {idx} out of sequence", lineno)
        rows.append(vals[1:])
    if len(rows) < 2:
        raise ParseError("instance needs a depot and at least one customer")
    arr = np.array(rows)
    kwargs = {}
    if meta:
        try:
            if "nodes" in meta:
                v = meta["nodes"][0]
                kwargs["maint_nodes"] = tuple(int(x) for x in v.split(",") if x)
            if "p_maint" in meta:
                kwargs["p_maint"] = float(meta["p_maint"][0])
            if "cr" in meta:
                kwargs["cr"] = float(meta["cr"][0])
        except ValueError as exc:
            raise ParseError(f"bad #maint values: {exc}") from exc
    return Instance(name=name or title or "instance", coords=arr[:, 0:2], demand=arr[:, 2],
                    ready=arr[:, 3], due=arr[:, 4], service=arr[:, 5], rounding=rounding,
                    **kwargs)


def serialize_instance(inst):
    buf = io.StringIO()
    buf.write(f"!! {inst.name}\n")
    buf.write("CUST NO.  XCOORD.  YCOORD.  DEMAND  READY TIME  DUE DATE  SERVICE TIME\n")
    for i in range(inst.n + 1):
        vals = (inst.coords[i, 0], inst.coords[i, 1], inst.demand[i], inst.ready[i],
                inst.due[i], inst.service[i])
        buf.write(f"{i:5d} " + " ".join(repr(float(v)) for v in vals) + "\n")
    buf.write("  999 0.0 0.0 0.0 0.0 0.0 0.0\n")
    nodes = ",".join(str(i) for i in inst.maint_nodes)
    buf.write(f"#maint: nodes={nodes} p_maint={inst.p_maint!r} cr={inst.cr!r}\n")
    return buf.getvalue()


def load_instance(path, rounding="none"):
    with open(path) as fh:
        text = fh.read()
    stem = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    if stem.endswith(".txt"):
        stem = stem[:-4]
    return parse_instance(text, rounding=rounding, name=stem)


def bundled_instance(name, rounding="none"):
    """Load one of the Gendreau-style fixtures shipped with the package."""
    ref = resources.files("sdmtsptw") / "data" / f"{name}.txt"
    return parse_instance(ref.read_text(), rounding=rounding, name=name)


def bundled_names():
    ref = resources.files("sdmtsptw") / "data"
    return sorted(p.name[:-4] for p in ref.iterdir() if p.name.endswith(".txt"))


def generate_gendreau(n, width, seed, side=50.0, name=None, horizon_slack=500.0, leg_slack=0.0):
    """Random instance in the style of the Dumas/Gendreau benchmark generator.

    Integer coordinates are uniform on ``[0, side]^2``.  A random reference tour is
    timed with earliest-start travel and every customer gets a window around its
    reference arrival with total width uniform on ``[0, width]``, so the reference
    tour stays feasible.  ``leg_slack`` is added to every leg of the reference
    timing; a slack of at least ``p_maint`` keeps a maintenance stop feasible at
    any customer.
    """
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, int(side) + 1, size=(n + 1, 2)).astype(float)
    dist = euclidean(coords)
    tour = rng.permutation(np.arange(1, n + 1))
    ready = np.zeros(n + 1)
    due = np.zeros(n + 1)
    t, prev = 0.0, 0
    for j in tour:
        t += dist[prev, j] + leg_slack
        w = rng.uniform(0.0, width)
        left = rng.uniform(0.0, w)
        ready[j] = max(0.0, math.floor(t - left))
        due[j] = math.ceil(t + (w - left))
        prev = j
    due[0] = math.ceil(t + dist[prev, 0] + horizon_slack)
    zeros = np.zeros(n + 1)
    return Instance(name=name or f"n{n}w{int(width)}.s{seed}", coords=coords, ready=ready,
                    due=due, service=zeros, demand=zeros.copy())


# --------------------------------------------------------------------------- p-median


def pmedian_objective(inst, nodes):
    """Sum over customers of the distance to the nearest selected node."""
    nodes = list(nodes)
    if not nodes:
        return math.inf
    cust = np.arange(1, inst.n + 1)
    return float(inst.dist[np.ix_(cust, nodes)].min(axis=1).sum())


def _pmedian_exact(inst, p):
    n = inst.n
    if n * math.comb(n, p) > EXACT_PMEDIAN_BUDGET:
        raise BudgetError(f"exact p-median over C({n},{p}) sets exceeds the enumeration budget")
    cust = np.arange(1, n + 1)
    sub = inst.dist[np.ix_(cust, cust)]
    best, best_set = math.inf, None
    for combo in itertools.combinations(range(n), p):
        val = sub[:, combo].min(axis=1).sum()
        if val < best - 1e-12:
            best, best_set = val, combo
    return tuple(int(c) + 1 for c in best_set), float(best)


def _greedy_add(inst, chosen, p, order):
    chosen = list(chosen)
    while len(chosen) < p:
        best, pick = math.inf, None
        for j in order:
            if j in chosen:
                continue
            val = pmedian_objective(inst, chosen + [j])
            if val < best - 1e-12:
                best, pick = val, j
        chosen.append(pick)
    return chosen


def _interchange(inst, chosen, order, history):
    chosen = list(chosen)
    current = pmedian_objective(inst, chosen)
    history.append(current)
    while True:
        best, move = current, None
        for pos in range(len(chosen)):
            for j in order:
                if j in chosen:
                    continue
                trial = chosen[:pos] + [j] + chosen[pos + 1:]
                val = pmedian_objective(inst, trial)
                if val < best - 1e-12:
                    best, move = val, (pos, j)
        if move is None:
            return chosen
        chosen[move[0]] = move[1]
        current = best
        history.append(current)


def select_maintenance_nodes(inst, p, method="greedy-interchange", seed=0, history=None):
    """Choose ``p`` maintenance-capable customers by p-median.

    ``exact`` enumerates all subsets; ``greedy-interchange`` adds nodes greedily and
    then applies best-improvement single swaps.  Ties are broken by a permutation
    drawn from ``seed``.  ``history`` (a list) collects the objective after each
    interchange step.
    """
    if not 1 <= p <= inst.n:
        raise InvalidInputError(f"p must lie in [1, {inst.n}]")
    if method == "exact":
        nodes, _ = _pmedian_exact(inst, p)
        return nodes
    if method != "greedy-interchange":
        raise InvalidInputError(f"unknown p-median method {method!r}")
    order = [int(j) for j in np.random.default_rng(seed).permutation(np.arange(1, inst.n + 1))]
    chosen = _greedy_add(inst, [], p, order)
    chosen = _interchange(inst, chosen, order, history if history is not None else [])
    return tuple(sorted(chosen))


def nested_maintenance_sets(inst, ps, seed=0):
    """Maintenance-node sets for increasing ``p`` where each set extends the previous one.

    The smallest set is a greedy-interchange p-median; larger sets add nodes greedily.
    """
    ps = sorted(set(int(p) for p in ps))
    order = [int(j) for j in np.random.default_rng(seed).permutation(np.arange(1, inst.n + 1))]
    out = {}
    chosen = list(select_maintenance_nodes(inst, ps[0], seed=seed))
    out[ps[0]] = tuple(sorted(chosen))
    for p in ps[1:]:
        chosen = _greedy_add(inst, chosen, p, order)
        out[p] = tuple(sorted(chosen))
    return out
