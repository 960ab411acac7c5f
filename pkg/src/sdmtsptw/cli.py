"""Command-line entry point: ``sdm-tsptw {curve,solve,oracle,pm,compare}``.

Every run is described by a manifest (resolved parameters plus the SHA-256 of
each input file).  Outputs embed the manifest hash and all seeds and carry no
timestamps, so identical manifests give byte-identical files.

Exit codes: 0 success, 2 not converged, 3 infeasible, 4 invalid input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from importlib import resources

from . import degradation as dg
from .baseline import OracleConfig, PmPolicy, oracle_report, solve_pm
from .errors import BudgetError, InfeasibleError, InvalidInputError, OutOfRangeError
from .iam import IamConfig, run_iam
from .instance import bundled_names, parse_instance, select_maintenance_nodes
from .maintcost import DEFAULT_GRID_STEP, CostParams, build_cost_curve, build_tangent_envelope
from .simulate import SimulationSetup, compare_policies, flex_csv
from .tsptw import SolveConfig

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INFEASIBLE, EXIT_INPUT = 0, 2, 3, 4
DEFAULT_SCENARIO = "calibrated.scn"


# --------------------------------------------------------------------------- manifest


def _read_input(path):
    """Text of a file path or of a bundled resource (``fixture:NAME``)."""
    if path.startswith("fixture:"):
        name = path.split(":", 1)[1]
        ref = resources.files("sdmtsptw") / "data" / name
        if not ref.is_file():
            raise InvalidInputError(f"unknown fixture {name!r}; bundled: {bundled_names()}")
        return ref.read_text()
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc


def _digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


class Manifest:
    """Resolved run description; ``sha256`` identifies it."""

    def __init__(self, command, params, inputs):
        self.data = {"command": command, "params": params, "inputs": inputs}
        self.sha256 = _digest(json.dumps(self.data, sort_keys=True))

    def seeds(self):
        return {k: v for k, v in sorted(self.data["params"].items()) if "seed" in k}

    def csv_header(self):
        seeds = " ".join(f"{k}={v}" for k, v in self.seeds().items())
        return f"# manifest={self.sha256}\n# seeds: {seeds}\n"

    def as_dict(self):
        return {**self.data, "sha256": self.sha256}


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------- loaders


def _instance_arg(path):
    if path.startswith("fixture:") and not path.endswith(".txt"):
        path += ".txt"
    return path


def _load_instance(args, inputs):
    path = _instance_arg(args.instance)
    text = _read_input(path)
    inputs[path] = _digest(text)
    name = os.path.basename(path.split(":", 1)[-1])
    name = name[:-4] if name.endswith(".txt") else name
    inst = parse_instance(text, rounding=args.rounding, name=name)
    if args.maint_nodes:
        try:
            nodes = tuple(int(x) for x in args.maint_nodes.split(",") if x)
        except ValueError as exc:
            raise InvalidInputError(f"bad --maint-nodes {args.maint_nodes!r}") from exc
        inst = inst.with_maintenance(nodes)
    elif args.p is not None:
        inst = inst.with_maintenance(select_maintenance_nodes(inst, args.p, seed=args.pmedian_seed))
    if args.p_maint is not None or args.cr is not None:
        inst = inst.with_maintenance(p_maint=args.p_maint, cr=args.cr)
    return inst


def _load_scenario(args, inputs):
    path = args.scenario or f"fixture:{DEFAULT_SCENARIO}"
    text = _read_input(path)
    inputs[path] = _digest(text)
    sc = dg.parse_scenario(text)
    if args.m_samples is not None:
        sc = dg.DegradationScenario(sc.model, sc.prior, sc.history, sc.seed, args.m_samples,
                                    sc.horizon, sc.step, sc.cp, sc.cf)
    if args.rld_seed is not None:
        sc = dg.DegradationScenario(sc.model, sc.prior, sc.history, args.rld_seed, sc.m_samples,
                                    sc.horizon, sc.step, sc.cp, sc.cf)
    return sc


def _curve(sc, grid_step):
    post = dg.posterior_update(sc.prior, sc.history, sc.model)
    rld = dg.simulate_rld(post, sc.model, sc.m_samples, sc.horizon, sc.step, sc.seed)
    return build_cost_curve(rld, CostParams(sc.cp, sc.cf, sc.history.t_o), grid_step)


def _params(args, keys):
    return {k: getattr(args, k) for k in keys}


_CURVE_KEYS = ("scenario", "m_samples", "rld_seed", "grid_step")
_INSTANCE_KEYS = ("instance", "rounding", "maint_nodes", "p", "pmedian_seed", "p_maint", "cr")
_SOLVER_KEYS = ("restarts", "max_no_improve", "solver_seed", "time_limit")


def _solver(args):
    return SolveConfig(args.restarts, args.max_no_improve, args.solver_seed, args.time_limit)


# --------------------------------------------------------------------------- commands


def cmd_curve(args):
    inputs = {}
    sc = _load_scenario(args, inputs)
    manifest = Manifest("curve", {**_params(args, _CURVE_KEYS), "seed": sc.seed,
                                  "m_samples_used": sc.m_samples}, inputs)
    curve = _curve(sc, args.grid_step)
    _write(args.out, curve.to_csv(manifest.csv_header()))
    summary = {"manifest": manifest.as_dict(), "t_min": curve.t_min, "lambda": curve.lambda_min}
    _write(args.summary, _json(summary))
    return EXIT_OK


def cmd_solve(args):
    inputs = {}
    inst = _load_instance(args, inputs)
    sc = _load_scenario(args, inputs)
    keys = _CURVE_KEYS + _INSTANCE_KEYS + _SOLVER_KEYS + ("b", "epsilon", "max_iterations",
                                                          "subsolver")
    manifest = Manifest("solve", {**_params(args, keys), "seed": sc.seed}, inputs)
    curve = _curve(sc, args.grid_step)
    config = IamConfig(args.b, args.epsilon, args.max_iterations, _solver(args), args.subsolver)
    result = run_iam(inst, curve, config)
    out = {"manifest": manifest.as_dict(), "instance": inst.name, "maint_nodes": inst.maint_nodes,
           "z": result.best.z, "upper": result.upper, "lower": result.lower, "gap": result.gap,
           "converged": result.converged, "iterations": result.iterations,
           "delta0": result.delta0, "t_min": curve.t_min, "lambda": curve.lambda_min,
           "solution": result.best.to_dict()}
    _write(args.out, _json(out))
    if args.trace:
        _write(args.trace, result.trace_csv(manifest.csv_header()))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_oracle(args):
    inputs = {}
    inst = _load_instance(args, inputs)
    sc = _load_scenario(args, inputs)
    keys = _CURVE_KEYS + _INSTANCE_KEYS + ("envelope_lines", "pi_grid_step")
    manifest = Manifest("oracle", {**_params(args, keys), "seed": sc.seed}, inputs)
    curve = _curve(sc, args.grid_step)
    env = None
    if args.envelope_lines:
        lo = max(curve.t_lo, float(inst.ready[list(inst.maint_nodes)].min())) \
            if inst.maint_nodes else curve.t_lo
        with warnings.catch_warnings():
            # recorded in the report instead
            warnings.simplefilter("ignore", RuntimeWarning)
            env = build_tangent_envelope(curve, args.envelope_lines, (lo, curve.grid_max))
    report = oracle_report(inst, curve, env, OracleConfig(pi_grid_step=args.pi_grid_step))
    if env is not None:
        report["envelope_convex_warning"] = env.convex_warning
    report["manifest"] = manifest.as_dict()
    _write(args.out, _json(report))
    return EXIT_OK


def cmd_pm(args):
    inputs = {}
    inst = _load_instance(args, inputs)
    keys = _INSTANCE_KEYS + _SOLVER_KEYS + ("age_window", "flat_cost", "exact")
    manifest = Manifest("pm", _params(args, keys), inputs)
    policy = PmPolicy(tuple(args.age_window), args.flat_cost)
    sol = solve_pm(inst, policy, _solver(args), exact=args.exact)
    _write(args.out, _json({"manifest": manifest.as_dict(), "instance": inst.name,
                            **sol.to_dict()}))
    return EXIT_OK


def cmd_compare(args):
    inputs = {}
    insts = []
    for path in args.instances:
        sub = argparse.Namespace(**{**vars(args), "instance": path})
        insts.append(_load_instance(sub, inputs))
    flex = [int(x) for x in args.flex.split(",")] if args.flex else None
    keys = ("instances", "rounding", "maint_nodes", "p", "pmedian_seed", "p_maint", "cr",
            "scenarios", "seed", "protocol", "flex", "m_samples", "grid_step", "b", "epsilon",
            "max_iterations", "subsolver", "age_window", "flat_cost") + _SOLVER_KEYS
    manifest = Manifest("compare", _params(args, keys), inputs)
    setup = SimulationSetup(
        m_samples=args.m_samples or 2000, grid_step=args.grid_step,
        iam=IamConfig(args.b, args.epsilon, args.max_iterations, _solver(args), args.subsolver),
        pm=PmPolicy(tuple(args.age_window), args.flat_cost), solver=_solver(args))
    report = compare_policies(insts, args.scenarios, args.seed, flex, setup, args.protocol,
                              args.workers)
    header = manifest.csv_header()
    os.makedirs(args.out_dir, exist_ok=True)
    _write(os.path.join(args.out_dir, "costs.csv"), report.costs_csv(header))
    _write(os.path.join(args.out_dir, "failures.csv"), report.failures_csv(header))
    if flex:
        _write(os.path.join(args.out_dir, "flexibility.csv"), flex_csv(report, header))
    summary = report.to_dict()
    summary["manifest"] = manifest.as_dict()
    _write(os.path.join(args.out_dir, "summary.json"), _json(summary))
    return EXIT_INFEASIBLE if not report.cases else EXIT_OK


# --------------------------------------------------------------------------- parser


def _add_curve_args(p):
    p.add_argument("--scenario", help="degradation scenario file (default: bundled calibrated "
                                      "vehicle); 'fixture:NAME' loads a bundled file")
    p.add_argument("--m-samples", type=int, help="override the scenario's Monte-Carlo size")
    p.add_argument("--rld-seed", type=int, help="override the scenario's simulation seed")
    p.add_argument("--grid-step", type=float, default=DEFAULT_GRID_STEP,
                   help="cost-curve grid spacing (default %(default)s)")


def _add_instance_args(p, single=True):
    if single:
        p.add_argument("--instance", required=True,
                       help="Gendreau-format file or 'fixture:NAME' (e.g. fixture:n9w150.001)")
    p.add_argument("--rounding", default="none", choices=("none", "one-decimal",
                                                           "integer-truncate"))
    p.add_argument("--maint-nodes", help="comma-separated maintenance nodes (overrides the file)")
    p.add_argument("--p", type=int, help="select this many maintenance nodes by p-median")
    p.add_argument("--pmedian-seed", type=int, default=0)
    p.add_argument("--p-maint", type=float, help="maintenance duration")
    p.add_argument("--cr", type=float, help="routing cost per time unit")


def _add_solver_args(p):
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-no-improve", type=int, default=30)
    p.add_argument("--solver-seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=30.0, help="seconds per route solve")


def _add_iam_args(p):
    p.add_argument("--b", type=int, default=5, help="pieces per split (default %(default)s)")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--subsolver", default="auto", choices=("auto", "exact", "heuristic"))


def _add_pm_args(p):
    p.add_argument("--age-window", type=float, nargs=2, default=(100.0, 112.0),
                   metavar=("LO", "HI"))
    p.add_argument("--flat-cost", type=float, default=1000.0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdm-tsptw",
        description="Sensor-driven maintenance with TSPTW routing.",
        epilog="exit codes: 0 success, 2 not converged, 3 infeasible, 4 invalid input")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curve", help="posterior, remaining-life simulation and cost curve")
    _add_curve_args(p)
    p.add_argument("--out", help="curve CSV (default stdout)")
    p.add_argument("--summary", help="JSON with T_min and lambda (default stdout)")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("solve", help="joint routing and maintenance by subinterval alignment")
    _add_instance_args(p)
    _add_curve_args(p)
    _add_iam_args(p)
    _add_solver_args(p)
    p.add_argument("--out", help="solution JSON (default stdout)")
    p.add_argument("--trace", help="bound-trace CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="brute-force optimum and envelope bound (n <= 9)")
    _add_instance_args(p)
    _add_curve_args(p)
    p.add_argument("--envelope-lines", type=int, default=20,
                   help="tangent lines for the lower bound (0 disables)")
    p.add_argument("--pi-grid-step", type=float,
                   help="search maintenance times on this grid instead of exactly")
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("pm", help="periodic-maintenance benchmark route")
    _add_instance_args(p)
    _add_pm_args(p)
    _add_solver_args(p)
    p.add_argument("--exact", action="store_true", help="exact route solves (n <= 16)")
    p.add_argument("--out", help="solution JSON (default stdout)")
    p.set_defaults(func=cmd_pm)

    p = sub.add_parser("compare", help="simulate SDM against PM over failure scenarios")
    p.add_argument("instances", nargs="+", help="instance files or fixture:NAME")
    _add_instance_args(p, single=False)
    _add_iam_args(p)
    _add_pm_args(p)
    _add_solver_args(p)
    p.add_argument("--scenarios", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="scenario seed")
    p.add_argument("--protocol", default="resolve", choices=("resolve", "fixed"))
    p.add_argument("--flex", help="comma-separated p values for a flexibility sweep")
    p.add_argument("--m-samples", type=int, help="Monte-Carlo size per vehicle curve")
    p.add_argument("--grid-step", type=float, default=DEFAULT_GRID_STEP)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker processes (results do not depend on it)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvalidInputError, BudgetError, OutOfRangeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
