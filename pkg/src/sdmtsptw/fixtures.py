"""Recipe for the instances bundled in ``sdmtsptw/data``.

Each fixture is a random Gendreau-style instance with maintenance nodes chosen
by p-median.  Seeds are screened so that the periodic-maintenance window can be
met at some maintenance node; otherwise the periodic policy would be forced
outside its window and the comparison would say little.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .baseline import PmPolicy, solve_pm
from .instance import generate_gendreau, parse_instance, select_maintenance_nodes, serialize_instance
from .tsptw import SolveConfig


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    n: int
    width: float
    seed: int
    p: int
    leg_slack: float = 10.0


FIXTURES = (
    FixtureSpec("n20w200.001", 20, 200, 2001, 3),
    FixtureSpec("n9w150.001", 9, 150, 9151, 3),
    FixtureSpec("n9w150.002", 9, 150, 9152, 3),
    FixtureSpec("n9w150.003", 9, 150, 9153, 3),
    FixtureSpec("n9w150.004", 9, 150, 9154, 3),
    FixtureSpec("n7w100.001", 7, 100, 7100, 2),
)


def make_fixture(spec, policy=None, max_tries=100):
    """First instance from ``spec.seed`` upwards whose PM window is attainable."""
    policy = policy or PmPolicy()
    for k in range(max_tries):
        inst = generate_gendreau(spec.n, spec.width, spec.seed + 1000 * k, name=spec.name,
                                 leg_slack=spec.leg_slack)
        inst = inst.with_maintenance(select_maintenance_nodes(inst, spec.p, seed=0))
        exact = inst.n <= 12
        pm = solve_pm(inst, policy, SolveConfig(restarts=4), exact=exact)
        if pm.window_violation == 0:
            return inst
    raise RuntimeError(f"no PM-feasible instance for {spec.name} within {max_tries} seeds")


def write_fixtures(directory):
    import os

    for spec in FIXTURES:
        with open(os.path.join(directory, f"{spec.name}.txt"), "w") as fh:
            fh.write(serialize_instance(make_fixture(spec)))


def bundled_text(name):
    return (resources.files("sdmtsptw") / "data" / f"{name}.txt").read_text()


def matches_recipe(spec):
    """True when the bundled file equals a fresh build from the recipe."""
    inst = parse_instance(bundled_text(spec.name), name=spec.name)
    return inst.same_as(make_fixture(spec))
