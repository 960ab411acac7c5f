# %% [markdown]
# # Routing and maintenance together
#
# A bundled 9-customer instance has three maintenance-capable nodes.  The
# subinterval method picks the route, the node and (through the route) the
# maintenance time; on instances this small the brute-force oracle checks it.

# %%
from sdmtsptw import degradation as dg
from sdmtsptw.baseline import solve_exact_sdm, solve_pm
from sdmtsptw.iam import IamConfig, run_iam
from sdmtsptw.instance import bundled_instance
from sdmtsptw.maintcost import CostParams, build_cost_curve

inst = bundled_instance("n9w150.001")
print(inst.name, "maintenance nodes", inst.maint_nodes, "p =", inst.p_maint, "cr =", inst.cr)

model, prior = dg.default_model(), dg.default_prior()
_, history = dg.draw_truth(prior, model, dg.DEFAULT_OBS_TIMES, seed=1)
post = dg.posterior_update(prior, history, model)
rld = dg.simulate_rld(post, model, 20_000, 500.0, 0.5, seed=1)
curve = build_cost_curve(rld, CostParams(t_o=20.0))

# %%
res = run_iam(inst, curve, IamConfig(b=5, epsilon=0.05))
for row in res.trace:
    print(row)
best = res.best
print(f"z = {best.z:.3f} at node {best.maint_node}, "
      f"maintenance at t = {best.schedule.maint_time:.2f}, route {best.schedule.order}")

# %% [markdown]
# Oracles: maintenance on arrival (the method's search space) and with
# deliberate waiting allowed.

# %%
nd = solve_exact_sdm(inst, curve, allow_delay=False)
od = solve_exact_sdm(inst, curve, allow_delay=True)
print(f"oracle on arrival {nd.z:.3f}, oracle with delay {od.z:.3f}")

# %%
pm = solve_pm(inst, exact=True)
print(f"periodic plan: maintenance at {pm.schedule.maint_time:.2f} "
      f"(window 100-112), planned cost {pm.z:.1f}")
