# %% [markdown]
# # From a sensor history to a maintenance cost curve
#
# A vehicle is observed every 4 time units until it is dispatched at t = 20.
# The log of its degradation signal drifts upwards; failure is the first time
# the signal reaches the threshold.

# %%
import numpy as np

from sdmtsptw import degradation as dg
from sdmtsptw.maintcost import CostParams, build_cost_curve, build_tangent_envelope

model, prior = dg.default_model(), dg.default_prior()
theta, history = dg.draw_truth(prior, model, dg.DEFAULT_OBS_TIMES, seed=1)
print("true (a, b):", theta)
print("observations:", list(zip(history.times, history.amplitudes.round(4))))

# %% [markdown]
# Conjugate update of the intercept and slope, then Monte-Carlo remaining life.

# %%
post = dg.posterior_update(prior, history, model)
print("posterior mean", post.mean, "sd", np.sqrt(np.diag(post.cov)))

rld = dg.simulate_rld(post, model, m_samples=20_000, horizon=500.0, step=0.5, seed=1)
print(f"remaining life: mean {rld.samples.mean():.1f}, "
      f"10% quantile {np.quantile(rld.samples, 0.1):.1f}")

# %% [markdown]
# The cost rate of maintaining t after dispatch mixes preventive (1000) and
# corrective (4000) costs by the survival probability.

# %%
curve = build_cost_curve(rld, CostParams(cp=1000.0, cf=4000.0, t_o=20.0))
print(f"T_min = {curve.t_min}, lambda = {curve.lambda_min:.3f}")
for t in (40, 80, curve.t_min, 160, 200):
    print(f"  f({t:6.2f}) = {curve(t):7.3f}")

# %%
env = build_tangent_envelope(curve, 15, (40.0, 250.0))
t = np.linspace(40.0, 250.0, 8)
print(np.column_stack([t, curve(t), env(t)]).round(3))
