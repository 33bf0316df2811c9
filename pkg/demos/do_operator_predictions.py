"""
Interventional predictions from a joint posterior
=================================================

BN-TMLE samples the outcome, propensity and fluctuation parameters
together. Once fitted, every row can be pushed through the model with its
treatment forced to 1 or to 0. The result is a d x m matrix: one targeted
prediction per row per posterior draw.
"""

import numpy as np

from bayestmle import Dataset, DgpSpec, SamplerConfig, do_predict, fit_bn_tmle, gen_dataset
from bayestmle.simulate import gen_confounders

data = gen_dataset(DgpSpec(n=1500, effect_size=0.25, outcome_kind="continuous", seed=7))
result = fit_bn_tmle(data, config=SamplerConfig(n_chains=2, n_warmup=300, n_draws=400, seed=1))

y1 = do_predict(result, data, 1).values
y0 = do_predict(result, data, 0).values
print("prediction matrices:", y1.shape, y0.shape)

# %%
# Column means give one ATE sample per draw. They match the samples stored
# on the result exactly, because both go through the same code path.
ate = y1.mean(axis=0) - y0.mean(axis=0)
print("max |difference| from stored samples:", np.max(np.abs(ate - result.ate.samples)))
print(f"ATE {result.ate.mean:.4f}  95% interval [{result.ate.ci_low:.4f}, {result.ate.ci_high:.4f}]")

# %%
# Row-wise contrasts are individual-level effects under the model. With an
# additive effect they are constant in truth; here the spread reflects the
# clever covariate's dependence on the propensity score.
row_effects = (y1 - y0).mean(axis=1)
print("row effect quartiles:", np.round(np.percentile(row_effects, [25, 50, 75]), 4))

# %%
# Interventions can also be applied to new confounder rows, as long as the
# categorical levels were seen during fitting.
# Treatment and outcome columns are placeholders; only confounders are read.
x_new = gen_confounders(5, seed=99)
new = Dataset(x_new, np.zeros(5), np.zeros(5), "continuous", data.column_names, data.column_kinds)
print(np.round(do_predict(result, new, 1).values.mean(axis=1), 3))
