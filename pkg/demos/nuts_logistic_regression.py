"""
Sampling a logistic regression posterior
========================================

The nuisance models are Bayesian GLMs sampled with a No-U-Turn sampler.
This demo samples one directly and compares the posterior with the
maximum-likelihood fit and with its own diagnostics.
"""

import numpy as np

from bayestmle import SamplerConfig, sample
from bayestmle.glm import expit, fit_mle, logistic_log_density

rng = np.random.default_rng(0)
n = 3000
X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
theta = np.array([-0.4, 0.8, -1.2])
y = (rng.uniform(size=n) < expit(X @ theta)).astype(float)

model = logistic_log_density(X, y, prior_scale=5.0)
draws = sample(model, SamplerConfig(n_chains=4, n_warmup=500, n_draws=1000, seed=3))
post = draws["theta"]

mle = fit_mle("logistic", X, y)
print("truth    ", theta)
print("MLE      ", np.round(mle.theta, 3))
print("post mean", np.round(post.mean(axis=0), 3))
print("post sd  ", np.round(post.std(axis=0), 3))

# %%
# Split-R-hat near 1 means the four chains agree; the step size and tree
# depth show what the adaptation settled on.
print("max split-R-hat:", round(draws.diagnostics["max_rhat"], 4))
for c in draws.diagnostics["chains"]:
    print(f"step {c['step_size']:.3f}  accept {c['mean_accept']:.2f}  depth {c['mean_tree_depth']:.1f}")
