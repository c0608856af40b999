# coding: utf-8

# # Marginal and conditional coverage by simulation
#
# Small replication counts keep this fast. The acceptance suite runs the
# full-size versions.

# In[1]:

import numpy as np

from uncervals import preset
from uncervals.evaluate import Method, compare_conditional_coverage, marginal_coverage

cfg = preset("condcov", n=500)


# ## Marginal coverage

# In[2]:

for method in [Method("uncervals", "e0"), Method("uncervals", "estar"), Method("naive")]:
    rep = marginal_coverage(method, cfg, alpha=0.1, B=20, n_test=200, seed=3)
    print("%-32s mean %.3f  sd %.3f" % (rep.label, rep.mean, rep.sd))


# With the oracle CDF and b = 1/2, coverage tightens around 0.9 as n grows.

# In[3]:

for n in (200, 500, 2000):
    rep = marginal_coverage(Method("uncervals", "estar", b=0.5, estimator="oracle"),
                            preset("condcov", n=n), 0.1, B=30, n_test=1000, seed=4)
    print("n = %4d  mean %.3f  mean |cov - 0.9| %.4f" % (n, rep.mean, rep.mean_abs_deviation()))


# ## Conditional coverage
#
# For each run we estimate P(T >= LPB(x) | x) with a local-logistic smoother.
# `err` is its root-mean-square distance from 0.9. Compare the two columns
# across estimators. When the base model is already marginally calibrated,
# the naive quantile is hard to beat.

# In[4]:

for est in ("weibph", "turnbull"):
    errs = compare_conditional_coverage(
        [Method("uncervals", "estar", estimator=est), Method("naive", estimator=est)],
        cfg, 0.1, B=5, n_eval=2000, seed=5)
    print(est, {k: round(float(np.mean(v)), 4) for k, v in errs.items()})
