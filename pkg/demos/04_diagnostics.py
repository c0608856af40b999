# coding: utf-8

# # Diagnostics: goodness of fit, unbiasedness, a VC check
#
# Under the true model, randomized scores F(L) + V (F(U) - F(L)) are
# Uniform(0, 1). A Kolmogorov-Smirnov test of that uniformity is a
# goodness-of-fit test that works with interval-censored data.

# In[1]:

import numpy as np

from uncervals import OracleModel, preset, simulate
from uncervals.evaluate import gof_uniformity, unbiasedness_check, vc_shatter_search

cfg = preset("condcov", n=5000, seed=6)
data = simulate(cfg).dataset

for shape in (2.0, 1.8, 1.5):
    model = OracleModel(shape, 1.0, cfg.link)
    rep = gof_uniformity(model, data, seed=1)
    print("shape %.1f   D_n = %.4f   p = %.3g" % (shape, rep.statistic, rep.p_value))


# ## Unbiasedness of the interval distribution
#
# With oracle borders its Monte Carlo mean sits on the diagonal.

# In[2]:

rep = unbiasedness_check(preset("condcov", n=500), reps=200, seed=7)
for t, m, z in zip(rep.grid, rep.mean, rep.z):
    print("t = %.1f   mean %.4f   z %+.2f" % (t, m, z))


# ## Shattering search
#
# The sets {(l, u, c) : 1{l <= t < u}(t - l) > c} indexed by t shatter some
# two-point configurations. A random search never finds a three-point one.

# In[3]:

for k in (2, 3):
    rep = vc_shatter_search(50_000, seed=8, n_points=k)
    print("%d points: best %d of %d dichotomies" % (k, rep.max_dichotomies, 2 ** k))
