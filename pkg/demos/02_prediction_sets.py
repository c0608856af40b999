# coding: utf-8

# # Prediction sets for a new subject
#
# `fit_uncervals` splits the data. It fits the CDF on one half and calibrates
# randomized scores on the other. With b = 1 the set is [LPB, inf). Other b
# values give a two-sided region.

# In[1]:

import numpy as np

from uncervals import fit_uncervals, interval_distribution, preset, simulate
from uncervals.conformal import border_scores

data = simulate(preset("condcov", n=1000, seed=2)).dataset
x_new = np.array([[-1.5], [0.0], [1.5]])


# ## Lower predictive bounds at 90%
#
# Mode `e0` uses the left borders only. Its finite-sample guarantee comes at
# the cost of a conservative bound. Mode `estar` randomizes inside each
# interval.

# In[2]:

for mode in ("e0", "estar"):
    fit = fit_uncervals(data, alpha=0.1, mode=mode, seed=0)
    lo, _ = fit.bounds(x_new)
    print(mode, "q_hat = %.4f" % fit.calibration.q_hat, "LPB =", np.round(lo, 3))


# ## A two-sided region with b = 1/2

# In[3]:

fit = fit_uncervals(data, alpha=0.1, b=0.5, seed=0)
for s in fit.predict(x_new):
    print("x = %+.1f   [%.3f, %.3f]" % (s.x[0], s.lo, s.hi))


# ## The interval distribution behind the calibration
#
# Averaging uniform laws on each [F(L), F(U)] gives a piecewise-linear CDF.
# The bootstrap pseudo-scores are draws from it.

# In[4]:

cal = data.subset(fit.split.calibration_indices)
scores = border_scores(fit.model, cal)
grid = np.linspace(0, 1, 11)
print(np.round(interval_distribution(scores, grid), 3))
phi = fit.calibration.phi_star
print(np.round([np.mean(phi <= g) for g in grid], 3))
