"""
Recentering a correlated Gaussian
=================================

The recentering map subtracts, coordinate by coordinate, the conditional mean
of the last coordinate given the earlier ones and rescales by the conditional
standard deviation.  For a Gaussian with correlation rho the conditional law of
x2 given x1 is N(rho x1, 1 - rho^2), so the tables can be read against closed
forms.
"""

import numpy as np

from logconcave_lab.constructions import make_gaussian
from logconcave_lab.density import build_grid_density
from logconcave_lab.recentering import build_recentering, conditional_moments

rho = 0.5
mu = build_grid_density(make_gaussian(2, [[1, rho], [rho, 1]], 8.0), [256, 256])

# conditional moments of x2 given x1, one entry per node of the first axis
cm = conditional_moments(mu)
x1 = mu.grids[0]
core = np.abs(x1) < 3
print("max |m2 - rho x1|      :", np.max(np.abs(cm.mean_tables[1][core] - rho * x1[core])))
print("max |var2 - (1-rho^2)| :", np.max(np.abs(cm.var_tables[1][core] - (1 - rho ** 2))))

# the recentering map, tabulated on the grid: one array per output coordinate
pair = build_recentering(mu, cm)
comps = pair.R.on_grid()
print("R component ranges:", [(float(np.nanmin(c)), float(np.nanmax(c))) for c in comps])
