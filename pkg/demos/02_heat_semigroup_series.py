"""Heat semigroup on a path graph with non-constant degree.

The endpoints of a path have half the degree of the interior sites, so a
Poisson series that freezes the jump rate at the starting site does not
reproduce exp(-t Delta).  Uniformizing at the largest degree does.
"""

import numpy as np

from measlap import (
    DiscretizedMeasureSpace,
    KernelSpec,
    assemble_operators,
    build_model,
    heat_semigroup,
    poisson_semigroup,
)
from measlap.semigroups import heat_series_discrepancy

# %% path 0 - 1 - 2 - 3 - 4 with unit weights and counting measure
n = 5
edges = [(i, i + 1, 1.0) for i in range(n - 1)]
model = build_model(DiscretizedMeasureSpace.counting(n), KernelSpec.edge_list(edges), name="path5")
bundle = assemble_operators(model)
print("degrees:", bundle.c)

# %% semigroup law for the Poisson semigroup
Q = lambda t: poisson_semigroup(bundle, 1.0, t)
print(f"max |Q_1 Q_2 - Q_3| = {np.max(np.abs(Q(1) @ Q(2) - Q(3))):.2e}")

# %% heat kernel from site 0 at a few times
for t in (0.5, 2.0, 8.0):
    print(f"t = {t:>4}: S_t(0, .) = {np.round(heat_semigroup(bundle, t)[0], 4)}")

# %% the two Poisson-series representations
print(f"\n{'t':>5} {'site-rate error':>16} {'uniformized error':>18}")
for t in (0.1, 1.0, 5.0):
    site, unif = heat_series_discrepancy(bundle, t)
    print(f"{t:>5} {site:>16.3e} {unif:>18.3e}")
