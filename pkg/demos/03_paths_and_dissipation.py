"""Path measure on a three-site chain: exact values against sampled paths.

The chain 0 - 1 - 2 is started from nu.  Path-space masses of
cylinder events are computed by exact summation over the path tree and by
Monte Carlo with a fixed seed; the estimate does not depend on the number
of worker threads.
"""

import numpy as np

from measlap import CylinderEvent, assemble_operators, lambda_rectangle, load_fixture, rho_n, sample_paths
from measlap.paths import lambda_event_exact

model = load_fixture("FX-B")
bundle = assemble_operators(model)
print(f"{model.name}: nu = {bundle.nu}")
print("P =\n", bundle.P)

# %% n-step symmetric measures rho_n(A, B)
A, B = [0], [2]
for n in range(4):
    print(f"rho_{n}({A}, {B}) = {rho_n(bundle, A, B, n)}")

# %% the same quantities from 100000 sampled paths
ens = sample_paths(bundle, "nu", horizon=3, count=100_000, seed=7)
for n in range(4):
    v = lambda_rectangle(bundle, A, B, n, ensemble=ens)
    print(f"n = {n}: exact {v.exact:.5f}  mc {v.mc_estimate:.5f} +- {v.mc_stderr:.5f}")

# %% a longer cylinder event: start anywhere, visit 1, then avoid 1
event = CylinderEvent.parse(model, "0,1,2;1;0,2")
mc, err = ens.estimate(event)
print(f"\nlambda(X_1 = 1, X_2 != 1) ~ {mc:.5f} +- {err:.5f}  (exact {lambda_event_exact(bundle, event)})")

# %% worker count does not change the sample
ens4 = sample_paths(bundle, "nu", horizon=3, count=100_000, seed=7, workers=4)
print("identical across 1 and 4 workers:", np.array_equal(ens.trajectories, ens4.trajectories))
