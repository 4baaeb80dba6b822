"""Energy of functions on a Gaussian-kernel discretization of [0, 1].

Builds a symmetric measure from a Gaussian kernel on a midpoint grid,
then compares a smooth and a rough function through the energy norm,
its deterministic/stochastic split and the Laplacian quadratic form.
"""

import numpy as np

from measlap import (
    DiscretizedMeasureSpace,
    KernelSpec,
    assemble_operators,
    build_model,
    norm_decomposition,
    spectral_report,
)

# %% a 40-node grid with a bandwidth of 0.1
space = DiscretizedMeasureSpace.midpoint(40)
model = build_model(space, KernelSpec.builtin("gaussian", sigma=0.1), name="gauss40")
bundle = assemble_operators(model)
print(f"{model.name}: n = {model.n}, total nu mass = {bundle.nu.sum():.6f}")
print(f"degree range: [{bundle.c.min():.4f}, {bundle.c.max():.4f}]")

# %% the spectrum of P sits in [-1, 1]; Delta is nonnegative
rep = spectral_report(bundle)
print(f"P eigenvalues in [{rep.p_eigenvalues.min():.4f}, {rep.p_eigenvalues.max():.4f}]")
print(f"smallest Delta eigenvalues: {np.round(rep.delta_eigenvalues[:4], 6)}")

# %% smooth versus oscillating test functions
x = np.asarray(space.coordinates, dtype=float)
for label, f in [("sin(pi x)", np.sin(np.pi * x)), ("sin(8 pi x)", np.sin(8 * np.pi * x))]:
    r = norm_decomposition(bundle, f)
    print(f"\n{label}")
    print(f"  energy             {r.norm_sq:.6e}")
    print(f"  deterministic part {r.deterministic_term:.6e}")
    print(f"  stochastic part    {r.stochastic_term:.6e}")
    print(f"  <f, Delta f>_nu    {r.laplacian_form:.6e}")
    print(f"  worst residual / scale: {max(r.residuals.values()) / r.scale:.2e}")
