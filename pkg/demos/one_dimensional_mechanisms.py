"""
Perturbing a single numeric value
=================================

Each mechanism maps a value t in [-1, 1] to a noisy report whose mean is t.
They differ in how much variance they add and in where the reports can land.
"""

import numpy as np

from multildp import make_rng, perturb_1d, variance_1d, worst_case_variance_1d
from multildp.mech1d import MECHANISMS_1D, PmParams

rng = make_rng(2024)
eps = 1.0
t = 0.3
n = 200_000

# Empirical mean and variance of n reports next to the exact variance.
print(f"t = {t}, eps = {eps}, n = {n}")
print(f"{'mechanism':>10} {'mean':>8} {'var':>8} {'exact':>8}")
for m in MECHANISMS_1D:
    out = perturb_1d(m, np.full(n, t), eps, rng)
    print(f"{m:>10} {out.mean():8.4f} {out.var():8.4f} {variance_1d(m, t, eps):8.4f}")

# PM reports stay within [-C, C]; Duchi's always sit at one of two points.
C = PmParams.from_budget(eps).C
pm = perturb_1d("pm", np.full(10, t), eps, rng)
print(f"\nPM support is [-{C:.3f}, {C:.3f}]; ten reports:", np.round(pm, 3))
print("Duchi reports:", np.unique(perturb_1d("duchi", np.full(10, t), eps, rng)))

# Worst case over all inputs, for a few budgets.
print(f"\n{'eps':>5}" + "".join(f"{m:>11}" for m in MECHANISMS_1D))
for e in (0.5, 1.0, 2.0, 4.0):
    print(f"{e:5.1f}" + "".join(f"{worst_case_variance_1d(m, e):11.4f}" for m in MECHANISMS_1D))
