"""
Collecting a numeric tuple
==========================

With d attributes, each user reports only k of them (chosen at random),
each at budget eps/k, and scales the reports by d/k. The aggregator's mean
estimate stays unbiased and its error is compared with Duchi et al.'s
multidimensional mechanism, which perturbs the whole vector at once.
"""

import numpy as np

from multildp import Accumulator, Schema, collect, compare_worst_case, make_rng
from multildp.aggregate import error_scale, variance_multi
from multildp.datagen import SyntheticSpec, generate
from multildp.mechmulti import duchi_multi, k_of

rng = make_rng(7)
d, n, eps = 16, 100_000, 1.0
schema = Schema.all_numeric(d)
data = generate(SyntheticSpec.parse("trunc-gaussian:0.6666666666666666", d, n), rng)
truth = data.mean(axis=0)

print(f"d={d}, n={n}, eps={eps}: each user reports k={k_of(eps, d)} attribute(s)")
for base in ("pm", "hm"):
    acc = Accumulator(schema, eps, base).add(collect(data, schema, eps, base, rng))
    est = np.array([acc.mean(j) for j in range(d)])
    print(f"{base}: MSE {np.mean((est - truth) ** 2):.3e}, predicted {variance_multi(base, 2 / 3, eps, d) / n:.3e}")

est = duchi_multi(data, eps, rng).mean(axis=0)
print(f"duchi: MSE {np.mean((est - truth) ** 2):.3e}, predicted {variance_multi('duchi', 2 / 3, eps, d) / n:.3e}")

# Ordering of worst-case variances, and the order of the max error.
for e in (0.5, 1.0, 2.0, 4.0):
    print(f"eps={e}: {compare_worst_case(e, d).relation}")
print(f"error scale sqrt(d ln(d/beta))/(eps sqrt(n)) at beta=0.05: {error_scale(d, n, eps, 0.05):.4f}")
