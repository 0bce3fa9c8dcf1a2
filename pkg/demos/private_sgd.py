"""
Training classifiers on locally perturbed gradients
===================================================

Users are split into disjoint groups. Each group reports clipped, perturbed
gradients once; the model steps along their average with rate 1/sqrt(t).
"""

import numpy as np

from multildp import SgdConfig, evaluate, make_rng, train
from multildp.datagen import make_separable
from multildp.sgd import smoothed_trend

d, n, eps = 10, 100_000, 4.0
X, y, w = make_separable(n + 1000, d, make_rng(1))
Xh, yh, X, y = X[-1000:], y[-1000:], X[:-1000], y[:-1000]
Xt = make_rng(2).uniform(-1, 1, (20_000, d))
yt = np.where(Xt @ w >= 0, 1.0, -1.0)

for base in (None, "pm", "hm", "duchi", "laplace"):
    res = train(X, y, SgdConfig("logistic", eps, base), make_rng(3), holdout=(Xh, yh))
    first, last = smoothed_trend(res.log)
    print(f"{str(base):>8}: misclassification {evaluate(res.model, Xt, yt, 'logistic'):.4f}, "
          f"{len(res.log)} iterations, holdout loss {first:.3f} -> {last:.3f}")

# Every user id shows up in exactly one group.
ids = res.participants.ravel()
print("users reporting twice:", ids.size - np.unique(ids).size)
