"""Synthetic data, categorical one-hot encoding and label construction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, Schema, normalize_dataset

_MIN_ACCEPT = 1e-6
POWER_LAW_EXPONENT = 10.0


@dataclass(frozen=True)
class SyntheticSpec:
    """``distribution`` is one of ``trunc-gaussian``, ``uniform``, ``power-law``."""

    distribution: str
    d: int
    n: int
    mu: float = 0.0
    sigma: float = 0.25
    exponent: float = POWER_LAW_EXPONENT

    def __post_init__(self):
        if self.distribution not in ("trunc-gaussian", "uniform", "power-law"):
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be >= 1")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.distribution == "power-law" and self.exponent <= 1:
            raise ConfigError("power-law exponent must exceed 1")

    @classmethod
    def parse(cls, text: str, d: int, n: int) -> "SyntheticSpec":
        """Parse ``trunc-gaussian:<mu>``, ``uniform`` or ``power-law[:<exponent>]``."""
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        try:
            if name in ("trunc-gaussian", "gaussian"):
                return cls("trunc-gaussian", d, n, mu=float(arg) if arg else 0.0)
            if name == "uniform":
                return cls("uniform", d, n)
            if name in ("power-law", "powerlaw"):
                return cls("power-law", d, n, exponent=float(arg) if arg else POWER_LAW_EXPONENT)
        except ValueError as exc:
            raise ConfigError(f"bad distribution argument in {text!r}") from exc
        raise ConfigError(f"unknown distribution {text!r}")


def _truncnorm_acceptance(mu: float, sigma: float) -> float:
    def cdf(z):
        return 0.5 * math.erfc(-z / math.sqrt(2))

    return cdf((1 - mu) / sigma) - cdf((-1 - mu) / sigma)


def power_law_inverse_cdf(u, exponent: float = POWER_LAW_EXPONENT):
    """Inverse CDF of the density proportional to (x + 2)^-exponent on [-1, 1]."""
    a = exponent - 1
    tail = 3.0**-a
    u = np.asarray(u, dtype=float)
    return (1 - u * (1 - tail)) ** (-1 / a) - 2


def power_law_mean(exponent: float = POWER_LAW_EXPONENT) -> float:
    """Closed-form mean of the power-law density on [-1, 1]."""
    a = exponent - 1
    # E[x + 2] = int (x+2)^(1-exponent) / int (x+2)^(-exponent), both over [1, 3] in y = x + 2
    num = (1 - 3.0 ** (1 - a)) / (a - 1)
    den = (1 - 3.0**-a) / a
    return num / den - 2


def generate(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """``(n, d)`` array of values in [-1, 1]."""
    shape = (spec.n, spec.d)
    if spec.distribution == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    if spec.distribution == "power-law":
        return np.clip(power_law_inverse_cdf(rng.random(shape), spec.exponent), -1.0, 1.0)

    acc = _truncnorm_acceptance(spec.mu, spec.sigma)
    if acc < _MIN_ACCEPT:
        raise ConfigError(
            f"truncated Gaussian with mu={spec.mu}, sigma={spec.sigma} accepts {acc:.3g} of draws; too few"
        )
    total = spec.n * spec.d
    out = np.empty(total)
    filled = 0
    while filled < total:
        need = total - filled
        draw = rng.normal(spec.mu, spec.sigma, size=int(need / acc * 1.05) + 16)
        draw = draw[np.abs(draw) <= 1.0][:need]
        out[filled:filled + draw.size] = draw
        filled += draw.size
    return out.reshape(shape)


def generate_mixed(schema: Schema, n: int, rng: np.random.Generator, numeric: str = "uniform",
                   cat_freqs: dict | None = None) -> np.ndarray:
    """Raw-valued ``(n, d)`` data for a mixed schema.

    Numeric columns are drawn from the named distribution and scaled by each
    attribute's range. Categorical columns follow ``cat_freqs[name]`` when
    given, else frequencies drawn from a flat Dirichlet.
    """
    data = np.empty((n, schema.d))
    num = schema.numeric_indices
    if num:
        vals = generate(SyntheticSpec.parse(numeric, len(num), n), rng)
        for c, j in enumerate(num):
            data[:, j] = vals[:, c] * schema[j].r
    for j in schema.categorical_indices:
        spec = schema[j]
        if cat_freqs and spec.name in cat_freqs:
            f = np.asarray(cat_freqs[spec.name], dtype=float)
        else:
            f = rng.dirichlet(np.ones(spec.cardinality))
        data[:, j] = rng.choice(spec.cardinality, size=n, p=f / f.sum()) + 1
    return data


def one_hot_width(schema: Schema) -> int:
    return sum(1 if a.is_numeric else a.cardinality - 1 for a in schema.attributes)


def one_hot_encode(record, schema: Schema) -> np.ndarray:
    """Feature vector for one raw tuple: numeric values normalized, each
    categorical attribute with k values expanded into k-1 indicators
    (the k-th value encodes as all zeros)."""
    return one_hot_encode_batch(np.asarray(record, dtype=float)[None, :], schema)[0]


def one_hot_encode_batch(data: np.ndarray, schema: Schema) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    norm = normalize_dataset(data, schema)
    cols = []
    for j, spec in enumerate(schema.attributes):
        if spec.is_numeric:
            cols.append(norm[:, j:j + 1])
        else:
            codes = data[:, j].astype(np.int64)
            block = np.zeros((data.shape[0], spec.cardinality - 1))
            hit = codes < spec.cardinality
            block[np.flatnonzero(hit), codes[hit] - 1] = 1.0
            cols.append(block)
    return np.hstack(cols)


def binarize_label(values) -> np.ndarray:
    """+1 where strictly above the column mean, else -1."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ConfigError("cannot binarize an empty column")
    return np.where(v > v.mean(), 1.0, -1.0)


def make_separable(n: int, d: int, rng: np.random.Generator):
    """Linearly separable classification task: features uniform on
    [-1, 1]^d, labels the sign of a random hyperplane through the origin.

    Returns ``(X, y, w)``.
    """
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = np.where(X @ w >= 0, 1.0, -1.0)
    return X, y, w


def make_linear(n: int, d: int, rng: np.random.Generator, noise: float = 0.0):
    """Regression task with targets ``clip(X w + noise, -1, 1)``, where ``w``
    is scaled so that noiseless targets already lie in [-1, 1]."""
    w = rng.normal(size=d)
    w /= np.abs(w).sum()
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = X @ w
    if noise:
        y = np.clip(y + rng.normal(scale=noise, size=n), -1.0, 1.0)
    return X, y, w


def cv_folds(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled, near-equal index folds."""
    if not 2 <= folds <= n:
        raise ConfigError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    return [np.sort(f) for f in np.array_split(rng.permutation(n), folds)]


def write_folds(folds: list[np.ndarray], directory) -> list[Path]:
    """One file per fold, one index per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(folds):
        p = directory / f"fold_{i:02d}.txt"
        p.write_text("".join(f"{int(x)}\n" for x in f))
        paths.append(p)
    return paths
