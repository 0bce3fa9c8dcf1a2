"""Private stochastic gradient descent for linear, logistic and SVM models.

Users are split into disjoint groups. In each iteration one group reports
clipped, locally perturbed gradients at the current model, and the
aggregator steps along their average. Every user reports once, so each
report may spend the user's whole budget.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, DomainError, as_epsilon
from .mech1d import laplace_perturb, mechanism_tag
from .mechmulti import duchi_multi, perturb_numeric_multi

LOSSES = ("linear", "logistic", "svm")
SGD_BASES = ("pm", "hm", "duchi", "laplace")
DEFAULT_LAMBDA = 1e-4


def default_group_size(d: int, budget) -> int:
    eps = as_epsilon(budget)
    return max(1, math.ceil(d * math.log(max(d, 2)) / eps**2))


def _loss_kind(kind: str) -> str:
    k = kind.strip().lower()
    if k not in LOSSES:
        raise ConfigError(f"loss must be one of {LOSSES}, got {kind!r}")
    return k


@dataclass(frozen=True)
class SgdConfig:
    """``base=None`` trains without perturbation (the non-private baseline).
    ``group_size=None`` picks :func:`default_group_size` at train time."""

    loss: str = "logistic"
    epsilon: float = 1.0
    base: str | None = "pm"
    lam: float = DEFAULT_LAMBDA
    group_size: int | None = None
    lr_const: float = 1.0
    clip: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "loss", _loss_kind(self.loss))
        if self.base is not None:
            tag = mechanism_tag(self.base)
            if tag not in SGD_BASES:
                raise ConfigError(f"SGD base must be one of {SGD_BASES}, got {self.base!r}")
            object.__setattr__(self, "base", tag)
        as_epsilon(self.epsilon)
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be >= 0, got {self.lam!r}")
        if self.group_size is not None and (int(self.group_size) != self.group_size or self.group_size < 1):
            raise ConfigError(f"group size must be a positive integer, got {self.group_size!r}")
        if not (self.lr_const > 0 and math.isfinite(self.lr_const)):
            raise ConfigError(f"learning-rate constant must be positive, got {self.lr_const!r}")
        if self.clip != 1.0:
            raise ConfigError("the clip bound is fixed at 1")

    def resolved_group_size(self, d: int) -> int:
        return int(self.group_size) if self.group_size is not None else default_group_size(d, self.epsilon)


@dataclass
class Model:
    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(self.beta)):
            raise DomainError("model coefficients must be finite")

    @property
    def d(self) -> int:
        return self.beta.size

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coordinate", "beta"])
            for i, b in enumerate(self.beta):
                w.writerow([i, repr(float(b))])

    @classmethod
    def from_csv(cls, path) -> "Model":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls(np.array([float(r[1]) for r in rows]))


def _check_labels(kind: str, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if kind == "linear":
        ok = np.abs(y) <= 1
    else:
        ok = (y == 1) | (y == -1)
    if not np.all(ok):
        need = "in [-1, 1]" if kind == "linear" else "in {-1, 1}"
        raise DomainError(f"{kind} labels must be {need}")
    return y


def loss(kind: str, beta, x, y, lam: float = 0.0):
    """Regularized loss. ``x`` may be one row or an ``(n, d)`` batch, in
    which case the per-row losses are returned."""
    kind = _loss_kind(kind)
    beta = np.asarray(beta, dtype=float)
    y = _check_labels(kind, y)
    z = np.asarray(x, dtype=float) @ beta
    if kind == "linear":
        base = (z - y) ** 2
    elif kind == "logistic":
        base = np.logaddexp(0.0, -y * z)
    else:
        base = np.maximum(0.0, 1.0 - y * z)
    out = base + 0.5 * lam * float(beta @ beta)
    return float(out) if np.ndim(out) == 0 else out


def gradient(kind: str, beta, x, y, lam: float = 0.0) -> np.ndarray:
    """Gradient (SVM: a subgradient, zero on the kink) of :func:`loss`.
    Batched like :func:`loss`: an ``(n, d)`` batch gives ``(n, d)`` rows."""
    kind = _loss_kind(kind)
    beta = np.asarray(beta, dtype=float)
    y = _check_labels(kind, y)
    x = np.asarray(x, dtype=float)
    z = x @ beta
    if kind == "linear":
        coef = 2.0 * (z - y)
    elif kind == "logistic":
        # -y / (1 + e^{y z}), written to avoid overflow
        coef = -y * np.exp(-np.logaddexp(0.0, y * z))
    else:
        coef = np.where(y * z < 1.0, -y, 0.0)
    return np.asarray(coef)[..., None] * x + lam * beta


def clip_gradient(g, bound: float = 1.0) -> np.ndarray:
    return np.clip(np.asarray(g, dtype=float), -bound, bound)


def perturb_gradients(grads, base: str, budget, rng: np.random.Generator) -> np.ndarray:
    """Perturb each row of an ``(m, d)`` batch of clipped gradients."""
    tag = mechanism_tag(base)
    g = np.atleast_2d(np.asarray(grads, dtype=float))
    if tag in ("pm", "hm"):
        return perturb_numeric_multi(g, budget, tag, rng)
    if tag == "duchi":
        return duchi_multi(g, budget, rng)
    if tag == "laplace":
        return laplace_perturb(g, as_epsilon(budget) / g.shape[1], rng)
    raise ConfigError(f"unsupported SGD base {base!r}")


@dataclass
class TrainResult:
    model: Model
    log: list = field(default_factory=list)
    participants: np.ndarray | None = None
    trajectory: list | None = None

    def write_log(self, path) -> None:
        Path(path).write_text(format_train_log(self.log))


def format_train_log(rows) -> str:
    lines = ["t,gamma,metric_on_holdout,grad_norm_estimate"]
    for t, gamma, metric, gnorm in rows:
        m = "" if metric is None else repr(float(metric))
        lines.append(f"{t},{float(gamma)!r},{m},{float(gnorm)!r}")
    return "\n".join(lines) + "\n"


def train(X, y, config: SgdConfig, rng: np.random.Generator, holdout=None, beta0=None,
          keep_trajectory: bool = False) -> TrainResult:
    """Run one pass of group-averaged SGD over ``X`` (features in [-1, 1]).

    ``holdout=(Xh, yh)`` adds the mean unregularized-plus-penalty loss on that
    batch to each log row. The grouping permutation is drawn from ``rng``
    before any noise, so private and non-private runs sharing a seed see the
    same groups.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigError("features must be an (n, d) array")
    n, d = X.shape
    y = _check_labels(config.loss, y)
    if y.shape != (n,):
        raise ConfigError(f"expected {n} labels, got shape {y.shape}")
    if np.any(np.abs(X) > 1):
        raise DomainError("features must lie in [-1, 1]")
    g_size = config.resolved_group_size(d)
    if g_size > n:
        raise ConfigError(f"group size {g_size} exceeds the number of users {n}")

    iters = n // g_size
    groups = rng.permutation(n)[: iters * g_size].reshape(iters, g_size)
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    res = TrainResult(Model(beta.copy()), participants=groups)
    traj = [beta.copy()] if keep_trajectory else None

    for t in range(1, iters + 1):
        ids = groups[t - 1]
        g = clip_gradient(gradient(config.loss, beta, X[ids], y[ids], config.lam), config.clip)
        if config.base is not None:
            g = perturb_gradients(g, config.base, config.epsilon, rng)
        step = g.mean(axis=0)
        gamma = config.lr_const / math.sqrt(t)
        with np.errstate(over="ignore", invalid="ignore"):
            beta = beta - gamma * step
        if not np.all(np.isfinite(beta)):
            raise FloatingPointError(f"SGD diverged at iteration {t}")
        metric = None
        if holdout is not None:
            metric = float(np.mean(loss(config.loss, beta, holdout[0], holdout[1], config.lam)))
        res.log.append((t, gamma, metric, float(np.linalg.norm(step))))
        if traj is not None:
            traj.append(beta.copy())

    res.model = Model(beta)
    res.trajectory = traj
    return res


def evaluate(model: Model, X, y, kind: str) -> float:
    """MSE for linear models, misclassification rate otherwise."""
    kind = _loss_kind(kind)
    X = np.asarray(X, dtype=float)
    y = _check_labels(kind, y)
    if y.size == 0:
        raise ConfigError("cannot evaluate on an empty test set")
    z = model.predict(X)
    if kind == "linear":
        return float(np.mean((z - y) ** 2))
    pred = np.where(z >= 0, 1.0, -1.0)
    return float(np.mean(pred != y))


def smoothed_trend(log, window: int = 10) -> tuple[float, float]:
    """Mean holdout metric over the first and last ``window`` iterations."""
    vals = np.array([r[2] for r in log], dtype=float)
    if vals.size < window or np.any(np.isnan(vals)):
        raise ConfigError("log too short or missing holdout metrics")
    return float(vals[:window].mean()), float(vals[-window:].mean())
