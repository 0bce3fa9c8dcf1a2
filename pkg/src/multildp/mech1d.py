"""One-dimensional numeric perturbation mechanisms for inputs in ``[-1, 1]``.

All samplers are vectorized: ``t`` may be a scalar or an array, and the
output has the same shape. Each takes the privacy budget (a float or
:class:`~multildp.core.PrivacyBudget`) and a ``numpy.random.Generator``.

Mechanisms
----------
laplace    t + Lap(2/eps)
duchi      two-point output +-(e^eps+1)/(e^eps-1)
pm         piecewise mechanism, output in [-C, C]
hm         hybrid: pm with probability alpha, else duchi
scdf       t + noise from a piecewise-constant staircase density
staircase  same density family with different (m, a)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, as_epsilon

MECHANISMS_1D = ("laplace", "duchi", "pm", "hm", "scdf", "staircase")

_ALIASES = {
    "lap": "laplace",
    "laplace": "laplace",
    "laplacesplit": "laplace",
    "duchi": "duchi",
    "du": "duchi",
    "pm": "pm",
    "piecewise": "pm",
    "hm": "hm",
    "hybrid": "hm",
    "scdf": "scdf",
    "staircase": "staircase",
    "stair": "staircase",
}


def mechanism_tag(name: str) -> str:
    key = str(name).lower().replace("-", "").replace("_", "")
    try:
        return _ALIASES[key]
    except KeyError:
        raise ConfigError(f"unknown mechanism {name!r}") from None


# Worst-case HM variance switches branch at EPS_STAR; PM and Duchi worst
# cases cross at EPS_SHARP. Both have closed forms.
EPS_STAR = math.log(
    (-5 + 2 * (6353 - 405 * math.sqrt(241)) ** (1 / 3) + 2 * (6353 + 405 * math.sqrt(241)) ** (1 / 3)) / 27
)
EPS_SHARP = math.log((7 + 4 * math.sqrt(7) + 2 * math.sqrt(20 + 14 * math.sqrt(7))) / 9)


@dataclass(frozen=True)
class PmParams:
    epsilon: float
    C: float
    p: float

    @classmethod
    def from_budget(cls, budget) -> "PmParams":
        eps = as_epsilon(budget)
        s = math.exp(eps / 2)
        # (s+1)/(s-1) written with expm1 to stay accurate for tiny eps
        em1 = math.expm1(eps / 2)
        C = (em1 + 2) / em1
        p = (math.exp(eps) - s) / (2 * s + 2)
        return cls(eps, C, p)

    def ell(self, t):
        return (self.C + 1) / 2 * t - (self.C - 1) / 2

    def rr(self, t):
        return self.ell(t) + self.C - 1

    @property
    def center_prob(self) -> float:
        s = math.exp(self.epsilon / 2)
        return s / (s + 1)

    def total_mass(self) -> float:
        return self.p * (self.C - 1) + self.p / math.exp(self.epsilon) * (self.C + 1)


@dataclass(frozen=True)
class HmParams:
    epsilon: float
    alpha: float
    eps_star: float = EPS_STAR
    eps_sharp: float = EPS_SHARP

    @classmethod
    def from_budget(cls, budget) -> "HmParams":
        eps = as_epsilon(budget)
        alpha = -math.expm1(-eps / 2) if eps > EPS_STAR else 0.0
        return cls(eps, alpha)


@dataclass(frozen=True)
class StairParams:
    """Noise density: height ``a`` on ``[-m, m]``; side piece ``j >= 0`` on
    ``[m+2j, m+2j+2]`` (and its mirror) at height ``a * ratio**(j+1)``."""

    epsilon: float
    variant: str
    m: float
    a: float
    ratio: float

    @classmethod
    def from_budget(cls, budget, variant: str = "scdf") -> "StairParams":
        eps = as_epsilon(budget)
        variant = mechanism_tag(variant)
        r = math.exp(-eps)
        if variant == "scdf":
            m = 2 * (-math.expm1(-eps) - eps * r) / (eps * -math.expm1(-eps))
            a = eps / 4
        elif variant == "staircase":
            m = 2 / (1 + math.exp(eps / 2))
            a = -math.expm1(-eps) / (2 * m + 4 * r - 2 * m * r)
        else:
            raise ConfigError(f"staircase variant must be scdf or staircase, got {variant!r}")
        return cls(eps, variant, m, a, r)

    @property
    def center_mass(self) -> float:
        return 2 * self.m * self.a

    @property
    def side_mass(self) -> float:
        return 4 * self.a * self.ratio / -math.expm1(-self.epsilon)

    def total_mass(self) -> float:
        return self.center_mass + self.side_mass

    def pdf(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        j = np.floor((x - self.m) / 2)
        side = self.a * self.ratio ** (j + 1)
        return np.where(x <= self.m, self.a, side)

    def second_moment(self, tol: float = 1e-10) -> float:
        """E[noise^2], summing piece contributions until the geometric tail
        bound falls below ``tol``."""
        m, a, r = self.m, self.a, self.ratio
        total = 2 * a * m**3 / 3
        j = 0
        while True:
            hi = m + 2 * j + 2
            total += 2 * a * r ** (j + 1) * (hi**3 - (hi - 2) ** 3) / 3
            # term(j+1)/term(j) = r * (1 + 12h/(3h^2 - 6h + 4)) with h = hi;
            # non-increasing for h > 2/sqrt(3), so the tail is geometric-bounded.
            ratio = r * (1 + 12 * hi / (3 * hi**2 - 6 * hi + 4))
            nxt = 2 * a * r ** (j + 2) * ((hi + 2) ** 3 - hi**3) / 3
            j += 1
            if ratio < 1 and nxt / (1 - ratio) < tol:
                return total


# --- samplers ---------------------------------------------------------------

def _uniform_like(t, rng) -> np.ndarray:
    return rng.random(np.shape(t))


def _out(x, t):
    return float(x) if np.ndim(t) == 0 else x


def laplace_noise_from_uniform(u, scale: float):
    """Inverse-CDF Laplace draw; ``u`` uniform on [0, 1)."""
    w = np.asarray(u, dtype=float) - 0.5
    w = np.clip(w, -0.5 + 2.0**-54, 0.5)
    return -scale * np.sign(w) * np.log1p(-2 * np.abs(w))


def laplace_perturb(t, budget, rng: np.random.Generator):
    eps = as_epsilon(budget)
    t = np.asarray(t, dtype=float)
    noise = laplace_noise_from_uniform(_uniform_like(t, rng), 2.0 / eps)
    return _out(t + noise, t)


def duchi_magnitude(budget) -> float:
    eps = as_epsilon(budget)
    return (math.expm1(eps) + 2) / math.expm1(eps)


def duchi_prob_positive(t, budget):
    eps = as_epsilon(budget)
    return math.expm1(eps) / (2 * math.exp(eps) + 2) * np.asarray(t, dtype=float) + 0.5


def duchi_1d(t, budget, rng: np.random.Generator):
    t = np.asarray(t, dtype=float)
    mag = duchi_magnitude(budget)
    pos = _uniform_like(t, rng) < duchi_prob_positive(t, budget)
    return _out(np.where(pos, mag, -mag), t)


def pm_perturb(t, budget, rng: np.random.Generator):
    prm = PmParams.from_budget(budget)
    t = np.asarray(t, dtype=float)
    C = prm.C
    ell = prm.ell(t)
    rr = ell + C - 1
    coin = _uniform_like(t, rng)
    pos = _uniform_like(t, rng)
    center = ell + pos * (C - 1)
    # Outer pieces [-C, ell) and (rr, C] have total length C + 1; walk a
    # single uniform offset across them so each gets mass proportional to its length.
    y = pos * (C + 1)
    left_len = ell + C
    outer = np.where(y < left_len, -C + y, rr + (y - left_len))
    out = np.where(coin < prm.center_prob, center, outer)
    return _out(np.clip(out, -C, C), t)


def pm_pdf(t, x, budget):
    prm = PmParams.from_budget(budget)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    ell = prm.ell(t)
    rr = ell + prm.C - 1
    inside = (x >= ell) & (x <= rr)
    dens = np.where(inside, prm.p, prm.p / math.exp(prm.epsilon))
    dens = np.where(np.abs(x) <= prm.C, dens, 0.0)
    return float(dens) if dens.ndim == 0 else dens


def hm_perturb(t, budget, rng: np.random.Generator):
    prm = HmParams.from_budget(budget)
    t = np.asarray(t, dtype=float)
    if prm.alpha == 0.0:
        return duchi_1d(t, budget, rng)
    use_pm = _uniform_like(t, rng) < prm.alpha
    pm = np.asarray(pm_perturb(t, budget, rng))
    du = np.asarray(duchi_1d(t, budget, rng))
    return _out(np.where(use_pm, pm, du), t)


def stair_noise(shape, budget, variant: str, rng: np.random.Generator) -> np.ndarray:
    prm = StairParams.from_budget(budget, variant)
    coin = rng.random(shape)
    pos = rng.random(shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    # piece index j ~ Geometric on {0, 1, ...} with P(j) proportional to ratio^j
    j = rng.geometric(-math.expm1(-prm.epsilon), size=shape) - 1
    center = (2 * pos - 1) * prm.m
    side = sign * (prm.m + 2 * j + 2 * pos)
    return np.where(coin < prm.center_mass, center, side)


def stair_perturb(t, budget, variant: str, rng: np.random.Generator):
    t = np.asarray(t, dtype=float)
    return _out(t + stair_noise(np.shape(t), budget, variant, rng), t)


def scdf_perturb(t, budget, rng):
    return stair_perturb(t, budget, "scdf", rng)


def staircase_perturb(t, budget, rng):
    return stair_perturb(t, budget, "staircase", rng)


_SAMPLERS = {
    "laplace": laplace_perturb,
    "duchi": duchi_1d,
    "pm": pm_perturb,
    "hm": hm_perturb,
    "scdf": scdf_perturb,
    "staircase": staircase_perturb,
}


def perturb_1d(mechanism: str, t, budget, rng):
    return _SAMPLERS[mechanism_tag(mechanism)](t, budget, rng)


# --- analytic variances -----------------------------------------------------

def pm_variance(t, budget):
    eps = as_epsilon(budget)
    em1 = math.expm1(eps / 2)
    s = em1 + 1
    t2 = np.square(np.asarray(t, dtype=float))
    return t2 / em1 + (s + 3) / (3 * em1**2)


def duchi_variance(t, budget):
    return duchi_magnitude(budget) ** 2 - np.square(np.asarray(t, dtype=float))


def hm_variance(t, budget):
    alpha = HmParams.from_budget(budget).alpha
    return alpha * pm_variance(t, budget) + (1 - alpha) * duchi_variance(t, budget)


def variance_1d(mechanism: str, t, budget):
    """Exact output variance of a 1-D mechanism at input ``t``."""
    tag = mechanism_tag(mechanism)
    eps = as_epsilon(budget)
    t = np.asarray(t, dtype=float)
    if tag == "laplace":
        v = np.full(t.shape, 8.0 / eps**2)
    elif tag == "duchi":
        v = duchi_variance(t, eps)
    elif tag == "pm":
        v = pm_variance(t, eps)
    elif tag == "hm":
        v = hm_variance(t, eps)
    else:
        v = np.full(t.shape, StairParams.from_budget(eps, tag).second_moment())
    return float(v) if v.ndim == 0 else v


def worst_case_variance_1d(mechanism: str, budget) -> float:
    """max over t in [-1, 1]; every variance here is affine in t^2, so the
    maximum sits at t = 0 or |t| = 1."""
    return float(max(variance_1d(mechanism, 0.0, budget), variance_1d(mechanism, 1.0, budget)))


def pm_worst_case(budget) -> float:
    s = math.exp(as_epsilon(budget) / 2)
    return 4 * s / (3 * (s - 1) ** 2)


def hm_worst_case(budget) -> float:
    eps = as_epsilon(budget)
    if eps <= EPS_STAR:
        return duchi_magnitude(eps) ** 2
    s = math.exp(eps / 2)
    e = math.exp(eps)
    return (s + 3) / (3 * s * (s - 1)) + (e + 1) ** 2 / (s * (e - 1) ** 2)


def crossover_epsilon(lo: float = 1.0, hi: float = 1.5, tol: float = 1e-12) -> float:
    """Bisect for the budget where PM's and Duchi's worst cases coincide."""
    def f(e):
        return pm_worst_case(e) - duchi_magnitude(e) ** 2

    flo = f(lo)
    if flo * f(hi) > 0:
        raise ConfigError("crossover not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
