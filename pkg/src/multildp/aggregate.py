"""Aggregator-side estimation and analytic variance comparisons.

Estimation state is held in an :class:`Accumulator`. Numeric columns are
summed exactly (as a ``Fraction``) and frequency counts are integers, so
accumulating shards in any grouping and merging gives bit-identical
estimates to a single pass.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import ConfigError, Schema, as_epsilon
from .mech1d import EPS_STAR, duchi_magnitude, mechanism_tag
from .mechmulti import Report, ReportBatch, c_d, k_of, oue_probs

_CHUNK = 1 << 24


def exact_sum(values) -> Fraction:
    """Exact sum of float64 values."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[v != 0]
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot sum non-finite values")
    total = Fraction(0)
    for start in range(0, v.size, _CHUNK):
        chunk = v[start:start + _CHUNK]
        mant, expo = np.frexp(chunk)
        M = (mant * 2.0**53).astype(np.int64)
        E = expo.astype(np.int64) - 53
        hi = M >> 26
        lo = M - (hi << 26)
        uniq, inv = np.unique(E, return_inverse=True)
        # |hi| < 2^27 and lo < 2^26; chunk sizes keep the float partial sums
        # below 2^53, so bincount's float accumulation is exact here.
        shi = np.bincount(inv, weights=hi.astype(float), minlength=uniq.size)
        slo = np.bincount(inv, weights=lo.astype(float), minlength=uniq.size)
        for e, a, b in zip(uniq.tolist(), shi.tolist(), slo.tolist()):
            mant_int = (int(a) << 26) + int(b)
            total += mant_int * (Fraction(2) ** e)
    return total


# --- analytic per-coordinate variances --------------------------------------

def _pm_second_moment(t2, eps):
    em1 = math.expm1(eps / 2)
    return t2 / em1 + (em1 + 4) / (3 * em1**2) + t2


def variance_multi(mechanism: str, t, budget, d: int):
    """Per-coordinate variance of the multidimensional mechanisms.

    Duchi: B^2 - t^2. PM/HM: attribute sampling with k = k_of(eps, d), each
    reported coordinate perturbed at eps/k and scaled by d/k.
    """
    tag = mechanism_tag(mechanism)
    eps = as_epsilon(budget)
    t2 = np.square(np.asarray(t, dtype=float))
    if tag == "duchi":
        out = (duchi_magnitude(eps) * c_d(d)) ** 2 - t2
    elif tag in ("pm", "hm"):
        k = k_of(eps, d)
        e = eps / k
        s = math.exp(e / 2)
        if tag == "pm":
            out = d * (s + 3) / (3 * k * (s - 1) ** 2) + (d * s / (k * (s - 1)) - 1) * t2
        elif e > EPS_STAR:
            ee = math.exp(e)
            out = (d / k) * ((s + 3) / (3 * s * (s - 1)) + (ee + 1) ** 2 / (s * (ee - 1) ** 2)) + (d / k - 1) * t2
        else:
            out = (d / k) * duchi_magnitude(e) ** 2 + (d / k - 1) * t2
    else:
        raise ConfigError(f"variance_multi supports duchi, pm, hm; got {mechanism!r}")
    return float(out) if np.ndim(out) == 0 else out


def worst_case_multi(mechanism: str, budget, d: int) -> float:
    return float(max(variance_multi(mechanism, t, budget, d) for t in (-1.0, 0.0, 1.0)))


@dataclass(frozen=True)
class WorstCaseComparison:
    values: dict
    order: tuple[str, ...]
    relation: str


def compare_worst_case(budget, d: int, rel_tol: float = 1e-9) -> WorstCaseComparison:
    """Sort PM, HM and Duchi by worst-case per-coordinate variance.

    ``relation`` reads like ``"HM < PM = Duchi"``; two values within
    ``rel_tol`` relative of each other are reported as equal.
    """
    names = {"hm": "HM", "pm": "PM", "duchi": "Duchi"}
    vals = {names[m]: worst_case_multi(m, budget, d) for m in ("hm", "pm", "duchi")}
    order = sorted(vals, key=lambda k: (vals[k], list(names.values()).index(k)))
    parts = [order[0]]
    for a, b in zip(order, order[1:]):
        same = abs(vals[b] - vals[a]) <= rel_tol * max(abs(vals[a]), abs(vals[b]))
        parts.append("=" if same else "<")
        parts.append(b)
    return WorstCaseComparison(vals, tuple(order), " ".join(parts))


def error_scale(d: int, n: int, budget, beta: float) -> float:
    """sqrt(d ln(d/beta)) / (eps sqrt(n)); the max-error bound's order with
    constant 1. A scale for diagnostics, not a certified bound."""
    eps = as_epsilon(budget)
    if not 0 < beta < 1:
        raise ConfigError("beta must lie in (0, 1)")
    return math.sqrt(d * math.log(d / beta)) / (eps * math.sqrt(n))


def freq_variance(f, n: int, d: int, budget, relative: bool = False):
    """Variance of the frequency estimate for a value with true frequency ``f``.

    Accounts for both attribute sampling (each user reports the attribute
    with probability k/d) and OUE noise at eps/k.
    """
    eps = as_epsilon(budget)
    k = k_of(eps, d)
    p, q = oue_probs(eps / k)
    f = np.asarray(f, dtype=float)
    per_user = f * (p - 2 * p * q + q * q) + (1 - f) * q * (1 - q)
    if relative:
        m = n * k / d
        out = per_user / (m * (p - q) ** 2) - f * f / m
    else:
        out = ((d / k) * per_user / (p - q) ** 2 - f * f) / n
    return float(out) if out.ndim == 0 else out


def oue_estimate(bits, budget) -> np.ndarray:
    """Standalone OUE frequency estimate from an ``(m, k_vals)`` bit matrix."""
    bits = np.asarray(bits)
    p, q = oue_probs(budget)
    m = bits.shape[0]
    return (bits.sum(axis=0, dtype=np.int64) - m * q) / ((p - q) * m)


# --- accumulation -----------------------------------------------------------

@dataclass
class EstimateSet:
    schema: Schema
    n: int
    means: dict = field(default_factory=dict)
    freqs: dict = field(default_factory=dict)
    mean_sd: dict = field(default_factory=dict)
    freq_sd: dict = field(default_factory=dict)
    uncovered: set = field(default_factory=set)

    def normalized_freqs(self, name: str) -> np.ndarray:
        """Estimates clamped to [0, 1] and rescaled to sum to one."""
        f = np.clip(self.freqs[name], 0.0, 1.0)
        s = f.sum()
        return f / s if s > 0 else np.full_like(f, 1.0 / f.size)

    def format_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attribute", "kind", "value_or_mean", "estimate", "predicted_sd"])
        for spec in self.schema.attributes:
            if spec.is_numeric:
                w.writerow([spec.name, "numeric", "mean", repr(self.means[spec.name]), repr(self.mean_sd[spec.name])])
            else:
                for v, (est, sd) in enumerate(zip(self.freqs[spec.name], self.freq_sd[spec.name]), 1):
                    w.writerow([spec.name, "categorical", v, repr(float(est)), repr(float(sd))])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.format_csv())


class Accumulator:
    """Mergeable aggregator state for reports collected with PM or HM."""

    def __init__(self, schema: Schema, budget, base: str = "pm"):
        self.schema = schema
        self.epsilon = as_epsilon(budget)
        self.base = mechanism_tag(base)
        self.k = k_of(self.epsilon, schema.d)
        self.n = 0
        self.sums = {j: Fraction(0) for j in schema.numeric_indices}
        self.ones = {j: np.zeros(schema[j].cardinality, dtype=np.int64) for j in schema.categorical_indices}
        self.counts = {j: 0 for j in schema.categorical_indices}

    def add(self, reports: ReportBatch | Sequence[Report]) -> "Accumulator":
        if not isinstance(reports, ReportBatch):
            reports = ReportBatch.from_reports(list(reports), self.schema, self.epsilon)
        if reports.schema != self.schema or reports.k != self.k:
            raise ConfigError("report batch was collected under a different schema or budget")
        self.n += reports.n
        for j, col in reports.numeric.items():
            self.sums[j] += exact_sum(col)
        for j, (users, bits) in reports.categorical.items():
            self.ones[j] += bits.sum(axis=0, dtype=np.int64)
            self.counts[j] += int(bits.shape[0])
        return self

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.schema != self.schema or other.epsilon != self.epsilon:
            raise ConfigError("cannot merge accumulators built for different schema/budget")
        out = Accumulator(self.schema, self.epsilon, self.base)
        out.n = self.n + other.n
        out.sums = {j: self.sums[j] + other.sums[j] for j in self.sums}
        out.ones = {j: self.ones[j] + other.ones[j] for j in self.ones}
        out.counts = {j: self.counts[j] + other.counts[j] for j in self.counts}
        return out

    def mean(self, j: int) -> float:
        if self.n == 0:
            raise ConfigError("no reports accumulated")
        if j not in self.sums:
            raise ConfigError(f"attribute {j} is not numeric")
        return float(self.sums[j] * Fraction(self.schema[j].r) / self.n)

    def freqs(self, j: int, relative: bool = False) -> np.ndarray:
        """Debiased frequency estimates for every value of attribute ``j``.

        Default scaling is d/(k n) times the OUE-debiased count; with
        ``relative=True`` the debiased count is divided by the number of users
        that actually reported the attribute instead.
        """
        if self.n == 0:
            raise ConfigError("no reports accumulated")
        if j not in self.counts:
            raise ConfigError(f"attribute {j} is not categorical")
        m = self.counts[j]
        if m == 0:
            return np.zeros(self.schema[j].cardinality)
        p, q = oue_probs(self.epsilon / self.k)
        debiased = (self.ones[j] - m * q) / (p - q)
        if relative:
            return debiased / m
        return debiased * self.schema.d / (self.k * self.n)

    def estimates(self, relative: bool = False) -> EstimateSet:
        if self.n == 0:
            raise ConfigError("no reports accumulated")
        d, n = self.schema.d, self.n
        est = EstimateSet(self.schema, n)
        wc = worst_case_multi(self.base, self.epsilon, d)
        for j in self.schema.numeric_indices:
            name = self.schema[j].name
            est.means[name] = self.mean(j)
            est.mean_sd[name] = self.schema[j].r * math.sqrt(wc / n)
        for j in self.schema.categorical_indices:
            name = self.schema[j].name
            f = self.freqs(j, relative)
            est.freqs[name] = f
            est.freq_sd[name] = np.sqrt(freq_variance(np.clip(f, 0, 1), n, d, self.epsilon, relative))
            if self.counts[j] == 0:
                est.uncovered.add(name)
        return est


def mean_estimate(reports, schema: Schema, j: int, budget=None) -> float:
    """(1/n) * sum of reported values for numeric attribute ``j``, in raw units.

    Users that did not sample ``j`` contribute zero.
    """
    if isinstance(reports, ReportBatch):
        n, col = reports.n, reports.numeric.get(j)
        if col is None:
            raise ConfigError(f"attribute {j} is not numeric")
        if n == 0:
            raise ConfigError("no reports")
        return float(exact_sum(col) * Fraction(schema[j].r) / n)
    reports = list(reports)
    if not reports:
        raise ConfigError("no reports")
    if not schema[j].is_numeric:
        raise ConfigError(f"attribute {j} is not numeric")
    vals = [p.value for r in reports for (i, p) in r.entries if i == j]
    return float(exact_sum(vals) * Fraction(schema[j].r) / len(reports))


def freq_estimate(reports, schema: Schema, j: int, v: int, budget, relative: bool = False) -> float:
    """Estimated frequency of value ``v`` (1-based) in categorical attribute ``j``.

    Returns 0.0 when no user reported the attribute.
    """
    acc = Accumulator(schema, budget)
    acc.add(reports)
    spec = schema[j]
    if spec.is_numeric:
        raise ConfigError(f"attribute {j} is not categorical")
    if not 1 <= v <= spec.cardinality:
        raise ConfigError(f"value {v} outside 1..{spec.cardinality}")
    return float(acc.freqs(j, relative)[v - 1])
