"""Multidimensional perturbation: attribute sampling around PM/HM, Duchi et
al.'s multidimensional mechanism, OUE for categorical attributes, and
whole-record collection for mixed schemas.

Attribute indices are 0-based throughout.

Two entry points exist for records: :func:`perturb_record` handles a single
user and returns a :class:`Report`; :func:`collect` perturbs a whole
``(n, d)`` dataset at once and returns a columnar :class:`ReportBatch`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import ConfigError, DomainError, Schema, UserTuple, as_epsilon, check_dataset
from .mech1d import duchi_magnitude, hm_perturb, mechanism_tag, pm_perturb


def k_of(budget, d: int) -> int:
    """Number of attributes each user reports: max(1, min(d, floor(eps/2.5)))."""
    eps = as_epsilon(budget)
    if d < 1:
        raise ConfigError("d must be >= 1")
    return max(1, min(d, math.floor(eps / 2.5)))


def c_d(d: int) -> float:
    if d < 1:
        raise ConfigError("d must be >= 1")
    if d % 2 == 1:
        val = Fraction(2 ** (d - 1), math.comb(d - 1, (d - 1) // 2))
    else:
        val = (Fraction(2 ** (d - 1)) + Fraction(math.comb(d, d // 2), 2)) / math.comb(d - 1, d // 2)
    return float(val)


@dataclass(frozen=True)
class DuchiMultiParams:
    epsilon: float
    d: int
    C_d: float
    B: float

    @classmethod
    def from_budget(cls, budget, d: int) -> "DuchiMultiParams":
        eps = as_epsilon(budget)
        cd = c_d(d)
        return cls(eps, d, cd, duchi_magnitude(eps) * cd)


@dataclass(frozen=True)
class SamplingPlan:
    k: int
    indices: tuple[int, ...]


def sample_plan(d: int, k: int, rng: np.random.Generator) -> SamplingPlan:
    idx = rng.choice(d, size=k, replace=False)
    return SamplingPlan(k, tuple(int(i) for i in idx))


def _sample_indices(n: int, d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, k)`` attribute indices, each row a uniform k-subset of range(d)."""
    if k == 1:
        return rng.integers(0, d, size=(n, 1))
    if k == d:
        return np.tile(np.arange(d), (n, 1))
    return np.argsort(rng.random((n, d)), axis=1)[:, :k]


_BASES = {"pm": pm_perturb, "hm": hm_perturb}


def _base_sampler(base: str):
    tag = mechanism_tag(base)
    if tag not in _BASES:
        raise ConfigError(f"base mechanism must be PM or HM, got {base!r}")
    return _BASES[tag]


def perturb_numeric_multi(t, budget, base: str, rng: np.random.Generator) -> np.ndarray:
    """Report k randomly chosen coordinates, each perturbed at eps/k and
    scaled by d/k; the rest are zero.

    ``t`` is a ``(d,)`` tuple or an ``(n, d)`` batch in ``[-1, 1]``.
    """
    eps = as_epsilon(budget)
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    tb = np.atleast_2d(t)
    if np.any(np.abs(tb) > 1):
        raise DomainError("numeric inputs must lie in [-1, 1]")
    n, d = tb.shape
    k = k_of(eps, d)
    idx = _sample_indices(n, d, k, rng)
    rows = np.arange(n)[:, None]
    noisy = _base_sampler(base)(tb[rows, idx], eps / k, rng)
    out = np.zeros_like(tb)
    out[rows, idx] = (d / k) * np.asarray(noisy)
    return out[0] if single else out


def _half_count_cdf(d: int):
    """CDFs of the number of +1 signs h among corners on the positive side
    (h >= d/2) and negative side (h <= d/2) of the hyperplane."""
    w = np.array([math.comb(d, h) for h in range(d + 1)], dtype=float)
    h = np.arange(d + 1)
    plus = np.where(2 * h >= d, w, 0.0)
    minus = np.where(2 * h <= d, w, 0.0)
    return np.cumsum(plus) / plus.sum(), np.cumsum(minus) / minus.sum()


def duchi_multi(t, budget, rng: np.random.Generator) -> np.ndarray:
    """Duchi et al.'s multidimensional mechanism; output in {-B, B}^d.

    Writing a corner as ``B * (w * v)`` with ``w`` in {-1, 1}^d, the sides
    ``t*.v >= 0`` / ``<= 0`` are ``sum(w) >= 0`` / ``<= 0``. A uniform draw
    from either side is: pick the number of +1 entries of ``w`` with
    probability proportional to C(d, h) restricted to that side, then place
    them uniformly. This is exact for any d, without enumerating 2^d corners.
    Corners with ``sum(w) == 0`` (even d) belong to both sides.
    """
    eps = as_epsilon(budget)
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    tb = np.atleast_2d(t)
    if np.any(np.abs(tb) > 1):
        raise DomainError("numeric inputs must lie in [-1, 1]")
    n, d = tb.shape
    prm = DuchiMultiParams.from_budget(eps, d)

    v = np.where(rng.random((n, d)) < 0.5 + 0.5 * tb, 1.0, -1.0)
    u = rng.random(n) < math.exp(eps) / (math.exp(eps) + 1)
    cdf_plus, cdf_minus = _half_count_cdf(d)
    draw = rng.random(n)
    h = np.where(
        u,
        np.searchsorted(cdf_plus, draw, side="right"),
        np.searchsorted(cdf_minus, draw, side="right"),
    )
    h = np.minimum(h, d)
    keys = rng.random((n, d))
    srt = np.sort(keys, axis=1)
    thr = np.where(h > 0, srt[np.arange(n), np.maximum(h - 1, 0)], -1.0)
    w = np.where(keys <= thr[:, None], 1.0, -1.0)
    out = prm.B * w * v
    return out[0] if single else out


# --- OUE --------------------------------------------------------------------

def oue_probs(budget) -> tuple[float, float]:
    """(p, q): keep probability of the true bit, flip-on probability of others."""
    eps = as_epsilon(budget)
    return 0.5, 1.0 / (math.exp(eps) + 1)


def oue_perturb(value, k_vals: int, budget, rng: np.random.Generator) -> np.ndarray:
    """Optimized unary encoding of values in ``1..k_vals``.

    Scalar input gives a ``(k_vals,)`` uint8 vector; an array of ``n`` values
    gives ``(n, k_vals)``.
    """
    p, q = oue_probs(budget)
    vals = np.asarray(value)
    single = vals.ndim == 0
    vals = np.atleast_1d(vals).astype(np.int64)
    if np.any((vals < 1) | (vals > k_vals)):
        raise DomainError(f"categorical values must lie in 1..{k_vals}")
    n = vals.shape[0]
    onehot = np.zeros((n, k_vals), dtype=bool)
    onehot[np.arange(n), vals - 1] = True
    bits = rng.random((n, k_vals)) < np.where(onehot, p, q)
    bits = bits.astype(np.uint8)
    return bits[0] if single else bits


def oue_log_ratio_bound(budget) -> float:
    """log of the largest output-probability ratio between two inputs."""
    p, q = oue_probs(budget)
    return math.log((p / q) * ((1 - q) / (1 - p)))


# --- reports ----------------------------------------------------------------

@dataclass(frozen=True)
class NumericPayload:
    value: float


@dataclass(frozen=True)
class CategoricalPayload:
    bits: tuple[int, ...]

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


@dataclass(frozen=True)
class Report:
    user_id: int
    entries: tuple[tuple[int, NumericPayload | CategoricalPayload], ...]

    @property
    def indices(self) -> list[int]:
        return [j for j, _ in self.entries]


def perturb_record(record, schema: Schema, budget, base: str, rng: np.random.Generator, user_id: int = 0) -> Report:
    """Perturb one user's tuple (raw values) into a Report.

    Numeric payloads are on the normalized scale: ``(d/k) * x`` with ``x`` the
    base mechanism's output for ``value / r``.
    """
    eps = as_epsilon(budget)
    if isinstance(record, UserTuple):
        if record.schema != schema:
            raise DomainError("tuple was built for a different schema")
        values = record.values
    else:
        values = schema.validate(record)
    d = schema.d
    k = k_of(eps, d)
    plan = sample_plan(d, k, rng)
    sampler = _base_sampler(base)
    entries = []
    for j in sorted(plan.indices):
        spec = schema[j]
        if spec.is_numeric:
            x = sampler(values[j] / spec.r, eps / k, rng)
            entries.append((j, NumericPayload(float(d / k * x))))
        else:
            bits = oue_perturb(values[j], spec.cardinality, eps / k, rng)
            entries.append((j, CategoricalPayload(tuple(int(b) for b in bits))))
    return Report(int(user_id), tuple(entries))


@dataclass
class ReportBatch:
    """Columnar reports for ``n`` users.

    ``numeric[j]`` is the dense length-n column of scaled values (zero where
    the user did not sample attribute j); ``categorical[j]`` is
    ``(user_ids, bits)`` for the users that sampled categorical attribute j.
    """

    schema: Schema
    epsilon: float
    k: int
    user_ids: np.ndarray
    sampled: np.ndarray
    numeric: dict[int, np.ndarray] = field(default_factory=dict)
    categorical: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.user_ids)

    def to_reports(self) -> list[Report]:
        pos = {int(u): i for i, u in enumerate(self.user_ids)}
        cat_rows = {}
        for j, (users, bits) in self.categorical.items():
            for u, b in zip(users, bits):
                cat_rows[(int(u), j)] = b
        out = []
        for i, uid in enumerate(self.user_ids):
            entries = []
            for j in sorted(int(x) for x in self.sampled[i]):
                if self.schema[j].is_numeric:
                    entries.append((j, NumericPayload(float(self.numeric[j][i]))))
                else:
                    entries.append((j, CategoricalPayload(tuple(int(b) for b in cat_rows[(int(uid), j)]))))
            out.append(Report(int(uid), tuple(entries)))
        assert len(pos) == len(out)
        return out

    @classmethod
    def from_reports(cls, reports: Sequence[Report], schema: Schema, budget) -> "ReportBatch":
        eps = as_epsilon(budget)
        k = k_of(eps, schema.d)
        n = len(reports)
        uids = np.array([r.user_id for r in reports], dtype=np.int64)
        sampled = np.zeros((n, k), dtype=np.int64)
        numeric = {j: np.zeros(n) for j in schema.numeric_indices}
        cat_users = {j: [] for j in schema.categorical_indices}
        cat_bits = {j: [] for j in schema.categorical_indices}
        for i, rep in enumerate(reports):
            validate_report(rep, schema, k)
            for slot, (j, payload) in enumerate(rep.entries):
                sampled[i, slot] = j
                if isinstance(payload, NumericPayload):
                    numeric[j][i] = payload.value
                else:
                    cat_users[j].append(rep.user_id)
                    cat_bits[j].append(payload.bits)
        categorical = {}
        for j in schema.categorical_indices:
            kv = schema[j].cardinality
            bits = np.array(cat_bits[j], dtype=np.uint8).reshape(-1, kv)
            categorical[j] = (np.array(cat_users[j], dtype=np.int64), bits)
        return cls(schema, eps, k, uids, sampled, numeric, categorical)


def validate_report(rep: Report, schema: Schema, k: int) -> None:
    idx = rep.indices
    if len(idx) != k or len(set(idx)) != k:
        raise DomainError(f"report for user {rep.user_id} must have {k} distinct entries, got {idx}")
    for j, payload in rep.entries:
        if not 0 <= j < schema.d:
            raise DomainError(f"report for user {rep.user_id}: attribute index {j} out of range")
        spec = schema[j]
        if spec.is_numeric != isinstance(payload, NumericPayload):
            raise DomainError(f"report for user {rep.user_id}: payload kind mismatch on attribute {j}")
        if not spec.is_numeric and len(payload.bits) != spec.cardinality:
            raise DomainError(f"report for user {rep.user_id}: bit vector length != {spec.cardinality}")


def collect(data, schema: Schema, budget, base: str, rng: np.random.Generator, user_ids=None) -> ReportBatch:
    """Vectorized :func:`perturb_record` over an ``(n, d)`` array of raw values."""
    eps = as_epsilon(budget)
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != schema.d:
        raise DomainError(f"data must have shape (n, {schema.d}), got {data.shape}")
    check_dataset(data, schema)
    n, d = data.shape
    k = k_of(eps, d)
    sampler = _base_sampler(base)
    uids = np.arange(n, dtype=np.int64) if user_ids is None else np.asarray(user_ids, dtype=np.int64)
    sampled = np.sort(_sample_indices(n, d, k, rng), axis=1)
    numeric, categorical = {}, {}
    for j, spec in enumerate(schema.attributes):
        rows = np.flatnonzero(np.any(sampled == j, axis=1))
        if spec.is_numeric:
            col = np.zeros(n)
            x = sampler(data[rows, j] / spec.r, eps / k, rng)
            col[rows] = (d / k) * np.asarray(x)
            numeric[j] = col
        else:
            bits = oue_perturb(data[rows, j].astype(np.int64), spec.cardinality, eps / k, rng)
            categorical[j] = (uids[rows], bits.reshape(-1, spec.cardinality))
    return ReportBatch(schema, eps, k, uids, sampled, numeric, categorical)


# --- report file format -----------------------------------------------------

def format_reports(reports: Iterable[Report]) -> str:
    lines = []
    for rep in reports:
        for j, payload in rep.entries:
            if isinstance(payload, NumericPayload):
                lines.append(f"{rep.user_id},{j},N,{payload.value!r}")
            else:
                lines.append(f"{rep.user_id},{j},C,{payload.bitstring()}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_reports(lines: Iterable[str]) -> list[Report]:
    grouped: dict[int, list] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4 or parts[2] not in ("N", "C"):
            raise DomainError(f"report line {lineno}: malformed {line!r}")
        uid, j = int(parts[0]), int(parts[1])
        if parts[2] == "N":
            payload = NumericPayload(float(parts[3]))
        else:
            if set(parts[3]) - {"0", "1"}:
                raise DomainError(f"report line {lineno}: bad bitstring {parts[3]!r}")
            payload = CategoricalPayload(tuple(int(c) for c in parts[3]))
        grouped.setdefault(uid, []).append((j, payload))
    return [Report(uid, tuple(sorted(ents, key=lambda e: e[0]))) for uid, ents in grouped.items()]


def write_reports(reports: Iterable[Report], path) -> None:
    with open(path, "w") as fh:
        fh.write(format_reports(reports))


def read_reports(path) -> list[Report]:
    with open(path) as fh:
        return parse_reports(fh)
