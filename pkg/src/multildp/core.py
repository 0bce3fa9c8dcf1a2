"""Shared domain types, schema I/O, value normalization and seeded randomness.

Every mechanism in the package takes a ``numpy.random.Generator``. Generators
are derived from a :class:`RandomSource`, which is a (seed, stream) pair fed to
a Philox counter-based bit generator, so the same pair always replays the same
draws and distinct streams are independent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """A value falls outside the domain declared for its attribute."""


class ConfigError(ValueError):
    """Invalid configuration or usage (bad parameters, missing columns, ...)."""


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps <= 0:
            raise ConfigError(f"privacy budget must be positive and finite, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)

    def split(self, parts: int) -> "PrivacyBudget":
        return PrivacyBudget(self.epsilon / parts)

    def __float__(self) -> float:
        return self.epsilon


def as_epsilon(budget) -> float:
    """Accept either a PrivacyBudget or a bare positive number."""
    if isinstance(budget, PrivacyBudget):
        return budget.epsilon
    return PrivacyBudget(budget).epsilon


@dataclass(frozen=True)
class AttributeSpec:
    """One attribute: numeric with symmetric range ``[-r, r]`` or categorical
    with values ``1..cardinality``."""

    name: str
    kind: str
    r: float | None = None
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind == "numeric":
            if self.r is None or not (float(self.r) > 0) or not math.isfinite(float(self.r)):
                raise ConfigError(f"numeric attribute {self.name!r} needs a positive range, got {self.r!r}")
            object.__setattr__(self, "r", float(self.r))
        elif self.kind == "categorical":
            if self.cardinality is None or int(self.cardinality) != self.cardinality or self.cardinality < 2:
                raise ConfigError(
                    f"categorical attribute {self.name!r} needs cardinality >= 2, got {self.cardinality!r}"
                )
            object.__setattr__(self, "cardinality", int(self.cardinality))
        else:
            raise ConfigError(f"unknown attribute kind {self.kind!r} for {self.name!r}")

    @classmethod
    def numeric(cls, name: str, r: float = 1.0) -> "AttributeSpec":
        return cls(name, "numeric", r=r)

    @classmethod
    def categorical(cls, name: str, cardinality: int) -> "AttributeSpec":
        return cls(name, "categorical", cardinality=cardinality)

    @property
    def is_numeric(self) -> bool:
        return self.kind == "numeric"

    def admits(self, value) -> bool:
        if self.is_numeric:
            v = float(value)
            return math.isfinite(v) and abs(v) <= self.r
        try:
            iv = int(value)
        except (TypeError, ValueError):
            return False
        return iv == value and 1 <= iv <= self.cardinality

    def check(self, value):
        if not self.admits(value):
            if self.is_numeric:
                raise DomainError(f"attribute {self.name!r}: value {value!r} outside [-{self.r}, {self.r}]")
            raise DomainError(f"attribute {self.name!r}: value {value!r} not in 1..{self.cardinality}")
        return float(value) if self.is_numeric else int(value)


@dataclass(frozen=True)
class Schema:
    attributes: tuple[AttributeSpec, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        attrs = tuple(self.attributes)
        if not attrs:
            raise ConfigError("schema needs at least one attribute")
        names = [a.name for a in attrs]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate attribute names: {dupes}")
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def all_numeric(cls, d: int, r: float = 1.0, prefix: str = "x") -> "Schema":
        return cls(tuple(AttributeSpec.numeric(f"{prefix}{j}", r) for j in range(d)))

    @property
    def d(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def numeric_indices(self) -> list[int]:
        return [j for j, a in enumerate(self.attributes) if a.is_numeric]

    @property
    def categorical_indices(self) -> list[int]:
        return [j for j, a in enumerate(self.attributes) if not a.is_numeric]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ConfigError(f"no attribute named {name!r}") from None

    def __getitem__(self, j: int) -> AttributeSpec:
        return self.attributes[j]

    def __len__(self) -> int:
        return self.d

    def without(self, name: str) -> "Schema":
        return Schema(tuple(a for a in self.attributes if a.name != name))

    def validate(self, values: Sequence) -> tuple:
        """Check a raw tuple against the schema; returns the coerced tuple."""
        if len(values) != self.d:
            raise DomainError(f"tuple has {len(values)} values, schema has {self.d} attributes")
        return tuple(spec.check(v) for spec, v in zip(self.attributes, values))


@dataclass(frozen=True)
class UserTuple:
    values: tuple
    schema: Schema

    def __post_init__(self):
        object.__setattr__(self, "values", self.schema.validate(self.values))

    def normalized(self) -> list:
        """Numeric entries mapped into [-1, 1]; categorical entries unchanged."""
        return [normalize(v, s) if s.is_numeric else v for v, s in zip(self.values, self.schema.attributes)]


@dataclass(frozen=True)
class RandomSource:
    """Reproducible, splittable randomness keyed by ``(seed, stream)``.

    ``stream`` may be an int or a tuple of ints; :meth:`child` appends a key,
    which is how per-user or per-run substreams are derived.
    """

    seed: int
    stream: int | tuple = ()

    @property
    def key(self) -> tuple:
        s = self.stream
        return tuple(int(x) for x in s) if isinstance(s, tuple) else (int(s),)

    def child(self, *keys: int) -> "RandomSource":
        return RandomSource(self.seed, self.key + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return RandomSource(seed, tuple(stream)).generator()


def normalize(value, spec: AttributeSpec):
    """Map a raw numeric value from ``[-r, r]`` to ``[-1, 1]``."""
    if not spec.is_numeric:
        raise ConfigError(f"attribute {spec.name!r} is categorical; cannot normalize")
    arr = np.asarray(value, dtype=float)
    if not np.all(np.abs(arr) <= spec.r):
        raise DomainError(f"attribute {spec.name!r}: value(s) outside [-{spec.r}, {spec.r}]")
    out = arr / spec.r
    return float(out) if out.ndim == 0 else out


def denormalize(value, spec: AttributeSpec):
    if not spec.is_numeric:
        raise ConfigError(f"attribute {spec.name!r} is categorical; cannot denormalize")
    out = np.asarray(value, dtype=float) * spec.r
    return float(out) if out.ndim == 0 else out


# --- file formats -----------------------------------------------------------

def parse_schema(lines: Iterable[str]) -> Schema:
    attrs = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"schema line {lineno}: expected name,kind,param; got {line!r}")
        name, kind, param = parts
        try:
            if kind == "numeric":
                attrs.append(AttributeSpec.numeric(name, float(param)))
            elif kind == "categorical":
                attrs.append(AttributeSpec.categorical(name, int(param)))
            else:
                raise ConfigError(f"schema line {lineno}: unknown kind {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"schema line {lineno}: {exc}") from exc
    return Schema(tuple(attrs))


def read_schema(path) -> Schema:
    with open(path) as fh:
        return parse_schema(fh)


def format_schema(schema: Schema) -> str:
    out = []
    for a in schema.attributes:
        param = repr(a.r) if a.is_numeric else str(a.cardinality)
        out.append(f"{a.name},{a.kind},{param}")
    return "\n".join(out) + "\n"


def write_schema(schema: Schema, path) -> None:
    Path(path).write_text(format_schema(schema))


def read_dataset(path, schema: Schema) -> np.ndarray:
    """Load a CSV dataset (header = attribute names) as an ``(n, d)`` float
    array of raw values, validated against the schema.

    Columns are reordered to schema order; extra columns are an error.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty dataset file") from None
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        extra = [h for h in header if h not in schema.names]
        if extra:
            raise ConfigError(f"{path}: columns not in schema {extra}")
        order = [header.index(n) for n in schema.names]
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                vals = [float(row[i]) for i in order]
            except (ValueError, IndexError) as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from exc
            rows.append(vals)
    data = np.asarray(rows, dtype=float).reshape(-1, schema.d)
    check_dataset(data, schema)
    return data


def check_dataset(data: np.ndarray, schema: Schema) -> None:
    for j, spec in enumerate(schema.attributes):
        col = data[:, j]
        if spec.is_numeric:
            bad = ~(np.abs(col) <= spec.r)
        else:
            bad = (col != np.round(col)) | (col < 1) | (col > spec.cardinality)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(f"attribute {spec.name!r}: row {i} value {col[i]!r} outside its domain")


def write_dataset(data: np.ndarray, schema: Schema, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.names)
        cat = [not a.is_numeric for a in schema.attributes]
        for row in data:
            w.writerow([str(int(v)) if c else repr(float(v)) for v, c in zip(row, cat)])


def normalize_dataset(data: np.ndarray, schema: Schema) -> np.ndarray:
    """Divide numeric columns by their range; categorical codes pass through."""
    out = np.array(data, dtype=float, copy=True)
    for j in schema.numeric_indices:
        out[:, j] /= schema[j].r
    return out
