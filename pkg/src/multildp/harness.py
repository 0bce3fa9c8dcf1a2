"""Seeded experiment driver and command-line entry point.

Every run is replayable: data for run ``r`` comes from stream ``(0, r)`` and
is shared across mechanisms, while mechanism noise comes from a stream keyed
by mechanism, budget index and run. Floats are written with ``repr`` so equal
configurations give byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregate import Accumulator, oue_estimate, worst_case_multi
from .core import (ConfigError, DomainError, RandomSource, Schema, normalize_dataset, read_dataset,
                   read_schema, write_dataset, write_schema)
from .datagen import (SyntheticSpec, binarize_label, cv_folds, generate, generate_mixed, make_separable,
                      one_hot_encode_batch, write_folds)
from .mech1d import MECHANISMS_1D, crossover_epsilon, mechanism_tag, perturb_1d, worst_case_variance_1d
from .mechmulti import collect, duchi_multi, oue_perturb
from .sgd import DEFAULT_LAMBDA, SgdConfig, evaluate, train

TASKS = ("mean-freq", "sgd", "variance-table", "sample")
MEAN_FREQ_MECHANISMS = ("pm", "hm", "duchi", "laplace", "scdf", "staircase")
SGD_MECHANISMS = ("pm", "hm", "duchi", "laplace")
DEFAULT_RUNS = {"mean-freq": 100, "sgd": 5, "variance-table": 1, "sample": 1}
RATIO_DIMS = (5, 10, 20, 40)

# stable stream ids, so adding a mechanism never reshuffles the others
_MECH_ID = {m: i for i, m in enumerate(("pm", "hm", "duchi", "laplace", "scdf", "staircase", "none"))}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _grid(lo, hi, step):
    return [round(x, 10) for x in np.arange(lo, hi + step / 2, step)]


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    mechanisms: tuple = ()
    epsilons: tuple | None = None
    n: int = 10_000
    d: int = 16
    dist: str = "uniform"
    schema_path: str | None = None
    data_path: str | None = None
    label: str | None = None
    runs: int | None = None
    seed: int = 0
    out: str | None = None
    loss: str = "logistic"
    lam: float = DEFAULT_LAMBDA
    group_size: int | None = None
    lr_const: float = 1.0
    folds: int = 10

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.epsilons is None:
            default = _grid(0.1, 8.0, 0.1) if self.task == "variance-table" else (1.0,)
            object.__setattr__(self, "epsilons", tuple(default))
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or not all(e > 0 and math.isfinite(e) for e in eps):
            raise ConfigError(f"epsilon list must be nonempty and positive, got {self.epsilons!r}")
        object.__setattr__(self, "epsilons", eps)
        default_mechs = SGD_MECHANISMS if self.task == "sgd" else MEAN_FREQ_MECHANISMS
        mechs = tuple(mechanism_tag(m) for m in (self.mechanisms or default_mechs))
        allowed = SGD_MECHANISMS if self.task == "sgd" else MECHANISMS_1D
        bad = [m for m in mechs if m not in allowed]
        if bad:
            raise ConfigError(f"mechanism(s) {bad} not available for {self.task}")
        object.__setattr__(self, "mechanisms", mechs)
        if self.runs is None:
            object.__setattr__(self, "runs", DEFAULT_RUNS[self.task])
        if int(self.runs) != self.runs or self.runs < 1:
            raise ConfigError(f"runs must be a positive integer, got {self.runs!r}")
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be >= 1")
        if not 2 <= self.folds:
            raise ConfigError("folds must be >= 2")

    @property
    def source(self) -> RandomSource:
        return RandomSource(self.seed)

    def schema(self) -> Schema:
        if self.schema_path:
            return read_schema(self.schema_path)
        return Schema.all_numeric(self.d)


# --- mean / frequency estimation ---------------------------------------------

def _split_numeric(mech: str, norm: np.ndarray, schema: Schema, eps: float, rng) -> np.ndarray:
    """Per-attribute mean estimates (normalized scale) from a baseline that
    spends d_n*eps/d on the numeric block."""
    num = schema.numeric_indices
    if not num:
        return np.zeros(0)
    block = norm[:, num]
    if mech == "duchi":
        noisy = duchi_multi(block, len(num) * eps / schema.d, rng)
    else:
        noisy = perturb_1d(mech, block, eps / schema.d, rng)
    return noisy.mean(axis=0)


def _split_categorical(data: np.ndarray, schema: Schema, eps: float, rng) -> dict:
    out = {}
    for j in schema.categorical_indices:
        bits = oue_perturb(data[:, j].astype(np.int64), schema[j].cardinality, eps / schema.d, rng)
        out[j] = oue_estimate(bits, eps / schema.d)
    return out


def _true_stats(data: np.ndarray, schema: Schema):
    norm = normalize_dataset(data, schema)
    means = norm[:, schema.numeric_indices].mean(axis=0)
    freqs = {j: np.bincount(data[:, j].astype(np.int64) - 1, minlength=schema[j].cardinality) / len(data)
             for j in schema.categorical_indices}
    return norm, means, freqs


def estimate_once(mech: str, data: np.ndarray, schema: Schema, eps: float, rng):
    """(numeric mean estimates on the normalized scale, {j: freqs})."""
    norm = normalize_dataset(data, schema)
    if mech in ("pm", "hm"):
        acc = Accumulator(schema, eps, mech).add(collect(data, schema, eps, mech, rng))
        means = np.array([acc.mean(j) / schema[j].r for j in schema.numeric_indices])
        return means, {j: acc.freqs(j) for j in schema.categorical_indices}
    return _split_numeric(mech, norm, schema, eps, rng), _split_categorical(data, schema, eps, rng)


def _mean_freq_data(cfg: ExperimentConfig, schema: Schema, run: int) -> np.ndarray:
    if cfg.data_path:
        return read_dataset(cfg.data_path, schema)
    rng = cfg.source.child(0, run).generator()
    if cfg.schema_path:
        return generate_mixed(schema, cfg.n, rng, numeric=cfg.dist)
    return generate(SyntheticSpec.parse(cfg.dist, cfg.d, cfg.n), rng)


MEAN_FREQ_HEADER = ("mechanism", "epsilon", "kind", "mse", "mse_se", "runs", "seed")


def run_mean_freq(cfg: ExperimentConfig) -> list[tuple]:
    """MSE of mean (numeric) and frequency (categorical) estimates per
    mechanism and budget, averaged over runs. Means are compared on the
    normalized [-1, 1] scale."""
    schema = cfg.schema()
    kinds = [k for k, idx in (("numeric", schema.numeric_indices), ("categorical", schema.categorical_indices)) if idx]
    errs = {(m, e, k): [] for m in cfg.mechanisms for e in range(len(cfg.epsilons)) for k in kinds}
    for run in range(cfg.runs):
        data = _mean_freq_data(cfg, schema, run)
        _, true_means, true_freqs = _true_stats(data, schema)
        for m in cfg.mechanisms:
            for ei, eps in enumerate(cfg.epsilons):
                rng = cfg.source.child(1, _MECH_ID[m], ei, run).generator()
                means, freqs = estimate_once(m, data, schema, eps, rng)
                if "numeric" in kinds:
                    errs[(m, ei, "numeric")].append(float(np.mean((means - true_means) ** 2)))
                if "categorical" in kinds:
                    sq = np.concatenate([(freqs[j] - true_freqs[j]) ** 2 for j in schema.categorical_indices])
                    errs[(m, ei, "categorical")].append(float(sq.mean()))
    rows = []
    for m in cfg.mechanisms:
        for ei, eps in enumerate(cfg.epsilons):
            for k in kinds:
                v = np.array(errs[(m, ei, k)])
                se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
                rows.append((m, eps, k, float(v.mean()), se, cfg.runs, cfg.seed))
    return rows


# --- analytic variance tables ------------------------------------------------

VARIANCE_HEADER = ("section", "mechanism", "epsilon", "d", "value", "runs", "seed")


def run_variance_table(cfg: ExperimentConfig, eps_1d=None, eps_ratio=None, dims=RATIO_DIMS) -> list[tuple]:
    """Long-format rows: 1-D worst-case variances, multidimensional
    HM/Duchi and PM/Duchi worst-case ratios, and the PM/Duchi crossover."""
    eps_1d = list(eps_1d) if eps_1d is not None else list(cfg.epsilons)
    eps_ratio = list(eps_ratio) if eps_ratio is not None else _grid(0.5, 4.0, 0.1)
    rows = []
    for m in cfg.mechanisms:
        for e in eps_1d:
            rows.append(("worst_case_1d", m, float(e), 1, worst_case_variance_1d(m, e), cfg.runs, cfg.seed))
    for d in dims:
        for e in eps_ratio:
            duchi = worst_case_multi("duchi", e, d)
            for m in ("hm", "pm"):
                rows.append((f"{m}_over_duchi", m, float(e), d, worst_case_multi(m, e, d) / duchi, cfg.runs, cfg.seed))
    rows.append(("crossover", "pm=duchi", crossover_epsilon(), 1, 0.0, cfg.runs, cfg.seed))
    return rows


# --- SGD benchmarks -----------------------------------------------------------

SGD_HEADER = ("mechanism", "epsilon", "loss", "metric", "mean", "sd", "evaluations", "runs", "seed")


def load_sgd_task(cfg: ExperimentConfig):
    """Encoded features in [-1, 1] and labels for the configured loss."""
    if cfg.data_path:
        if not cfg.schema_path:
            raise ConfigError("--data needs --schema")
        if not cfg.label:
            raise ConfigError("--data needs --label")
        schema = read_schema(cfg.schema_path)
        if cfg.label not in schema.names:
            raise ConfigError(f"label column {cfg.label!r} not in schema")
        data = read_dataset(cfg.data_path, schema)
        li = schema.index(cfg.label)
        feat_schema = schema.without(cfg.label)
        X = one_hot_encode_batch(np.delete(data, li, axis=1), feat_schema)
        col = data[:, li]
        if cfg.loss == "linear":
            if not schema[li].is_numeric:
                raise ConfigError("linear regression needs a numeric label")
            y = col / schema[li].r
        else:
            y = binarize_label(col)
        return X, y
    if cfg.label:
        raise ConfigError("--label needs --data")
    rng = cfg.source.child(0).generator()
    X, y, w = make_separable(cfg.n, cfg.d, rng)
    if cfg.loss == "linear":
        y = np.clip(X @ w / np.abs(w).sum(), -1.0, 1.0)
    return X, y


def cross_validate(X, y, sgd_cfg: SgdConfig, cfg: ExperimentConfig, mech_id: int, ei: int) -> list[float]:
    scores = []
    for rep in range(cfg.runs):
        folds = cv_folds(len(y), cfg.folds, cfg.source.child(2, rep).generator())
        for fi, test in enumerate(folds):
            tr = np.setdiff1d(np.arange(len(y)), test, assume_unique=True)
            rng = cfg.source.child(3, mech_id, ei, rep, fi).generator()
            res = train(X[tr], y[tr], sgd_cfg, rng)
            scores.append(evaluate(res.model, X[test], y[test], sgd_cfg.loss))
    return scores


def run_sgd(cfg: ExperimentConfig) -> list[tuple]:
    X, y = load_sgd_task(cfg)
    metric = "mse" if cfg.loss == "linear" else "misclassification"
    rows = []

    def row(mech, eps, scores):
        s = np.array(scores)
        return (mech, eps, cfg.loss, metric, float(s.mean()), float(s.std(ddof=1)) if s.size > 1 else 0.0,
                s.size, cfg.runs, cfg.seed)

    for m in cfg.mechanisms:
        for ei, eps in enumerate(cfg.epsilons):
            sc = SgdConfig(cfg.loss, eps, m, cfg.lam, cfg.group_size, cfg.lr_const)
            rows.append(row(m, eps, cross_validate(X, y, sc, cfg, _MECH_ID[m], ei)))
    # the baseline keeps the group size of the first budget so it sees the same schedule length
    base = SgdConfig(cfg.loss, cfg.epsilons[0], None, cfg.lam, cfg.group_size, cfg.lr_const)
    rows.append(row("none", float("inf"), cross_validate(X, y, base, cfg, _MECH_ID["none"], 0)))
    return rows


# --- sample ---------------------------------------------------------------------

def run_sample(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Write a synthetic dataset (and its schema, when generated) to ``out``;
    with ``folds`` also write cross-validation index files."""
    schema = cfg.schema()
    rng = cfg.source.child(0, 0).generator()
    if cfg.schema_path:
        data = generate_mixed(schema, cfg.n, rng, numeric=cfg.dist)
    else:
        data = generate(SyntheticSpec.parse(cfg.dist, cfg.d, cfg.n), rng)
    write_dataset(data, schema, out)
    written = [out]
    if not cfg.schema_path:
        sp = out.with_suffix(".schema")
        write_schema(schema, sp)
        written.append(sp)
    folds = cv_folds(cfg.n, cfg.folds, cfg.source.child(2, 0).generator())
    written += write_folds(folds, out.with_suffix(".folds"))
    return written


def run_to_text(cfg: ExperimentConfig) -> str:
    if cfg.task == "mean-freq":
        return _csv_text(MEAN_FREQ_HEADER, run_mean_freq(cfg))
    if cfg.task == "variance-table":
        return _csv_text(VARIANCE_HEADER, run_variance_table(cfg))
    if cfg.task == "sgd":
        return _csv_text(SGD_HEADER, run_sgd(cfg))
    raise ConfigError("sample writes files; use run_sample")


# --- command line ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def _names(text: str) -> tuple:
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


# flag name -> (config field, converter)
_KEYS = {
    "epsilon": ("epsilons", _floats),
    "mechanism": ("mechanisms", _names),
    "n": ("n", int),
    "d": ("d", int),
    "dist": ("dist", str),
    "schema": ("schema_path", str),
    "data": ("data_path", str),
    "label": ("label", str),
    "runs": ("runs", int),
    "seed": ("seed", int),
    "out": ("out", str),
    "loss": ("loss", str),
    "lambda": ("lam", float),
    "group_size": ("group_size", int),
    "lr_const": ("lr_const", float),
    "folds": ("folds", int),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multildp", description="Local differential privacy experiments.")
    sub = p.add_subparsers(dest="task", required=True, parser_class=_Parser)
    for task in TASKS:
        s = sub.add_parser(task)
        s.add_argument("--config", help="key=value file; flags override it")
        s.add_argument("--epsilon", help="comma-separated budgets")
        s.add_argument("--mechanism", help="comma-separated mechanisms")
        s.add_argument("--n")
        s.add_argument("--d")
        s.add_argument("--dist", help="trunc-gaussian:<mu> | uniform | power-law")
        s.add_argument("--schema")
        s.add_argument("--data")
        s.add_argument("--runs")
        s.add_argument("--seed")
        s.add_argument("--out")
        s.add_argument("--folds")
        if task == "sgd":
            s.add_argument("--label")
            s.add_argument("--loss", choices=["linear", "logistic", "svm"])
            s.add_argument("--lambda")
            s.add_argument("--group-size")
            s.add_argument("--lr-const")
    return p


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = val.strip()
    return out


def config_from_args(argv) -> ExperimentConfig:
    ns = vars(build_parser().parse_args(argv))
    raw = read_config_file(ns["config"]) if ns.get("config") else {}
    for key in _KEYS:
        if ns.get(key) is not None:
            raw[key] = ns[key]
    kw = {"task": ns["task"]}
    for key, val in raw.items():
        name, conv = _KEYS[key]
        try:
            kw[name] = conv(val)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None
    return ExperimentConfig(**kw)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
        if cfg.task == "sample":
            if not cfg.out:
                raise ConfigError("sample needs --out")
            for p in run_sample(cfg, Path(cfg.out)):
                print(p)
            return 0
        text = run_to_text(cfg)
        if cfg.out:
            Path(cfg.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
