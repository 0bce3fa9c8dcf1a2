import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multildp.aggregate import (Accumulator, compare_worst_case, error_scale, exact_sum, freq_estimate,
                                freq_variance, mean_estimate, oue_estimate, variance_multi, worst_case_multi)
from multildp.core import AttributeSpec, ConfigError, Schema, make_rng
from multildp.datagen import generate_mixed
from multildp.mech1d import EPS_SHARP, worst_case_variance_1d
from multildp.mechmulti import collect, oue_perturb, perturb_record

SCHEMA = Schema((AttributeSpec.numeric("a", 5), AttributeSpec.categorical("b", 3),
                 AttributeSpec.numeric("c", 1), AttributeSpec.categorical("e", 5)))


@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), max_size=60))
def test_exact_sum_matches_fractions(xs):
    assert exact_sum(xs) == sum((Fraction(x) for x in xs), Fraction(0))


def test_exact_sum_order_independent():
    x = make_rng(1).normal(size=10_001) * 10.0 ** make_rng(2).integers(-20, 20, size=10_001)
    assert exact_sum(x) == exact_sum(x[::-1]) == exact_sum(x[:5000]) + exact_sum(x[5000:])


def test_variance_multi_reduces_to_1d():
    # d = 1, small budget: k = 1, no scaling
    for m in ("pm", "hm", "duchi"):
        for t in (-1.0, 0.0, 0.4):
            from multildp.mech1d import variance_1d
            assert variance_multi(m, t, 1.3, 1) == pytest.approx(variance_1d(m, t, 1.3), rel=1e-12)


TABLE_ROWS = [
    (0.3, "HM = Duchi < PM"),
    (0.5, "HM = Duchi < PM"),
    (1.0, "HM < Duchi < PM"),
    (EPS_SHARP, "HM < PM = Duchi"),
    (2.0, "HM < PM < Duchi"),
    (4.0, "HM < PM < Duchi"),
]


@pytest.mark.parametrize("eps,relation", TABLE_ROWS)
def test_worst_case_ordering_one_dim(eps, relation):
    assert compare_worst_case(eps, 1).relation == relation


def test_multi_ratio_and_strict_ordering():
    worst = 0.0
    for d in (5, 10, 20, 40):
        for eps in np.round(np.arange(0.5, 4.0001, 0.1), 10):
            h, p, du = (worst_case_multi(m, eps, d) for m in ("hm", "pm", "duchi"))
            assert h < p < du
            worst = max(worst, h / du)
    assert worst <= 0.77


def test_error_scale():
    assert error_scale(16, 100_000, 1.0, 0.05) == pytest.approx(math.sqrt(16 * math.log(320)) / math.sqrt(1e5))
    assert error_scale(16, 100_000, 1.0, 0.05) == pytest.approx(0.0304, abs=5e-5)
    with pytest.raises(ConfigError):
        error_scale(4, 10, 1.0, 1.5)


def test_accumulator_merge_is_bit_identical():
    data = generate_mixed(SCHEMA, 30_000, make_rng(3))
    rng = make_rng(4)
    whole = collect(data, SCHEMA, 1.0, "pm", rng)
    a = Accumulator(SCHEMA, 1.0).add(whole)
    ids = whole.user_ids
    left = collect(data[:10_000], SCHEMA, 1.0, "pm", make_rng(5), ids[:10_000])
    right = collect(data[10_000:], SCHEMA, 1.0, "pm", make_rng(6), ids[10_000:])
    m1 = Accumulator(SCHEMA, 1.0).add(left).merge(Accumulator(SCHEMA, 1.0).add(right))
    m2 = Accumulator(SCHEMA, 1.0).add(right).merge(Accumulator(SCHEMA, 1.0).add(left))
    assert m1.estimates().format_csv() == m2.estimates().format_csv()
    assert a.n == m1.n == 30_000
    with pytest.raises(ConfigError):
        a.merge(Accumulator(SCHEMA, 2.0))


@pytest.mark.parametrize("base", ["pm", "hm"])
def test_estimates_close_to_truth(base):
    n = 200_000
    data = generate_mixed(SCHEMA, n, make_rng(7), cat_freqs={"b": [0.2, 0.5, 0.3], "e": [0.1] * 4 + [0.6]})
    est = Accumulator(SCHEMA, 2.0, base).add(collect(data, SCHEMA, 2.0, base, make_rng(8))).estimates()
    for j in SCHEMA.numeric_indices:
        name = SCHEMA[j].name
        assert abs(est.means[name] - data[:, j].mean()) < 5 * est.mean_sd[name]
    for j in SCHEMA.categorical_indices:
        name = SCHEMA[j].name
        truth = np.bincount(data[:, j].astype(int) - 1, minlength=SCHEMA[j].cardinality) / n
        assert np.all(np.abs(est.freqs[name] - truth) < 5 * est.freq_sd[name])
        nf = est.normalized_freqs(name)
        assert nf.sum() == pytest.approx(1.0) and np.all(nf >= 0)


def test_freq_variance_monte_carlo():
    # user values fixed, repeat the randomized collection
    n, eps = 4000, 1.0
    data = np.tile([[0.0, 2, 0.0, 1]], (n, 1))
    vals = [Accumulator(SCHEMA, eps).add(collect(data, SCHEMA, eps, "pm", make_rng(10, r))).freqs(1)[1]
            for r in range(400)]
    assert np.var(vals, ddof=1) == pytest.approx(freq_variance(1.0, n, 4, eps), rel=0.2)


def test_list_and_batch_paths_agree():
    rng = make_rng(11)
    reps = [perturb_record((1.0, 2, 0.5, 4), SCHEMA, 1.0, "pm", rng, u) for u in range(300)]
    acc = Accumulator(SCHEMA, 1.0).add(reps)
    assert mean_estimate(reps, SCHEMA, 0) == acc.mean(0)
    assert freq_estimate(reps, SCHEMA, 1, 2, 1.0) == acc.freqs(1)[1]
    with pytest.raises(ConfigError):
        freq_estimate(reps, SCHEMA, 0, 1, 1.0)


def test_oue_estimate_unbiased():
    bits = oue_perturb(np.repeat([1, 2, 3], [50_000, 30_000, 20_000]), 3, 1.0, make_rng(12))
    assert np.allclose(oue_estimate(bits, 1.0), [0.5, 0.3, 0.2], atol=0.02)


def test_empty_accumulator_errors():
    with pytest.raises(ConfigError):
        Accumulator(SCHEMA, 1.0).mean(0)


def test_worst_case_1d_laplace():
    assert worst_case_variance_1d("laplace", 2.0) == pytest.approx(2.0)


def test_worst_case_at_grid_endpoints():
    grid = np.linspace(-1, 1, 101)
    for m in ("pm", "hm", "duchi"):
        for d in (1, 5, 20):
            for eps in (0.3, 1.0, 3.0, 6.0):
                assert variance_multi(m, grid, eps, d).max() == pytest.approx(worst_case_multi(m, eps, d), rel=1e-12)
