import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from multildp.core import ConfigError, make_rng
from multildp.mech1d import (EPS_SHARP, EPS_STAR, HmParams, MECHANISMS_1D, PmParams, StairParams,
                             crossover_epsilon, duchi_magnitude, duchi_prob_positive, hm_worst_case,
                             laplace_noise_from_uniform, mechanism_tag, perturb_1d, pm_pdf, pm_worst_case,
                             variance_1d, worst_case_variance_1d)

from conftest import zscore

EPS_GRID = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]


@pytest.mark.parametrize("eps", EPS_GRID)
def test_pm_pdf_integrates_to_one(eps):
    prm = PmParams.from_budget(eps)
    for t in (-1.0, -0.3, 0.0, 0.8, 1.0):
        ell, rr = prm.ell(t), prm.rr(t)
        pieces = [(-prm.C, ell), (ell, rr), (rr, prm.C)]
        total = sum(integrate.quad(lambda x: pm_pdf(t, x, eps), a, b)[0] for a, b in pieces if b > a)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_pm_parameters_at_known_budget():
    # e^{eps/2} = 3: C = 2, center piece has width C - 1 = 1
    prm = PmParams.from_budget(2 * math.log(3))
    assert prm.C == pytest.approx(2.0)
    assert prm.ell(0.0) == pytest.approx(-0.5) and prm.rr(0.0) == pytest.approx(0.5)
    assert prm.ell(1.0) == pytest.approx(1.0) and prm.rr(1.0) == pytest.approx(2.0)
    assert pm_worst_case(2 * math.log(3)) == pytest.approx(1.0)
    assert duchi_magnitude(2 * math.log(3)) ** 2 == pytest.approx(1.5625)


def test_closed_form_thresholds_match_root_finding():
    def hm_branch_gap(e):
        s = math.exp(e / 2)
        return (s + 3) / (3 * s * (s - 1)) + (math.exp(e) + 1) ** 2 / (s * math.expm1(e) ** 2) - duchi_magnitude(e) ** 2

    assert optimize.brentq(hm_branch_gap, 0.3, 1.0, xtol=1e-14) == pytest.approx(EPS_STAR, abs=1e-10)
    assert EPS_STAR == pytest.approx(0.61, abs=0.01)
    assert crossover_epsilon() == pytest.approx(EPS_SHARP, abs=1e-10)
    assert EPS_SHARP == pytest.approx(1.29, abs=0.01)


def test_hm_alpha_switch():
    assert HmParams.from_budget(EPS_STAR * 0.99).alpha == 0.0
    assert HmParams.from_budget(1.0).alpha == pytest.approx(1 - math.exp(-0.5))
    assert hm_worst_case(0.3) == pytest.approx(duchi_magnitude(0.3) ** 2)


@pytest.mark.parametrize("eps", [0.7, 1.0, 3.0])
def test_hm_variance_flat_above_threshold(eps):
    v = variance_1d("hm", np.linspace(-1, 1, 11), eps)
    assert np.ptp(v) < 1e-12 * v.max()
    assert worst_case_variance_1d("hm", eps) == pytest.approx(hm_worst_case(eps), rel=1e-12)


@pytest.mark.parametrize("variant", ["scdf", "staircase"])
@pytest.mark.parametrize("eps", EPS_GRID)
def test_stair_mass_and_second_moment(variant, eps):
    prm = StairParams.from_budget(eps, variant)
    assert prm.total_mass() == pytest.approx(1.0, abs=1e-12)
    edges = [0.0, prm.m] + [prm.m + 2 * j for j in range(1, 400)]
    quad = 2 * sum(integrate.quad(lambda x: x * x * prm.pdf(x), a, b)[0] for a, b in zip(edges, edges[1:]))
    assert prm.second_moment() == pytest.approx(quad, rel=1e-8)


def test_laplace_inverse_cdf():
    u = np.array([0.5, 0.75, 0.25])
    assert np.allclose(laplace_noise_from_uniform(u, 2.0), [0.0, 2 * math.log(2), -2 * math.log(2)])
    assert np.isfinite(laplace_noise_from_uniform(np.array([0.0]), 1.0)).all()


@given(st.floats(0.05, 10), st.floats(-1, 1), st.floats(-1, 1))
def test_duchi_ratio_bounded(eps, t1, t2):
    p1, p2 = duchi_prob_positive(t1, eps), duchi_prob_positive(t2, eps)
    bound = math.exp(eps) * (1 + 1e-9)
    assert p1 / p2 <= bound and (1 - p1) / (1 - p2) <= bound


@settings(max_examples=50)
@given(st.sampled_from(MECHANISMS_1D), st.floats(0.1, 8), st.floats(-1, 1))
def test_outputs_finite_and_bounded(mech, eps, t):
    out = perturb_1d(mech, np.full(64, t), eps, make_rng(1))
    assert np.all(np.isfinite(out))
    if mech in ("pm", "hm", "duchi"):
        assert np.all(np.abs(out) <= max(PmParams.from_budget(eps).C, duchi_magnitude(eps)) + 1e-12)


def test_scalar_in_scalar_out(rng):
    for m in MECHANISMS_1D:
        assert isinstance(perturb_1d(m, 0.3, 1.0, rng), float)


def test_aliases_and_errors():
    assert mechanism_tag("LaplaceSplit") == "laplace"
    assert mechanism_tag("Piecewise") == "pm"
    with pytest.raises(ConfigError):
        mechanism_tag("gaussian")
    with pytest.raises(ConfigError):
        perturb_1d("pm", 0.0, 0.0, make_rng(0))


@pytest.mark.parametrize("mech", MECHANISMS_1D)
def test_moments_quick(mech):
    # smaller-sample version of the acceptance check
    x = perturb_1d(mech, np.full(200_000, 0.4), 1.0, make_rng(3, 1))
    assert abs(zscore(x, 0.4)) < 4
    assert x.var() == pytest.approx(variance_1d(mech, 0.4, 1.0), rel=0.03)


@pytest.mark.parametrize("eps", [0.5, 2.0])
def test_pm_sup_ratio_is_exactly_e_eps(eps):
    C = PmParams.from_budget(eps).C
    x = np.linspace(-C, C, 2001)
    r = (pm_pdf(1.0, x, eps) / pm_pdf(-1.0, x, eps)).max()
    assert r == pytest.approx(math.exp(eps), rel=1e-12)
