import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import zeta

from clusterlaw.asymptotics import (CRITICAL, SUBCRITICAL, SUPERCRITICAL, RegimeError, ans_pipeline,
                                    c_log_asymptotic, classify, density_ratio, geometric_ans,
                                    geometric_ans_log_offset, karamata_S, knopfmacher_c,
                                    knopfmacher_h1, kp_limit, L1, limit_d, predict, sigma_asymptotic,
                                    solve_A, solve_A_residual)
from clusterlaw.coeff_engine import SizeWindow, log_coefficients
from clusterlaw.saddle import solve_sigma
from clusterlaw.sequences import ParameterFunction, SlowlyVarying
from oracles import euler_transform, solve_A_gamma

ONES = ParameterFunction(l=1.0)


def test_classify():
    assert classify(1, 1, 0.7, "lower").regime_class == SUPERCRITICAL
    assert classify(1, 1, 0.3, "lower").regime_class == SUBCRITICAL
    assert classify(1, 1, 0.3, "upper").regime_class == SUPERCRITICAL
    assert classify(2, 1, 1 / 3, "upper").regime_class == CRITICAL
    with pytest.raises(ValueError):
        classify(1, 1, 0.5, "middle")


def test_sigma_asymptotic_examples():
    assert sigma_asymptotic(1, SlowlyVarying.constant(), 1.0, "lower", 10**6) == pytest.approx(1e-3, rel=1e-12)
    assert sigma_asymptotic(1, SlowlyVarying.constant(4.0), 1.0, "lower", 10**6) == pytest.approx(2e-3, rel=1e-12)


def test_sigma_asymptotic_log_corrected_case():
    n = 10**6
    got = sigma_asymptotic(1, SlowlyVarying.constant(), 0.25, "lower", n)
    # exponent 1 - (l+1) beta = 1/2, r = floor(n^0.25) = 31
    g = 0.5 * math.log(n)
    r = math.floor(n ** 0.25)
    want = -g / r * (1 + math.log(g) / g)
    assert got == pytest.approx(want * r / n ** 0.25, rel=1e-12)
    assert got == pytest.approx(-0.27956, abs=1e-5)
    exact = solve_sigma(ONES, SizeWindow.lower(r), n).sigma
    assert exact == pytest.approx(got, rel=0.06)


def test_L1_constant_and_log_power():
    assert L1(1e6, 1.0, SlowlyVarying.constant(4.0)) == pytest.approx(2.0, rel=1e-14)
    L = SlowlyVarying.log_power(1.0, 1.0)
    n = 1e8
    v = L1(n, 1.0, L)
    # 1/L1 is the conjugate of sqrt(L) at n^(1/2)
    w = 1.0 / v
    assert w * math.sqrt(float(L(math.sqrt(n) * w))) == pytest.approx(1.0, rel=1e-10)


def test_sigma_matches_power_law_with_log_L():
    L = SlowlyVarying.log_power(1.0, 1.0)
    pf = ParameterFunction(l=1.0, L=L)
    errs = []
    for n in (10**3, 10**4, 10**5):
        s = solve_sigma(pf, SizeWindow(), n).sigma
        errs.append(abs(s / sigma_asymptotic(1.0, L, 1.0, "lower", n) - 1))
    assert errs[-1] < 0.05 and errs == sorted(errs, reverse=True)


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("d", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("side", ["lower", "upper"])
def test_solve_A_grid(l, d, side):
    A = solve_A(l, d, side)
    assert solve_A_residual(l, d, side, A) <= 1e-10
    if A > 0:
        assert A == pytest.approx(solve_A_gamma(l, d, side), rel=1e-9)


def test_solve_A_sign_follows_d():
    # a positive lower root needs d > l + 1
    assert solve_A(1, 1, "lower") == pytest.approx(-1.0, abs=1e-12)
    assert solve_A(1, 2.0 + 1e-3, "lower") > 0
    assert solve_A(1, 2.0 - 1e-3, "lower") < 0
    assert solve_A(1, 1e6, "lower") == pytest.approx(1.0, abs=1e-3)


def test_solve_A_domain():
    with pytest.raises(RegimeError):
        solve_A(1, 0.0, "lower")
    with pytest.raises(RegimeError):
        solve_A(1, math.inf, "upper")


@given(st.floats(0.3, 3.0), st.floats(0.05, 50.0))
def test_solve_A_residual_property(l, d):
    for side in ("lower", "upper"):
        assert solve_A_residual(l, d, side, solve_A(l, d, side)) <= 1e-10


def test_karamata_examples():
    assert karamata_S(1, SlowlyVarying.constant(), 1e-3) == pytest.approx(1000.0, rel=1e-12)
    assert karamata_S(2, SlowlyVarying.constant(), 1e-2) == pytest.approx(1e4, rel=1e-12)


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
def test_karamata_against_direct_sum(l):
    sigma = 1e-3
    j = np.arange(1, 10**6 + 1, dtype=float)
    direct = math.fsum(j ** (l - 1) * np.exp(-sigma * j))
    ks = karamata_S(l, SlowlyVarying.constant(), sigma)
    # the next term of the expansion is zeta(1 - l) (-1/2 for l = 1)
    nxt = -0.5 if l == 1 else zeta(1 - l) if l < 1 else 0.0
    assert direct == pytest.approx(ks + nxt, rel=1e-5)
    if l >= 1:
        assert ks / direct == pytest.approx(1.0, abs=0.02)
    else:
        assert ks / direct == pytest.approx(1.02674762, rel=1e-6)


def test_predict_power_regime():
    n = 10**5
    p = predict(2.0, SlowlyVarying.constant(), 1.0, "lower", n)
    sp = solve_sigma(ParameterFunction(l=2.0), SizeWindow(), n)
    assert p.constants_known
    assert p.sigma_pred == pytest.approx(sp.sigma, rel=1e-6)
    assert p.B2_pred == pytest.approx(sp.B2, rel=1e-4)
    assert p.rho_pred == pytest.approx(sp.rho, rel=1e-4)
    p_sub = predict(1.0, SlowlyVarying.constant(), 0.3, "lower", n)
    assert not p_sub.constants_known and p_sub.c_log_pred is None


def test_c_log_asymptotic():
    n = 10**4
    exact = log_coefficients(ONES, SizeWindow(), n)[n]
    assert abs(c_log_asymptotic(ONES, SizeWindow(), n) - exact) <= math.log(1.1)
    single = c_log_asymptotic(ONES, SizeWindow(1, 1), 100)
    assert single == pytest.approx(-math.lgamma(101), rel=0.01)


def test_limit_d_examples():
    assert limit_d(1, 1, 0.7, "lower") == 1.0
    assert limit_d(1, 1, 0.5, "lower") == 0.0
    assert limit_d(1, math.inf, 0.5, "lower") == 1.0
    assert limit_d(1, 1, None, "upper", r_fixed=3, pf=ONES) == pytest.approx(math.exp(-2), rel=1e-14)
    assert limit_d(1, 1, 0.3, "upper") == 0.0
    with pytest.raises(RegimeError):
        limit_d(1, None, 0.5, "lower")
    with pytest.raises(RegimeError):
        limit_d(1, 1, None, "upper")


def test_kp_limit_examples():
    assert kp_limit(1, 1, ONES, 1, 0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert kp_limit(2, 1, None, None, 0, growing=True) == 0.0
    assert kp_limit(0.5, 1, None, None, 0, growing=True) == 1.0
    assert kp_limit(1, 3.0, None, None, 0, growing=True) == pytest.approx(math.exp(-3))
    with pytest.raises(RegimeError):
        kp_limit(1, 1, None, None, 2, growing=True)


def test_knopfmacher_constant_and_formula():
    assert knopfmacher_h1(1.0) == pytest.approx(math.exp(-0.5) / (2 * math.sqrt(math.pi)), rel=1e-15)
    assert knopfmacher_h1(1.0) == pytest.approx(0.171096, abs=1e-5)
    want = math.log(knopfmacher_h1(1.0)) + 4 * math.log(2) + 4 - 0.75 * math.log(4)
    assert knopfmacher_c(1, 2, 4) == pytest.approx(want, rel=1e-15)
    assert math.exp(knopfmacher_c(1, 2, 4)) == pytest.approx(52.84, abs=0.01)
    with pytest.raises(ValueError):
        knopfmacher_c(1, 1, 10)


def test_geometric_ans_counts_integer_multisets():
    n_max = 40
    counts = euler_transform([0] + [2 ** j for j in range(1, n_max + 1)], n_max)
    lc = log_coefficients(geometric_ans(1.0, 2.0, n_max), SizeWindow(), n_max)
    for n in (1, 10, 40):
        assert lc[n] + n * math.log(2) == pytest.approx(math.log(counts[n]), rel=1e-12)


def test_ans_pipeline_offset_converges():
    rows = ans_pipeline(1.0, 2.0, [1000, 3000, 10000])
    ratio = [r["ratio"] for r in rows]
    off = [r["ratio_offset"] for r in rows]
    assert ratio == pytest.approx([1.80098016, 1.86016412, 1.90038185], rel=1e-7)
    assert off == sorted(off) and abs(off[-1] - 1) < 0.03
    assert math.exp(geometric_ans_log_offset(1.0, 2.0)) == pytest.approx(1.9534227, rel=1e-7)


def test_density_examples():
    full = density_ratio(ONES, 300, "lower", r_fixed=300)
    assert full.finite == pytest.approx(1.0, rel=1e-14) and full.limit == 1.0
    forests = density_ratio(geometric_ans(1.0, 2.0, 1000), 1000, "lower", beta=0.7)
    assert forests.limit == 1.0 and forests.finite > 0.5
    fixed = density_ratio(geometric_ans(1.0, 2.0, 200), 200, "upper", r_fixed=2)
    a1 = math.exp(geometric_ans(1.0, 2.0, 200).log_a(1)[1])
    assert fixed.limit == pytest.approx(math.exp(-a1), rel=1e-14)
    assert fixed.finite == pytest.approx(fixed.limit, abs=0.05)
