import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clusterlaw.coeff_engine import (SizeWindow, brute_force_c, compute_table, d_ratios, kp_covariance,
                                     kp_joint, kp_marginal, kp_mean, largest_cluster_cdf,
                                     log_coefficients, partitions, smallest_cluster_tail)
from clusterlaw.sequences import ParameterFunction, h_transform, multiset_to_a
from oracles import c_all_ones, c_identity, c_window_12, euler_transform, partition_count

ONES = ParameterFunction(l=1.0)
IDENT = ParameterFunction(l=2.0)


def test_table_examples():
    t = compute_table(ONES, SizeWindow(), 3, exact=True)
    assert t.exact_c == (1, 1, Fraction(3, 2), Fraction(13, 6))
    assert compute_table(ONES, SizeWindow(1, 2), 3, exact=True).exact_c[3] == Fraction(7, 6)
    t3 = compute_table(IDENT, SizeWindow(3), 2)
    assert t3.log_c[2] == -np.inf and t3.c(2) == 0.0


def test_empty_window_gives_unit_table(caplog):
    t = compute_table(ONES, SizeWindow(5), 3)
    assert t.c(0) == 1.0 and all(t.c(n) == 0.0 for n in (1, 2, 3))
    assert "does not meet" in caplog.text


def test_brute_force_examples():
    assert brute_force_c(ONES, SizeWindow(), 2) == Fraction(3, 2)
    assert brute_force_c(IDENT, SizeWindow(), 3) == Fraction(31, 6)
    assert brute_force_c(ParameterFunction(l=0.5), SizeWindow(), 0) == 1
    with pytest.raises(ValueError):
        brute_force_c(ONES, SizeWindow(), 26)


def test_partition_enumeration_count():
    for n in (1, 4, 10, 20):
        assert sum(1 for _ in partitions(n)) == partition_count(n)


@pytest.mark.parametrize("n", [0, 1, 5, 17, 60])
def test_closed_form_coefficients(n):
    assert compute_table(ONES, SizeWindow(), n, exact=True).exact_c[n] == c_all_ones(n)
    assert compute_table(IDENT, SizeWindow(), n, exact=True).exact_c[n] == c_identity(n)
    assert compute_table(ONES, SizeWindow(1, 2), n, exact=True).exact_c[n] == c_window_12(n)


def test_float_table_tracks_closed_form_at_scale():
    lc = log_coefficients(ONES, SizeWindow(), 300)
    for n in (50, 150, 300):
        want = float(c_all_ones(n))
        assert math.exp(lc[n]) == pytest.approx(want, rel=1e-12)


def test_multiset_coefficients_count_multisets():
    # m_j = 2^j kinds of size j: exp(sum a_n z^n) counts multisets exactly
    n_max = 30
    pf = multiset_to_a(lambda j: 2 ** j, n_max)
    counts = euler_transform([0] + [2 ** j for j in range(1, n_max + 1)], n_max)
    exact = compute_table(pf, SizeWindow(), n_max, exact=True).exact_c
    assert list(exact) == counts
    assert counts[:5] == [1, 2, 7, 20, 59]


def test_non_rational_brute_force_matches_float():
    pf = ParameterFunction(l=0.5)
    lc = log_coefficients(pf, SizeWindow(2), 18)
    assert math.exp(lc[18]) == pytest.approx(float(brute_force_c(pf, SizeWindow(2), 18)), rel=1e-12)


def test_ratios_examples():
    low, up = d_ratios(ONES, 3, 2)
    assert low == pytest.approx(7 / 13, rel=1e-14)
    assert d_ratios(ONES, 9, 9)[0] == pytest.approx(1.0, rel=1e-14)
    assert d_ratios(ONES, 9, 1)[1] == pytest.approx(1.0, rel=1e-14)
    assert largest_cluster_cdf(ONES, 3, 2) == pytest.approx(7 / 13, rel=1e-14)
    assert largest_cluster_cdf(ONES, 7, 7) == 1.0
    assert smallest_cluster_tail(ONES, 12, 1) == 1.0


def test_smallest_cluster_tail_small_n_is_exact():
    bf = brute_force_c(ONES, SizeWindow(2), 20) / brute_force_c(ONES, SizeWindow(), 20)
    val = smallest_cluster_tail(ONES, 20, 2)
    assert val == pytest.approx(float(bf), rel=1e-12)
    assert val == pytest.approx(0.43638937199, rel=1e-9)


def test_kp_examples():
    assert kp_marginal(ONES, 2, 1, 2) == pytest.approx(1 / 3, rel=1e-14)
    assert kp_marginal(ONES, 2, 2, 1) == pytest.approx(2 / 3, rel=1e-14)
    assert kp_joint(ONES, 3, [1, 2], [1, 1]) == pytest.approx(6 / 13, rel=1e-14)
    assert kp_marginal(ONES, 5, 3, 2) == 0.0
    with pytest.raises(ValueError):
        kp_joint(ONES, 5, [1, 1], [0, 0])


def test_kp_moderate_n_values():
    # finite-n values, approaching the Poisson limits only at rate n^(-1/2)
    assert kp_marginal(ONES, 200, 1, 0) == pytest.approx(0.39250440163, rel=1e-9)
    assert kp_joint(ONES, 200, [1, 2], [0, 0]) == pytest.approx(0.16364515346, rel=1e-9)


@pytest.mark.parametrize("pf", [ONES, IDENT])
def test_kp_against_enumeration(pf):
    n = 12
    total = brute_force_c(pf, SizeWindow(), n)
    for p in (1, 2, 3):
        for k in range(0, n // p + 1):
            want = Fraction(0)
            for occ in partitions(n):
                if occ.get(p, 0) != k:
                    continue
                term = Fraction(1)
                for i, ki in occ.items():
                    term *= pf.exact_a(i) ** ki / math.factorial(ki)
                want += term
            assert kp_marginal(pf, n, p, k) == pytest.approx(float(want / total), rel=1e-12, abs=1e-300)


def test_kp_moments_against_enumeration():
    n = 14
    total = brute_force_c(ONES, SizeWindow(), n)
    e1 = e2 = e12 = Fraction(0)
    for occ in partitions(n):
        w = Fraction(1)
        for i, ki in occ.items():
            w /= math.factorial(ki)
        k1, k2 = occ.get(1, 0), occ.get(2, 0)
        e1 += k1 * w
        e2 += k2 * w
        e12 += k1 * k2 * w
    e1, e2, e12 = e1 / total, e2 / total, e12 / total
    assert kp_mean(ONES, n, 1) == pytest.approx(float(e1), rel=1e-12)
    assert kp_covariance(ONES, n, 1, 2) == pytest.approx(float(e12 - e1 * e2), rel=1e-10)


@given(st.lists(st.integers(1, 9), min_size=12, max_size=12), st.integers(1, 3), st.integers(1, 12))
def test_kp_completeness_and_window_monotonicity(vals, p, r):
    pf = multiset_to_a(vals, 12)
    n = 12
    total = sum(kp_marginal(pf, n, p, k) for k in range(n // p + 1))
    assert total == pytest.approx(1.0, rel=1e-12)
    cdf = [largest_cluster_cdf(pf, n, s) for s in range(1, n + 1)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(cdf, cdf[1:]))
    tails = [smallest_cluster_tail(pf, n, s) for s in range(1, n + 1)]
    assert all(a * (1 + 1e-12) >= b for a, b in zip(tails, tails[1:]))
    low, up = d_ratios(pf, n, r)
    assert 0 <= low <= 1 + 1e-12 and 0 <= up <= 1 + 1e-12


@given(st.lists(st.integers(1, 20), min_size=15, max_size=15), st.integers(1, 4), st.integers(0, 5))
def test_exact_table_matches_float_table(vals, lo, width):
    pf = multiset_to_a(vals, 15)
    w = SizeWindow(lo, lo + width)
    t = compute_table(pf, w, 15, exact=True)
    for n in range(16):
        ex = float(t.exact_c[n])
        assert t.c(n) == pytest.approx(ex, rel=1e-12, abs=0.0)


@given(st.floats(0.2, 5.0), st.integers(0, 200))
def test_h_transform_scales_coefficients(h, n):
    base = log_coefficients(ONES, SizeWindow(), n)[n]
    scaled = log_coefficients(h_transform(ONES, h), SizeWindow(), n)[n]
    assert scaled - n * math.log(h) == pytest.approx(base, abs=1e-9 * max(n, 1))


def test_h_transform_example_n6():
    scaled = math.exp(log_coefficients(h_transform(ONES, 0.5), SizeWindow(), 6)[6])
    assert scaled == pytest.approx(float(c_all_ones(6)) * 2.0 ** -6, rel=1e-13)
