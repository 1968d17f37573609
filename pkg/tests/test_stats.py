"""Summaries, t intervals and t-tests against independent references."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from lfl.stats import STAT_CAP, betainc, pooled_std, summarize, t_ppf, t_sf, t_test


@pytest.mark.parametrize("a, b, x", [(0.5, 0.5, 0.3), (2, 3, 0.1), (49, 0.5, 0.97),
                                     (10, 0.5, 0.999), (0.5, 40, 0.02), (100, 100, 0.5)])
def test_betainc_against_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert betainc(a, b, x) == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=200)
@given(st.floats(-12, 12), st.integers(1, 200))
def test_t_sf_against_scipy(t, df):
    assert t_sf(t, df) == pytest.approx(sps.t.sf(t, df), rel=1e-9, abs=1e-15)


@given(st.floats(0.001, 0.999), st.integers(1, 120))
def test_t_ppf_inverts(q, df):
    assert t_ppf(q, df) == pytest.approx(sps.t.ppf(q, df), rel=1e-9, abs=1e-10)


def test_critical_value_49():
    assert t_ppf(0.975, 49) == pytest.approx(2.0096, abs=1e-4)


def test_summary_constant():
    s = summarize([1, 1, 1])
    assert (s.mean, s.std, s.ci_low, s.ci_high) == (1.0, 0.0, 1.0, 1.0)


def test_summary_two_points():
    s = summarize([0, 2])
    assert s.mean == 1.0 and s.std == pytest.approx(math.sqrt(2)) and (s.min, s.max) == (0, 2)


def test_summary_single_value():
    s = summarize([3.5])
    assert s.n == 1 and s.std == 0.0 and s.ci_low == s.ci_high == 3.5


def test_ci_from_moments():
    # n = 50, mean 1.18, std 0.34 -> [1.083, 1.277]
    half = t_ppf(0.975, 49) * 0.34 / math.sqrt(50)
    assert half == pytest.approx(0.0966, abs=1e-4)
    assert (round(1.18 - half, 3), round(1.18 + half, 3)) == (1.083, 1.277)
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    x = 1.18 + 0.34 * (x - x.mean()) / x.std(ddof=1)
    s = summarize(x)
    assert (s.ci_low, s.ci_high) == pytest.approx((1.18 - half, 1.18 + half), abs=1e-12)


def test_summary_empty():
    with pytest.raises(ValueError):
        summarize([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_summary_invariants(xs):
    s = summarize(xs)
    assert s.std >= 0 and s.min <= s.mean <= s.max
    assert s.ci_low <= s.mean <= s.ci_high


def test_identical_samples():
    r = t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (r.t, r.p_one, r.cohens_d) == (0.0, 0.5, 0.0)


def test_degenerate_variance_is_capped():
    r = t_test([1.0, 1.0], [0.0, 0.0])
    assert r.t == STAT_CAP and r.p_one == 0.0 and r.p_two == 0.0
    r = t_test([0.0, 0.0], [1.0, 1.0])
    assert r.t == -STAT_CAP and r.p_one == 1.0


def test_seeded_effect_size():
    rng = np.random.default_rng(2024)
    a = rng.normal(2.08, 0.52, 50)
    b = rng.normal(1.18, 0.34, 50)
    r = t_test(a, b)
    assert r.df == 98
    assert r.p_one < 0.001
    closed_form = (2.08 - 1.18) / math.sqrt((0.52 ** 2 + 0.34 ** 2) / 2)
    assert closed_form == pytest.approx(2.05, abs=0.01)
    assert r.cohens_d == pytest.approx(closed_form, abs=0.35)
    assert r.cohens_d == pytest.approx((a.mean() - b.mean()) / pooled_std(a, b), rel=1e-12)


def test_against_scipy_student_and_welch():
    rng = np.random.default_rng(5)
    a, b = rng.normal(1, 1, 30), rng.normal(0.5, 2, 45)
    r = t_test(a, b)
    ref = sps.ttest_ind(a, b, alternative="greater")
    assert r.t == pytest.approx(ref.statistic, rel=1e-12)
    assert r.p_one == pytest.approx(ref.pvalue, rel=1e-9)
    w = t_test(a, b, welch=True)
    ref = sps.ttest_ind(a, b, equal_var=False, alternative="greater")
    assert w.t == pytest.approx(ref.statistic, rel=1e-12)
    assert w.p_one == pytest.approx(ref.pvalue, rel=1e-9)


finite = st.floats(-100, 100)


@given(st.lists(finite, min_size=2, max_size=30), st.lists(finite, min_size=2, max_size=30))
def test_swap_symmetry(a, b):
    x, y = t_test(a, b), t_test(b, a)
    assert x.t == -y.t and x.cohens_d == -y.cohens_d
    assert x.p_one == pytest.approx(1.0 - y.p_one, abs=1e-12)
