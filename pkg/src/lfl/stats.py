"""Summary statistics, Student t intervals and two-sample t-tests.

The t distribution is evaluated through the regularised incomplete beta
function, so nothing here depends on a statistics package.
"""

from __future__ import annotations

import math
import statistics
from typing import NamedTuple, Sequence

_TINY = 1e-300
_EPS = 1e-15
_MAX_ITER = 10_000

# reported in place of an infinite statistic (zero-variance samples)
STAT_CAP = 1e12


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta I_x(a, b) by Lentz's continued fraction."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    # the fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x > (a + 1.0) / (a + b + 2.0):
        return 1.0 - betainc(b, a, 1.0 - x)
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    f = _betacf(a, b, x)
    return math.exp(log_front) * f / a


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError("df must be > 0")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    t2 = t * t
    if t2 < df:
        # df / (df + t^2) rounds toward 1 for small t; use the complementary form
        tail = 0.5 - 0.5 * betainc(0.5, 0.5 * df, t2 / (df + t2))
    else:
        tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t2))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return 1.0 - t_sf(t, df)


def t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t (inverse CDF) by bracketing and bisection."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    target = 1.0 - q
    lo, hi = 0.0, 1.0
    while t_sf(hi, df) > target:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


class Summary(NamedTuple):
    n: int
    mean: float
    std: float
    min: float
    max: float
    ci_low: float
    ci_high: float

    @property
    def ci_half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def summarize(values: Sequence[float], confidence: float = 0.95) -> Summary:
    """Mean, sample std (n-1), range and Student-t confidence interval.

    A single value gives std 0 and a degenerate interval at the point.
    """
    xs = [float(v) for v in values]
    if not xs:
        raise ValueError("summarize needs at least one value")
    n = len(xs)
    mean = statistics.fmean(xs)
    lo, hi = min(xs), max(xs)
    # fmean can land a rounding step outside the range for constant data
    mean = min(max(mean, lo), hi)
    if n == 1:
        return Summary(1, mean, 0.0, lo, hi, mean, mean)
    std = statistics.stdev(xs)
    half = t_ppf(0.5 + confidence / 2.0, n - 1) * std / math.sqrt(n)
    return Summary(n, mean, std, lo, hi, mean - half, mean + half)


class TTest(NamedTuple):
    t: float
    df: float
    p_one: float   # H1: mean(a) > mean(b)
    p_two: float
    cohens_d: float
    welch: bool = False


def pooled_std(a: Sequence[float], b: Sequence[float]) -> float:
    na, nb = len(a), len(b)
    ss = statistics.variance(a) * (na - 1) + statistics.variance(b) * (nb - 1)
    return math.sqrt(ss / (na + nb - 2))


def t_test(a: Sequence[float], b: Sequence[float], *, welch: bool = False) -> TTest:
    """Two-sample t-test of mean(a) > mean(b).

    Student's pooled-variance test by default (df = n_a + n_b - 2); ``welch``
    switches to unequal variances with the Welch-Satterthwaite df.  Cohen's d
    always uses the pooled n-1 standard deviation.  Zero-variance samples with
    different means give a capped statistic of +-STAT_CAP.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = statistics.fmean(a), statistics.fmean(b)
    va, vb = statistics.variance(a), statistics.variance(b)
    sp = pooled_std(a, b)
    diff = ma - mb
    if welch:
        se2 = va / na + vb / nb
        df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)) if se2 > 0 \
            else float(na + nb - 2)
    else:
        se2 = sp * sp * (1.0 / na + 1.0 / nb)
        df = float(na + nb - 2)
    if se2 > 0:
        t = diff / math.sqrt(se2)
        d = diff / sp
        p_one = t_sf(t, df)
    elif diff == 0:
        t, d, p_one = 0.0, 0.0, 0.5
    else:
        t = d = math.copysign(STAT_CAP, diff)
        p_one = 0.0 if diff > 0 else 1.0
    p_two = min(1.0, 2.0 * min(p_one, 1.0 - p_one))
    return TTest(t, df, p_one, p_two, d, welch)
