"""Nonparametric tests used for the ablation and error analyses.

Mann-Whitney U (exact enumeration when small and tie-free, else normal
approximation with tie and continuity corrections), Spearman rank
correlation with a t approximation, Kruskal-Wallis, and Bartlett's test.

Chi-square and Student-t tail probabilities come from hand-rolled
regularized incomplete gamma/beta functions; see ``gammainc_series`` /
``gammainc_contfrac`` for the two independent evaluation routes used to
cross-check them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

ALTERNATIVES = ("two-sided", "less", "greater")
EXACT_LIMIT = 12  # enumerate C(n1+n2, n1) rank assignments up to this total


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "exact" | "approximate"

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


# -- special functions -------------------------------------------------------------

_MAX_ITER = 400
_TINY = 1e-300


def _gammaln(x: float) -> float:
    return math.lgamma(x)


def gammainc_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by power series."""
    if x <= 0:
        return 0.0
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - _gammaln(a))


def gammainc_contfrac(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by Lentz continued fraction."""
    if x <= 0:
        return 1.0
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - _gammaln(a))


def gammainc_lower(a: float, x: float) -> float:
    """P(a, x), choosing the faster-converging route per region."""
    if a <= 0 or x < 0:
        raise ValueError("gammainc_lower requires a > 0, x >= 0")
    if x < a + 1.0:
        return gammainc_series(a, x)
    return 1.0 - gammainc_contfrac(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x <= 0:
        return 1.0
    if x / 2.0 < df / 2.0 + 1.0:
        return max(0.0, 1.0 - gammainc_series(df / 2.0, x / 2.0))
    return gammainc_contfrac(df / 2.0, x / 2.0)


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(_gammaln(a + b) - _gammaln(a) - _gammaln(b)
                     + a * math.log(x) + b * math.log(1.0 - x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Student-t survival function P(T > t)."""
    if df <= 0:
        raise ValueError("df must be positive")
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# -- ranking helpers ----------------------------------------------------------------

def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank block."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_sum(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    return float((counts.astype(np.float64) ** 3 - counts).sum())


# -- the four tests ------------------------------------------------------------------

def mann_whitney_u(a, b, alternative: str = "two-sided",
                   method: str = "auto") -> TestResult:
    """Rank-sum U for sample ``a`` against ``b``.

    Exact p by enumerating all rank assignments when n1+n2 <= 12 and the
    pooled sample is tie-free; otherwise a normal approximation with tie
    and continuity corrections. ``method`` forces one route.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    if method not in ("auto", "exact", "approximate"):
        raise ValueError(f"unknown method {method!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)

    has_ties = len(np.unique(pooled)) < n1 + n2
    exact_ok = n1 + n2 <= EXACT_LIMIT and not has_ties
    if method == "exact" and not exact_ok:
        raise ValueError("exact method needs a tie-free pooled sample of size <= "
                         f"{EXACT_LIMIT}")
    if exact_ok and method != "approximate":
        le = ge = 0
        total = 0
        all_ranks = np.arange(1, n1 + n2 + 1, dtype=np.float64)
        base = n1 * (n1 + 1) / 2.0
        for picks in combinations(range(n1 + n2), n1):
            u_perm = float(all_ranks[list(picks)].sum() - base)
            le += u_perm <= u + 1e-12
            ge += u_perm >= u - 1e-12
            total += 1
        p_less = le / total
        p_greater = ge / total
        if alternative == "less":
            p = p_less
        elif alternative == "greater":
            p = p_greater
        else:
            p = min(1.0, 2.0 * min(p_less, p_greater))
        return TestResult(statistic=u, p_value=p, method="exact")

    n = n1 + n2
    mu = n1 * n2 / 2.0
    tie_term = _tie_sum(pooled) / (n * (n - 1)) if n > 1 else 0.0
    sigma2 = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    sigma = math.sqrt(sigma2) if sigma2 > 0 else 0.0
    if sigma == 0.0:
        p = 1.0
    elif alternative == "less":
        p = 1.0 - norm_sf((u - mu + 0.5) / sigma)
    elif alternative == "greater":
        p = norm_sf((u - mu - 0.5) / sigma)
    else:
        z = (abs(u - mu) - 0.5) / sigma
        p = min(1.0, 2.0 * norm_sf(max(z, 0.0)))
    return TestResult(statistic=u, p_value=p, method="approximate")


def spearman_rho(x, y, alternative: str = "two-sided") -> TestResult:
    """Pearson correlation of midranks; p from a t approximation with n-2 df."""
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    if len(np.unique(x)) == 1 or len(np.unique(y)) == 1:
        raise ValueError("correlation undefined for a constant vector")
    rx = midranks(x)
    ry = midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float((rx * ry).sum() / math.sqrt((rx * rx).sum() * (ry * ry).sum()))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        p_greater = 0.0 if rho > 0 else 1.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p_greater = t_sf(t, n - 2)
    if alternative == "greater":
        p = p_greater
    elif alternative == "less":
        p = 1.0 - p_greater
    else:
        p = min(1.0, 2.0 * min(p_greater, 1.0 - p_greater))
    return TestResult(statistic=rho, p_value=p, method="approximate")


def kruskal_wallis(groups) -> TestResult:
    """H statistic with tie correction; p from chi-square with g-1 df."""
    samples = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(samples) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in samples):
        raise ValueError("groups must be non-empty")
    pooled = np.concatenate(samples)
    n = pooled.size
    ranks = midranks(pooled)
    h = 0.0
    start = 0
    for g in samples:
        r = ranks[start:start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    correction = 1.0 - _tie_sum(pooled) / (n ** 3 - n) if n > 1 else 1.0
    if correction <= 0:
        # every pooled value identical
        return TestResult(statistic=0.0, p_value=1.0, method="approximate")
    h /= correction
    h = max(0.0, h)
    return TestResult(statistic=h, p_value=chi2_sf(h, len(samples) - 1),
                      method="approximate")


def bartlett(groups) -> TestResult:
    """Bartlett's equal-variance statistic; p from chi-square with g-1 df."""
    samples = [np.asarray(g, dtype=np.float64) for g in groups]
    g = len(samples)
    if g < 2:
        raise ValueError("need at least two groups")
    if any(s.size < 2 for s in samples):
        raise ValueError("each group needs at least two observations")
    variances = [float(s.var(ddof=1)) for s in samples]
    if any(v <= 0.0 for v in variances):
        raise ValueError("zero variance group; statistic undefined")
    sizes = [s.size for s in samples]
    n = sum(sizes)
    pooled_var = sum((ni - 1) * vi for ni, vi in zip(sizes, variances)) / (n - g)
    num = (n - g) * math.log(pooled_var) - sum((ni - 1) * math.log(vi)
                                               for ni, vi in zip(sizes, variances))
    denom = 1.0 + (sum(1.0 / (ni - 1) for ni in sizes) - 1.0 / (n - g)) / (3.0 * (g - 1))
    stat = max(0.0, num / denom)
    return TestResult(statistic=stat, p_value=chi2_sf(stat, g - 1), method="approximate")
