"""Performance and reward-risk measures over realized or simulated returns.

Tail statistics use order statistics with ceil((1-beta)*n) tail counts and
no interpolation, so they agree with the scenario CVaR optimizer evaluated
on the same sample at the same level. All quantities are plain fractions
(0.20 means twenty percent); the CLI's report layer does any percent
formatting.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DomainError, SampleTooSmallError, ZeroDenominatorError
from .esg_transform import EsgBlendParams, esg_valued_riskless

_CEIL_GUARD = 1e-9  # absorbs fp noise in (1-beta)*n before taking ceil


@dataclasses.dataclass(frozen=True)
class PerformanceSummary:
    tot_ret: float
    ann_ret: float
    avg_turnover: float
    etl: float
    etr: float
    mdd: float
    esg_avg: float
    esg_std: float


@dataclasses.dataclass(frozen=True)
class MomentSummary:
    mean: float
    median: float
    std: float
    skew: float
    excess_kurtosis: float


@dataclasses.dataclass(frozen=True)
class RrrSuite:
    sharpe: float
    sortino: float
    star: float
    rachev: float
    gini: float


def _check_beta(beta: float) -> None:
    if not (math.isfinite(beta) and 0.0 <= beta < 1.0):
        raise DomainError(f"beta must lie in [0, 1), got {beta}")


def _tail_count(n: int, beta: float) -> int:
    if n * (1.0 - beta) < 1.0 - _CEIL_GUARD:
        raise SampleTooSmallError(
            f"need at least {math.ceil(1.0 / (1.0 - beta))} observations for beta={beta}, got {n}"
        )
    return math.ceil((1.0 - beta) * n - _CEIL_GUARD)


def etl(returns, beta: float) -> float:
    """Mean of the worst ceil((1-beta)*n) observations (signed, usually < 0)."""
    _check_beta(beta)
    x = np.sort(np.asarray(returns, dtype=float))
    k = _tail_count(x.size, beta)
    return float(x[:k].mean())


def etr(returns, beta: float) -> float:
    """Upper-tail mirror of etl: etr(x, beta) = -etl(-x, beta) exactly."""
    return -etl(-np.asarray(returns, dtype=float), beta)


def sample_cvar(returns, beta: float) -> float:
    """Empirical CVaR of the loss -returns at level beta, as a positive magnitude.

    This is the exact minimum of the Rockafellar-Uryasev objective
    xi + (S(1-beta))^-1 sum (loss - xi)^+ over xi, so it reproduces the
    value the scenario LP optimizes. It equals -etl(returns, beta) whenever
    S*(1-beta) is an integer; for fractional tail masses it weights the
    boundary observation fractionally instead of fully.
    """
    _check_beta(beta)
    losses = np.sort(-np.asarray(returns, dtype=float))[::-1]
    n = losses.size
    k = _tail_count(n, beta)
    xi = losses[k - 1]
    return float(xi + np.sum(np.maximum(losses - xi, 0.0)) / (n * (1.0 - beta)))


def max_drawdown(prices) -> float:
    """Largest peak-to-trough drop as a fraction of the running peak."""
    p = np.asarray(prices, dtype=float)
    if p.size < 1:
        raise DomainError("max_drawdown needs at least one price")
    if np.any(p <= 0.0) or not np.all(np.isfinite(p)):
        raise DomainError("prices must be finite and strictly positive")
    peak = np.maximum.accumulate(p)
    return float(np.max((peak - p) / peak))


def star_ratio(
    series,
    rate_series,
    beta: float,
    excess_basis: str = "fixed_rf",
    blend: EsgBlendParams | None = None,
) -> float:
    """Mean excess return over the positive magnitude of its ETL.

    ``excess_basis="fixed_rf"`` subtracts the given riskless rate(s) as-is;
    ``"esg_rf"`` first maps them through the blended riskless rate, which
    requires ``blend``. The two coincide at lambda = 0.
    """
    series = np.asarray(series, dtype=float)
    rate = np.asarray(rate_series, dtype=float)
    if excess_basis == "esg_rf":
        if blend is None:
            raise DomainError("esg_rf basis requires blend parameters")
        rate = esg_valued_riskless(rate, blend)
    elif excess_basis != "fixed_rf":
        raise DomainError(f"unknown excess basis {excess_basis!r}")
    excess = series - rate
    tail = etl(excess, beta)
    if tail == 0.0:
        raise ZeroDenominatorError("ETL of excess returns is zero")
    return float(excess.mean() / abs(tail))


def moments(series) -> MomentSummary:
    """Sample moments with bias-adjusted skewness and excess kurtosis.

    Skewness uses the g1 * sqrt(n(n-1))/(n-2) adjustment and kurtosis the
    standard unbiased-under-normality G2 form. Samples too small for a
    moment (n < 2 for std, n < 4 for skew/kurtosis) or with zero
    dispersion get NaN in that slot rather than an error.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 1:
        raise SampleTooSmallError("moments need a non-empty sample")
    mean = float(x.mean())
    if n < 2:
        std = float("nan")
    elif np.all(x == x[0]):
        # exact constancy, declared before fp noise can fake a tiny std
        std = 0.0
    else:
        std = float(x.std(ddof=1))
    if n < 4 or std == 0.0:
        skew = exkurt = float("nan")
    else:
        d = x - mean
        m2 = float(np.mean(d**2))
        g1 = float(np.mean(d**3)) / m2**1.5
        g2 = float(np.mean(d**4)) / m2**2 - 3.0
        skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
        exkurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    return MomentSummary(
        mean=mean,
        median=float(np.median(x)),
        std=std,
        skew=skew,
        excess_kurtosis=exkurt,
    )


def avg_turnover(weights_by_date) -> float:
    """Time-average of the daily L1 weight change."""
    w = np.asarray(weights_by_date, dtype=float)
    if w.ndim != 2 or w.shape[0] < 2:
        raise DomainError("need weights on at least 2 dates")
    return float(np.abs(np.diff(w, axis=0)).sum(axis=1).mean())


def _gini_mean_difference(x: np.ndarray) -> float:
    n = x.size
    xs = np.sort(x)
    i = np.arange(1, n + 1)
    return float(2.0 / (n * (n - 1)) * np.sum((2 * i - n - 1) * xs))


def rrr_suite(series, rate_series, beta: float = 0.95) -> RrrSuite:
    """Sharpe, Sortino, STAR, Rachev, and Gini ratios for one return series.

    Sharpe, Sortino, Rachev, and Gini are computed on the raw series (no
    excess); STAR subtracts ``rate_series``. A degenerate denominator makes
    that single ratio NaN, the rest are still returned.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 30:
        raise SampleTooSmallError(f"rrr_suite needs >= 30 observations, got {x.size}")
    _check_beta(beta)

    std = 0.0 if np.all(x == x[0]) else x.std(ddof=1)
    sharpe = float(x.mean() / std) if std > 0.0 else float("nan")

    downside = np.sqrt(np.mean(np.minimum(x, 0.0) ** 2))
    sortino = float(x.mean() / downside) if downside > 0.0 else float("nan")

    try:
        star = star_ratio(x, rate_series, beta)
    except ZeroDenominatorError:
        star = float("nan")

    lower = etl(x, beta)
    rachev = float(etr(x, beta) / abs(lower)) if lower != 0.0 else float("nan")

    gmd = 0.0 if std == 0.0 else _gini_mean_difference(x)
    gini = float(x.mean() / gmd) if gmd > 0.0 else float("nan")

    return RrrSuite(sharpe=sharpe, sortino=sortino, star=star, rachev=rachev, gini=gini)


def summarize_performance(
    prices,
    weights_by_date,
    esg_scores,
    rate_series=0.0,
    beta: float = 0.95,
    c: float = 255.0,
) -> PerformanceSummary:
    """Headline statistics for one realized portfolio path.

    ``prices`` is the portfolio value series (n+1 points for n return
    days), ``weights_by_date`` the post-rebalance weights, ``esg_scores``
    the portfolio's raw-score series.
    """
    p = np.asarray(prices, dtype=float)
    if p.size < 2:
        raise DomainError("need at least two portfolio values")
    returns = np.diff(np.log(p))
    tot = float(p[-1] / p[0] - 1.0)
    ann = float((1.0 + tot) ** (c / returns.size) - 1.0)
    scores = np.asarray(esg_scores, dtype=float)
    return PerformanceSummary(
        tot_ret=tot,
        ann_ret=ann,
        avg_turnover=avg_turnover(weights_by_date),
        etl=etl(returns, beta),
        etr=etr(returns, beta),
        mdd=max_drawdown(p),
        esg_avg=float(scores.mean()),
        esg_std=float(scores.std(ddof=1)) if scores.size > 1 else 0.0,
    )
