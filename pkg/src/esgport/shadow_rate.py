"""Shadow riskless rate extraction from an N-asset market.

An N-asset market driven by N-1 Brownian motions admits a unique state-price
deflator with drift mu_pi and loadings sigma_pi solving the square system

    [-1 | -sigma] [mu_pi; sigma_pi] = mu,

where sigma is the N x (N-1) matrix of asset diffusion loadings.  The shadow
riskless rate is -mu_pi: the rate a riskless asset would have to earn for
discounted prices to be martingales.  Loadings come from a Cholesky factor of
the return covariance with assets sorted by decreasing variance; the factor's
last two columns are merged into one (default: unweighted sum) to drop from N
to N-1 driving factors.  That merge choice is a modeling convention, not a
derived quantity, so the combination weights are an explicit parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    SampleTooSmallError,
    ShapeError,
    SingularSystemError,
)
from .esg_transform import EsgBlendParams, esg_valued_return
from .market_data import normalize_scores

CONDITION_LIMIT = 1e12

_EIG_FLOOR_FRACTION = 1e-12


@dataclass(frozen=True, eq=False)
class MarketEstimate:
    """Per-day drift vector and covariance of blended returns over a window."""

    mu: np.ndarray
    sigma: np.ndarray
    window: tuple
    tickers: tuple[str, ...]
    lam: float
    diagnostics: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.asarray(self.sigma, dtype=float)
        n = mu.size
        if mu.ndim != 1:
            raise ShapeError("mu must be a vector")
        if sigma.shape != (n, n):
            raise ShapeError(f"sigma must be {n}x{n}, got {sigma.shape}")
        if len(self.tickers) != n:
            raise ShapeError("one ticker per asset required")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise DomainError("estimate contains non-finite entries")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, float(np.abs(sigma).max())):
            raise DomainError("sigma must be symmetric")
        eigmin = float(np.linalg.eigvalsh(sigma)[0])
        if eigmin < -1e-12 * max(1.0, float(np.trace(sigma)) / n):
            raise DomainError(f"sigma has eigenvalue {eigmin}; repair before use")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))

    @property
    def n_assets(self) -> int:
        return self.mu.size


@dataclass(frozen=True, eq=False)
class LoadingMatrix:
    """N x (N-1) diffusion loadings; rows follow the variance-sorted assets.

    ``full_factor`` keeps the unreduced lower Cholesky factor of the sorted
    covariance so the reduction step stays auditable; ``order`` maps sorted
    rows back to the estimate's asset positions.
    """

    sigma: np.ndarray
    tickers: tuple[str, ...]
    variances: tuple[float, ...]
    full_factor: np.ndarray
    combine: tuple[float, float]
    order: tuple[int, ...]

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=float)
        n = len(self.tickers)
        if sigma.shape != (n, n - 1):
            raise ShapeError(f"loadings must be {n}x{n - 1}, got {sigma.shape}")
        if np.asarray(self.full_factor).shape != (n, n):
            raise ShapeError("full_factor must be the unreduced NxN factor")
        if len(self.variances) != n or len(self.order) != n:
            raise ShapeError("variances and order must have one entry per asset")
        if any(v2 > v1 for v1, v2 in zip(self.variances, self.variances[1:])):
            raise DomainError("rows must be sorted by decreasing variance")
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)


@dataclass(frozen=True, eq=False)
class DeflatorSolution:
    """Deflator drift/loadings with the derived shadow rate and its ratio."""

    mu_pi: float
    sigma_pi: np.ndarray
    srr: float
    sigma_pi_norm: float
    ir: float
    residual: float
    condition: float

    def __post_init__(self) -> None:
        sigma_pi = np.atleast_1d(np.asarray(self.sigma_pi, dtype=float))
        if sigma_pi.ndim != 1:
            raise ShapeError("sigma_pi must be a vector")
        if not math.isfinite(self.mu_pi) or not np.all(np.isfinite(sigma_pi)):
            raise DomainError("deflator solution contains non-finite entries")
        if self.srr != -self.mu_pi:
            raise DomainError("srr must equal -mu_pi exactly")
        object.__setattr__(self, "sigma_pi", sigma_pi)


@dataclass(frozen=True, eq=False)
class SrrSeries:
    """Dated deflator solutions; failed dates are recorded, not fatal."""

    dates: tuple
    solutions: tuple[DeflatorSolution, ...]
    failures: Mapping[object, str]
    lam: float
    window: int

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.solutions):
            raise ShapeError("one solution per date required")

    @property
    def srr(self) -> np.ndarray:
        return np.array([s.srr for s in self.solutions])

    @property
    def ir(self) -> np.ndarray:
        return np.array([s.ir for s in self.solutions])


def _clip_psd(sigma: np.ndarray) -> tuple[np.ndarray, bool, float]:
    """Eigenvalue clipping at the documented floor; reports the pre-repair minimum."""
    vals, vecs = np.linalg.eigh(sigma)
    eigmin = float(vals[0])
    floor = _EIG_FLOOR_FRACTION * max(float(np.trace(sigma)), 0.0) / sigma.shape[0]
    if eigmin >= floor:
        return sigma, False, eigmin
    repaired = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (repaired + repaired.T), True, eigmin


def estimate_market(
    returns,
    raw_scores,
    lam: float,
    *,
    c: float = 255.0,
    score_map=None,
    tickers: tuple[str, ...] | None = None,
    dates: tuple | None = None,
) -> MarketEstimate:
    """Sample mean and covariance of ESG-valued returns over one window.

    ``returns`` is either a ReturnPanel (tickers and dates come from it) or a
    (T, N) array; ``raw_scores`` are 0-100 scores, one per asset or one per
    (date, asset).
    """
    if hasattr(returns, "returns"):
        values = np.asarray(returns.returns, dtype=float)
        tickers = tuple(returns.tickers)
        dates = tuple(returns.calendar.dates)
    else:
        values = np.asarray(returns, dtype=float)
    if values.ndim != 2 or values.shape[1] < 1:
        raise ShapeError("returns must be a (dates, assets) matrix")
    t_len, n = values.shape
    if tickers is None:
        tickers = tuple(f"A{i:02d}" for i in range(n))
    if len(tickers) != n:
        raise ShapeError("one ticker per asset required")
    if dates is None:
        dates = tuple(range(t_len))
    if len(dates) != t_len:
        raise ShapeError("one date per return row required")
    if t_len < n + 2:
        raise SampleTooSmallError(
            f"window of {t_len} rows is too short for {n} assets; need at least {n + 2}"
        )
    if not np.all(np.isfinite(values)):
        raise DomainError("returns contain non-finite entries")

    sig_scores = normalize_scores(raw_scores, score_map)
    if sig_scores.ndim == 1:
        if sig_scores.size != n:
            raise ShapeError("one score per asset required")
    elif sig_scores.shape != values.shape:
        raise ShapeError("per-day scores must match the returns shape")

    params = EsgBlendParams(lam=lam, c=c)
    blended = esg_valued_return(values, sig_scores, params)

    mu = blended.mean(axis=0)
    if n == 1:
        sigma = np.array([[float(np.var(blended[:, 0], ddof=1))]])
    else:
        sigma = np.cov(blended, rowvar=False, ddof=1)
    sigma, repaired, eigmin = _clip_psd(0.5 * (sigma + sigma.T))
    return MarketEstimate(
        mu=mu,
        sigma=sigma,
        window=tuple(dates),
        tickers=tickers,
        lam=lam,
        diagnostics={"psd_repaired": repaired, "min_eigenvalue": eigmin},
    )


def build_loadings(
    est: MarketEstimate, combine: tuple[float, float] = (1.0, 1.0)
) -> LoadingMatrix:
    """Variance-sorted Cholesky loadings reduced to N-1 factor columns.

    Assets are sorted by decreasing variance (ties broken by ticker); the
    lower factor L of the sorted covariance has rows = assets and columns =
    factors, and its last two factor columns are merged into
    ``combine[0]*L[:, -2] + combine[1]*L[:, -1]``.
    """
    n = est.n_assets
    if n < 2:
        raise DomainError("at least two assets are needed to build loadings")
    if len(combine) != 2 or not all(math.isfinite(w) for w in combine):
        raise DomainError("combine must be two finite weights")

    variances = np.diag(est.sigma)
    order = sorted(range(n), key=lambda i: (-variances[i], est.tickers[i]))
    sorted_sigma = est.sigma[np.ix_(order, order)]
    try:
        factor = np.linalg.cholesky(sorted_sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "covariance is not positive definite after repair; cannot factor"
        ) from exc

    merged = combine[0] * factor[:, n - 2] + combine[1] * factor[:, n - 1]
    reduced = np.column_stack([factor[:, : n - 2], merged])
    return LoadingMatrix(
        sigma=reduced,
        tickers=tuple(est.tickers[i] for i in order),
        variances=tuple(float(variances[i]) for i in order),
        full_factor=factor,
        combine=(float(combine[0]), float(combine[1])),
        order=tuple(order),
    )


def solve_deflator(mu: np.ndarray, loadings) -> DeflatorSolution:
    """Exact solve of the deflator system; mu must follow the loadings row order."""
    sigma = loadings.sigma if isinstance(loadings, LoadingMatrix) else np.asarray(
        loadings, dtype=float
    )
    mu_vec = np.atleast_1d(np.asarray(mu, dtype=float))
    n = mu_vec.size
    if sigma.ndim != 2 or sigma.shape != (n, n - 1):
        raise ShapeError(
            f"loadings must be {n}x{n - 1} to close the system, got {sigma.shape}"
        )
    if not (np.all(np.isfinite(mu_vec)) and np.all(np.isfinite(sigma))):
        raise DomainError("system contains non-finite entries")

    a = np.empty((n, n))
    a[:, 0] = -1.0
    a[:, 1:] = -sigma
    condition = float(np.linalg.cond(a))
    if not math.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularSystemError(
            f"deflator system condition number {condition:.3e} exceeds "
            f"{CONDITION_LIMIT:.0e}; loadings do not identify a deflator"
        )
    x = np.linalg.solve(a, mu_vec)
    # one refinement pass keeps the residual at rounding level even when the
    # -1 drift column dwarfs return-scale loadings
    for _ in range(2):
        resid_vec = mu_vec - a @ x
        if np.max(np.abs(resid_vec)) <= 1e-14 * max(float(np.abs(mu_vec).max()), 1e-30):
            break
        x = x + np.linalg.solve(a, resid_vec)
    residual = float(np.max(np.abs(a @ x - mu_vec)))

    mu_pi = float(x[0])
    sigma_pi = x[1:].copy()
    norm = float(np.linalg.norm(sigma_pi))
    ir = mu_pi / norm if norm > 0.0 else math.nan
    return DeflatorSolution(
        mu_pi=mu_pi,
        sigma_pi=sigma_pi,
        srr=-mu_pi,
        sigma_pi_norm=norm,
        ir=ir,
        residual=residual,
        condition=condition,
    )


def srr_series(
    panel,
    esg,
    lam: float,
    window: int,
    *,
    combine: tuple[float, float] = (1.0, 1.0),
    c: float = 255.0,
    score_map=None,
) -> SrrSeries:
    """One deflator solve per date over a rolling window of blended returns.

    ``esg`` is an EsgPanel aligned with the return panel's calendar, or a raw
    score array ((N,) constant or (T, N) daily).  Dates whose solve fails are
    recorded in ``failures`` and the series continues.
    """
    if hasattr(panel, "returns"):
        values = np.asarray(panel.returns, dtype=float)
        tickers = tuple(panel.tickers)
        dates = tuple(panel.calendar.dates)
    else:
        values = np.asarray(panel, dtype=float)
        if values.ndim != 2:
            raise ShapeError("returns must be a (dates, assets) matrix")
        tickers = tuple(f"A{i:02d}" for i in range(values.shape[1]))
        dates = tuple(range(values.shape[0]))
    t_len, n = values.shape

    if hasattr(esg, "raw"):
        raw = np.asarray(esg.raw, dtype=float)
        if tuple(esg.tickers) != tickers:
            raise ShapeError("ESG panel tickers do not match the return panel")
        if raw.shape != values.shape:
            raise ShapeError(
                "ESG panel is not aligned to the return calendar; fill scores "
                "to daily frequency first"
            )
    else:
        raw = np.asarray(esg, dtype=float)

    if not isinstance(window, (int, np.integer)) or window < n + 2:
        raise SampleTooSmallError(
            f"window must be an integer of at least {n + 2} for {n} assets"
        )
    if t_len < window:
        raise SampleTooSmallError(
            f"{t_len} dates of history cannot fill one {window}-day window"
        )

    kept_dates: list = []
    solutions: list[DeflatorSolution] = []
    failures: dict = {}
    for end in range(window - 1, t_len):
        rows = slice(end - window + 1, end + 1)
        raw_slice = raw[rows] if raw.ndim == 2 else raw
        date = dates[end]
        try:
            est = estimate_market(
                values[rows],
                raw_slice,
                lam,
                c=c,
                score_map=score_map,
                tickers=tickers,
                dates=dates[rows],
            )
            loadings = build_loadings(est, combine=combine)
            solution = solve_deflator(est.mu[list(loadings.order)], loadings)
        except (DomainError, SingularSystemError) as exc:
            failures[date] = f"{type(exc).__name__}: {exc}"
            continue
        kept_dates.append(date)
        solutions.append(solution)
    return SrrSeries(
        dates=tuple(kept_dates),
        solutions=tuple(solutions),
        failures=failures,
        lam=lam,
        window=int(window),
    )


def ir_stats(series_by_lambda: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Time-mean and time-std of the information ratio, one pair per series."""
    if len(series_by_lambda) == 0:
        raise DomainError("at least one series is required")
    means = np.empty(len(series_by_lambda))
    stds = np.empty(len(series_by_lambda))
    for k, series in enumerate(series_by_lambda):
        solutions = getattr(series, "solutions", series)
        ir = np.array([s.ir for s in solutions], dtype=float)
        if ir.size == 0:
            raise DomainError(f"series {k} has no solved dates")
        means[k] = ir.mean()
        stds[k] = float(np.std(ir, ddof=1)) if ir.size > 1 else 0.0
    return means, stds
