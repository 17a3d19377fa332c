"""Efficient frontiers in blended-return space, tangency, realized series.

Every frontier point reports its coordinates twice: in the blended space
(mean_z, risk_z) that the optimizer actually worked in, and in plain
return space (mean_r, risk_r) under the same weights. Both a standard
deviation and a sample-CVaR column are carried so either can serve as the
risk axis; ``risk_z``/``risk_r`` alias whichever matches the risk measure
the optimizer minimized.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .analytics import sample_cvar
from .errors import AlignmentError, DomainError, NoTangentError, ShapeError
from .esg_transform import EsgBlendParams, blend_scenarios, esg_valued_return
from .market_data import LinearScoreMap, normalize_scores
from .optimizer import OPTIMAL, OptimizationSpec, SolveReport, Weights, sweep_alpha


@dataclasses.dataclass(frozen=True, eq=False)
class FrontierPoint:
    """One optimized portfolio, indexed by the (lambda, alpha) that made it."""

    lam: float
    alpha: float
    weights: Weights
    mean_z: float
    risk_z: float
    mean_r: float
    risk_r: float
    esg_star: float
    std_z: float
    cvar_z: float
    std_r: float
    cvar_r: float
    status: str = OPTIMAL


@dataclasses.dataclass(frozen=True, eq=False)
class TangentResult:
    point: FrontierPoint
    zeta_f: float
    slope: float


@dataclasses.dataclass(frozen=True, eq=False)
class RealizedSeries:
    """Out-of-sample portfolio series under both numeraires.

    price[t] = p0 * exp(sum of realized_r through t) and
    esg_price[t] = exp(sum of realized_z through t); the blended numeraire
    starts at 1 by convention.
    """

    dates: tuple
    realized_r: np.ndarray
    realized_z: np.ndarray
    price: np.ndarray
    esg_price: np.ndarray
    esg_score: np.ndarray
    lam: float
    p0: float

    def __post_init__(self):
        n = len(self.dates)
        for name in ("realized_r", "realized_z", "price", "esg_price", "esg_score"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (n,):
                raise ShapeError(f"{name} has shape {arr.shape}, expected ({n},)")


def _risk_columns(series: np.ndarray, beta: float) -> tuple[float, float]:
    std = float(series.std(ddof=1)) if series.size > 1 else 0.0
    return std, sample_cvar(series, beta)


def build_frontier(
    scenarios,
    raw_scores,
    lam: float,
    alpha_grid,
    spec_template: OptimizationSpec,
    *,
    c: float = 255.0,
    score_map=None,
) -> list[FrontierPoint]:
    """Sweep alpha at one lambda and assemble dual-space frontier points.

    ``raw_scores`` are on the 0-100 scale; normalization happens here so
    the portfolio score esg_star can be reported on the raw scale per
    asset-weighted average. Grid points whose solve failed are dropped
    (their reports carry no weights to price).
    """
    raw = np.asarray(raw_scores, dtype=float)
    values = scenarios if isinstance(scenarios, np.ndarray) else scenarios.values
    values = np.asarray(values, dtype=float)
    if raw.ndim != 1 or raw.size != values.shape[1]:
        raise ShapeError(f"{raw.size} scores for {values.shape[1]} assets")
    sigma = normalize_scores(raw, score_map)
    params = EsgBlendParams(lam=lam, c=c)
    blended = blend_scenarios(values, sigma, params)

    reports = sweep_alpha(values, sigma, params, alpha_grid, spec_template)
    points: list[FrontierPoint] = []
    for report in reports:
        if report.weights is None:
            continue
        theta = report.weights.theta
        z = blended @ theta
        r = values @ theta
        std_z, cvar_z = _risk_columns(z, spec_template.beta)
        std_r, cvar_r = _risk_columns(r, spec_template.beta)
        mv = spec_template.risk_measure == "mv"
        points.append(
            FrontierPoint(
                lam=lam,
                alpha=report.alpha,
                weights=report.weights,
                mean_z=float(z.mean()),
                risk_z=std_z if mv else cvar_z,
                mean_r=float(r.mean()),
                risk_r=std_r if mv else cvar_r,
                esg_star=float(theta @ raw),
                std_z=std_z,
                cvar_z=cvar_z,
                std_r=std_r,
                cvar_r=cvar_r,
                status=report.status,
            )
        )
    return points


def tangent_portfolio(frontier, zeta_f: float) -> TangentResult:
    """Pick the frontier point maximizing (mean_z - zeta_f) / risk_z.

    Points with zero risk or non-finite slope cannot define a tangent line
    and are ignored; ties go to the smaller risk_z. All-degenerate
    frontiers raise NoTangentError.
    """
    points = list(frontier)
    if not points:
        raise NoTangentError("empty frontier")
    best: FrontierPoint | None = None
    best_slope = -math.inf
    for point in points:
        if point.risk_z <= 0.0:
            continue
        slope = (point.mean_z - zeta_f) / point.risk_z
        if not math.isfinite(slope):
            continue
        if slope > best_slope or (slope == best_slope and best is not None and point.risk_z < best.risk_z):
            best, best_slope = point, slope
    if best is None:
        raise NoTangentError("no frontier point has positive risk and a finite slope")
    return TangentResult(point=best, zeta_f=float(zeta_f), slope=best_slope)


def realize_series(
    weight_dates,
    weights,
    return_dates,
    returns,
    raw_scores,
    lam: float,
    *,
    c: float = 255.0,
    p0: float = 1.0,
    score_map=None,
) -> RealizedSeries:
    """Apply weights dated t to returns dated t+1 and cumulate both numeraires.

    The alignment contract is a strict chain: the k-th weight date must
    precede the k-th return date, and each subsequent weight date must
    equal the return date it follows (weights are refreshed daily, even if
    only by drift). ``raw_scores`` holds the 0-100 scores in force on each
    weight date, one row per date.
    """
    weight_dates = list(weight_dates)
    return_dates = list(return_dates)
    theta = np.atleast_2d(np.asarray(weights, dtype=float))
    rets = np.atleast_2d(np.asarray(returns, dtype=float))
    raw = np.asarray(raw_scores, dtype=float)
    if raw.ndim == 1:
        raw = np.tile(raw, (len(weight_dates), 1))

    n = len(weight_dates)
    if len(return_dates) != n:
        raise AlignmentError(f"{n} weight dates against {len(return_dates)} return dates")
    if theta.shape[0] != n or rets.shape[0] != n or raw.shape[0] != n:
        raise ShapeError("weights, returns, and scores must have one row per date")
    if theta.shape[1] != rets.shape[1] or theta.shape[1] != raw.shape[1]:
        raise ShapeError("column counts differ between weights, returns, and scores")
    for k in range(n):
        if not weight_dates[k] < return_dates[k]:
            raise AlignmentError(
                f"weight date {weight_dates[k]} does not precede return date {return_dates[k]}"
            )
        if k and weight_dates[k] != return_dates[k - 1]:
            raise AlignmentError(
                f"weight date {weight_dates[k]} skips over return date {return_dates[k - 1]}"
            )
    if not (math.isfinite(p0) and p0 > 0.0):
        raise DomainError(f"p0 must be positive, got {p0}")

    sigma = normalize_scores(raw, score_map)
    params = EsgBlendParams(lam=lam, c=c)
    realized_r = np.einsum("ti,ti->t", theta, rets)
    sigma_star = np.einsum("ti,ti->t", theta, sigma)
    realized_z = esg_valued_return(realized_r, sigma_star, params)
    price = p0 * np.exp(np.cumsum(realized_r))
    esg_price = np.exp(np.cumsum(realized_z))
    esg_score = np.einsum("ti,ti->t", theta, raw)
    return RealizedSeries(
        dates=tuple(return_dates),
        realized_r=realized_r,
        realized_z=realized_z,
        price=price,
        esg_price=esg_price,
        esg_score=esg_score,
        lam=lam,
        p0=float(p0),
    )
