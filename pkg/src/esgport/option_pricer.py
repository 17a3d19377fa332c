"""European option valuation on simulated price paths.

The physical measure puts probability ``p_s`` (uniform by default) on each
simulated path.  A risk-neutral measure ``q`` is obtained by minimizing the
Kullback-Leibler divergence of ``q`` from ``p`` subject to normalization and
the martingale constraint that the q-expected discounted terminal price equal
today's spot.  The minimizer is an exponential tilt

    q_s = p_s exp(eta * y_s) / sum_u p_u exp(eta * y_u),

where ``y_s`` is the discounted terminal price of path ``s`` and ``eta`` is
the unique root of the martingale equation.  Finding ``eta`` is a bounded
one-dimensional root-find, and the tilt form keeps every q_s strictly inside
(0, 1) by construction.

Discounting is ``exp(-zeta_f * horizon)`` with the rate per trading day and
the horizon in trading days.  Black-Scholes implied volatilities annualize
both with ``DAYS_PER_YEAR``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import optimize, stats

from .errors import (
    DomainError,
    InfeasibleMartingaleError,
    NoArbitrageBoundError,
    PricingError,
    ShapeError,
)

DAYS_PER_YEAR = 255.0

IV_SIGMA_LO = 1e-6
IV_SIGMA_HI = 5.0
IV_PRICE_TOL = 1e-8

_MARTINGALE_TOL = 1e-9
_MAX_BRACKET_DOUBLINGS = 200


@dataclass(frozen=True, eq=False)
class RiskNeutralWeights:
    """Exponential-tilt measure over simulated paths.

    ``tilt`` is the Lagrange multiplier of the martingale constraint; zero
    means the physical measure already prices the forward correctly.
    """

    q: np.ndarray
    kl_divergence: float
    tilt: float
    diagnostics: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size < 1:
            raise ShapeError("q must be a non-empty 1-d probability vector")
        if not np.all(np.isfinite(q)):
            raise DomainError("q contains non-finite entries")
        if np.any(q <= 0.0) or np.any(q >= 1.0):
            if q.size == 1 and q[0] == 1.0:
                pass  # single-path measure is the whole simplex
            else:
                raise DomainError("risk-neutral weights must lie strictly in (0, 1)")
        if abs(float(q.sum()) - 1.0) > 1e-12:
            raise DomainError("risk-neutral weights must sum to 1 within 1e-12")
        if not math.isfinite(self.kl_divergence) or self.kl_divergence < -1e-15:
            raise DomainError("kl_divergence must be finite and non-negative")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True, eq=False)
class OptionSurface:
    """Call/put value grids over maturity (rows) and moneyness (columns).

    Values are in the same currency units as ``spot``; strikes are
    ``moneyness * spot``.  Cells belonging to a maturity whose risk-neutral
    solve failed hold NaN and the failure message is recorded under that
    maturity's index in ``failures``.
    """

    maturities: tuple[int, ...]
    moneyness: tuple[float, ...]
    calls: np.ndarray
    puts: np.ndarray
    spot: float
    zeta_f: float
    lam: float
    numeraire: str
    failures: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        shape = (len(self.maturities), len(self.moneyness))
        calls = np.asarray(self.calls, dtype=float)
        puts = np.asarray(self.puts, dtype=float)
        if calls.shape != shape or puts.shape != shape:
            raise ShapeError(
                f"value grids must have shape {shape}, got {calls.shape} and {puts.shape}"
            )
        object.__setattr__(self, "calls", calls)
        object.__setattr__(self, "puts", puts)


def _tilted_stats(eta: float, y: np.ndarray, log_p: np.ndarray) -> tuple[float, float]:
    """Mean and variance of ``y`` under the eta-tilted measure."""
    z = log_p + eta * y
    z -= z.max()
    w = np.exp(z)
    w /= w.sum()
    mean = float(w @ y)
    var = float(w @ np.square(y - mean))
    return mean, var


def solve_risk_neutral(
    terminal_prices: np.ndarray,
    zeta_f: float,
    horizon: float,
    spot: float,
    p: np.ndarray | None = None,
) -> RiskNeutralWeights:
    """Minimum-KL measure satisfying the martingale constraint.

    ``terminal_prices`` are path prices at the valuation horizon (in days);
    ``spot`` must lie strictly inside the convex hull of the discounted
    terminal prices, otherwise no interior measure can reprice it and
    InfeasibleMartingaleError reports the hull bounds.
    """
    prices = np.asarray(terminal_prices, dtype=float)
    if prices.ndim != 1 or prices.size < 1:
        raise ShapeError("terminal_prices must be a non-empty 1-d array")
    if not np.all(np.isfinite(prices)) or np.any(prices <= 0.0):
        raise DomainError("terminal prices must be finite and positive")
    if not math.isfinite(spot) or spot <= 0.0:
        raise DomainError(f"spot must be positive, got {spot}")
    if not math.isfinite(horizon) or horizon <= 0.0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if not math.isfinite(zeta_f):
        raise DomainError("zeta_f must be finite")

    n = prices.size
    if p is None:
        p_vec = np.full(n, 1.0 / n)
    else:
        p_vec = np.asarray(p, dtype=float)
        if p_vec.shape != prices.shape:
            raise ShapeError("p must match terminal_prices in length")
        if np.any(p_vec <= 0.0) or not np.all(np.isfinite(p_vec)):
            raise DomainError("p must be strictly positive and finite")
        if abs(float(p_vec.sum()) - 1.0) > 1e-9:
            raise DomainError("p must sum to 1")
        p_vec = p_vec / p_vec.sum()

    y = prices * math.exp(-zeta_f * horizon)
    lo, hi = float(y.min()), float(y.max())
    scale = max(abs(spot), 1.0)

    if not (lo < spot < hi):
        # A flat discounted price equal to spot is the degenerate feasible
        # case: the prior already satisfies the constraint.
        if hi - lo <= 1e-12 * scale and abs(float(p_vec @ y) - spot) <= 1e-12 * scale:
            return RiskNeutralWeights(
                q=p_vec.copy(),
                kl_divergence=0.0,
                tilt=0.0,
                diagnostics={"residual": 0.0, "hull": (lo, hi), "degenerate": True},
            )
        raise InfeasibleMartingaleError(
            f"spot {spot} lies outside the hull of discounted terminal prices "
            f"[{lo}, {hi}]; no interior martingale measure exists"
        )

    log_p = np.log(p_vec)

    def residual(eta: float) -> float:
        mean, _ = _tilted_stats(eta, y, log_p)
        return mean - spot

    r0 = residual(0.0)
    if r0 == 0.0:
        eta_root = 0.0
    else:
        # The tilted mean is strictly increasing in eta and sweeps (lo, hi),
        # so a sign change exists; expand geometrically until bracketed.
        step = 1.0 / max(float(y.std()), 1e-12)
        if r0 < 0.0:
            a, b = 0.0, step
            while residual(b) < 0.0:
                a, b = b, b * 2.0
                if b > step * 2.0**_MAX_BRACKET_DOUBLINGS:
                    raise PricingError("could not bracket the martingale root")
        else:
            a, b = -step, 0.0
            while residual(a) > 0.0:
                a, b = a * 2.0, a
                if a < -step * 2.0**_MAX_BRACKET_DOUBLINGS:
                    raise PricingError("could not bracket the martingale root")
        eta_root = float(
            optimize.brentq(residual, a, b, xtol=1e-24, rtol=1e-15, maxiter=300)
        )

    # Newton polish: the residual derivative is the tilted variance.
    for _ in range(3):
        mean, var = _tilted_stats(eta_root, y, log_p)
        err = mean - spot
        if abs(err) <= 1e-14 * scale or var <= 0.0:
            break
        eta_root -= err / var

    z = log_p + eta_root * y
    z_max = z.max()
    w = np.exp(z - z_max)
    q = w / w.sum()
    res = abs(float(q @ y) - spot)
    if res > _MARTINGALE_TOL * scale:
        raise PricingError(
            f"martingale equation solved to {res:.3e} only (tolerance "
            f"{_MARTINGALE_TOL * scale:.3e}); spot may be too close to the hull boundary"
        )
    kl = float(np.sum(q * (np.log(q) - log_p)))
    return RiskNeutralWeights(
        q=q,
        kl_divergence=max(kl, 0.0),
        tilt=eta_root,
        diagnostics={"residual": res, "hull": (lo, hi), "degenerate": False},
    )


def value_options(
    terminal_prices: np.ndarray,
    weights: RiskNeutralWeights,
    strikes: np.ndarray,
    zeta_f: float,
    horizon: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Discounted q-expected payoffs, one (call, put) pair per strike."""
    prices = np.asarray(terminal_prices, dtype=float)
    strikes_arr = np.atleast_1d(np.asarray(strikes, dtype=float))
    if prices.ndim != 1:
        raise ShapeError("terminal_prices must be 1-d")
    if weights.q.shape != prices.shape:
        raise ShapeError("weights were solved for a different number of paths")
    if strikes_arr.ndim != 1:
        raise ShapeError("strikes must be 1-d")
    if np.any(strikes_arr < 0.0) or not np.all(np.isfinite(strikes_arr)):
        raise DomainError("strikes must be finite and non-negative")
    discount = math.exp(-zeta_f * horizon)
    diff = prices[:, None] - strikes_arr[None, :]
    calls = discount * (weights.q @ np.maximum(diff, 0.0))
    puts = discount * (weights.q @ np.maximum(-diff, 0.0))
    return calls, puts


def surface(
    ensemble,
    zeta_f: float,
    t_grid,
    m_grid,
    lam: float,
    p: np.ndarray | None = None,
) -> OptionSurface:
    """Value calls and puts over a maturity-by-moneyness grid.

    ``ensemble`` supplies simulated prices via ``prices_at(horizon)`` and the
    ``spot`` they start from; whether those prices are plain or ESG-valued was
    decided when the paths were simulated, so ``lam`` here is a label carried
    onto the surface, not a transformation.
    """
    maturities = tuple(int(t) for t in t_grid)
    moneyness = tuple(float(m) for m in m_grid)
    if len(maturities) == 0 or len(moneyness) == 0:
        raise ShapeError("t_grid and m_grid must be non-empty")
    if any(t <= 0 for t in maturities):
        raise DomainError("maturities must be positive")
    if any(m <= 0.0 for m in moneyness):
        raise DomainError("moneyness must be positive")
    t_lo = getattr(ensemble, "t_min", None)
    t_hi = getattr(ensemble, "t_max", None)
    if t_lo is not None and (min(maturities) < t_lo or max(maturities) > t_hi):
        raise DomainError(
            f"maturity grid [{min(maturities)}, {max(maturities)}] exceeds the "
            f"simulated horizon band [{t_lo}, {t_hi}]"
        )

    spot = float(ensemble.spot)
    strikes = np.array([m * spot for m in moneyness])
    calls = np.full((len(maturities), len(moneyness)), np.nan)
    puts = np.full_like(calls, np.nan)
    failures: dict[int, str] = {}

    for i, t in enumerate(maturities):
        try:
            terminal = ensemble.prices_at(t)
            weights = solve_risk_neutral(terminal, zeta_f, float(t), spot, p=p)
            calls[i], puts[i] = value_options(
                terminal, weights, strikes, zeta_f, float(t)
            )
        except PricingError as exc:
            failures[i] = f"{type(exc).__name__}: {exc}"

    return OptionSurface(
        maturities=maturities,
        moneyness=moneyness,
        calls=calls,
        puts=puts,
        spot=spot,
        zeta_f=zeta_f,
        lam=lam,
        numeraire="esg-valued" if lam != 0.0 else "plain-return",
        failures=failures,
    )


def _bs_price(
    sigma: float, spot: float, strike: float, t_years: float, rate: float, kind: str
) -> float:
    sqrt_t = math.sqrt(t_years)
    d1 = (math.log(spot / strike) + (rate + 0.5 * sigma * sigma) * t_years) / (
        sigma * sqrt_t
    )
    d2 = d1 - sigma * sqrt_t
    disc_k = strike * math.exp(-rate * t_years)
    if kind == "call":
        return spot * stats.norm.cdf(d1) - disc_k * stats.norm.cdf(d2)
    return disc_k * stats.norm.cdf(-d2) - spot * stats.norm.cdf(-d1)


def implied_vol(
    value: float,
    spot: float,
    strike: float,
    horizon: float,
    zeta_f: float,
    kind: str = "call",
    days_per_year: float = DAYS_PER_YEAR,
) -> float:
    """Annualized Black-Scholes volatility reproducing ``value``.

    The per-day rate and day-count horizon are annualized with
    ``days_per_year`` before inversion.  Values at the no-arbitrage boundary
    pin the result to the bracket edge (1e-6 or 5.0) rather than failing;
    values outside the bounds raise NoArbitrageBoundError.
    """
    if kind not in ("call", "put"):
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    if spot <= 0.0 or strike <= 0.0 or horizon <= 0.0:
        raise DomainError("spot, strike and horizon must be positive")
    if not math.isfinite(value):
        raise DomainError("option value must be finite")

    rate = zeta_f * days_per_year
    t_years = horizon / days_per_year
    disc_k = strike * math.exp(-rate * t_years)
    if kind == "call":
        lower, upper = max(spot - disc_k, 0.0), spot
    else:
        lower, upper = max(disc_k - spot, 0.0), disc_k

    slack = IV_PRICE_TOL * max(1.0, spot)
    if value < lower - slack or value > upper + slack:
        raise NoArbitrageBoundError(
            f"{kind} value {value} violates no-arbitrage bounds "
            f"[{lower}, {upper}] for spot {spot}, strike {strike}"
        )

    def gap(sigma: float) -> float:
        return _bs_price(sigma, spot, strike, t_years, rate, kind) - value

    g_lo = gap(IV_SIGMA_LO)
    if g_lo >= 0.0:
        return IV_SIGMA_LO  # at or below the zero-vol price: pinned low
    g_hi = gap(IV_SIGMA_HI)
    if g_hi <= 0.0:
        return IV_SIGMA_HI  # beyond the sigma=5 price: pinned high

    sigma = float(
        optimize.brentq(gap, IV_SIGMA_LO, IV_SIGMA_HI, xtol=1e-12, rtol=1e-15, maxiter=200)
    )
    if abs(gap(sigma)) > IV_PRICE_TOL * max(1.0, value):
        raise PricingError(
            f"implied volatility root-find stalled at price error {abs(gap(sigma)):.3e}"
        )
    return sigma


def implied_vol_grid(
    surf: OptionSurface, days_per_year: float = DAYS_PER_YEAR
) -> tuple[np.ndarray, np.ndarray, dict[tuple[int, int, str], str]]:
    """Invert every surface cell; NaN plus a flag where inversion fails.

    Flags are keyed (maturity index, moneyness index, kind) and record
    boundary pins as well as outright failures.
    """
    iv_calls = np.full_like(surf.calls, np.nan)
    iv_puts = np.full_like(surf.puts, np.nan)
    flags: dict[tuple[int, int, str], str] = {}
    for i, t in enumerate(surf.maturities):
        if i in surf.failures:
            continue
        for j, m in enumerate(surf.moneyness):
            strike = m * surf.spot
            for kind, grid, values in (
                ("call", iv_calls, surf.calls),
                ("put", iv_puts, surf.puts),
            ):
                try:
                    sigma = implied_vol(
                        float(values[i, j]),
                        surf.spot,
                        strike,
                        float(t),
                        surf.zeta_f,
                        kind=kind,
                        days_per_year=days_per_year,
                    )
                except (DomainError, PricingError) as exc:
                    flags[(i, j, kind)] = f"{type(exc).__name__}: {exc}"
                    continue
                grid[i, j] = sigma
                if sigma in (IV_SIGMA_LO, IV_SIGMA_HI):
                    flags[(i, j, kind)] = "pinned at bracket edge"
    return iv_calls, iv_puts, flags
