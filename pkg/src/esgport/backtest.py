"""Rolling out-of-sample backtest with turnover-capped reoptimization.

Each trading day the engine holds a model fitted on the trailing return
window, draws a fresh one-step scenario set, and re-solves the portfolio
program against the drifted previous weights. Model fits and scenario
draws depend only on raw returns, so they are shared across every lambda
in the run; only the blended scenario matrix and the resulting solve
differ per lambda.

Accounting follows the linear portfolio-return convention: the daily
portfolio log return is theta . r, value compounds as exp of its sum,
and holdings drift between trades in proportion to exp of each asset's
own return. Transaction costs are debited from value at trade time at
cost_bps per unit of traded notional on each side (the inception
purchase counts as one full buy side), and never enter the optimizer's
objective.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .analytics import (
    PerformanceSummary,
    RrrSuite,
    etl,
    etr,
    max_drawdown,
    moments,
    rrr_suite,
)
from .arma_garch import advance, fit_arma_garch, standardized_residuals
from .config import RunConfig
from .errors import ComputationError, SampleTooSmallError, ShapeError
from .esg_transform import EsgBlendParams, blend_scenarios, esg_valued_riskless
from .frontier import RealizedSeries, realize_series
from .market_data import EsgPanel, ReturnPanel, YieldSeries, normalize_scores
from .nig import fit_joint_nig
from .optimizer import OptimizationSpec, solve
from .scenario_engine import simulate_one_step

# Summary tables use the paper-style 95% tail level regardless of the
# optimizer's beta; the two levels serve different roles.
SUMMARY_BETA = 0.95


@dataclasses.dataclass(frozen=True, eq=False)
class BacktestResult:
    """One portfolio's path through the out-of-sample horizon.

    ``weights`` holds post-trade weights, one row per decision date.
    ``turnover``/``costs`` record the trade executed at each decision
    (index 0 is the inception purchase, turnover 1 by convention).
    ``net_value`` has one extra leading entry: the post-inception value
    on the first decision date, followed by the post-trade value at the
    close of each return date.
    """

    lam: float
    tickers: tuple
    decision_dates: tuple
    return_dates: tuple
    weights: np.ndarray
    turnover: np.ndarray
    costs: np.ndarray
    net_value: np.ndarray
    series: RealizedSeries
    failures: dict

    def __post_init__(self):
        h = len(self.decision_dates)
        if len(self.return_dates) != h:
            raise ShapeError("decision and return date counts differ")
        for name, shape in (
            ("weights", (h, len(self.tickers))),
            ("turnover", (h,)),
            ("costs", (h,)),
            ("net_value", (h + 1,)),
        ):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")


@dataclasses.dataclass(frozen=True, eq=False)
class BacktestBundle:
    """Strategy plus benchmark results, keyed by lambda.

    ``fit_failures`` records refit dates where estimation failed and the
    previous model (advanced daily in the meantime) was kept instead.
    """

    strategy: dict
    ewbh: dict
    index: dict
    config: RunConfig
    fit_failures: dict = dataclasses.field(default_factory=dict)


def _day_seed(seed: int, day: int) -> int:
    return int(np.random.SeedSequence((seed, day)).generate_state(1)[0])


def _drift(theta: np.ndarray, log_returns: np.ndarray) -> np.ndarray:
    grown = theta * np.exp(log_returns)
    return grown / grown.sum()


def _refit(returns: np.ndarray):
    fits = [fit_arma_garch(returns[:, i]) for i in range(returns.shape[1])]
    resid = np.column_stack(
        [standardized_residuals(fit, returns[:, i]) for i, fit in enumerate(fits)]
    )
    return fits, fit_joint_nig(resid)


def run_backtest(
    panel: ReturnPanel,
    esg: EsgPanel,
    yields: YieldSeries,
    config: RunConfig,
    *,
    c: float = 255.0,
) -> BacktestBundle:
    """Run the strategy and both benchmarks over the out-of-sample days.

    ``esg`` must already be filled onto the panel's calendar (one score
    row per return date). Decisions happen at the close of day t and are
    exposed to the return of day t+1; the first allocation is solved
    without a turnover cap, later ones against the drifted holdings. A
    failed solve keeps the drifted weights (no trade) and is recorded
    per date.
    """
    returns = np.asarray(panel.returns, dtype=float)
    t_total, n_assets = returns.shape
    if tuple(esg.tickers) != tuple(panel.tickers):
        raise ShapeError("ESG panel tickers do not match the return panel")
    if tuple(esg.dates) != tuple(panel.calendar.dates):
        raise ShapeError("ESG panel must be filled onto the return calendar")
    window = config.window
    horizon = t_total - window
    if config.horizon > 0:
        horizon = min(horizon, config.horizon)
    if horizon < 1:
        raise SampleTooSmallError(
            f"history holds {t_total} returns; window {window} leaves no out-of-sample days"
        )

    rate = config.cost_bps / 1e4
    k0 = window - 1
    dates = panel.calendar.dates
    decision_dates = dates[k0 : k0 + horizon]
    return_dates = dates[k0 + 1 : k0 + horizon + 1]
    raw_by_day = esg.raw[k0 : k0 + horizon]

    params = {lam: EsgBlendParams(lam=lam, c=c) for lam in config.lambdas}
    weights = {lam: np.empty((horizon, n_assets)) for lam in config.lambdas}
    turnover = {lam: np.zeros(horizon) for lam in config.lambdas}
    costs = {lam: np.zeros(horizon) for lam in config.lambdas}
    net_value = {lam: np.empty(horizon + 1) for lam in config.lambdas}
    failures: dict = {lam: {} for lam in config.lambdas}
    value = {lam: 1.0 for lam in config.lambdas}
    theta_bar = {lam: np.zeros(n_assets) for lam in config.lambdas}

    bh_weights = np.empty((horizon, n_assets))
    bh_value = np.empty(horizon + 1)
    idx_weights = np.tile(np.full(n_assets, 1.0 / n_assets), (horizon, 1))
    idx_value = np.empty(horizon + 1)

    template = OptimizationSpec(
        alpha=config.alpha, risk_measure=config.risk_measure, beta=config.beta
    )
    fits = None
    joint = None
    fit_failures: dict = {}
    for t in range(horizon):
        k = k0 + t
        if t % config.refit_interval == 0:
            try:
                fits, joint = _refit(returns[k - window + 1 : k + 1])
            except ComputationError as exc:
                # A dead first fit is fatal; later ones fall back to the
                # previous model, whose state the daily advance keeps
                # current.
                if fits is None:
                    raise
                fit_failures[dates[k]] = f"{type(exc).__name__}: {exc}"
                fits = [advance(fit, returns[k, i]) for i, fit in enumerate(fits)]
        else:
            fits = [advance(fit, returns[k, i]) for i, fit in enumerate(fits)]

        scen = simulate_one_step(fits, joint, config.n_scenarios, _day_seed(config.seed, t))
        sigma = normalize_scores(raw_by_day[t])
        for lam in config.lambdas:
            blended = blend_scenarios(scen.values, sigma, params[lam])
            if t == 0:
                spec = template
            else:
                spec = dataclasses.replace(
                    template, gamma=config.gamma, prev_weights=theta_bar[lam]
                )
            try:
                theta = solve(blended, spec).weights.theta
            except ComputationError as exc:
                failures[lam][decision_dates[t]] = f"{type(exc).__name__}: {exc}"
                theta = np.full(n_assets, 1.0 / n_assets) if t == 0 else theta_bar[lam]
            tau = float(np.abs(theta - theta_bar[lam]).sum())
            cost = rate * value[lam] * tau
            value[lam] -= cost
            weights[lam][t] = theta
            turnover[lam][t] = tau
            costs[lam][t] = cost
            # Post-trade close value; the entry written after the return
            # accrual below is provisional and is overwritten here once
            # the next trade's cost has been debited.
            net_value[lam][t] = value[lam]

        if t == 0:
            bh_weights[0] = np.full(n_assets, 1.0 / n_assets)
            bh_value[0] = 1.0 - rate * 1.0
            idx_value[0] = 1.0

        r_next = returns[k + 1]
        for lam in config.lambdas:
            value[lam] *= math.exp(float(weights[lam][t] @ r_next))
            net_value[lam][t + 1] = value[lam]
            theta_bar[lam] = _drift(weights[lam][t], r_next)
        bh_value[t + 1] = bh_value[t] * math.exp(float(bh_weights[t] @ r_next))
        idx_value[t + 1] = idx_value[t] * math.exp(float(idx_weights[t] @ r_next))
        if t + 1 < horizon:
            bh_weights[t + 1] = _drift(bh_weights[t], r_next)

    applied_returns = returns[k0 + 1 : k0 + horizon + 1]

    def _result(lam, w, tau, cost, nv, fail) -> BacktestResult:
        series = realize_series(
            decision_dates, w, return_dates, applied_returns, raw_by_day, lam, c=c
        )
        return BacktestResult(
            lam=lam,
            tickers=tuple(panel.tickers),
            decision_dates=tuple(decision_dates),
            return_dates=tuple(return_dates),
            weights=w,
            turnover=tau,
            costs=cost,
            net_value=nv,
            series=series,
            failures=fail,
        )

    zeros = np.zeros(horizon)
    bh_turnover = np.zeros(horizon)
    bh_turnover[0] = 1.0
    bh_costs = np.zeros(horizon)
    bh_costs[0] = rate
    strategy = {
        lam: _result(lam, weights[lam], turnover[lam], costs[lam], net_value[lam], failures[lam])
        for lam in config.lambdas
    }
    ewbh = {
        lam: _result(lam, bh_weights, bh_turnover, bh_costs, bh_value, {})
        for lam in config.lambdas
    }
    index = {
        lam: _result(lam, idx_weights, zeros, zeros, idx_value, {})
        for lam in config.lambdas
    }
    return BacktestBundle(
        strategy=strategy, ewbh=ewbh, index=index, config=config, fit_failures=fit_failures
    )


def riskless_series(yields: YieldSeries, dates, lam: float, *, c: float = 255.0) -> np.ndarray:
    """Blended riskless rate in force on each given date."""
    params = EsgBlendParams(lam=lam, c=c)
    return np.array(
        [esg_valued_riskless(yields.rate_asof(d), params) for d in dates], dtype=float
    )


def _performance(result: BacktestResult, *, c: float) -> PerformanceSummary:
    """Headline statistics on the cost-debited value path.

    Average turnover counts executed trades only, excluding the inception
    purchase; the generic consecutive-weight difference would conflate
    drift with trading for a buy-and-hold path.
    """
    p = result.net_value
    returns = np.diff(np.log(p))
    tot = float(p[-1] / p[0] - 1.0)
    avg_to = float(result.turnover[1:].mean()) if result.turnover.size > 1 else 0.0
    try:
        lower, upper = etl(returns, SUMMARY_BETA), etr(returns, SUMMARY_BETA)
    except SampleTooSmallError:
        lower = upper = float("nan")
    scores = result.series.esg_score
    return PerformanceSummary(
        tot_ret=tot,
        ann_ret=float((1.0 + tot) ** (c / returns.size) - 1.0),
        avg_turnover=avg_to,
        etl=lower,
        etr=upper,
        mdd=max_drawdown(p),
        esg_avg=float(scores.mean()),
        esg_std=float(scores.std(ddof=1)) if scores.size > 1 else 0.0,
    )


def nan_rrr() -> RrrSuite:
    nan = float("nan")
    return RrrSuite(sharpe=nan, sortino=nan, star=nan, rachev=nan, gini=nan)


def summary_tables(bundle: BacktestBundle, yields: YieldSeries, *, c: float = 255.0):
    """Performance, moment, and reward-risk rows for every portfolio.

    Rows are (lambda, portfolio[, numeraire], summary) tuples in a fixed
    order: lambdas as configured, portfolios strategy/ewbh/index. Moment
    and RRR tables carry one row per numeraire; RRR on the plain series
    uses the unblended riskless and on the blended series the lambda's
    own rate, both at the 95% tail level. Horizons under the RRR sample
    floor yield NaN rows rather than an error.
    """
    portfolios = (("strategy", bundle.strategy), ("ewbh", bundle.ewbh), ("index", bundle.index))
    performance, moment_rows, rrr_rows = [], [], []
    for lam in bundle.config.lambdas:
        rates = {
            "r": riskless_series(yields, bundle.strategy[lam].decision_dates, 0.0, c=c),
            "z": riskless_series(yields, bundle.strategy[lam].decision_dates, lam, c=c),
        }
        for name, results in portfolios:
            result = results[lam]
            performance.append((lam, name, _performance(result, c=c)))
            for numeraire, series in (("r", result.series.realized_r), ("z", result.series.realized_z)):
                moment_rows.append((lam, name, numeraire, moments(series)))
                try:
                    suite = rrr_suite(series, rates[numeraire], SUMMARY_BETA)
                except SampleTooSmallError:
                    suite = nan_rrr()
                rrr_rows.append((lam, name, numeraire, suite))
    return performance, moment_rows, rrr_rows
