"""Command-line front end: ingestion through optimization to artifacts.

Every command reads the three input CSVs named in the config, writes its
artifacts plus a resolved-config echo into the output directory, and
exits 0 on success, 1 on a computation failure, or 2 on bad input. Errors
are reported as a single JSON object on stdout so callers can parse them.
Floats are serialized with shortest-roundtrip repr and a fixed line
terminator, so identical config and seed reproduce artifacts byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os

import numpy as np

from .analytics import etl, etr, max_drawdown, moments, rrr_suite
from .arma_garch import fit_arma_garch, standardized_residuals
from .backtest import (
    SUMMARY_BETA,
    BacktestResult,
    nan_rrr,
    run_backtest,
    summary_tables,
)
from .config import RunConfig, config_to_json, load_config
from .errors import ComputationError, InputError, ParseError, SampleTooSmallError
from .esg_transform import EsgBlendParams, esg_valued_riskless
from .frontier import build_frontier, tangent_portfolio
from .market_data import (
    compute_returns,
    fill_daily_scores,
    load_esg,
    load_prices,
    load_yields,
    normalize_scores,
)
from .nig import fit_joint_nig
from .optimizer import OptimizationSpec
from .option_pricer import implied_vol_grid, surface
from .scenario_engine import simulate_one_step, simulate_trajectories
from .shadow_rate import srr_series

OPTION_T_GRID = tuple(int(t) for t in np.linspace(15, 252, 15).round())
OPTION_M_GRID = tuple(round(0.5 + 0.1 * j, 1) for j in range(11))


def _fmt(value) -> str:
    # np scalars subclass float but repr as np.float64(...); the builtin
    # conversion gives the shortest-roundtrip form for both.
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _lam_tag(lam: float) -> str:
    return repr(float(lam))


def _prepare_out_dir(config: RunConfig) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, "config.json"), "w", encoding="utf-8") as handle:
        handle.write(config_to_json(config))
    return config.out_dir


def _require_file(path: str, role: str) -> str:
    if not os.path.exists(path):
        raise ParseError(f"{role} file not found: {path}")
    return path


def _load_inputs(config: RunConfig):
    prices = load_prices(_require_file(config.prices_path, "price"))
    returns = compute_returns(prices)
    esg = fill_daily_scores(
        load_esg(_require_file(config.esg_path, "ESG score")), returns.calendar
    )
    yields = load_yields(_require_file(config.yields_path, "yield"))
    return prices, returns, esg, yields


def _day_seed(seed: int, day: int) -> int:
    return int(np.random.SeedSequence((seed, day)).generate_state(1)[0])


def _fit_window(returns: np.ndarray, window: int):
    t_total = returns.shape[0]
    if t_total < window:
        raise SampleTooSmallError(f"history holds {t_total} returns, window needs {window}")
    tail = returns[t_total - window :]
    fits = [fit_arma_garch(tail[:, i]) for i in range(tail.shape[1])]
    resid = np.column_stack(
        [standardized_residuals(fit, tail[:, i]) for i, fit in enumerate(fits)]
    )
    return fits, fit_joint_nig(resid)


def cmd_ingest(config: RunConfig) -> int:
    prices, returns, esg, yields = _load_inputs(config)
    out = config.out_dir
    dates = prices.calendar.dates
    _write_csv(
        os.path.join(out, "aligned_prices.csv"),
        ["date", *prices.tickers],
        ([d.isoformat(), *prices.prices[i]] for i, d in enumerate(dates)),
    )
    _write_csv(
        os.path.join(out, "returns.csv"),
        ["date", *returns.tickers],
        ([d.isoformat(), *returns.returns[i]] for i, d in enumerate(returns.calendar.dates)),
    )
    _write_csv(
        os.path.join(out, "esg_daily.csv"),
        ["date", *esg.tickers],
        ([d.isoformat(), *esg.raw[i]] for i, d in enumerate(esg.dates)),
    )
    _write_csv(
        os.path.join(out, "riskless_daily.csv"),
        ["date", "annual_yield", "daily_rate"],
        (
            [d.isoformat(), yields.annual_yield[i], yields.daily_rate[i]]
            for i, d in enumerate(yields.calendar.dates)
        ),
    )
    _write_json(
        os.path.join(out, "ingest_report.json"),
        {
            "n_dates": len(dates),
            "tickers": list(prices.tickers),
            "first_date": dates[0].isoformat(),
            "last_date": dates[-1].isoformat(),
            "filled_price_cells": int(prices.filled.sum()),
            "rejected_rows": prices.rejected,
            "esg_releases": len(esg.release_dates),
        },
    )
    return 0


def _frontier_rows(points):
    for p in points:
        yield [
            p.lam,
            p.alpha,
            p.mean_z,
            p.risk_z,
            p.mean_r,
            p.risk_r,
            p.std_z,
            p.cvar_z,
            p.std_r,
            p.cvar_r,
            p.esg_star,
            p.status,
            *p.weights.theta,
        ]


def _frontier_header(tickers):
    return [
        "lambda",
        "alpha",
        "mean_z",
        "risk_z",
        "mean_r",
        "risk_r",
        "std_z",
        "cvar_z",
        "std_r",
        "cvar_r",
        "esg_star",
        "status",
        *(f"w_{t}" for t in tickers),
    ]


def _build_frontiers(config: RunConfig):
    """Shared by the frontier and tangent commands: fit the trailing
    window once, then sweep the alpha grid per lambda."""
    prices, returns, esg, yields = _load_inputs(config)
    fits, joint = _fit_window(returns.returns, config.window)
    last_index = returns.returns.shape[0] - 1
    scen = simulate_one_step(
        fits, joint, config.n_scenarios, _day_seed(config.seed, last_index)
    )
    raw_scores = esg.raw[-1]
    template = OptimizationSpec(
        alpha=0.0, risk_measure=config.risk_measure, beta=config.beta
    )
    frontiers = {
        lam: build_frontier(scen.values, raw_scores, lam, config.alpha_grid, template)
        for lam in config.lambdas
    }
    return returns, yields, frontiers


def cmd_frontier(config: RunConfig) -> int:
    returns, _, frontiers = _build_frontiers(config)
    header = _frontier_header(returns.tickers)
    for lam, points in frontiers.items():
        _write_csv(
            os.path.join(config.out_dir, f"frontier_lam{_lam_tag(lam)}.csv"),
            header,
            _frontier_rows(points),
        )
    return 0


def cmd_tangent(config: RunConfig) -> int:
    returns, yields, frontiers = _build_frontiers(config)
    last_date = returns.calendar.dates[-1]
    rows = []
    for lam in config.lambdas:
        zeta_f = esg_valued_riskless(yields.rate_asof(last_date), EsgBlendParams(lam=lam))
        result = tangent_portfolio(frontiers[lam], zeta_f)
        p = result.point
        rows.append(
            [
                lam,
                p.alpha,
                result.slope,
                result.zeta_f,
                p.mean_z,
                p.risk_z,
                p.esg_star,
                "slope<0" if result.slope < 0.0 else "",
                *p.weights.theta,
            ]
        )
    _write_csv(
        os.path.join(config.out_dir, "tangent.csv"),
        [
            "lambda",
            "alpha",
            "slope",
            "zeta_f",
            "mean_z",
            "risk_z",
            "esg_star",
            "note",
            *(f"w_{t}" for t in returns.tickers),
        ],
        rows,
    )
    return 0


def cmd_backtest(config: RunConfig) -> int:
    _, returns, esg, yields = _load_inputs(config)
    bundle = run_backtest(returns, esg, yields, config)
    out = config.out_dir
    for name, results in (
        ("realized", bundle.strategy),
        ("ewbh", bundle.ewbh),
        ("index", bundle.index),
    ):
        for lam, result in results.items():
            tag = _lam_tag(lam)
            _write_csv(
                os.path.join(out, f"{name}_lam{tag}.csv"),
                [
                    "date",
                    "realized_r",
                    "realized_z",
                    "price",
                    "esg_price",
                    "esg_score",
                    "net_value",
                    "turnover",
                    "cost",
                ],
                _realized_rows(result),
            )
            if name == "realized":
                _write_csv(
                    os.path.join(out, f"weights_lam{tag}.csv"),
                    ["date", *(f"w_{t}" for t in result.tickers)],
                    (
                        [d.isoformat(), *result.weights[t]]
                        for t, d in enumerate(result.decision_dates)
                    ),
                )
    performance, moment_rows, rrr_rows = summary_tables(bundle, yields)
    _write_csv(
        os.path.join(out, "performance.csv"),
        [
            "lambda",
            "portfolio",
            "tot_ret",
            "ann_ret",
            "avg_turnover",
            "etl95",
            "etr95",
            "mdd",
            "esg_avg",
            "esg_std",
        ],
        (
            [lam, name, *dataclasses.astuple(summary)]
            for lam, name, summary in performance
        ),
    )
    _write_csv(
        os.path.join(out, "moments.csv"),
        ["lambda", "portfolio", "numeraire", "mean", "median", "std", "skew", "excess_kurtosis"],
        (
            [lam, name, numeraire, *dataclasses.astuple(summary)]
            for lam, name, numeraire, summary in moment_rows
        ),
    )
    _write_csv(
        os.path.join(out, "rrr.csv"),
        ["lambda", "portfolio", "numeraire", "sharpe", "sortino", "star", "rachev", "gini"],
        (
            [lam, name, numeraire, *dataclasses.astuple(suite)]
            for lam, name, numeraire, suite in rrr_rows
        ),
    )
    _write_json(
        os.path.join(out, "backtest_failures.json"),
        {
            "fit": {d.isoformat(): msg for d, msg in bundle.fit_failures.items()},
            "solve": {
                _lam_tag(lam): {d.isoformat(): msg for d, msg in result.failures.items()}
                for lam, result in bundle.strategy.items()
            },
        },
    )
    return 0


def _realized_rows(result: BacktestResult):
    """Inception row first (no return yet), then one row per return date.

    ``turnover``/``cost`` on a row are the trade executed at that date's
    close; the final return date never trades.
    """
    inception = result.decision_dates[0]
    nan = float("nan")
    yield [
        inception.isoformat(),
        nan,
        nan,
        result.series.p0,
        1.0,
        result.series.esg_score[0],
        result.net_value[0],
        result.turnover[0],
        result.costs[0],
    ]
    h = len(result.return_dates)
    s = result.series
    for t, d in enumerate(result.return_dates):
        traded = t + 1 < h
        yield [
            d.isoformat(),
            s.realized_r[t],
            s.realized_z[t],
            s.price[t],
            s.esg_price[t],
            s.esg_score[t],
            result.net_value[t + 1],
            result.turnover[t + 1] if traded else 0.0,
            result.costs[t + 1] if traded else 0.0,
        ]


def cmd_price_options(config: RunConfig) -> int:
    prices, returns, esg, yields = _load_inputs(config)
    tickers = list(returns.tickers)
    if config.ticker:
        if config.ticker not in tickers:
            raise ParseError(f"unknown ticker {config.ticker!r}; have {', '.join(tickers)}")
        tickers = [config.ticker]
    last_date = returns.calendar.dates[-1]
    header = [
        "maturity",
        "moneyness",
        "strike",
        "call",
        "put",
        "iv_call",
        "iv_put",
        "status",
    ]
    for name in tickers:
        i = returns.tickers.index(name)
        t_total = returns.returns.shape[0]
        if t_total < config.window:
            raise SampleTooSmallError(
                f"history holds {t_total} returns, window needs {config.window}"
            )
        fit = fit_arma_garch(returns.returns[t_total - config.window :, i])
        spot = float(prices.prices[-1, i])
        score = float(esg.normalized[-1, i])
        for lam in config.lambdas:
            blend = EsgBlendParams(lam=lam)
            ensemble = simulate_trajectories(
                fit,
                fit.innovation,
                t_max=max(OPTION_T_GRID),
                n_scenarios=config.n_scenarios,
                seed=_day_seed(config.seed, i),
                t_min=min(OPTION_T_GRID),
                blend=blend,
                score=score,
                spot=spot,
            )
            zeta_f = esg_valued_riskless(yields.rate_asof(last_date), blend)
            surf = surface(ensemble, zeta_f, OPTION_T_GRID, OPTION_M_GRID, lam)
            iv_calls, iv_puts, flags = implied_vol_grid(surf)
            rows = []
            for a, maturity in enumerate(surf.maturities):
                for b, m in enumerate(surf.moneyness):
                    if a in surf.failures:
                        status = surf.failures[a]
                    else:
                        notes = [
                            flags[key]
                            for key in ((a, b, "call"), (a, b, "put"))
                            if key in flags
                        ]
                        status = "; ".join(notes)
                    rows.append(
                        [
                            int(maturity),
                            m,
                            m * spot,
                            surf.calls[a, b],
                            surf.puts[a, b],
                            iv_calls[a, b],
                            iv_puts[a, b],
                            status,
                        ]
                    )
            _write_csv(
                os.path.join(config.out_dir, f"options_{name}_lam{_lam_tag(lam)}.csv"),
                header,
                rows,
            )
    return 0


def cmd_srr(config: RunConfig) -> int:
    _, returns, esg, yields = _load_inputs(config)
    failures = {}
    for lam in config.lambdas:
        series = srr_series(returns, esg, lam, config.window)
        _write_csv(
            os.path.join(config.out_dir, f"srr_lam{_lam_tag(lam)}.csv"),
            ["date", "srr", "ir"],
            (
                [d.isoformat(), sol.srr, sol.ir]
                for d, sol in zip(series.dates, series.solutions)
            ),
        )
        failures[_lam_tag(lam)] = {
            d.isoformat(): msg for d, msg in series.failures.items()
        }
    _write_json(os.path.join(config.out_dir, "srr_failures.json"), failures)
    return 0


def _read_realized_csv(path: str):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        needed = {"date", "realized_r", "realized_z", "net_value", "turnover", "esg_score"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            missing = sorted(needed - set(reader.fieldnames or ()))
            raise ParseError(f"{path} is missing columns: {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ParseError(f"{path} holds no data rows")
    try:
        table = {
            name: np.array([float(row[name]) for row in rows])
            for name in ("realized_r", "realized_z", "net_value", "turnover", "esg_score")
        }
    except ValueError as exc:
        raise ParseError(f"{path} holds a non-numeric cell: {exc}") from exc
    return table


def cmd_report(config: RunConfig) -> int:
    """Summary tables for one realized-series CSV (as written by backtest).

    STAR uses the constant ``rate`` from the config; the backtest's own
    rrr.csv uses the dated blended rates instead.
    """
    if not config.input_path:
        raise ParseError("report needs input_path (--input): a realized-series CSV")
    table = _read_realized_csv(_require_file(config.input_path, "input"))
    live = ~np.isnan(table["realized_r"])
    realized_r = table["realized_r"][live]
    realized_z = table["realized_z"][live]
    if realized_r.size < 1:
        raise ParseError("input holds no return rows")
    net_value = table["net_value"]
    net_returns = np.diff(np.log(net_value))
    tot = float(net_value[-1] / net_value[0] - 1.0)
    turnover = table["turnover"]
    try:
        lower, upper = etl(net_returns, SUMMARY_BETA), etr(net_returns, SUMMARY_BETA)
    except SampleTooSmallError:
        lower = upper = float("nan")
    _write_csv(
        os.path.join(config.out_dir, "report_performance.csv"),
        ["tot_ret", "ann_ret", "avg_turnover", "etl95", "etr95", "mdd", "esg_avg", "esg_std"],
        [
            [
                tot,
                float((1.0 + tot) ** (255.0 / max(net_returns.size, 1)) - 1.0),
                float(turnover[1:].mean()) if turnover.size > 1 else 0.0,
                lower,
                upper,
                max_drawdown(net_value),
                float(table["esg_score"].mean()),
                float(table["esg_score"].std(ddof=1)) if table["esg_score"].size > 1 else 0.0,
            ]
        ],
    )
    _write_csv(
        os.path.join(config.out_dir, "report_moments.csv"),
        ["numeraire", "mean", "median", "std", "skew", "excess_kurtosis"],
        (
            [numeraire, *dataclasses.astuple(moments(series))]
            for numeraire, series in (("r", realized_r), ("z", realized_z))
        ),
    )
    rrr_out = []
    for numeraire, series in (("r", realized_r), ("z", realized_z)):
        try:
            suite = rrr_suite(series, config.rate, SUMMARY_BETA)
        except SampleTooSmallError:
            suite = nan_rrr()
        rrr_out.append([numeraire, *dataclasses.astuple(suite)])
    _write_csv(
        os.path.join(config.out_dir, "report_rrr.csv"),
        ["numeraire", "sharpe", "sortino", "star", "rachev", "gini"],
        rrr_out,
    )
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "frontier": cmd_frontier,
    "backtest": cmd_backtest,
    "tangent": cmd_tangent,
    "price-options": cmd_price_options,
    "srr": cmd_srr,
    "report": cmd_report,
}


def _parse_lambdas(text: str) -> tuple:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lambda list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the RNG seed")
    common.add_argument("--out-dir", dest="out_dir", help="artifact directory")

    parser = argparse.ArgumentParser(
        prog="esgport",
        description="ESG-valued portfolio construction, pricing, and rate extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common], help="validate and align the input data")

    p = sub.add_parser("frontier", parents=[common], help="efficient frontier per lambda")
    p.add_argument("--lambdas", "--lambda", dest="lambdas", type=_parse_lambdas)
    p.add_argument("--risk", dest="risk_measure", choices=("mv", "mcvar"))
    p.add_argument("--beta", type=float)

    p = sub.add_parser("backtest", parents=[common], help="rolling out-of-sample backtest")
    p.add_argument("--lambdas", "--lambda", dest="lambdas", type=_parse_lambdas)
    p.add_argument("--risk", dest="risk_measure", choices=("mv", "mcvar"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("tangent", parents=[common], help="tangent portfolio per lambda")
    p.add_argument("--lambdas", "--lambda", dest="lambdas", type=_parse_lambdas)
    p.add_argument("--risk", dest="risk_measure", choices=("mv", "mcvar"))

    p = sub.add_parser("price-options", parents=[common], help="option surfaces per ticker")
    p.add_argument("--lambdas", "--lambda", dest="lambdas", type=_parse_lambdas)
    p.add_argument("--ticker")

    p = sub.add_parser("srr", parents=[common], help="shadow riskless rate series")
    p.add_argument("--lambdas", "--lambda", dest="lambdas", type=_parse_lambdas)
    p.add_argument("--window", type=int)

    p = sub.add_parser("report", parents=[common], help="summary tables for a realized series")
    p.add_argument("--input", dest="input_path", help="realized-series CSV")
    p.add_argument("--rate", type=float, help="constant riskless rate for STAR")

    return parser


_OVERRIDE_FIELDS = (
    "seed",
    "out_dir",
    "lambdas",
    "risk_measure",
    "beta",
    "alpha",
    "horizon",
    "ticker",
    "window",
    "input_path",
    "rate",
)


def _emit_error(command: str, exc: Exception) -> None:
    print(
        json.dumps(
            {"command": command, "error": type(exc).__name__, "message": str(exc)},
            sort_keys=True,
        )
    )


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    command = ns.command
    try:
        overrides = {
            name: getattr(ns, name)
            for name in _OVERRIDE_FIELDS
            if getattr(ns, name, None) is not None
        }
        config = load_config(ns.config, overrides)
        _prepare_out_dir(config)
        return COMMANDS[command](config)
    except InputError as exc:
        _emit_error(command, exc)
        return 2
    except ComputationError as exc:
        _emit_error(command, exc)
        return 1
    except OSError as exc:
        _emit_error(command, exc)
        return 2
