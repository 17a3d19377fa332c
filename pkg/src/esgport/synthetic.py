"""Deterministic synthetic market data for demos and end-to-end tests.

One common factor with GARCH(1,1) volatility plus idiosyncratic noise,
mildly heavy-tailed; yearly ESG releases; a slowly mean-reverting yield
series. Everything is reproducible from the seed.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import os

import numpy as np
import pandas as pd


@dataclasses.dataclass(frozen=True)
class SyntheticMarket:
    prices: pd.DataFrame
    esg: pd.DataFrame
    yields: pd.DataFrame


def generate_market(
    n_assets: int = 5,
    n_days: int = 1530,
    end: dt.date = dt.date(2020, 12, 30),
    seed: int = 11,
) -> SyntheticMarket:
    rng = np.random.Generator(np.random.Philox(seed))
    dates = pd.bdate_range(end=pd.Timestamp(end), periods=n_days).date
    tickers = [f"SYN{k}" for k in range(1, n_assets + 1)]

    beta = rng.uniform(0.7, 1.3, size=n_assets)
    idio_vol = rng.uniform(0.008, 0.014, size=n_assets)
    # Higher-scored names get slightly weaker drift so the ESG/return
    # trade-off is actually present in the data.
    base_score = np.linspace(35.0, 90.0, n_assets)
    rng.shuffle(base_score)
    mu = 5e-4 - 3e-6 * (base_score - 60.0) + rng.normal(0.0, 5e-5, size=n_assets)

    omega, a1, b1 = 1.0e-6, 0.08, 0.90
    h = omega / (1.0 - a1 - b1)
    factor = np.empty(n_days)
    for t in range(n_days):
        z = rng.standard_normal()
        factor[t] = np.sqrt(h) * z
        h = omega + a1 * factor[t] ** 2 + b1 * h

    shocks = rng.standard_t(df=7, size=(n_days, n_assets))
    shocks /= np.sqrt(7.0 / 5.0)
    returns = mu + np.outer(factor, beta) + shocks * idio_vol
    p0 = rng.uniform(40.0, 200.0, size=n_assets)
    prices = p0 * np.exp(np.cumsum(returns, axis=0))

    rows = []
    drop = {(n_days // 3, 1), (n_days // 3 + 1, 1)}
    for t, date in enumerate(dates):
        for j, ticker in enumerate(tickers):
            if (t, j) in drop:
                continue
            rows.append((date.isoformat(), ticker, f"{prices[t, j]:.4f}"))
    prices_df = pd.DataFrame(rows, columns=["date", "ticker", "close"])

    first_year = dates[0].year - 1
    esg_rows = []
    for j, ticker in enumerate(tickers):
        score = base_score[j]
        for year in range(first_year, end.year + 1):
            score = float(np.clip(score + rng.normal(0.0, 2.5), 5.0, 98.0))
            esg_rows.append((dt.date(year, 12, 31).isoformat(), ticker, f"{score:.1f}"))
    esg_df = pd.DataFrame(esg_rows, columns=["release_date", "ticker", "score0to100"])

    y = 0.020
    yield_rows = []
    for date in dates:
        y = float(np.clip(y + 0.05 * (0.018 - y) / 255.0 + rng.normal(0.0, 2e-4), 0.001, 0.06))
        yield_rows.append((date.isoformat(), f"{y:.6f}"))
    yields_df = pd.DataFrame(yield_rows, columns=["date", "annual_yield_decimal"])

    return SyntheticMarket(prices=prices_df, esg=esg_df, yields=yields_df)


def write_csvs(market: SyntheticMarket, out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "prices": os.path.join(out_dir, "prices.csv"),
        "esg": os.path.join(out_dir, "esg.csv"),
        "yields": os.path.join(out_dir, "yields.csv"),
    }
    market.prices.to_csv(paths["prices"], index=False)
    market.esg.to_csv(paths["esg"], index=False)
    market.yields.to_csv(paths["yields"], index=False)
    return paths
