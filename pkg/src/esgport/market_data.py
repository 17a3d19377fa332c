"""Ingestion and alignment of prices, ESG scores, and riskless-yield series.

CSV layouts (ISO-8601 dates):

* prices: ``date,ticker,close``
* ESG releases: ``release_date,ticker,score0to100``
* yields: ``date,annual_yield_decimal``

Prices are aligned on the union calendar of all tickers. Interior or
trailing gaps of at most ``max_gap`` business days are forward-filled and
flagged; anything longer, or a ticker that starts after the panel does,
gets the whole ticker rejected with a recorded reason.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import CalendarError, DomainError, NoScoreError, ParseError, ShapeError

DEFAULT_MAX_GAP = 5


def _parse_date(text: str, line_no: int, path: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"{path}:{line_no}: bad date {text!r}") from None


def _parse_float(text: str, line_no: int, path: str, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}:{line_no}: bad {col} {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{path}:{line_no}: non-finite {col} {text!r}")
    return value


def _read_rows(path: str, columns: tuple[str, ...]):
    """Yield (line_no, row dict) for each data row, validating the header."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: empty file") from None
        names = [h.strip().lower() for h in header]
        missing = [c for c in columns if c not in names]
        if missing:
            raise ParseError(f"{path}:1: missing columns {missing}, found {names}")
        idx = {c: names.index(c) for c in columns}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(names):
                raise ParseError(f"{path}:{line_no}: expected {len(names)} fields, got {len(row)}")
            yield line_no, {c: row[idx[c]] for c in columns}


@dataclass(frozen=True)
class TradingCalendar:
    """Strictly increasing business dates."""

    dates: tuple[dt.date, ...]

    def __post_init__(self):
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise CalendarError(f"dates not strictly increasing at {cur}")

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, date: dt.date) -> int:
        i = bisect_right(self.dates, date) - 1
        if i < 0 or self.dates[i] != date:
            raise CalendarError(f"{date} not in calendar")
        return i

    def asof_index(self, date: dt.date) -> int:
        """Index of the latest calendar date <= date."""
        i = bisect_right(self.dates, date) - 1
        if i < 0:
            raise CalendarError(f"no calendar date on or before {date}")
        return i


@dataclass(frozen=True)
class PricePanel:
    """Close prices on a shared calendar; ``filled`` marks forward-filled cells."""

    calendar: TradingCalendar
    tickers: tuple[str, ...]
    prices: np.ndarray
    filled: np.ndarray
    rejected: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        want = (len(self.calendar), len(self.tickers))
        if self.prices.shape != want:
            raise ShapeError(f"price matrix shape {self.prices.shape}, expected {want}")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise DomainError("prices must be finite and strictly positive")


@dataclass(frozen=True)
class ReturnPanel:
    """Daily log returns; row t is ln(P[t]/P[t-1]) stamped on the later date."""

    calendar: TradingCalendar
    tickers: tuple[str, ...]
    returns: np.ndarray
    filled: np.ndarray


@dataclass(frozen=True)
class EsgPanel:
    """ESG scores per (date, ticker); NaN cells mean no release on that date.

    ``dates`` are the rows of ``raw``/``normalized``; ``release_dates`` keeps
    the original publication dates after the daily fill.
    """

    tickers: tuple[str, ...]
    dates: tuple[dt.date, ...]
    raw: np.ndarray
    normalized: np.ndarray
    release_dates: tuple[dt.date, ...]


@dataclass(frozen=True)
class YieldSeries:
    """Annualized riskless yields plus the per-day rate annual/c."""

    calendar: TradingCalendar
    annual_yield: np.ndarray
    daily_rate: np.ndarray
    c: float

    def rate_asof(self, date: dt.date) -> float:
        return float(self.daily_rate[self.calendar.asof_index(date)])


class LinearScoreMap:
    """Default normalization: sigma = raw/50 - 1, [0,100] -> [-1,1]."""

    name = "linear"

    def forward(self, raw):
        return np.asarray(raw, dtype=float) / 50.0 - 1.0

    def inverse(self, sigma):
        return (np.asarray(sigma, dtype=float) + 1.0) * 50.0


class ShiftedMidpointScoreMap:
    """Piecewise-linear map sending a chosen midpoint to 0.

    [0, midpoint] -> [-1, 0] and [midpoint, 100] -> [0, 1]; monotone and
    onto [-1, 1] for any midpoint strictly inside (0, 100).
    """

    name = "shifted_midpoint"

    def __init__(self, midpoint: float):
        if not 0.0 < midpoint < 100.0:
            raise DomainError(f"midpoint must lie in (0, 100), got {midpoint}")
        self.midpoint = float(midpoint)

    def forward(self, raw):
        raw = np.asarray(raw, dtype=float)
        m = self.midpoint
        return np.where(raw <= m, (raw - m) / m, (raw - m) / (100.0 - m))

    def inverse(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        m = self.midpoint
        return np.where(sigma <= 0.0, m + sigma * m, m + sigma * (100.0 - m))


def normalize_scores(raw, score_map=None) -> np.ndarray:
    """Map raw [0,100] scores to [-1,1]; NaN cells pass through untouched."""
    if score_map is None:
        score_map = LinearScoreMap()
    raw = np.asarray(raw, dtype=float)
    finite = raw[np.isfinite(raw)]
    if np.any(finite < 0.0) or np.any(finite > 100.0):
        raise DomainError("raw ESG scores must lie in [0, 100]")
    out = np.where(np.isfinite(raw), score_map.forward(raw), raw)
    if np.any(np.abs(out[np.isfinite(out)]) > 1.0 + 1e-12):
        raise DomainError(f"score map {score_map.name!r} left [-1, 1]")
    return out


def load_prices(path: str, max_gap: int = DEFAULT_MAX_GAP) -> PricePanel:
    """Read a long-format price CSV and align tickers on the union calendar."""
    per_ticker: dict[str, dict[dt.date, float]] = {}
    last_date: dict[str, dt.date] = {}
    for line_no, row in _read_rows(path, ("date", "ticker", "close")):
        date = _parse_date(row["date"], line_no, path)
        ticker = row["ticker"].strip()
        if not ticker:
            raise ParseError(f"{path}:{line_no}: empty ticker")
        close = _parse_float(row["close"], line_no, path, "close")
        if close <= 0.0:
            raise ParseError(f"{path}:{line_no}: non-positive price {close} for {ticker}")
        if ticker in last_date and date <= last_date[ticker]:
            raise CalendarError(
                f"{path}:{line_no}: dates for {ticker} not strictly increasing at {date}"
            )
        per_ticker.setdefault(ticker, {})[date] = close
        last_date[ticker] = date
    if not per_ticker:
        raise ParseError(f"{path}: no data rows")

    all_dates = sorted({d for obs in per_ticker.values() for d in obs})
    calendar = TradingCalendar(tuple(all_dates))
    date_index = {d: i for i, d in enumerate(all_dates)}

    kept: list[str] = []
    columns: list[np.ndarray] = []
    flags: list[np.ndarray] = []
    rejected: dict[str, str] = {}
    for ticker in sorted(per_ticker):
        col = np.full(len(all_dates), np.nan)
        for date, close in per_ticker[ticker].items():
            col[date_index[date]] = close
        if np.isnan(col[0]):
            first = min(per_ticker[ticker])
            rejected[ticker] = f"no price at panel start (first observation {first})"
            continue
        gap = _longest_nan_run(col)
        if gap > max_gap:
            rejected[ticker] = f"gap of {gap} consecutive missing dates exceeds max_gap={max_gap}"
            continue
        filled_flag = np.isnan(col)
        _forward_fill(col)
        kept.append(ticker)
        columns.append(col)
        flags.append(filled_flag)
    if not kept:
        raise DomainError(f"{path}: every ticker rejected: {rejected}")
    return PricePanel(
        calendar=calendar,
        tickers=tuple(kept),
        prices=np.column_stack(columns),
        filled=np.column_stack(flags),
        rejected=rejected,
    )


def _longest_nan_run(col: np.ndarray) -> int:
    longest = run = 0
    for missing in np.isnan(col):
        run = run + 1 if missing else 0
        longest = max(longest, run)
    return longest


def _forward_fill(col: np.ndarray) -> None:
    for t in range(1, len(col)):
        if np.isnan(col[t]):
            col[t] = col[t - 1]


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """Daily log returns; the first panel date is dropped."""
    if len(panel.calendar) < 2:
        raise DomainError("need at least 2 dates to compute returns")
    returns = np.diff(np.log(panel.prices), axis=0)
    touched = panel.filled[1:] | panel.filled[:-1]
    return ReturnPanel(
        calendar=TradingCalendar(panel.calendar.dates[1:]),
        tickers=panel.tickers,
        returns=returns,
        filled=touched,
    )


def load_esg(path: str, score_map=None) -> EsgPanel:
    """Read ESG releases; rows are release dates, NaN where a ticker is silent."""
    rows: list[tuple[dt.date, str, float]] = []
    for line_no, row in _read_rows(path, ("release_date", "ticker", "score0to100")):
        date = _parse_date(row["release_date"], line_no, path)
        ticker = row["ticker"].strip()
        if not ticker:
            raise ParseError(f"{path}:{line_no}: empty ticker")
        score = _parse_float(row["score0to100"], line_no, path, "score0to100")
        if not 0.0 <= score <= 100.0:
            raise DomainError(f"{path}:{line_no}: score {score} outside [0, 100]")
        rows.append((date, ticker, score))
    if not rows:
        raise ParseError(f"{path}: no data rows")

    tickers = tuple(sorted({t for _, t, _ in rows}))
    dates = tuple(sorted({d for d, _, _ in rows}))
    t_index = {t: j for j, t in enumerate(tickers)}
    d_index = {d: i for i, d in enumerate(dates)}
    raw = np.full((len(dates), len(tickers)), np.nan)
    for date, ticker, score in rows:
        i, j = d_index[date], t_index[ticker]
        if not np.isnan(raw[i, j]):
            raise CalendarError(f"{path}: duplicate release for {ticker} on {date}")
        raw[i, j] = score
    return EsgPanel(
        tickers=tickers,
        dates=dates,
        raw=raw,
        normalized=normalize_scores(raw, score_map),
        release_dates=dates,
    )


def fill_daily_scores(esg: EsgPanel, calendar: TradingCalendar) -> EsgPanel:
    """Carry each ticker's latest release forward onto the target calendar.

    A score released on date d applies from d inclusive. Every ticker must
    have a release on or before the first calendar date.
    """
    n_dates, n_tickers = len(calendar), len(esg.tickers)
    raw = np.empty((n_dates, n_tickers))
    for j, ticker in enumerate(esg.tickers):
        mask = np.isfinite(esg.raw[:, j])
        rel_dates = [d for d, keep in zip(esg.dates, mask) if keep]
        rel_scores = esg.raw[mask, j]
        if not rel_dates or rel_dates[0] > calendar.dates[0]:
            raise NoScoreError(
                f"{ticker}: no ESG release on or before {calendar.dates[0]}"
            )
        for i, date in enumerate(calendar.dates):
            k = bisect_right(rel_dates, date) - 1
            raw[i, j] = rel_scores[k]
    return EsgPanel(
        tickers=esg.tickers,
        dates=calendar.dates,
        raw=raw,
        normalized=normalize_scores(raw),
        release_dates=esg.release_dates,
    )


def load_yields(path: str, c: float = 255.0) -> YieldSeries:
    """Read annualized riskless yields; the per-day rate is annual/c."""
    dates: list[dt.date] = []
    annual: list[float] = []
    for line_no, row in _read_rows(path, ("date", "annual_yield_decimal")):
        date = _parse_date(row["date"], line_no, path)
        if dates and date <= dates[-1]:
            raise CalendarError(f"{path}:{line_no}: yield dates not strictly increasing")
        dates.append(date)
        annual.append(_parse_float(row["annual_yield_decimal"], line_no, path, "yield"))
    if not dates:
        raise ParseError(f"{path}: no data rows")
    annual_arr = np.asarray(annual)
    return YieldSeries(
        calendar=TradingCalendar(tuple(dates)),
        annual_yield=annual_arr,
        daily_rate=annual_arr / c,
        c=c,
    )
