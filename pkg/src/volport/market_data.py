"""Price history ingestion, alignment, returns, covariance, and synthetic panels.

The canonical price is the adjusted close; open/high/low/volume are retained
on the bar but unused downstream. Alignment is a strict inner join on dates:
no forward filling, so every cell of a panel is a real observed price.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .errors import DataError
from .garch import GarchParams

CSV_HEADER = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"]

# Small diagonal term added to every covariance estimate so downstream
# optimizers never see an exactly singular matrix.
COV_RIDGE = 1e-8


@dataclass(frozen=True)
class PriceBar:
    """One daily OHLCV observation. Prices are per share and strictly positive."""

    date: date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: int

    def __post_init__(self):
        for name in ("open", "high", "low", "close", "adj_close"):
            if not getattr(self, name) > 0:
                raise DataError(f"non-positive price {name}={getattr(self, name)}")
        if self.low > min(self.open, self.close, self.high):
            raise DataError(f"low {self.low} above open/close/high on {self.date}")
        if self.high < max(self.open, self.close, self.low):
            raise DataError(f"high {self.high} below open/close/low on {self.date}")
        if self.volume < 0:
            raise DataError(f"negative volume {self.volume} on {self.date}")


@dataclass(frozen=True)
class PriceSeries:
    """All bars for one ticker, dates strictly increasing."""

    ticker: str
    bars: tuple[PriceBar, ...]

    def __post_init__(self):
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise DataError(f"{self.ticker}: duplicate date {cur.date}")
            if cur.date < prev.date:
                raise DataError(f"{self.ticker}: dates not increasing at {cur.date}")

    def dates(self) -> list[date]:
        return [b.date for b in self.bars]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PricePanel:
    """Rectangular adj-close history: T dates by n tickers, no gaps.

    Tickers are kept in lexicographic order so that every downstream artifact
    (observations, weights, CSV columns) has one canonical column order.
    """

    tickers: tuple[str, ...]
    dates: tuple[date, ...]
    prices: np.ndarray  # T x n

    def __post_init__(self):
        object.__setattr__(self, "prices", _readonly(self.prices))
        T, n = self.prices.shape
        if len(self.tickers) != n or len(self.dates) != T:
            raise DataError("panel shape does not match tickers/dates")
        if list(self.tickers) != sorted(self.tickers):
            raise DataError("tickers must be in lexicographic order")
        if len(set(self.tickers)) != n:
            raise DataError("duplicate ticker in panel")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("panel dates must be strictly increasing")
        if not (self.prices > 0).all():
            raise DataError("panel contains non-positive prices")

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    @property
    def n_days(self) -> int:
        return self.prices.shape[0]

    def column(self, ticker: str) -> np.ndarray:
        return self.prices[:, self.tickers.index(ticker)]

    def select(self, tickers) -> "PricePanel":
        """Sub-panel restricted to the given tickers (re-sorted canonically)."""
        keep = sorted(tickers)
        missing = [t for t in keep if t not in self.tickers]
        if missing:
            raise DataError(f"tickers not in panel: {missing}")
        idx = [self.tickers.index(t) for t in keep]
        return PricePanel(tuple(keep), self.dates, self.prices[:, idx])


@dataclass(frozen=True)
class ReturnPanel:
    """Daily log returns. Row t is ln(p[t+1]/p[t]) and is dated at the day
    the return realizes (the later of the two)."""

    dates: tuple[date, ...]
    returns: np.ndarray  # (T-1) x n

    def __post_init__(self):
        object.__setattr__(self, "returns", _readonly(self.returns))
        if len(self.dates) != self.returns.shape[0]:
            raise DataError("return panel shape does not match dates")


@dataclass(frozen=True)
class CovarianceWindow:
    """Trailing-window covariance of daily log returns as of one date."""

    as_of: date
    matrix: np.ndarray  # n x n, ridge-regularized

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))


@dataclass(frozen=True)
class GarchAssetSpec:
    """Generator spec for one synthetic asset."""

    ticker: str
    params: GarchParams
    drift: float = 0.0
    initial_price: float = 100.0

    def __post_init__(self):
        if not self.initial_price > 0:
            raise DataError(f"{self.ticker}: initial price must be positive")
        if not math.isfinite(self.drift):
            raise DataError(f"{self.ticker}: drift must be finite")


def load_csv(path) -> PriceSeries:
    """Load one ticker's history from a Yahoo-export CSV.

    Expects the header ``Date,Open,High,Low,Close,Adj Close,Volume`` with ISO
    dates. The ticker is taken from the file name. Any malformed or invalid
    row fails the whole file, citing the 1-based data row.
    """
    import os

    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    ticker = os.path.splitext(os.path.basename(path))[0]
    bars = []
    seen: set[date] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: malformed header {header!r}")
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}: row {i}: expected {len(CSV_HEADER)} fields")
            try:
                d = date.fromisoformat(row[0].strip())
                o, h, lo, c, ac = (float(row[j]) for j in range(1, 6))
                vol_raw = float(row[6])
            except ValueError as exc:
                raise DataError(f"{path}: row {i}: unparsable field ({exc})") from None
            if vol_raw < 0 or vol_raw != int(vol_raw):
                raise DataError(f"{path}: row {i}: volume must be a non-negative integer")
            if d in seen:
                raise DataError(f"{path}: row {i}: duplicate date {d}")
            seen.add(d)
            try:
                bars.append(PriceBar(d, o, h, lo, c, ac, int(vol_raw)))
            except DataError as exc:
                raise DataError(f"{path}: row {i}: {exc}") from None
    if not bars:
        raise DataError(f"{path}: no data rows")
    bars.sort(key=lambda b: b.date)
    return PriceSeries(ticker, tuple(bars))


def align_panel(series: list[PriceSeries]) -> PricePanel:
    """Inner-join a list of per-ticker series into one rectangular panel.

    Keeps only dates present in every series; requires at least two series
    and at least two common dates.
    """
    if len(series) < 2:
        raise DataError("need at least two price series to build a panel")
    tickers = [s.ticker for s in series]
    if len(set(tickers)) != len(tickers):
        dupes = sorted({t for t in tickers if tickers.count(t) > 1})
        raise DataError(f"duplicate ticker(s): {dupes}")
    for s in series:
        if not s.bars:
            raise DataError(f"{s.ticker}: empty series")
    common = set(series[0].dates())
    for s in series[1:]:
        common &= set(s.dates())
    if len(common) < 2:
        raise DataError(f"date intersection too small ({len(common)} dates)")
    dates = tuple(sorted(common))
    order = sorted(range(len(series)), key=lambda i: series[i].ticker)
    cols = []
    for i in order:
        by_date = {b.date: b.adj_close for b in series[i].bars}
        cols.append([by_date[d] for d in dates])
    prices = np.array(cols, dtype=np.float64).T
    return PricePanel(tuple(series[i].ticker for i in order), dates, prices)


def log_returns(panel: PricePanel) -> ReturnPanel:
    """Daily log returns ln(p[t+1]/p[t]) for every asset."""
    if panel.n_days < 2:
        raise DataError("need at least two dates to compute returns")
    rets = np.log(panel.prices[1:] / panel.prices[:-1])
    return ReturnPanel(panel.dates[1:], rets)


def window_covariance(rows: np.ndarray, ridge: float = COV_RIDGE) -> np.ndarray:
    """Sample covariance (denominator w-1) of a block of return rows,
    symmetrized and ridge-regularized. Shared by the rolling estimator and
    the environment's observation builder so both see identical numbers."""
    w = rows.shape[0]
    if w < 2:
        raise ValueError("covariance window must hold at least two rows")
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / (w - 1)
    cov = 0.5 * (cov + cov.T)
    return cov + ridge * np.eye(rows.shape[1])


def rolling_covariance(rp: ReturnPanel, window: int) -> list[CovarianceWindow]:
    """Trailing covariance of log returns, one window per date once `window`
    returns have accumulated."""
    if window < 2:
        raise ValueError("window must be >= 2")
    n_rows = rp.returns.shape[0]
    if n_rows < window:
        raise DataError(f"insufficient history: {n_rows} returns < window {window}")
    out = []
    for end in range(window, n_rows + 1):
        cov = window_covariance(rp.returns[end - window : end])
        out.append(CovarianceWindow(rp.dates[end - 1], cov))
    return out


def simulate_garch_panel(
    specs: list[GarchAssetSpec],
    T: int,
    seed: int,
    start_date: date = date(2015, 1, 1),
) -> PricePanel:
    """Generate a synthetic panel whose returns follow per-asset GARCH(1,1).

    Each asset draws shocks eps_t = sigma_t * z_t with standard-normal z from
    its own child of the seeded generator, updates the conditional variance
    recursion, and compounds p_t = p_{t-1} * exp(drift + eps_t). The variance
    starts at its stationary level omega / (1 - alpha - beta). Deterministic
    given (specs, T, seed).
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    if not specs:
        raise DataError("no asset specs given")
    specs = sorted(specs, key=lambda s: s.ticker)
    tickers = [s.ticker for s in specs]
    if len(set(tickers)) != len(tickers):
        raise DataError("duplicate ticker in specs")
    children = np.random.SeedSequence(seed).spawn(len(specs))
    prices = np.empty((T, len(specs)), dtype=np.float64)
    for j, (spec, child) in enumerate(zip(specs, children)):
        p = spec.params
        rng = np.random.default_rng(child)
        z = rng.standard_normal(T - 1)
        sigma2 = p.omega / (1.0 - p.alpha - p.beta)
        price = spec.initial_price
        prices[0, j] = price
        for t in range(1, T):
            eps = math.sqrt(sigma2) * z[t - 1]
            price *= math.exp(spec.drift + eps)
            prices[t, j] = price
            sigma2 = p.omega + p.alpha * eps * eps + p.beta * sigma2
    dates = tuple(start_date + timedelta(days=t) for t in range(T))
    return PricePanel(tuple(tickers), dates, prices)
