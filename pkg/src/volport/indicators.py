"""Technical indicators computed per asset on the adjusted close.

The set is fixed to MACD(12,26), Wilder RSI(14), and price/SMA ratios over
30 and 60 days. Rows before the warm-up index may contain NaN and are never
fed to the environment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .market_data import PricePanel


@dataclass(frozen=True)
class IndicatorConfig:
    macd_fast: int = 12
    macd_slow: int = 26
    rsi_period: int = 14
    sma_short: int = 30
    sma_long: int = 60

    def __post_init__(self):
        for name in ("macd_fast", "macd_slow", "rsi_period", "sma_short", "sma_long"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.macd_fast >= self.macd_slow:
            raise ValueError("macd_fast must be shorter than macd_slow")

    @property
    def warmup(self) -> int:
        """First row index at which every indicator is defined."""
        return max(
            self.sma_long - 1,
            self.sma_short - 1,
            self.rsi_period,
            self.macd_slow - 1,
        )


@dataclass(frozen=True)
class FeatureSet:
    """Per-date, per-asset indicator arrays aligned with a panel's dates.

    All four arrays are T x n. `warmup` is the first row index where every
    value is finite; earlier rows are flagged unusable.
    """

    dates: tuple
    tickers: tuple[str, ...]
    macd: np.ndarray
    rsi: np.ndarray
    sma_ratio_short: np.ndarray
    sma_ratio_long: np.ndarray
    warmup: int

    def __post_init__(self):
        from .market_data import _readonly

        for name in ("macd", "rsi", "sma_ratio_short", "sma_ratio_long"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def row(self, t: int) -> np.ndarray:
        """Indicator block for one date, grouped indicator-major:
        [macd_1..n, rsi_1..n, sma_short_1..n, sma_long_1..n]."""
        if t < self.warmup:
            raise ValueError(f"row {t} is inside the warm-up window ({self.warmup})")
        return np.concatenate(
            [self.macd[t], self.rsi[t], self.sma_ratio_short[t], self.sma_ratio_long[t]]
        )


def _ema(prices: np.ndarray, period: int) -> np.ndarray:
    """Exponential moving average seeded at the first price."""
    k = 2.0 / (period + 1.0)
    out = np.empty_like(prices)
    out[0] = prices[0]
    for t in range(1, len(prices)):
        out[t] = k * prices[t] + (1.0 - k) * out[t - 1]
    return out


def _sma(prices: np.ndarray, period: int) -> np.ndarray:
    """Simple moving average over a trailing window including the current day.
    NaN until a full window is available."""
    T = prices.shape[0]
    out = np.full_like(prices, np.nan)
    csum = np.cumsum(prices, axis=0)
    out[period - 1] = csum[period - 1] / period
    if T > period:
        out[period:] = (csum[period:] - csum[:-period]) / period
    return out


def _wilder_rsi(prices: np.ndarray, period: int) -> np.ndarray:
    """RSI with Wilder smoothing. A window with no gains and no losses is
    defined as 50; all gains is 100, all losses is 0."""
    T, n = prices.shape
    out = np.full((T, n), np.nan)
    delta = np.diff(prices, axis=0)
    gains = np.maximum(delta, 0.0)
    losses = np.maximum(-delta, 0.0)
    avg_gain = gains[:period].mean(axis=0)
    avg_loss = losses[:period].mean(axis=0)
    out[period] = _rsi_from_averages(avg_gain, avg_loss)
    for t in range(period + 1, T):
        avg_gain = (avg_gain * (period - 1) + gains[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + losses[t - 1]) / period
        out[t] = _rsi_from_averages(avg_gain, avg_loss)
    return out


def _rsi_from_averages(avg_gain: np.ndarray, avg_loss: np.ndarray) -> np.ndarray:
    flat = (avg_gain == 0.0) & (avg_loss == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rsi = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    rsi = np.where(avg_loss == 0.0, 100.0, rsi)
    rsi = np.where(flat, 50.0, rsi)
    return rsi


def compute_indicators(panel: PricePanel, cfg: IndicatorConfig | None = None) -> FeatureSet:
    """Compute the indicator block for every date and asset of a panel."""
    cfg = cfg or IndicatorConfig()
    T = panel.n_days
    if T <= cfg.warmup:
        raise DataError(
            f"panel has {T} days but indicators need more than {cfg.warmup}"
        )
    p = panel.prices
    macd = _ema(p, cfg.macd_fast) - _ema(p, cfg.macd_slow)
    rsi = _wilder_rsi(p, cfg.rsi_period)
    with np.errstate(invalid="ignore"):
        ratio_short = p / _sma(p, cfg.sma_short)
        ratio_long = p / _sma(p, cfg.sma_long)
    fs = FeatureSet(
        dates=panel.dates,
        tickers=panel.tickers,
        macd=macd,
        rsi=rsi,
        sma_ratio_short=ratio_short,
        sma_ratio_long=ratio_long,
        warmup=cfg.warmup,
    )
    for name in ("macd", "rsi", "sma_ratio_short", "sma_ratio_long"):
        block = getattr(fs, name)[cfg.warmup :]
        if not np.isfinite(block).all():
            raise DataError(f"indicator {name} is non-finite after warm-up")
    return fs
