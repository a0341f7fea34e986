"""Risk and return measures computed from a wealth ledger.

All five measures are reported in the conventional units of performance
tables: percent for returns, volatility, and drawdown, a dimensionless
annualized ratio for Sharpe. Annualization uses 252 trading days; annual
return is CAGR.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .portfolio_env import EpisodeLedger

TRADING_DAYS = 252


@dataclass(frozen=True)
class MetricSet:
    annual_return: float
    cumulative_return: float
    sharpe: float | None  # None when the return series has zero variance
    max_drawdown: float
    annual_volatility: float


def cumulative_return(ledger: EpisodeLedger) -> float:
    """Total growth of wealth over the window, in percent."""
    if len(ledger.wealth) < 2:
        raise ValueError("need at least two wealth points")
    return 100.0 * (float(ledger.wealth[-1]) / float(ledger.wealth[0]) - 1.0)


def annual_return(ledger: EpisodeLedger) -> float:
    """Compound annual growth rate in percent, from D daily steps."""
    if len(ledger.wealth) < 2:
        raise ValueError("need at least two wealth points")
    d = len(ledger.wealth) - 1
    ratio = float(ledger.wealth[-1]) / float(ledger.wealth[0])
    return 100.0 * (ratio ** (TRADING_DAYS / d) - 1.0)


def annual_volatility(ledger: EpisodeLedger) -> float:
    """Annualized standard deviation of daily net returns, in percent."""
    r = ledger.net_returns
    if len(r) < 3:
        raise ValueError("need at least three daily returns")
    return 100.0 * float(np.std(r, ddof=1)) * math.sqrt(TRADING_DAYS)


def sharpe(ledger: EpisodeLedger, rf: float = 0.0) -> float | None:
    """Annualized Sharpe ratio against an annual risk-free rate.

    Returns None (undefined) rather than +/-inf when the daily returns have
    zero variance.
    """
    r = ledger.net_returns
    if len(r) < 3:
        raise ValueError("need at least three daily returns")
    std = float(np.std(r, ddof=1))
    if std == 0.0:
        return None
    excess = float(np.mean(r)) - rf / TRADING_DAYS
    return excess / std * math.sqrt(TRADING_DAYS)


def max_drawdown(ledger: EpisodeLedger) -> float:
    """Largest peak-to-trough wealth decline relative to the running peak,
    in percent (positive magnitude)."""
    w = ledger.wealth
    if len(w) < 1:
        raise ValueError("need at least one wealth point")
    peak = np.maximum.accumulate(w)
    return 100.0 * float(((peak - w) / peak).max())


def compute_metrics(ledger: EpisodeLedger, rf: float = 0.0) -> MetricSet:
    return MetricSet(
        annual_return=annual_return(ledger),
        cumulative_return=cumulative_return(ledger),
        sharpe=sharpe(ledger, rf),
        max_drawdown=max_drawdown(ledger),
        annual_volatility=annual_volatility(ledger),
    )
