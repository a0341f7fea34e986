"""Deterministic daily-rebalancing market simulator.

One step converts an unconstrained action into long-only portfolio weights,
charges a proportional cost on the traded notional, applies the next day's
price moves, and returns the net portfolio return as the reward. There is no
cash asset: the portfolio is always fully invested on the weight simplex, and
episodes start from a uniform allocation so the first trade's cost is the
move away from uniform, identically for every strategy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataError
from .indicators import FeatureSet
from .market_data import PricePanel, window_covariance, _readonly


@dataclass(frozen=True)
class EnvConfig:
    initial_capital: float = 1_000_000.0
    cost_rate: float = 0.0005
    lookback: int = 60
    reward_scale: float = 1.0
    log_reward: bool = False

    def __post_init__(self):
        if not self.initial_capital > 0:
            raise ValueError("initial_capital must be positive")
        if not 0.0 <= self.cost_rate < 1.0:
            raise ValueError("cost_rate must be in [0, 1)")
        if self.lookback < 2:
            raise ValueError("lookback must be >= 2")


@dataclass(frozen=True)
class EnvState:
    """Snapshot of the simulator at day index t.

    `weights` is the allocation currently held: the last trade's target
    weights drifted to day t by the market moves since the trade. `start` is
    the episode's first day index; prices in the observation are normalized
    by that day's prices.
    """

    t: int
    wealth: float
    weights: np.ndarray
    observation: np.ndarray
    start: int

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "observation", _readonly(self.observation))
        if not self.wealth > 0:
            raise ValueError(f"wealth must stay positive, got {self.wealth}")
        if (self.weights < -1e-10).any() or abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must lie on the simplex")


@dataclass(frozen=True)
class StepResult:
    next: EnvState
    reward: float
    cost_paid: float
    done: bool


@dataclass(frozen=True)
class EpisodeLedger:
    """Exact account of one episode.

    `wealth` has one entry per date; `net_returns`, `costs`, and `weights`
    have one entry per step (the trade decided on dates[k] realizing on
    dates[k+1]). Wealth compounds exactly: wealth[k+1] = wealth[k] *
    (1 + net_returns[k]).
    """

    dates: tuple
    wealth: np.ndarray
    net_returns: np.ndarray
    costs: np.ndarray
    weights: np.ndarray  # steps x n, target weights applied at each decision
    total_costs: float

    def __post_init__(self):
        for name in ("wealth", "net_returns", "costs", "weights"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        steps = len(self.net_returns)
        if len(self.wealth) != steps + 1 or len(self.dates) != steps + 1:
            raise ValueError("ledger arrays are inconsistent")
        compounded = self.wealth[:-1] * (1.0 + self.net_returns)
        rel = np.abs(compounded - self.wealth[1:]) / np.abs(self.wealth[1:])
        if steps and rel.max() > 1e-12:
            raise ValueError("wealth series does not compound from net returns")


PolicyFn = Callable[[EnvState], np.ndarray]
"""A weight rule: maps the current state to target simplex weights."""


def observation_dim(n_assets: int) -> int:
    """Observation length: n normalized prices, n(n+1)/2 covariance entries,
    4n indicators, n held weights."""
    return n_assets * (n_assets + 1) // 2 + 6 * n_assets


def action_to_weights(action: np.ndarray) -> np.ndarray:
    """Numerically stable softmax onto the weight simplex; invariant to
    adding a constant to every entry."""
    a = np.asarray(action, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("action must be a non-empty vector")
    if not np.isfinite(a).all():
        raise ValueError("action contains non-finite entries")
    z = np.exp(a - a.max())
    return z / z.sum()


def _check_aligned(panel: PricePanel, features: FeatureSet):
    if features.tickers != panel.tickers or features.dates != panel.dates:
        raise DataError("features are not aligned with the panel")


def _observation(
    panel: PricePanel, features: FeatureSet, cfg: EnvConfig, t: int, start: int, weights: np.ndarray
) -> np.ndarray:
    """Flat observation, in order: n prices normalized by the episode's first
    visible day, n(n+1)/2 lower-triangular covariance entries (row-major,
    annualized), 4n indicators, n held weights.

    Normalization keeps every block near unit scale for the approximator:
    covariance is annualized (x252), MACD is divided by the current price,
    and RSI is rescaled from [0, 100] to [0, 1]. The SMA ratios and weights
    are already dimensionless.
    """
    prices = panel.prices
    norm_prices = prices[t] / prices[start]
    rets = np.log(prices[t - cfg.lookback + 1 : t + 1] / prices[t - cfg.lookback : t])
    cov = 252.0 * window_covariance(rets)
    tril = cov[np.tril_indices(panel.n_assets)]
    indicators = np.concatenate(
        [
            features.macd[t] / prices[t],
            features.rsi[t] / 100.0,
            features.sma_ratio_short[t],
            features.sma_ratio_long[t],
        ]
    )
    if t < features.warmup:
        raise ValueError(f"day {t} is inside the indicator warm-up ({features.warmup})")
    return np.concatenate([norm_prices, tril, indicators, weights])


def warmup_index(features: FeatureSet, cfg: EnvConfig) -> int:
    """Earliest day index with both a full covariance lookback and finite
    indicators."""
    return max(features.warmup, cfg.lookback)


def reset(panel: PricePanel, features: FeatureSet, cfg: EnvConfig, start: int) -> EnvState:
    """Open an episode at day index `start` with full capital spread uniformly."""
    _check_aligned(panel, features)
    wu = warmup_index(features, cfg)
    if start < wu:
        raise ValueError(f"start {start} is before the warm-up index {wu}")
    if start >= panel.n_days - 1:
        raise ValueError(f"start {start} leaves no step in a {panel.n_days}-day panel")
    n = panel.n_assets
    weights = np.full(n, 1.0 / n)
    obs = _observation(panel, features, cfg, start, start, weights)
    return EnvState(t=start, wealth=cfg.initial_capital, weights=weights, observation=obs, start=start)


def step_weights(
    state: EnvState,
    target: np.ndarray,
    panel: PricePanel,
    features: FeatureSet,
    cfg: EnvConfig,
) -> StepResult:
    """Advance one day trading to explicit target weights.

    Turnover is measured against the currently held (drifted) weights, the
    cost is cost_rate * turnover * wealth, and the remaining wealth grows by
    the target-weighted relative price moves into the next day.
    """
    t = state.t
    if t >= panel.n_days - 1:
        raise ValueError(f"t={t} is already the last day")
    w = np.asarray(target, dtype=np.float64)
    if w.shape != state.weights.shape:
        raise ValueError("target weights have the wrong length")
    if not np.isfinite(w).all() or (w < -1e-10).any() or abs(w.sum() - 1.0) > 1e-8:
        raise ValueError("target weights must lie on the simplex")

    turnover = float(np.abs(w - state.weights).sum())
    cost = cfg.cost_rate * turnover * state.wealth
    growth_per_asset = panel.prices[t + 1] / panel.prices[t]
    growth = float(w @ growth_per_asset)
    new_wealth = (state.wealth - cost) * growth
    net_return = (new_wealth - state.wealth) / state.wealth
    if cfg.log_reward:
        reward = math.log(new_wealth / state.wealth) * cfg.reward_scale
    else:
        reward = net_return * cfg.reward_scale

    drifted = w * growth_per_asset / growth
    obs = _observation(panel, features, cfg, t + 1, state.start, drifted)
    nxt = EnvState(t=t + 1, wealth=new_wealth, weights=drifted, observation=obs, start=state.start)
    return StepResult(next=nxt, reward=reward, cost_paid=cost, done=t + 1 == panel.n_days - 1)


def step(
    state: EnvState,
    action: np.ndarray,
    panel: PricePanel,
    features: FeatureSet,
    cfg: EnvConfig,
) -> StepResult:
    """Advance one day from an unconstrained action vector."""
    return step_weights(state, action_to_weights(action), panel, features, cfg)


def run_episode(
    policy: PolicyFn,
    panel: PricePanel,
    features: FeatureSet,
    cfg: EnvConfig,
    start: int,
    end: int,
) -> EpisodeLedger:
    """Run a weight rule from day `start` to day `end` (inclusive) and return
    the exact wealth ledger. Deterministic for a deterministic policy."""
    if not start < end:
        raise ValueError(f"need start < end, got {start} >= {end}")
    if end > panel.n_days - 1:
        raise ValueError(f"end {end} is outside the {panel.n_days}-day panel")
    state = reset(panel, features, cfg, start)
    steps = end - start
    n = panel.n_assets
    wealth = np.empty(steps + 1)
    net_returns = np.empty(steps)
    costs = np.empty(steps)
    weights = np.empty((steps, n))
    wealth[0] = state.wealth
    for k in range(steps):
        target = policy(state)
        res = step_weights(state, target, panel, features, cfg)
        weights[k] = np.asarray(target, dtype=np.float64)
        net_returns[k] = (res.next.wealth - state.wealth) / state.wealth
        costs[k] = res.cost_paid
        wealth[k + 1] = res.next.wealth
        state = res.next
    return EpisodeLedger(
        dates=tuple(panel.dates[start : end + 1]),
        wealth=wealth,
        net_returns=net_returns,
        costs=costs,
        weights=weights,
        total_costs=float(costs.sum()),
    )


def write_ledger_csv(ledger: EpisodeLedger, path):
    """Export `date,wealth,net_return,cost_paid`; the opening row carries
    zeros since nothing has realized yet. Floats use repr so files are
    byte-stable and reload exactly."""
    with open(path, "w") as fh:
        fh.write("date,wealth,net_return,cost_paid\n")
        fh.write(f"{ledger.dates[0].isoformat()},{ledger.wealth[0]!r},0.0,0.0\n")
        for k in range(len(ledger.net_returns)):
            fh.write(
                f"{ledger.dates[k + 1].isoformat()},{ledger.wealth[k + 1]!r},"
                f"{ledger.net_returns[k]!r},{ledger.costs[k]!r}\n"
            )


def write_weights_csv(ledger: EpisodeLedger, tickers, path):
    """Export the per-step target weights, one column per ticker."""
    with open(path, "w") as fh:
        fh.write("date," + ",".join(tickers) + "\n")
        for k in range(len(ledger.net_returns)):
            cells = ",".join(repr(float(x)) for x in ledger.weights[k])
            fh.write(f"{ledger.dates[k].isoformat()},{cells}\n")
