"""Baseline strategies run through the same simulator as the trained agent.

Three baselines: long-only mean-variance optimization with periodic
re-estimation, daily equal-weight rebalancing, and a price-weighted
buy-and-hold index proxy. All of them are weight rules handed to
`portfolio_env.run_episode`, so cost accounting is identical across every
strategy in a comparison.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .indicators import FeatureSet
from .market_data import PricePanel, log_returns, window_covariance
from .portfolio_env import EnvConfig, EnvState, EpisodeLedger, run_episode

MVO_ITERATIONS = 5000
SYMMETRY_TOL = 1e-8
PSD_TOL = -1e-8


@dataclass(frozen=True)
class MvoInputs:
    """Inputs and estimation policy for the mean-variance baseline.

    `mu` and `sigma` may be None in a template: the backtest fills them in
    from the trailing window at each rebalance.
    """

    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None
    window: int = 252
    rebalance_every: int = 63
    kappa: float = 10.0

    def __post_init__(self):
        if self.window < 2 or self.rebalance_every < 1:
            raise ValueError("window must be >= 2 and rebalance_every >= 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if (self.mu is None) != (self.sigma is None):
            raise ValueError("mu and sigma must be given together")
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=np.float64)
            sigma = np.asarray(self.sigma, dtype=np.float64)
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "sigma", sigma)
            n = len(mu)
            if sigma.shape != (n, n):
                raise ValueError(f"sigma must be {n}x{n}")
            if self.window < n + 2:
                raise ValueError(f"window {self.window} too short for {n} assets")
            if np.abs(sigma - sigma.T).max() > SYMMETRY_TOL:
                raise ValueError("sigma is not symmetric")
            if float(np.linalg.eigvalsh(sigma).min()) < PSD_TOL:
                raise ValueError("sigma is not positive semi-definite")


@dataclass(frozen=True)
class StrategyLedger:
    name: str
    ledger: EpisodeLedger


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1}."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - (css - 1.0) / j > 0)[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - tau, 0.0)


def mvo_objective(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray, kappa: float) -> float:
    return float(mu @ w - 0.5 * kappa * w @ sigma @ w)


def mvo_weights(inputs: MvoInputs) -> np.ndarray:
    """Maximize mu'w - (kappa/2) w'Sigma w over the simplex by projected
    gradient ascent from the uniform start, returning the best iterate seen.

    The step is 1/L with L a diagonal-dominance bound on the curvature of
    kappa * Sigma, so the ascent is stable without a line search.
    """
    if inputs.mu is None:
        raise ValueError("mvo_weights needs concrete mu and sigma")
    mu, sigma, kappa = inputs.mu, inputs.sigma, inputs.kappa
    n = len(mu)
    L = kappa * float(np.abs(sigma).sum(axis=1).max())
    step = 1.0 / L if L > 0 else 1.0
    w = np.full(n, 1.0 / n)
    best_w = w
    best_obj = mvo_objective(w, mu, sigma, kappa)
    for _ in range(MVO_ITERATIONS):
        grad = mu - kappa * (sigma @ w)
        w = project_to_simplex(w + step * grad)
        obj = mvo_objective(w, mu, sigma, kappa)
        if obj > best_obj:
            best_obj = obj
            best_w = w
    return best_w


def mvo_backtest(
    panel: PricePanel,
    features: FeatureSet,
    cfg: EnvConfig,
    template: MvoInputs,
    start: int,
    end: int,
) -> StrategyLedger:
    """Mean-variance strategy: re-estimate mean and covariance of daily log
    returns from the trailing window every `rebalance_every` days, hold the
    drifted weights in between."""
    n = panel.n_assets
    if template.window < n + 2:
        raise ValueError(f"estimation window {template.window} too short for {n} assets")
    if start < template.window:
        raise DataError(
            f"insufficient history: start {start} < estimation window {template.window}"
        )
    rets = log_returns(panel).returns
    current: dict[str, np.ndarray] = {}

    def policy(state: EnvState) -> np.ndarray:
        if (state.t - start) % template.rebalance_every == 0:
            rows = rets[state.t - template.window : state.t]
            inputs = MvoInputs(
                mu=rows.mean(axis=0),
                sigma=window_covariance(rows),
                window=template.window,
                rebalance_every=template.rebalance_every,
                kappa=template.kappa,
            )
            current["w"] = mvo_weights(inputs)
            return current["w"]
        return state.weights  # hold: zero turnover against drifted weights

    return StrategyLedger("MVO", run_episode(policy, panel, features, cfg, start, end))


def equal_weight_backtest(
    panel: PricePanel, features: FeatureSet, cfg: EnvConfig, start: int, end: int
) -> StrategyLedger:
    """Rebalance to uniform weights every day."""
    uniform = np.full(panel.n_assets, 1.0 / panel.n_assets)

    def policy(state: EnvState) -> np.ndarray:
        return uniform

    return StrategyLedger(
        "Equal-Weighted", run_episode(policy, panel, features, cfg, start, end)
    )


def index_backtest(
    panel: PricePanel, features: FeatureSet, cfg: EnvConfig, start: int, end: int
) -> StrategyLedger:
    """Price-weighted buy-and-hold: weights proportional to the first day's
    prices, then pure drift (no further trades, no further costs)."""
    p0 = panel.prices[start]
    w0 = p0 / p0.sum()

    def policy(state: EnvState) -> np.ndarray:
        if state.t == start:
            return w0
        return state.weights

    return StrategyLedger(
        "Index-proxy", run_episode(policy, panel, features, cfg, start, end)
    )
