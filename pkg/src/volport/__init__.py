"""Volatility-guided portfolio construction.

Forecast per-stock volatility with GARCH(1,1), split the universe into
aggressive / moderate / conservative classes, train a PPO allocation policy
per class on a daily-rebalancing simulator, and benchmark against
mean-variance, equal-weight, and an index proxy.
"""

__version__ = "0.1.0"
