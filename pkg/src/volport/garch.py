"""GARCH(1,1) estimation, volatility forecasting, and risk-class partitioning.

Returns are assumed zero-mean, so the return itself is the shock driving the
conditional-variance recursion

    sigma2[t] = omega + alpha * r[t-1]**2 + beta * sigma2[t-1]

Estimation is maximum likelihood under Gaussian innovations, run as an
unconstrained Nelder-Mead search over a smooth reparameterization that keeps
omega positive and alpha + beta strictly below one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DataError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)

# alpha + beta is capped just below 1 so the unconditional variance
# omega / (1 - alpha - beta) stays finite for every fitted model.
PERSISTENCE_CAP = 0.9999

TRADING_DAYS = 252

MIN_OBS = 100
MAX_ITER = 5000
SIMPLEX_TOL = 1e-8


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not self.alpha + self.beta < 1:
            raise ValueError(
                f"stationarity requires alpha + beta < 1, got {self.alpha + self.beta}"
            )

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class GarchFit:
    params: GarchParams
    loglik: float
    sigma2_path: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class VolatilityScore:
    """Annualized forecast volatility for one ticker, as a fraction per year."""

    ticker: str
    annual_vol: float

    def __post_init__(self):
        if not self.annual_vol > 0:
            raise ValueError(f"{self.ticker}: annual_vol must be positive")


@dataclass(frozen=True)
class UniversePartition:
    aggressive: frozenset[str]
    moderate: frozenset[str]
    conservative: frozenset[str]

    def classes(self) -> dict[str, frozenset[str]]:
        return {
            "aggressive": self.aggressive,
            "moderate": self.moderate,
            "conservative": self.conservative,
        }


def variance_recursion(
    params: GarchParams, returns: np.ndarray, sigma2_0: float
) -> np.ndarray:
    """Conditional-variance path: sigma2[0] = sigma2_0, then one recursion
    step per return. Path has the same length as `returns`."""
    if not sigma2_0 > 0:
        raise ValueError(f"sigma2_0 must be positive, got {sigma2_0}")
    returns = np.asarray(returns, dtype=np.float64)
    path = np.empty(len(returns), dtype=np.float64)
    s = float(sigma2_0)
    for t, r in enumerate(returns):
        if t > 0:
            prev = returns[t - 1]
            s = params.omega + params.alpha * prev * prev + params.beta * s
        path[t] = s
    return path


def log_likelihood(params: GarchParams, returns: np.ndarray, sigma2_0: float) -> float:
    """Gaussian log likelihood of zero-mean returns along the variance path."""
    if not sigma2_0 > 0:
        raise ValueError(f"sigma2_0 must be positive, got {sigma2_0}")
    rs = [float(r) for r in returns]
    return -_neg_loglik(params.omega, params.alpha, params.beta, rs, float(sigma2_0))


def _neg_loglik(
    omega: float, alpha: float, beta: float, returns: list[float], sigma2_0: float
) -> float:
    # Single pass: accumulate log sigma2 + r^2/sigma2 while advancing the
    # recursion. Plain floats keep this loop fast enough for repeated calls
    # inside the optimizer.
    s = sigma2_0
    acc = 0.0
    log = math.log
    for r in returns:
        if s <= 0.0 or not math.isfinite(s):
            raise NumericalError("conditional variance underflowed")
        acc += log(s) + r * r / s
        s = omega + alpha * r * r + beta * s
    return 0.5 * (len(returns) * LOG_2PI + acc)


def _to_unconstrained(params: GarchParams) -> np.ndarray:
    a = math.log(params.omega)
    # Invert the softmax-style map below; floor alpha/beta away from zero
    # because the logit of zero is -inf.
    alpha = max(params.alpha, 1e-8)
    beta = max(params.beta, 1e-8)
    scale = 1.0 - (alpha + beta) / PERSISTENCE_CAP
    if scale <= 0:
        raise ValueError("alpha + beta exceeds the persistence cap")
    q = 1.0 / scale
    u = math.log(alpha / PERSISTENCE_CAP * q)
    v = math.log(beta / PERSISTENCE_CAP * q)
    return np.array([a, u, v], dtype=np.float64)


def _from_unconstrained(theta: np.ndarray) -> GarchParams:
    a, u, v = (float(x) for x in theta)
    eu, ev = math.exp(min(u, 500.0)), math.exp(min(v, 500.0))
    denom = 1.0 + eu + ev
    return GarchParams(
        omega=math.exp(a),
        alpha=PERSISTENCE_CAP * eu / denom,
        beta=PERSISTENCE_CAP * ev / denom,
    )


DEFAULT_INIT_ALPHA = 0.10
DEFAULT_INIT_BETA = 0.80


def fit_garch(returns: np.ndarray, init: GarchParams | None = None) -> GarchFit:
    """Maximum-likelihood GARCH(1,1) fit.

    The initial conditional variance is the sample variance of the fitting
    window. The default starting point targets that same variance as the
    model's unconditional level. Deterministic given (returns, init); the best
    point visited is always returned, with `converged` reporting whether the
    simplex collapsed below tolerance within the iteration budget.
    """
    rs = np.asarray(returns, dtype=np.float64)
    if rs.ndim != 1:
        raise ValueError("returns must be one-dimensional")
    if len(rs) < MIN_OBS:
        raise DataError(f"need at least {MIN_OBS} returns to fit, got {len(rs)}")
    if not np.isfinite(rs).all():
        raise DataError("returns contain non-finite values")
    sigma2_0 = float(np.var(rs, ddof=1))
    if sigma2_0 <= 0.0:
        raise NumericalError("degenerate likelihood: returns have zero variance")
    if init is None:
        init = GarchParams(
            omega=sigma2_0 * (1.0 - DEFAULT_INIT_ALPHA - DEFAULT_INIT_BETA),
            alpha=DEFAULT_INIT_ALPHA,
            beta=DEFAULT_INIT_BETA,
        )
    rlist = [float(r) for r in rs]

    def objective(theta: np.ndarray) -> float:
        p = _from_unconstrained(theta)
        try:
            return _neg_loglik(p.omega, p.alpha, p.beta, rlist, sigma2_0)
        except NumericalError:
            return float("inf")

    res = minimize(
        objective,
        _to_unconstrained(init),
        method="Nelder-Mead",
        options={
            "maxiter": MAX_ITER,
            "maxfev": 4 * MAX_ITER,
            "xatol": SIMPLEX_TOL,
            "fatol": 1e-10,
        },
    )
    sim = res.final_simplex[0]
    diameter = float(np.max(np.abs(sim[1:] - sim[0])))
    params = _from_unconstrained(res.x)
    loglik = log_likelihood(params, rs, sigma2_0)
    if not math.isfinite(loglik):
        raise NumericalError("fit produced a non-finite likelihood")
    return GarchFit(
        params=params,
        loglik=loglik,
        sigma2_path=variance_recursion(params, rs, sigma2_0),
        converged=bool(diameter < SIMPLEX_TOL and res.nit <= MAX_ITER),
        iterations=int(res.nit),
    )


def forecast_volatility(
    fit: GarchFit, last_eps2: float, horizon: int = 21, ticker: str = ""
) -> VolatilityScore:
    """Annualized volatility over a forecast horizon.

    The one-step-ahead variance applies the recursion once more from the end
    of the fitted path; further steps decay geometrically toward the
    unconditional level at rate alpha + beta. The score is the square root of
    252 times the mean per-day forecast variance.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if last_eps2 < 0:
        raise ValueError("last_eps2 is a squared shock and cannot be negative")
    p = fit.params
    sigma2_next = p.omega + p.alpha * last_eps2 + p.beta * float(fit.sigma2_path[-1])
    sbar = p.unconditional_variance
    persistence = p.alpha + p.beta
    total = 0.0
    for h in range(1, horizon + 1):
        total += sbar + persistence ** (h - 1) * (sigma2_next - sbar)
    mean_var = total / horizon
    return VolatilityScore(ticker, math.sqrt(TRADING_DAYS * mean_var))


def classify_universe(
    scores: list[VolatilityScore], k_top: int, k_bottom: int
) -> UniversePartition:
    """Partition tickers into aggressive / moderate / conservative classes.

    Scores are ranked by annual volatility descending (ties broken by ticker
    ascending): the k_top most volatile are aggressive, the k_bottom least
    volatile conservative, the remainder moderate.
    """
    tickers = [s.ticker for s in scores]
    if len(set(tickers)) != len(tickers):
        raise ValueError("duplicate tickers in scores")
    if k_top < 0 or k_bottom < 0:
        raise ValueError("k_top and k_bottom must be non-negative")
    if k_top + k_bottom >= len(scores):
        raise ValueError(
            f"k_top + k_bottom = {k_top + k_bottom} must be < {len(scores)} scores"
        )
    ranked = sorted(scores, key=lambda s: (-s.annual_vol, s.ticker))
    aggressive = frozenset(s.ticker for s in ranked[:k_top])
    conservative = frozenset(s.ticker for s in ranked[len(ranked) - k_bottom :])
    moderate = frozenset(s.ticker for s in ranked[k_top : len(ranked) - k_bottom])
    return UniversePartition(aggressive, moderate, conservative)
