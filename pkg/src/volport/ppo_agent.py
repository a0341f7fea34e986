"""Clipped-surrogate policy optimization over the market simulator.

Rollouts sample actions from the diagonal Gaussian policy, advantages come
from generalized advantage estimation computed per episode segment, and the
policy/value parameters are updated by minibatched Adam steps on the clipped
objective. Every stage is reproducible bit-for-bit from the config seed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .indicators import FeatureSet
from .market_data import PricePanel, _readonly
from .policy_core import (
    ApproximatorSpec,
    ParameterVector,
    adam_step,
    backward,
    forward,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    gaussian_sample,
    init_adam,
    init_params,
)
from .portfolio_env import (
    EnvConfig,
    EnvState,
    EpisodeLedger,
    action_to_weights,
    observation_dim,
    reset,
    run_episode,
    step,
)

LOG_RATIO_CLAMP = 20.0


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs_per_update: int = 10
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    rollout_length: int = 256
    total_updates: int = 40
    seed: int = 0
    normalize_advantages: bool = True
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.rollout_length < 1 or self.minibatch_size < 1:
            raise ValueError("rollout_length and minibatch_size must be >= 1")
        if self.epochs_per_update < 1 or self.total_updates < 0:
            raise ValueError("epochs_per_update must be >= 1, total_updates >= 0")
        object.__setattr__(self, "hidden", tuple(self.hidden))


@dataclass(frozen=True)
class TrajectoryBatch:
    """Per-step arrays from one rollout, all of equal length.

    `dones` marks steps that ended the trading window (the next state was a
    fresh episode); `bootstrap_value` is the critic's estimate at the state
    the rollout stopped in, used to close the final unfinished segment.
    Advantages and return targets are attached by `compute_advantages`.
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: float
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.rewards)
        arrays = [self.observations, self.actions, self.log_probs, self.values, self.dones]
        if self.advantages is not None:
            arrays += [self.advantages, self.returns]
        if any(len(a) != n for a in arrays):
            raise ValueError("batch arrays must all have the same length")

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class UpdateStats:
    mean_reward: float
    surrogate: float
    value_loss: float
    entropy: float
    clip_fraction: float


@dataclass(frozen=True)
class TrainReport:
    seed: int
    wall_clock: float
    updates: tuple[UpdateStats, ...]


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    terminal_value: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one contiguous segment.

    delta_t = r_t + gamma * V_{t+1} - V_t, accumulated backward with factor
    gamma * lam; the value after the last step is `terminal_value`. Returns
    (advantages, return targets = advantages + values).
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError("rewards and values must have the same length")
    n = len(r)
    adv = np.empty(n)
    last = 0.0
    for t in reversed(range(n)):
        v_next = v[t + 1] if t + 1 < n else terminal_value
        delta = r[t] + gamma * v_next - v[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + v


def compute_advantages(batch: TrajectoryBatch, gamma: float, lam: float) -> TrajectoryBatch:
    """Apply GAE segment by segment (window-end boundaries get terminal value
    zero; the trailing open segment bootstraps from the critic)."""
    n = len(batch)
    adv = np.empty(n)
    ret = np.empty(n)
    seg_start = 0
    for i in range(n):
        if batch.dones[i] or i == n - 1:
            seg = slice(seg_start, i + 1)
            terminal = 0.0 if batch.dones[i] else batch.bootstrap_value
            a, r = gae(batch.rewards[seg], batch.values[seg], terminal, gamma, lam)
            adv[seg] = a
            ret[seg] = r
            seg_start = i + 1
    return replace(batch, advantages=adv, returns=ret)


def normalize_advantages(batch: TrajectoryBatch) -> TrajectoryBatch:
    """Center and scale advantages to mean 0, std 1 within the batch.
    Left untouched when the batch is too small or constant."""
    if batch.advantages is None:
        raise ValueError("advantages not computed yet")
    a = batch.advantages
    std = float(a.std())
    if len(a) < 2 or std == 0.0:
        return batch
    return replace(batch, advantages=(a - a.mean()) / std)


def clipped_surrogate(
    batch: TrajectoryBatch,
    params: ParameterVector,
    clip_eps: float,
    value_coef: float = 0.5,
    entropy_coef: float = 0.0,
    indices: np.ndarray | None = None,
) -> tuple[float, np.ndarray, UpdateStats]:
    """Clipped policy loss plus value and entropy terms, with exact gradients.

    Per sample the policy contribution is min(rho * A, clip(rho) * A) with
    rho the new/old probability ratio (log-ratio clamped to +-20 for
    safety). Returns (total loss, flat gradient, stats over the samples).
    """
    if batch.advantages is None or batch.returns is None:
        raise ValueError("advantages must be populated before the loss")
    idx = np.arange(len(batch)) if indices is None else np.asarray(indices)
    B = len(idx)
    if B == 0:
        raise ValueError("empty minibatch")
    grad = np.zeros(len(params.values))
    policy_sum = 0.0
    value_sum = 0.0
    entropy_sum = 0.0
    clipped_count = 0
    for i in idx:
        obs = batch.observations[i]
        out = forward(params, obs)
        logp_new = gaussian_log_prob(out, batch.actions[i])
        log_ratio = logp_new - batch.log_probs[i]
        clamped = min(max(log_ratio, -LOG_RATIO_CLAMP), LOG_RATIO_CLAMP)
        rho = math.exp(clamped)
        A = batch.advantages[i]
        unclipped = rho * A
        clipped = min(max(rho, 1.0 - clip_eps), 1.0 + clip_eps) * A
        contribution = min(unclipped, clipped)
        if contribution < unclipped:
            clipped_count += 1
        policy_sum += contribution

        v_err = out.value - batch.returns[i]
        value_sum += v_err * v_err
        entropy_sum += gaussian_entropy(out)

        # Gradient flows through the policy term only when the unclipped
        # branch attains the min and the ratio clamp is inactive.
        active = unclipped <= clipped and abs(log_ratio) < LOG_RATIO_CLAMP
        coeff = (-rho * A / B) if active else 0.0
        d_mu_logp, d_ls_logp = gaussian_log_prob_grads(out, batch.actions[i])
        d_mean = coeff * d_mu_logp
        d_log_std = coeff * d_ls_logp - entropy_coef / B  # d entropy / d log_std = 1
        d_value = value_coef * 2.0 * v_err / B
        grad += backward(params, obs, d_mean, d_log_std, d_value)

    surrogate = policy_sum / B
    value_loss = value_sum / B
    entropy = entropy_sum / B
    loss = -surrogate + value_coef * value_loss - entropy_coef * entropy
    stats = UpdateStats(
        mean_reward=float(batch.rewards[idx].mean()),
        surrogate=surrogate,
        value_loss=value_loss,
        entropy=entropy,
        clip_fraction=clipped_count / B,
    )
    return loss, grad, stats


@dataclass
class RolloutContext:
    """Mutable cursor over the training window: the environment state carries
    over between rollouts, wrapping to the window start when exhausted."""

    panel: PricePanel
    features: FeatureSet
    env_cfg: EnvConfig
    start: int
    end: int
    state: EnvState


def new_context(
    panel: PricePanel, features: FeatureSet, env_cfg: EnvConfig, start: int, end: int
) -> RolloutContext:
    if not start < end:
        raise ValueError(f"need start < end, got {start} >= {end}")
    return RolloutContext(panel, features, env_cfg, start, end, reset(panel, features, env_cfg, start))


def collect_rollout(
    ctx: RolloutContext,
    params: ParameterVector,
    rollout_length: int,
    rng: np.random.Generator,
) -> TrajectoryBatch:
    """Sample `rollout_length` transitions from the current policy.

    Actions are drawn from the Gaussian before the softmax; behavior
    log-probabilities are recorded at sample time. Reaching the window end
    marks the step done and restarts the episode at the window start.
    """
    spec = params.spec
    obs_buf = np.empty((rollout_length, spec.input_dim))
    act_buf = np.empty((rollout_length, spec.n_assets))
    logp_buf = np.empty(rollout_length)
    rew_buf = np.empty(rollout_length)
    val_buf = np.empty(rollout_length)
    done_buf = np.zeros(rollout_length, dtype=bool)
    for i in range(rollout_length):
        state = ctx.state
        out = forward(params, state.observation)
        action = gaussian_sample(out, rng)
        obs_buf[i] = state.observation
        act_buf[i] = action
        logp_buf[i] = gaussian_log_prob(out, action)
        val_buf[i] = out.value
        res = step(state, action, ctx.panel, ctx.features, ctx.env_cfg)
        rew_buf[i] = res.reward
        if res.next.t >= ctx.end:
            done_buf[i] = True
            ctx.state = reset(ctx.panel, ctx.features, ctx.env_cfg, ctx.start)
        else:
            ctx.state = res.next
    bootstrap = 0.0 if done_buf[-1] else forward(params, ctx.state.observation).value
    return TrajectoryBatch(
        observations=_readonly(obs_buf),
        actions=_readonly(act_buf),
        log_probs=logp_buf,
        rewards=rew_buf,
        values=val_buf,
        dones=done_buf,
        bootstrap_value=bootstrap,
    )


def train(
    panel: PricePanel,
    features: FeatureSet,
    env_cfg: EnvConfig,
    ppo_cfg: PPOConfig,
    start: int,
    end: int,
) -> tuple[ParameterVector, TrainReport]:
    """Full PPO training loop over the window [start, end].

    Deterministic given ppo_cfg.seed: initialization, action sampling, and
    minibatch shuffling all derive from it. With total_updates = 0 the
    initial parameters are returned unchanged.
    """
    if end - start < ppo_cfg.rollout_length:
        raise ValueError(
            f"training window has {end - start} steps; need >= rollout_length "
            f"({ppo_cfg.rollout_length})"
        )
    t0 = time.perf_counter()
    n = panel.n_assets
    spec = ApproximatorSpec(
        input_dim=observation_dim(n), hidden=ppo_cfg.hidden, n_assets=n
    )
    params = init_params(spec, ppo_cfg.seed)
    rng = np.random.default_rng([ppo_cfg.seed, 1])
    ctx = new_context(panel, features, env_cfg, start, end)
    adam = init_adam(len(params.values))
    rows: list[UpdateStats] = []
    for _ in range(ppo_cfg.total_updates):
        batch = collect_rollout(ctx, params, ppo_cfg.rollout_length, rng)
        batch = compute_advantages(batch, ppo_cfg.gamma, ppo_cfg.lam)
        if ppo_cfg.normalize_advantages:
            batch = normalize_advantages(batch)
        stat_acc: list[UpdateStats] = []
        for _ in range(ppo_cfg.epochs_per_update):
            perm = rng.permutation(len(batch))
            for lo in range(0, len(batch), ppo_cfg.minibatch_size):
                idx = perm[lo : lo + ppo_cfg.minibatch_size]
                _, grad, stats = clipped_surrogate(
                    batch,
                    params,
                    ppo_cfg.clip_eps,
                    value_coef=ppo_cfg.value_coef,
                    entropy_coef=ppo_cfg.entropy_coef,
                    indices=idx,
                )
                params, adam = adam_step(params, grad, adam, ppo_cfg.learning_rate)
                stat_acc.append(stats)
        rows.append(
            UpdateStats(
                mean_reward=float(batch.rewards.mean()),
                surrogate=float(np.mean([s.surrogate for s in stat_acc])),
                value_loss=float(np.mean([s.value_loss for s in stat_acc])),
                entropy=float(np.mean([s.entropy for s in stat_acc])),
                clip_fraction=float(np.mean([s.clip_fraction for s in stat_acc])),
            )
        )
    report = TrainReport(
        seed=ppo_cfg.seed, wall_clock=time.perf_counter() - t0, updates=tuple(rows)
    )
    return params, report


def evaluate(
    params: ParameterVector,
    panel: PricePanel,
    features: FeatureSet,
    env_cfg: EnvConfig,
    start: int,
    end: int,
) -> EpisodeLedger:
    """Deterministic evaluation: the policy plays its mean action (no
    sampling), so repeated calls give identical ledgers."""

    def policy(state: EnvState) -> np.ndarray:
        return action_to_weights(forward(params, state.observation).mean)

    return run_episode(policy, panel, features, env_cfg, start, end)


def random_search(
    panel: PricePanel,
    features: FeatureSet,
    env_cfg: EnvConfig,
    base_cfg: PPOConfig,
    n_trials: int,
    search_seed: int,
    start: int,
    end: int,
) -> PPOConfig:
    """Seeded random search over learning rate, clip width, and rollout
    length; scores each trial by mean reward over the last quarter of its
    updates and returns the best trial's config (with the base seed)."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(search_seed)
    best_cfg = base_cfg
    best_score = -math.inf
    for trial in range(n_trials):
        lr = 10.0 ** rng.uniform(-4.0, -2.0)
        clip_eps = rng.uniform(0.1, 0.3)
        rollout = int(rng.choice([64, 128, 256]))
        cfg = replace(
            base_cfg,
            learning_rate=lr,
            clip_eps=clip_eps,
            rollout_length=min(rollout, end - start),
            seed=base_cfg.seed,
        )
        _, report = train(panel, features, env_cfg, cfg, start, end)
        tail = report.updates[-max(1, len(report.updates) // 4) :]
        score = float(np.mean([u.mean_reward for u in tail]))
        if score > best_score:
            best_score = score
            best_cfg = cfg
    return best_cfg
