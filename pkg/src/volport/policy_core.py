"""Actor-critic function approximator with hand-written reverse-mode gradients.

A small tanh MLP trunk feeds three heads: a linear action mean, a
state-independent learnable log standard deviation, and a linear scalar
value. Everything lives in one flat parameter vector so the optimizer and
checkpoint format stay trivial. Gradients are exact; finite differences are
used only as a test oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ApproximatorSpec:
    input_dim: int
    hidden: tuple[int, ...] = (64, 64)
    n_assets: int = 1

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden, self.n_assets)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "hidden", tuple(self.hidden))


def _layout(spec: ApproximatorSpec) -> list[tuple[str, tuple[int, ...]]]:
    entries = []
    fan_in = spec.input_dim
    for i, h in enumerate(spec.hidden):
        entries.append((f"W{i}", (h, fan_in)))
        entries.append((f"b{i}", (h,)))
        fan_in = h
    entries.append(("W_mu", (spec.n_assets, fan_in)))
    entries.append(("b_mu", (spec.n_assets,)))
    entries.append(("log_std", (spec.n_assets,)))
    entries.append(("w_v", (fan_in,)))
    entries.append(("b_v", (1,)))
    return entries


def n_params(spec: ApproximatorSpec) -> int:
    return sum(int(np.prod(shape)) for _, shape in _layout(spec))


@dataclass(frozen=True)
class ParameterVector:
    spec: ApproximatorSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or len(v) != n_params(self.spec):
            raise ValueError(
                f"expected {n_params(self.spec)} parameters, got shape {v.shape}"
            )
        if not np.isfinite(v).all():
            raise ValueError("parameters contain non-finite entries")

    def views(self) -> dict[str, np.ndarray]:
        out = {}
        offset = 0
        for name, shape in _layout(self.spec):
            size = int(np.prod(shape))
            out[name] = self.values[offset : offset + size].reshape(shape)
            offset += size
        return out


@dataclass(frozen=True)
class PolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray  # clamped to [LOG_STD_MIN, LOG_STD_MAX]
    value: float


@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray


def init_params(spec: ApproximatorSpec, seed: int) -> ParameterVector:
    """Glorot-uniform weights, zero biases, log_std at its starting level.
    Deterministic given the seed."""
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in _layout(spec):
        if name.startswith("W") or name == "w_v":
            fan_out, fan_in = shape if len(shape) == 2 else (1, shape[0])
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            chunks.append(rng.uniform(-limit, limit, size=int(np.prod(shape))))
        elif name == "log_std":
            chunks.append(np.full(shape, LOG_STD_INIT))
        else:
            chunks.append(np.zeros(int(np.prod(shape))))
    return ParameterVector(spec, np.concatenate(chunks))


def _trunk_forward(views: dict[str, np.ndarray], spec: ApproximatorSpec, obs: np.ndarray):
    activations = [obs]
    h = obs
    for i in range(len(spec.hidden)):
        h = np.tanh(views[f"W{i}"] @ h + views[f"b{i}"])
        activations.append(h)
    return activations


def forward(params: ParameterVector, observation: np.ndarray) -> PolicyOutput:
    """Deterministic forward pass from one observation vector."""
    obs = np.asarray(observation, dtype=np.float64)
    spec = params.spec
    if obs.shape != (spec.input_dim,):
        raise ValueError(f"observation must have shape ({spec.input_dim},)")
    if not np.isfinite(obs).all():
        raise ValueError("observation contains non-finite entries")
    views = params.views()
    h = _trunk_forward(views, spec, obs)[-1]
    mean = views["W_mu"] @ h + views["b_mu"]
    log_std = np.clip(views["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    value = float(views["w_v"] @ h + views["b_v"][0])
    return PolicyOutput(mean=mean, log_std=log_std, value=value)


def backward(
    params: ParameterVector,
    observation: np.ndarray,
    d_mean: np.ndarray,
    d_log_std: np.ndarray,
    d_value: float,
) -> np.ndarray:
    """Exact gradient of <d_mean, mean> + <d_log_std, log_std> + d_value * value
    with respect to every parameter, as a flat vector matching the layout."""
    obs = np.asarray(observation, dtype=np.float64)
    spec = params.spec
    d_mean = np.asarray(d_mean, dtype=np.float64)
    d_log_std = np.asarray(d_log_std, dtype=np.float64)
    if obs.shape != (spec.input_dim,) or d_mean.shape != (spec.n_assets,) or d_log_std.shape != (spec.n_assets,):
        raise ValueError("upstream gradient shapes do not match the spec")
    views = params.views()
    acts = _trunk_forward(views, spec, obs)
    h_last = acts[-1]

    grads: dict[str, np.ndarray] = {}
    grads["W_mu"] = np.outer(d_mean, h_last)
    grads["b_mu"] = d_mean.copy()
    raw = views["log_std"]
    inside = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
    grads["log_std"] = np.where(inside, d_log_std, 0.0)
    grads["w_v"] = d_value * h_last
    grads["b_v"] = np.array([d_value])

    g_h = views["W_mu"].T @ d_mean + d_value * views["w_v"]
    for i in reversed(range(len(spec.hidden))):
        h = acts[i + 1]
        dz = g_h * (1.0 - h * h)
        grads[f"W{i}"] = np.outer(dz, acts[i])
        grads[f"b{i}"] = dz
        g_h = views[f"W{i}"].T @ dz

    return np.concatenate([grads[name].ravel() for name, _ in _layout(spec)])


def gaussian_log_prob(out: PolicyOutput, action: np.ndarray) -> float:
    """Log density of a diagonal Gaussian at `action`."""
    a = np.asarray(action, dtype=np.float64)
    var = np.exp(2.0 * out.log_std)
    return float(
        np.sum(-0.5 * math.log(2.0 * math.pi) - out.log_std - (a - out.mean) ** 2 / (2.0 * var))
    )


def gaussian_log_prob_grads(out: PolicyOutput, action: np.ndarray):
    """Gradients of the log density with respect to (mean, log_std)."""
    a = np.asarray(action, dtype=np.float64)
    var = np.exp(2.0 * out.log_std)
    d_mean = (a - out.mean) / var
    d_log_std = (a - out.mean) ** 2 / var - 1.0
    return d_mean, d_log_std


def gaussian_sample(out: PolicyOutput, rng: np.random.Generator) -> np.ndarray:
    return out.mean + np.exp(out.log_std) * rng.standard_normal(len(out.mean))


def gaussian_entropy(out: PolicyOutput) -> float:
    return float(np.sum(out.log_std + 0.5 * (1.0 + math.log(2.0 * math.pi))))


def init_adam(n: int) -> AdamState:
    return AdamState(step=0, m=np.zeros(n), v=np.zeros(n))


def adam_step(
    params: ParameterVector, grads: np.ndarray, state: AdamState, lr: float
) -> tuple[ParameterVector, AdamState]:
    """One bias-corrected Adam update descending the supplied gradient."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.values.shape:
        raise ValueError("gradient length does not match parameters")
    if not np.isfinite(g).all():
        raise ValueError("gradients contain non-finite entries")
    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new_values = params.values - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return ParameterVector(params.spec, new_values), AdamState(step=t, m=m, v=v)


def save_params(path, params: ParameterVector):
    """Write a checkpoint that reloads bit-exactly: three header lines with
    the spec dimensions, then one shortest-round-trip decimal per parameter."""
    spec = params.spec
    with open(path, "w") as fh:
        fh.write(f"input_dim {spec.input_dim}\n")
        fh.write("hidden" + "".join(f" {h}" for h in spec.hidden) + "\n")
        fh.write(f"n_assets {spec.n_assets}\n")
        for x in params.values:
            fh.write(repr(float(x)) + "\n")


def load_params(path) -> ParameterVector:
    with open(path) as fh:
        lines = fh.read().splitlines()
    try:
        input_dim = int(lines[0].split()[1])
        hidden = tuple(int(x) for x in lines[1].split()[1:])
        n_assets = int(lines[2].split()[1])
        values = np.array([float(x) for x in lines[3:] if x], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed checkpoint ({exc})") from None
    spec = ApproximatorSpec(input_dim=input_dim, hidden=hidden, n_assets=n_assets)
    if len(values) != n_params(spec):
        raise DataError(
            f"{path}: expected {n_params(spec)} parameters, found {len(values)}"
        )
    return ParameterVector(spec, values)
