"""Actor-critic network: parameters, Gaussian policy head, manual backprop, optimizers.

The topology is fixed: two tanh hidden layers of 256 units shared by the
action-mean head and the value head, plus a state-independent log-std vector
for the Gaussian policy. Gradients are hand-derived for this topology; no
autodiff tape. All numerics are float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from metadr import kernels

HIDDEN = 256
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteError(RuntimeError):
    """A loss, gradient, or parameter update produced NaN/Inf."""


def _expected_shapes(obs_dim: int, act_dim: int) -> dict[str, tuple[int, ...]]:
    return {
        "trunk_w1": (obs_dim, HIDDEN),
        "trunk_b1": (HIDDEN,),
        "trunk_w2": (HIDDEN, HIDDEN),
        "trunk_b2": (HIDDEN,),
        "head_action_w": (HIDDEN, act_dim),
        "head_action_b": (act_dim,),
        "head_value_w": (HIDDEN, 1),
        "head_value_b": (1,),
        "action_log_std": (act_dim,),
    }


def _check_shapes(obj, obs_dim: int, act_dim: int) -> None:
    for name, want in _expected_shapes(obs_dim, act_dim).items():
        got = getattr(obj, name).shape
        if got != want:
            raise ValueError(
                f"{type(obj).__name__}.{name} must have shape {want}, got {got}"
            )


def _as_readonly_f64(value) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PolicyParams:
    """All weights of the shared-trunk actor-critic MLP. Immutable value."""

    trunk_w1: np.ndarray
    trunk_b1: np.ndarray
    trunk_w2: np.ndarray
    trunk_b2: np.ndarray
    head_action_w: np.ndarray
    head_action_b: np.ndarray
    head_value_w: np.ndarray
    head_value_b: np.ndarray
    action_log_std: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _as_readonly_f64(getattr(self, f.name)))
        if self.trunk_w1.ndim != 2 or self.head_action_w.ndim != 2:
            raise ValueError("trunk_w1 and head_action_w must be 2-d matrices")
        _check_shapes(self, self.obs_dim, self.act_dim)

    @property
    def obs_dim(self) -> int:
        return self.trunk_w1.shape[0]

    @property
    def act_dim(self) -> int:
        return self.head_action_w.shape[1]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


@dataclass(frozen=True)
class Gradients:
    """Shape-for-shape companion of PolicyParams."""

    trunk_w1: np.ndarray
    trunk_b1: np.ndarray
    trunk_w2: np.ndarray
    trunk_b2: np.ndarray
    head_action_w: np.ndarray
    head_action_b: np.ndarray
    head_value_w: np.ndarray
    head_value_b: np.ndarray
    action_log_std: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _as_readonly_f64(getattr(self, f.name)))

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


PARAM_FIELD_NAMES = tuple(f.name for f in fields(PolicyParams))


def zeros_like_grads(params: PolicyParams) -> Gradients:
    return Gradients(*(np.zeros_like(a) for a in params.arrays()))


def init_params(obs_dim: int, act_dim: int, rng: np.random.Generator) -> PolicyParams:
    """Glorot-uniform weights, zero biases, zero log-std."""
    if obs_dim < 1 or act_dim < 1:
        raise ValueError("obs_dim and act_dim must be positive")

    def glorot(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return PolicyParams(
        trunk_w1=glorot(obs_dim, HIDDEN),
        trunk_b1=np.zeros(HIDDEN),
        trunk_w2=glorot(HIDDEN, HIDDEN),
        trunk_b2=np.zeros(HIDDEN),
        head_action_w=glorot(HIDDEN, act_dim),
        head_action_b=np.zeros(act_dim),
        head_value_w=glorot(HIDDEN, 1),
        head_value_b=np.zeros(1),
        action_log_std=np.zeros(act_dim),
    )


def forward(params: PolicyParams, obs) -> tuple[np.ndarray, float]:
    """Deterministic forward pass: (action_mean, value)."""
    x = np.ascontiguousarray(obs, dtype=np.float64)
    if x.shape != (params.obs_dim,):
        raise ValueError(f"obs must have shape ({params.obs_dim},), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("obs contains non-finite entries")
    mean, value = kernels.forward_one(*params.arrays()[:8], x)
    return np.asarray(mean), float(value)


def gaussian_sample(mean, log_std, rng: np.random.Generator) -> np.ndarray:
    """Draw a raw (unclipped) action: mean + exp(log_std) * z."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if mean.shape != log_std.shape:
        raise ValueError(f"mean shape {mean.shape} != log_std shape {log_std.shape}")
    z = rng.standard_normal(mean.shape[0])
    return mean + np.exp(log_std) * z


def gaussian_log_prob(mean, log_std, action) -> float:
    """Diagonal-Gaussian log density, summed over action dimensions."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if not (mean.shape == log_std.shape == action.shape):
        raise ValueError("mean, log_std, and action must share one shape")
    z = (action - mean) / np.exp(log_std)
    return float(np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI))


@dataclass(frozen=True)
class LossBatch:
    """One full-batch clipped-surrogate loss specification.

    Built by the ppo module; backprop() differentiates it exactly.
    """

    obs: np.ndarray            # (B, obs_dim)
    actions: np.ndarray        # (B, act_dim)
    log_prob_old: np.ndarray   # (B,)
    advantages: np.ndarray     # (B,)
    value_targets: np.ndarray  # (B,)
    clip_epsilon: float
    value_coef: float

    def __post_init__(self):
        for name in ("obs", "actions", "log_prob_old", "advantages", "value_targets"):
            object.__setattr__(
                self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            )
        n = self.obs.shape[0]
        if self.obs.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("obs and actions must be 2-d (batch, dim)")
        for name in ("actions", "log_prob_old", "advantages", "value_targets"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"LossBatch.{name} batch size differs from obs")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if self.value_coef < 0.0:
            raise ValueError("value_coef must be >= 0")

    def __len__(self) -> int:
        return self.obs.shape[0]


def _loss_pieces(params: PolicyParams, batch: LossBatch):
    if batch.obs.shape[1] != params.obs_dim or batch.actions.shape[1] != params.act_dim:
        raise ValueError("LossBatch dimensions do not match params")
    means, values, h1, h2 = kernels.forward_batch(*params.arrays()[:8], batch.obs)
    sigma = np.exp(params.action_log_std)
    z = (batch.actions - means) / sigma
    log_probs = np.sum(-0.5 * z * z - params.action_log_std - 0.5 * _LOG_2PI, axis=1)
    with np.errstate(over="ignore"):  # overflow surfaces as the error below
        ratios = np.exp(log_probs - batch.log_prob_old)
    if not np.isfinite(ratios).all():
        raise NonFiniteError("policy ratios are non-finite")
    eps = batch.clip_epsilon
    surr_raw = ratios * batch.advantages
    surr_clip = np.clip(ratios, 1.0 - eps, 1.0 + eps) * batch.advantages
    policy_term = -float(np.mean(np.minimum(surr_raw, surr_clip)))
    v_err = values - batch.value_targets
    value_term = batch.value_coef * float(np.mean(v_err * v_err))
    for name, term in (("policy", policy_term), ("value", value_term)):
        if not math.isfinite(term):
            raise NonFiniteError(f"{name} loss term is non-finite ({term})")
    return means, values, h1, h2, sigma, z, ratios, surr_raw, surr_clip, policy_term, value_term, v_err


def loss_value(params: PolicyParams, batch: LossBatch) -> tuple[float, float, float]:
    """Loss without gradients: (total, policy_term, value_term)."""
    pieces = _loss_pieces(params, batch)
    policy_term, value_term = pieces[9], pieces[10]
    return policy_term + value_term, policy_term, value_term


def backprop(params: PolicyParams, batch: LossBatch) -> tuple[float, Gradients]:
    """Exact reverse-mode gradient of the clipped-surrogate + value loss."""
    (means, values, h1, h2, sigma, z, ratios, surr_raw, surr_clip,
     policy_term, value_term, v_err) = _loss_pieces(params, batch)
    n = len(batch)
    # min() subgradient: the unclipped branch wins ties so the ratio-one batch
    # (first epoch) keeps its gradient.
    use_raw = surr_raw <= surr_clip
    g_logp = np.where(use_raw, -batch.advantages * ratios, 0.0) / n
    d_means = g_logp[:, None] * z / sigma
    d_log_std = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0)
    d_values = (2.0 * batch.value_coef / n) * v_err
    mlp_grads = kernels.backward_batch(
        params.trunk_w2, params.head_action_w, params.head_value_w,
        batch.obs, h1, h2, np.ascontiguousarray(d_means), d_values,
    )
    grads = Gradients(*mlp_grads, action_log_std=d_log_std)
    return policy_term + value_term, grads


# ---------------------------------------------------------------------------
# Optimizers


@dataclass
class OptimizerState:
    """Single-owner optimizer state; mutated only by optimizer_step."""

    kind: str  # "sgd" | "adam"
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: Gradients | None = None
    second_moment: Gradients | None = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.kind == "adam":
            for name in ("beta1", "beta2"):
                v = getattr(self, name)
                if not 0.0 < v < 1.0:
                    raise ValueError(f"{name} must be in (0, 1)")
            if self.epsilon <= 0.0:
                raise ValueError("epsilon must be positive")


def make_sgd(learning_rate: float) -> OptimizerState:
    return OptimizerState(kind="sgd", learning_rate=learning_rate)


def make_adam(params: PolicyParams, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> OptimizerState:
    return OptimizerState(
        kind="adam", learning_rate=learning_rate, beta1=beta1, beta2=beta2,
        epsilon=epsilon, first_moment=zeros_like_grads(params),
        second_moment=zeros_like_grads(params),
    )


def sgd_update(x: np.ndarray, g: np.ndarray, lr: float) -> np.ndarray:
    return x - lr * g


def adam_update(x, g, m, v, t, lr, beta1, beta2, epsilon):
    """One bias-corrected Adam step on a single array; returns (x, m, v)."""
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m_new / (1.0 - beta1 ** t)
    v_hat = v_new / (1.0 - beta2 ** t)
    return x - lr * m_hat / (np.sqrt(v_hat) + epsilon), m_new, v_new


def optimizer_step(params: PolicyParams, grads: Gradients,
                   state: OptimizerState) -> PolicyParams:
    """Apply one update; returns new params, mutates state in place."""
    for name, p_arr, g_arr in zip(PARAM_FIELD_NAMES, params.arrays(), grads.arrays()):
        if p_arr.shape != g_arr.shape:
            raise ValueError(
                f"gradient shape mismatch for {name}: {g_arr.shape} vs {p_arr.shape}"
            )
        if not np.isfinite(g_arr).all():
            raise NonFiniteError(f"gradient for {name} is non-finite")
    state.step_count += 1
    new_arrays = []
    if state.kind == "sgd":
        for p_arr, g_arr in zip(params.arrays(), grads.arrays()):
            new_arrays.append(sgd_update(p_arr, g_arr, state.learning_rate))
    else:
        new_m, new_v = [], []
        for p_arr, g_arr, m_arr, v_arr in zip(
            params.arrays(), grads.arrays(),
            state.first_moment.arrays(), state.second_moment.arrays(),
        ):
            x, m, v = adam_update(
                p_arr, g_arr, m_arr, v_arr, state.step_count,
                state.learning_rate, state.beta1, state.beta2, state.epsilon,
            )
            new_arrays.append(x)
            new_m.append(m)
            new_v.append(v)
        state.first_moment = Gradients(*new_m)
        state.second_moment = Gradients(*new_v)
    # log-std lives last in field order; clamp after the update
    new_arrays[-1] = np.clip(new_arrays[-1], LOG_STD_MIN, LOG_STD_MAX)
    for name, arr in zip(PARAM_FIELD_NAMES, new_arrays):
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"update produced non-finite values in {name}")
    return PolicyParams(*new_arrays)
