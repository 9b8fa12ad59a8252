"""Proximal policy optimization over the office environment.

One "iteration" (= one simulated training day in the evaluation protocol) is
a rollout of days_per_iteration single-day episodes followed by
epochs_per_batch full-batch clipped-surrogate updates under SGD.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from metadr import net
from metadr.env import OfficeEnv

ADV_EPS = 1e-8


@dataclass(frozen=True)
class PpoConfig:
    clip_epsilon: float = 0.3
    value_coef: float = 0.5
    sgd_learning_rate: float = 0.01
    epochs_per_batch: int = 4
    days_per_iteration: int = 16

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if self.value_coef < 0.0:
            raise ValueError("value_coef must be >= 0")
        if self.sgd_learning_rate <= 0.0:
            raise ValueError("sgd_learning_rate must be positive")
        if self.epochs_per_batch < 0:
            raise ValueError("epochs_per_batch must be >= 0")
        if self.days_per_iteration < 1:
            raise ValueError("days_per_iteration must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Batch of per-day records from one rollout."""

    obs: np.ndarray           # (B, obs_dim)
    actions: np.ndarray       # (B, act_dim), raw (unclipped)
    log_prob_old: np.ndarray  # (B,)
    rewards: np.ndarray       # (B,)
    value_preds: np.ndarray   # (B,)
    costs: np.ndarray         # (B,)
    penalties: np.ndarray     # (B,) bool
    advantages: np.ndarray | None = None
    value_targets: np.ndarray | None = None

    def __len__(self) -> int:
        return self.obs.shape[0]


def collect_rollout(params: net.PolicyParams, env: OfficeEnv, n_days: int,
                    rng: np.random.Generator) -> Trajectory:
    """Run n_days single-day episodes, recording log-probs and value preds."""
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    obs_rows, act_rows = [], []
    log_probs = np.empty(n_days)
    rewards = np.empty(n_days)
    values = np.empty(n_days)
    costs = np.empty(n_days)
    penalties = np.empty(n_days, dtype=bool)
    obs = env.observation()
    for day in range(n_days):
        mean, value = net.forward(params, obs)
        action = net.gaussian_sample(mean, params.action_log_std, rng)
        log_probs[day] = net.gaussian_log_prob(mean, params.action_log_std, action)
        next_obs, reward, done, info = env.step(action)
        assert done
        obs_rows.append(obs)
        act_rows.append(action)
        rewards[day] = reward
        values[day] = value
        costs[day] = info["cost"]
        penalties[day] = info["penalty"]
        obs = next_obs
    return Trajectory(
        obs=np.asarray(obs_rows), actions=np.asarray(act_rows),
        log_prob_old=log_probs, rewards=rewards, value_preds=values,
        costs=costs, penalties=penalties,
    )


def compute_advantages(traj: Trajectory) -> Trajectory:
    """Single-step advantages r - V(s), batch-normalized; targets are rewards."""
    raw = traj.rewards - traj.value_preds
    normalized = (raw - raw.mean()) / (raw.std() + ADV_EPS)
    return replace(traj, advantages=normalized, value_targets=traj.rewards.copy())


def make_loss_batch(traj: Trajectory, cfg: PpoConfig) -> net.LossBatch:
    if traj.advantages is None or traj.value_targets is None:
        raise ValueError("trajectory needs compute_advantages() first")
    return net.LossBatch(
        obs=traj.obs, actions=traj.actions, log_prob_old=traj.log_prob_old,
        advantages=traj.advantages, value_targets=traj.value_targets,
        clip_epsilon=cfg.clip_epsilon, value_coef=cfg.value_coef,
    )


def ppo_loss(params: net.PolicyParams, traj: Trajectory,
             cfg: PpoConfig) -> tuple[float, net.Gradients]:
    """Clipped-surrogate loss plus weighted value loss, with exact gradients."""
    return net.backprop(params, make_loss_batch(traj, cfg))


def ppo_update(params: net.PolicyParams, traj: Trajectory, cfg: PpoConfig,
               opt: net.OptimizerState) -> net.PolicyParams:
    """epochs_per_batch full-batch gradient steps on one trajectory."""
    for _ in range(cfg.epochs_per_batch):
        _, grads = ppo_loss(params, traj, cfg)
        params = net.optimizer_step(params, grads, opt)
    return params


def train_iteration(params: net.PolicyParams, env: OfficeEnv, cfg: PpoConfig,
                    opt: net.OptimizerState, rng: np.random.Generator):
    """One PPO iteration; returns (params, stats dict for the per-day log)."""
    traj = compute_advantages(collect_rollout(params, env, cfg.days_per_iteration, rng))
    loss, _, _ = net.loss_value(params, make_loss_batch(traj, cfg))
    params = ppo_update(params, traj, cfg, opt)
    stats = {
        "mean_reward": float(traj.rewards.mean()),
        "loss": loss,
        "mean_cost": float(traj.costs.mean()),
        "penalty_rate": float(traj.penalties.mean()),
    }
    return params, stats
