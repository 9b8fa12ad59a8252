"""Meta-training loop: K-step PPO inner adaptation, Adam outer updates.

Two meta-gradient modes are supported and recorded in every checkpoint:

* first_order: the post-adaptation policy gradient (clipped surrogate +
  value loss at the adapted weights) is applied to the initialization,
  treating the inner updates as constants.
* reptile: the meta-gradient is (theta - phi) / (K * inner_lr), averaged
  over tasks.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from metadr import net, ppo
from metadr.checkpoint import MetaInfo, save_checkpoint
from metadr.env import EnvConfig, TaskDistribution, TaskSpec, build_env, sample_task

MODE_FIRST_ORDER = "first_order"
MODE_REPTILE = "reptile"

# Seed-stream tags for the independent RNG streams of a meta-training run.
_STREAM_INIT = 201
_STREAM_TASKS = 202
_STREAM_INNER = 203


@dataclass(frozen=True)
class MamlConfig:
    meta_learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    tasks_per_meta_step: int = 8
    inner_steps: int = 5
    meta_iterations: int = 200
    checkpoint_at: tuple[int, ...] = (50, 100, 150, 200)
    meta_grad_mode: str = MODE_FIRST_ORDER

    def __post_init__(self):
        if self.meta_learning_rate <= 0.0:
            raise ValueError("meta_learning_rate must be positive")
        if self.tasks_per_meta_step < 1:
            raise ValueError("tasks_per_meta_step must be >= 1")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")
        if self.meta_iterations < 0:
            raise ValueError("meta_iterations must be >= 0")
        if self.meta_grad_mode not in (MODE_FIRST_ORDER, MODE_REPTILE):
            raise ValueError(f"unknown meta_grad_mode {self.meta_grad_mode!r}")
        object.__setattr__(self, "checkpoint_at", tuple(sorted(set(self.checkpoint_at))))
        if any(c < 1 for c in self.checkpoint_at):
            raise ValueError("checkpoint_at entries must be >= 1")


@dataclass(frozen=True)
class MetaCheckpoint:
    params: net.PolicyParams
    meta_iteration: int
    meta_grad_mode: str
    config_fingerprint: str
    rng_state: dict


def inner_adapt(theta: net.PolicyParams, task: TaskSpec, k: int,
                env_cfg: EnvConfig, ppo_cfg: ppo.PpoConfig,
                rng: np.random.Generator):
    """K PPO iterations from theta on one task; returns (phi, post_traj)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    environment = build_env(task, env_cfg)
    params = theta
    opt = net.make_sgd(ppo_cfg.sgd_learning_rate)
    for _ in range(k):
        traj = ppo.compute_advantages(
            ppo.collect_rollout(params, environment, ppo_cfg.days_per_iteration, rng)
        )
        params = ppo.ppo_update(params, traj, ppo_cfg, opt)
    post_traj = ppo.compute_advantages(
        ppo.collect_rollout(params, environment, ppo_cfg.days_per_iteration, rng)
    )
    return params, post_traj


def meta_loss(post_traj: ppo.Trajectory) -> float:
    """Negative mean post-adaptation episode return."""
    if len(post_traj) == 0:
        raise ValueError("post-adaptation trajectory is empty")
    return -float(post_traj.rewards.mean())


def mean_gradients(grads: list[net.Gradients]) -> net.Gradients:
    if not grads:
        raise ValueError("no gradients to average")
    acc = [a.copy() for a in grads[0].arrays()]
    for g in grads[1:]:
        for out, arr in zip(acc, g.arrays()):
            out += arr
    return net.Gradients(*(a / len(grads) for a in acc))


def first_order_meta_gradient(task_results, ppo_cfg: ppo.PpoConfig) -> net.Gradients:
    """Mean over tasks of the post-adaptation loss gradient at phi."""
    per_task = []
    for phi, post_traj in task_results:
        _, grads = net.backprop(phi, ppo.make_loss_batch(post_traj, ppo_cfg))
        per_task.append(grads)
    return mean_gradients(per_task)


def reptile_meta_gradient(theta: net.PolicyParams, task_results, inner_lr: float,
                          k: int) -> net.Gradients:
    """Mean over tasks of (theta - phi) / (k * inner_lr); zero when k = 0."""
    if k == 0:
        return net.zeros_like_grads(theta)
    scale = 1.0 / (k * inner_lr)
    per_task = []
    for phi, _ in task_results:
        per_task.append(net.Gradients(*(
            (t_arr - p_arr) * scale
            for t_arr, p_arr in zip(theta.arrays(), phi.arrays())
        )))
    return mean_gradients(per_task)


def meta_update(theta: net.PolicyParams, task_results, opt: net.OptimizerState,
                mode: str, ppo_cfg: ppo.PpoConfig, k: int) -> net.PolicyParams:
    """One outer Adam step on the initialization."""
    if not task_results:
        raise ValueError("meta_update needs at least one task result")
    if mode == MODE_FIRST_ORDER:
        grad = first_order_meta_gradient(task_results, ppo_cfg)
    elif mode == MODE_REPTILE:
        grad = reptile_meta_gradient(theta, task_results, ppo_cfg.sgd_learning_rate, k)
    else:
        raise ValueError(f"unknown meta_grad_mode {mode!r}")
    return net.optimizer_step(theta, grad, opt)


def _adapt_worker(args):
    theta, task, k, env_cfg, ppo_cfg, seed_tuple = args
    rng = np.random.default_rng(np.random.SeedSequence(seed_tuple))
    return inner_adapt(theta, task, k, env_cfg, ppo_cfg, rng)


def train_maml(cfg: MamlConfig, dist: TaskDistribution, env_cfg: EnvConfig,
               ppo_cfg: ppo.PpoConfig, seed: int, *, workers: int = 1,
               checkpoint_dir=None, config_fingerprint: str = ""):
    """Full meta-training run.

    Returns (checkpoints, history). The checkpoint list starts with the
    iteration-0 initialization and adds one entry per cadence hit; when
    checkpoint_dir is set each is also written to disk atomically. History
    rows carry {iteration, mean_post_adapt_return, wall_time_s}.

    Inner adaptations are independent: with workers > 1 they fan out over a
    process pool, and per-task RNG streams are derived from (seed, iteration,
    task index) so the result is identical to the serial run.
    """
    hours = env_cfg.hours_per_day
    init_rng = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_INIT)))
    theta = net.init_params(obs_dim=3 * hours, act_dim=hours, rng=init_rng)
    task_rng = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_TASKS)))
    opt = net.make_adam(theta, cfg.meta_learning_rate, cfg.beta1, cfg.beta2)

    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def snapshot(iteration: int) -> MetaCheckpoint:
        ckpt = MetaCheckpoint(
            params=theta, meta_iteration=iteration,
            meta_grad_mode=cfg.meta_grad_mode,
            config_fingerprint=config_fingerprint,
            rng_state=task_rng.bit_generator.state,
        )
        if ckpt_dir is not None:
            save_checkpoint(
                ckpt_dir / f"checkpoint_{iteration:06d}.omck", ckpt.params,
                MetaInfo(iteration, ckpt.meta_grad_mode, ckpt.config_fingerprint,
                         ckpt.rng_state),
            )
        return ckpt

    checkpoints = [snapshot(0)]
    history = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for iteration in range(1, cfg.meta_iterations + 1):
            start = time.perf_counter()
            tasks = [sample_task(dist, task_rng) for _ in range(cfg.tasks_per_meta_step)]
            jobs = [
                (theta, task, cfg.inner_steps, env_cfg, ppo_cfg,
                 (seed, _STREAM_INNER, iteration, idx))
                for idx, task in enumerate(tasks)
            ]
            if pool is None:
                results = [_adapt_worker(job) for job in jobs]
            else:
                results = list(pool.map(_adapt_worker, jobs))
            theta = meta_update(theta, results, opt, cfg.meta_grad_mode, ppo_cfg,
                                cfg.inner_steps)
            mean_return = float(np.mean([post.rewards.mean() for _, post in results]))
            history.append({
                "iteration": iteration,
                "mean_post_adapt_return": mean_return,
                "wall_time_s": time.perf_counter() - start,
            })
            if iteration in cfg.checkpoint_at:
                checkpoints.append(snapshot(iteration))
    finally:
        if pool is not None:
            pool.shutdown()
    return checkpoints, history
