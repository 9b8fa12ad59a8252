"""Evaluation protocol: adaptation runs, trial aggregation, experiment reports.

Both arms of an adaptation experiment train PPO in the identical fixed
evaluation environment; only the weight initialization differs. Per-trial
seeds are derived from (master seed, arm, trial) so reruns are reproducible
and trials are paired across arms by index.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from metadr import net, ppo
from metadr.env import (
    EnvConfig,
    KIND_CURTAIL_SHIFT,
    KIND_LINEAR,
    KIND_SINUSOIDAL,
    KIND_THRESHOLD_EXP,
    TaskDistribution,
    TaskSpec,
    build_env,
)

EXP_ADAPT_CURTAIL_SHIFT = "AdaptCurtailShift"
EXP_ADAPT_THRESHOLD_EXP = "AdaptThresholdExp"
EXP_CHECKPOINT_ABLATION = "CheckpointAblation"
EXPERIMENT_IDS = (
    EXP_ADAPT_CURTAIL_SHIFT,
    EXP_ADAPT_THRESHOLD_EXP,
    EXP_CHECKPOINT_ABLATION,
)

ARM_MAML = "maml_ppo"
ARM_SCRATCH = "scratch_ppo"

_STREAM_EVAL = 301
_STREAM_SCRATCH_INIT = 302


def _arm_stream(arm: str) -> int:
    return zlib.crc32(arm.encode("utf-8"))


@dataclass(frozen=True)
class ExperimentSpec:
    experiment_id: str
    train_dist: TaskDistribution
    eval_task: TaskSpec
    eval_days: int = 100
    trials: int = 5
    final_window_days: int = 20

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment id {self.experiment_id!r}")
        if self.eval_days < 1 or self.trials < 1:
            raise ValueError("eval_days and trials must be >= 1")
        if not 1 <= self.final_window_days <= self.eval_days:
            raise ValueError("final_window_days must be in [1, eval_days]")


def builtin_spec(experiment_id: str, *, eval_baseline_seed: int = 2001,
                 eval_price_seed: int = 907, eval_multiplier: float = 1.0,
                 multiplier_low: float = 0.5, multiplier_high: float = 2.0,
                 eval_days: int = 100, trials: int = 5,
                 final_window_days: int = 20) -> ExperimentSpec:
    """The three built-in experiment definitions."""
    if experiment_id == EXP_ADAPT_THRESHOLD_EXP:
        kinds = (KIND_LINEAR, KIND_SINUSOIDAL)
        eval_kind = KIND_THRESHOLD_EXP
    elif experiment_id in (EXP_ADAPT_CURTAIL_SHIFT, EXP_CHECKPOINT_ABLATION):
        kinds = (KIND_LINEAR, KIND_SINUSOIDAL, KIND_THRESHOLD_EXP)
        eval_kind = KIND_CURTAIL_SHIFT
    else:
        raise ValueError(f"unknown experiment id {experiment_id!r}")
    return ExperimentSpec(
        experiment_id=experiment_id,
        train_dist=TaskDistribution(kinds, multiplier_low, multiplier_high),
        eval_task=TaskSpec(eval_kind, eval_multiplier, eval_baseline_seed,
                           eval_price_seed),
        eval_days=eval_days,
        trials=trials,
        final_window_days=final_window_days,
    )


@dataclass(frozen=True)
class ArmCurves:
    """Per-trial series for one arm plus mean/standard-error aggregates."""

    arm: str
    rewards: np.ndarray    # (trials, days)
    costs: np.ndarray      # (trials, days)
    penalties: np.ndarray  # (trials, days)
    mean_rewards: np.ndarray = field(init=False)
    stderr_rewards: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.rewards.ndim != 2:
            raise ValueError("rewards must be (trials, days)")
        if self.rewards.shape != self.costs.shape != self.penalties.shape:
            raise ValueError("reward/cost/penalty series must share one shape")
        trials = self.rewards.shape[0]
        object.__setattr__(self, "mean_rewards", self.rewards.mean(axis=0))
        if trials > 1:
            se = self.rewards.std(axis=0, ddof=1) / np.sqrt(trials)
        else:
            se = np.zeros(self.rewards.shape[1])
        object.__setattr__(self, "stderr_rewards", se)

    @property
    def trials(self) -> int:
        return self.rewards.shape[0]

    @property
    def days(self) -> int:
        return self.rewards.shape[1]


@dataclass(frozen=True)
class EvalCurves:
    """Curves for one or more arms over a common day axis."""

    arms: dict[str, ArmCurves]

    def __post_init__(self):
        if not self.arms:
            raise ValueError("EvalCurves needs at least one arm")
        lengths = {c.days for c in self.arms.values()}
        if len(lengths) != 1:
            raise ValueError("all arms must share the same number of days")


def aggregate_stats(values) -> tuple[float, float | None]:
    """Mean and Bessel-corrected standard error; stderr absent for n < 2."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise ValueError("aggregate_stats needs at least one value")
    mean = float(vals.mean())
    if vals.size < 2:
        return mean, None
    return mean, float(vals.std(ddof=1) / np.sqrt(vals.size))


def run_adaptation_eval(init: net.PolicyParams, eval_task: TaskSpec,
                        env_cfg: EnvConfig, ppo_cfg: ppo.PpoConfig,
                        days: int, trials: int, master_seed: int,
                        arm: str) -> ArmCurves:
    """`trials` independent PPO runs of `days` iterations from one init."""
    rewards = np.empty((trials, days))
    costs = np.empty((trials, days))
    penalties = np.empty((trials, days))
    arm_stream = _arm_stream(arm)
    for trial in range(trials):
        rng = np.random.default_rng(
            np.random.SeedSequence((master_seed, _STREAM_EVAL, arm_stream, trial))
        )
        environment = build_env(eval_task, env_cfg)
        environment.reset()
        params = init
        opt = net.make_sgd(ppo_cfg.sgd_learning_rate)
        for day in range(days):
            params, stats = ppo.train_iteration(params, environment, ppo_cfg, opt, rng)
            rewards[trial, day] = stats["mean_reward"]
            costs[trial, day] = stats["mean_cost"]
            penalties[trial, day] = stats["penalty_rate"]
    return ArmCurves(arm, rewards, costs, penalties)


@dataclass(frozen=True)
class SummaryRow:
    arm: str
    mean_final_reward: float
    stderr: float | None
    cost_ratio_vs_scratch: float | None


@dataclass(frozen=True)
class Report:
    experiment_id: str
    curves: EvalCurves
    summary: list[SummaryRow]
    final_window_days: int
    regression_note: str | None = None

    def final_rewards_per_trial(self, arm: str) -> np.ndarray:
        c = self.curves.arms[arm]
        return c.rewards[:, -self.final_window_days :].mean(axis=1)

    def final_cost(self, arm: str) -> float:
        c = self.curves.arms[arm]
        return float(c.costs[:, -self.final_window_days :].mean())


def scratch_init(master_seed: int, obs_dim: int, act_dim: int) -> net.PolicyParams:
    """The random-initialization arm's weights (one draw per experiment)."""
    rng = np.random.default_rng(
        np.random.SeedSequence((master_seed, _STREAM_SCRATCH_INIT))
    )
    return net.init_params(obs_dim, act_dim, rng)


def build_summary(curves: EvalCurves, final_window_days: int,
                  *, sort_by_reward: bool = False) -> list[SummaryRow]:
    """Final-window statistics per arm; cost ratios are against the scratch arm."""
    final_costs = {
        arm: float(c.costs[:, -final_window_days:].mean())
        for arm, c in curves.arms.items()
    }
    scratch_cost = final_costs.get(ARM_SCRATCH)
    summary = []
    for arm, c in curves.arms.items():
        per_trial = c.rewards[:, -final_window_days:].mean(axis=1)
        mean, stderr = aggregate_stats(per_trial)
        ratio = final_costs[arm] / scratch_cost if scratch_cost else None
        summary.append(SummaryRow(arm, mean, stderr, ratio))
    if sort_by_reward:
        summary.sort(key=lambda row: -row.mean_final_reward)
    return summary


def run_experiment(spec: ExperimentSpec, checkpoints: dict[int, net.PolicyParams],
                   env_cfg: EnvConfig, ppo_cfg: ppo.PpoConfig, master_seed: int,
                   *, checkpoint_cadence: tuple[int, ...] = (50, 100, 150, 200),
                   include_scratch: bool = True) -> Report:
    """Evaluate arms and build the report.

    For the adaptation experiments `checkpoints` must hold the final
    meta-iteration; for the ablation it must hold every cadence entry.
    """
    hours = env_cfg.hours_per_day
    arms: list[tuple[str, net.PolicyParams]] = []
    if spec.experiment_id == EXP_CHECKPOINT_ABLATION:
        missing = [c for c in checkpoint_cadence if c not in checkpoints]
        if missing:
            raise ValueError(
                f"missing checkpoints for iterations {missing}; the ablation "
                f"expects the cadence {list(checkpoint_cadence)}"
            )
        for c in checkpoint_cadence:
            arms.append((f"maml_iter{c:03d}", checkpoints[c]))
    else:
        if not checkpoints:
            raise ValueError(
                "adaptation experiments need one final MAML checkpoint; got none"
            )
        final_iter = max(checkpoints)
        arms.append((ARM_MAML, checkpoints[final_iter]))
    if include_scratch:
        arms.append((ARM_SCRATCH, scratch_init(master_seed, 3 * hours, hours)))

    curves = {}
    for arm, params in arms:
        curves[arm] = run_adaptation_eval(
            params, spec.eval_task, env_cfg, ppo_cfg, spec.eval_days, spec.trials,
            master_seed, arm,
        )
    eval_curves = EvalCurves(curves)

    is_ablation = spec.experiment_id == EXP_CHECKPOINT_ABLATION
    summary = build_summary(eval_curves, spec.final_window_days,
                            sort_by_reward=is_ablation)

    regression_note = None
    if is_ablation:
        by_arm = {row.arm: row.mean_final_reward for row in summary}
        last, prev = checkpoint_cadence[-1], checkpoint_cadence[-2]
        regressed = by_arm[f"maml_iter{last:03d}"] < by_arm[f"maml_iter{prev:03d}"]
        regression_note = (
            f"maml_iter{last:03d} final mean reward "
            f"{'regresses' if regressed else 'does not regress'} relative to "
            f"maml_iter{prev:03d}"
        )
    return Report(spec.experiment_id, eval_curves, summary, spec.final_window_days,
                  regression_note)
