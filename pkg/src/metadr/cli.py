"""Command-line interface and run pipelines.

Subcommands:
    train-maml   meta-train an initialization, writing checkpoints + log
    eval         adaptation evaluation of a checkpoint (or scratch weights)
    experiment   full pipeline for AdaptCurtailShift / AdaptThresholdExp /
                 CheckpointAblation
    ablation     shorthand for `experiment CheckpointAblation`
    env-sim      one debug day: demand and reward for a points vector
    plot         render an SVG from a report CSV

Every run writes resolved_config.json and its CSV outputs into
<out_dir>/<command-or-experiment>/<tag>/.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from metadr import experiments as exps
from metadr import maml, net
from metadr.checkpoint import CheckpointError, load_checkpoint
from metadr.config import (
    ConfigError,
    RunConfig,
    fingerprint,
    parse_config,
    to_env_config,
    to_maml_config,
    to_ppo_config,
    write_resolved,
)
from metadr.env import ALL_KINDS, TaskSpec, build_env, respond
from metadr.io_csv import emit_csv, read_csv
from metadr.plotting import render_plot

_REPORT_HEADER = ("arm", "trial", "day", "reward", "cost", "penalty_rate")
_SUMMARY_HEADER = ("arm", "mean_final_reward", "stderr", "cost_ratio_vs_scratch")
_TRAIN_LOG_HEADER = ("iteration", "mean_post_adapt_return", "wall_time_s")


def _flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON config file")
    defaults = RunConfig()
    for field in dataclasses.fields(RunConfig):
        key = "lambda" if field.name == "lambda_" else field.name
        default = getattr(defaults, field.name)
        if isinstance(default, tuple):
            parser.add_argument(_flag_name(key), dest=f"cfg_{field.name}",
                                default=None, metavar="N,N,...",
                                help=f"default {','.join(map(str, default))}")
        elif isinstance(default, (int, float)):
            parser.add_argument(_flag_name(key), dest=f"cfg_{field.name}",
                                type=type(default), default=None,
                                help=f"default {default}")
        else:
            parser.add_argument(_flag_name(key), dest=f"cfg_{field.name}",
                                default=None, help=f"default {default}")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, f"cfg_{field.name}", None)
        if value is None:
            continue
        key = "lambda" if field.name == "lambda_" else field.name
        if field.name == "checkpoint_at":
            value = [int(v) for v in str(value).split(",") if v]
        overrides[key] = value
    return parse_config(args.config, overrides)


def _run_dir(cfg: RunConfig, leaf: str) -> Path:
    out = Path(cfg.out_dir) / leaf / cfg.tag
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_training_log(history, out_dir: Path) -> None:
    rows = [(h["iteration"], h["mean_post_adapt_return"], h["wall_time_s"])
            for h in history]
    emit_csv(out_dir / "training_log.csv", _TRAIN_LOG_HEADER, rows)


def _report_rows(report: exps.Report):
    for arm, curve in report.curves.arms.items():
        for trial in range(curve.trials):
            for day in range(curve.days):
                yield (arm, trial, day + 1, curve.rewards[trial, day],
                       curve.costs[trial, day], curve.penalties[trial, day])


def write_report_files(report: exps.Report, out_dir: Path) -> None:
    emit_csv(out_dir / f"report_{report.experiment_id}.csv", _REPORT_HEADER,
             _report_rows(report))
    emit_csv(
        out_dir / f"summary_{report.experiment_id}.csv", _SUMMARY_HEADER,
        [(r.arm, r.mean_final_reward, r.stderr, r.cost_ratio_vs_scratch)
         for r in report.summary],
    )
    render_plot(report.curves, out_dir / "plots" / "reward_curves.svg",
                title=report.experiment_id)
    if report.regression_note is not None:
        (out_dir / "regression_note.txt").write_text(report.regression_note + "\n")


def run_train_maml(cfg: RunConfig, out_dir: Path):
    """train-maml pipeline: checkpoints plus per-iteration log."""
    write_resolved(cfg, out_dir)
    spec = exps.builtin_spec(
        exps.EXP_ADAPT_CURTAIL_SHIFT,
        eval_baseline_seed=cfg.eval_baseline_seed,
        eval_price_seed=cfg.eval_price_seed,
        eval_multiplier=cfg.eval_multiplier,
        multiplier_low=cfg.multiplier_low,
        multiplier_high=cfg.multiplier_high,
        eval_days=cfg.eval_days, trials=cfg.trials,
        final_window_days=cfg.final_window_days,
    )
    checkpoints, history = maml.train_maml(
        to_maml_config(cfg), spec.train_dist, to_env_config(cfg), to_ppo_config(cfg),
        cfg.seed, workers=cfg.workers, checkpoint_dir=out_dir / "checkpoints",
        config_fingerprint=fingerprint(cfg),
    )
    _write_training_log(history, out_dir)
    return checkpoints, history


def run_experiment_pipeline(cfg: RunConfig, experiment_id: str, out_dir: Path) -> exps.Report:
    """Meta-train, evaluate all arms, and write the report files."""
    write_resolved(cfg, out_dir)
    spec = exps.builtin_spec(
        experiment_id,
        eval_baseline_seed=cfg.eval_baseline_seed,
        eval_price_seed=cfg.eval_price_seed,
        eval_multiplier=cfg.eval_multiplier,
        multiplier_low=cfg.multiplier_low,
        multiplier_high=cfg.multiplier_high,
        eval_days=cfg.eval_days, trials=cfg.trials,
        final_window_days=cfg.final_window_days,
    )
    maml_cfg = to_maml_config(cfg, ensure_final_checkpoint=True)
    checkpoints, history = maml.train_maml(
        maml_cfg, spec.train_dist, to_env_config(cfg), to_ppo_config(cfg), cfg.seed,
        workers=cfg.workers, checkpoint_dir=out_dir / "checkpoints",
        config_fingerprint=fingerprint(cfg),
    )
    _write_training_log(history, out_dir)
    by_iteration = {c.meta_iteration: c.params for c in checkpoints if c.meta_iteration > 0}
    if not by_iteration:  # meta_iterations == 0: evaluate the raw initialization
        by_iteration = {0: checkpoints[0].params}
    cadence = tuple(c for c in cfg.checkpoint_at if c <= cfg.meta_iterations)
    report = exps.run_experiment(
        spec, by_iteration, to_env_config(cfg), to_ppo_config(cfg), cfg.seed,
        checkpoint_cadence=cadence if cadence else tuple(sorted(by_iteration)),
    )
    write_report_files(report, out_dir)
    return report


def _cmd_train_maml(args) -> int:
    cfg = _config_from_args(args)
    out_dir = _run_dir(cfg, "train-maml")
    checkpoints, _ = run_train_maml(cfg, out_dir)
    print(f"wrote {len(checkpoints)} checkpoints to {out_dir / 'checkpoints'}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _config_from_args(args)
    out_dir = _run_dir(cfg, args.experiment_id)
    report = run_experiment_pipeline(cfg, args.experiment_id, out_dir)
    for row in report.summary:
        ratio = "" if row.cost_ratio_vs_scratch is None else f" cost_ratio={row.cost_ratio_vs_scratch:.3f}"
        print(f"{row.arm}: final mean reward {row.mean_final_reward:.4f}{ratio}")
    print(f"report written to {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    out_dir = _run_dir(cfg, "eval")
    write_resolved(cfg, out_dir)
    eval_task = TaskSpec(args.eval_person, cfg.eval_multiplier,
                         cfg.eval_baseline_seed, cfg.eval_price_seed)
    if args.checkpoint is not None:
        params, _ = load_checkpoint(args.checkpoint)
        arm = exps.ARM_MAML
    else:
        params = exps.scratch_init(cfg.seed, 3 * cfg.hours_per_day, cfg.hours_per_day)
        arm = exps.ARM_SCRATCH
    curve = exps.run_adaptation_eval(
        params, eval_task, to_env_config(cfg), to_ppo_config(cfg),
        cfg.eval_days, cfg.trials, cfg.seed, arm,
    )
    curves = exps.EvalCurves({arm: curve})
    rows = [
        (arm, trial, day + 1, curve.rewards[trial, day], curve.costs[trial, day],
         curve.penalties[trial, day])
        for trial in range(curve.trials) for day in range(curve.days)
    ]
    emit_csv(out_dir / "eval_curves.csv", _REPORT_HEADER, rows)
    render_plot(curves, out_dir / "plots" / "reward_curves.svg", title="evaluation")
    print(f"evaluation written to {out_dir}")
    return 0


def _cmd_env_sim(args) -> int:
    cfg = _config_from_args(args)
    out_dir = _run_dir(cfg, "env-sim")
    write_resolved(cfg, out_dir)
    try:
        points = np.array([float(v) for v in args.points.split(",") if v != ""])
    except ValueError:
        raise ConfigError(f"--points must be a comma-separated float list, got {args.points!r}")
    task = TaskSpec(args.person, cfg.eval_multiplier, cfg.eval_baseline_seed,
                    cfg.eval_price_seed)
    environment = build_env(task, to_env_config(cfg))
    if points.shape != (environment.act_dim,):
        raise ConfigError(
            f"--points needs {environment.act_dim} values, got {points.shape[0]}"
        )
    obs, reward, done, info = environment.step(points)
    demand = info["demand"]
    print("hour points demand grid_price baseline")
    for h in range(environment.hours_per_day):
        print(f"{h} {info['points'][h]:g} {demand[h]:.4f} "
              f"{environment.grid.grid_price[h]:.4f} {environment.grid.baseline[h]:.4f}")
    print(f"cost: {info['cost']!r}")
    print(f"penalty: {str(info['penalty']).lower()}")
    print(f"reward: {reward!r}")
    emit_csv(
        out_dir / "env_sim.csv",
        ("hour", "points", "demand", "grid_price", "baseline"),
        [(h, info["points"][h], demand[h], environment.grid.grid_price[h],
          environment.grid.baseline[h]) for h in range(environment.hours_per_day)],
    )
    return 0


def _cmd_plot(args) -> int:
    header, rows = read_csv(args.report)
    if tuple(header) != _REPORT_HEADER:
        raise ConfigError(
            f"report {args.report} has header {header}, expected {list(_REPORT_HEADER)}"
        )
    by_arm: dict[str, dict[int, dict[int, tuple[float, float, float]]]] = {}
    for arm, trial, day, reward, cost, penalty in rows:
        by_arm.setdefault(arm, {}).setdefault(int(trial), {})[int(day)] = (
            float(reward), float(cost), float(penalty))
    arms = {}
    for arm, trials in by_arm.items():
        n_trials = len(trials)
        n_days = len(next(iter(trials.values())))
        rewards = np.empty((n_trials, n_days))
        costs = np.empty((n_trials, n_days))
        penalties = np.empty((n_trials, n_days))
        for t_index, trial in enumerate(sorted(trials)):
            for day, (reward, cost, penalty) in sorted(trials[trial].items()):
                rewards[t_index, day - 1] = reward
                costs[t_index, day - 1] = cost
                penalties[t_index, day - 1] = penalty
        arms[arm] = exps.ArmCurves(arm, rewards, costs, penalties)
    out = Path(args.out)
    render_plot(exps.EvalCurves(arms), out)
    print(f"plot written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metadr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-maml", help="meta-train a weight initialization")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train_maml)

    p = sub.add_parser("experiment", help="run a named experiment pipeline")
    p.add_argument("experiment_id", choices=list(exps.EXPERIMENT_IDS))
    _add_config_flags(p)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("ablation", help="run the checkpoint-cadence ablation")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_experiment, experiment_id=exps.EXP_CHECKPOINT_ABLATION)

    p = sub.add_parser("eval", help="adaptation evaluation of one initialization")
    p.add_argument("--checkpoint", default=None, help="checkpoint file (omit for scratch)")
    p.add_argument("--eval-person", default="curtail_shift", choices=list(ALL_KINDS))
    _add_config_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("env-sim", help="simulate one day for a points vector")
    p.add_argument("--person", required=True, choices=list(ALL_KINDS))
    p.add_argument("--points", required=True, help="comma-separated hourly points")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_env_sim)

    p = sub.add_parser("plot", help="render an SVG from a report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
