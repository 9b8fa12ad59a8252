"""Run configuration: JSON file + CLI flag overrides, validated defaults.

The config is a flat JSON object. Unknown keys are a hard error. Every field
has a documented default; flags override file values. The resolved config is
echoed into the output directory as resolved_config.json and its SHA-256 is
stamped into checkpoints.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from metadr.env import EnvConfig, RewardConfig
from metadr.maml import MODE_FIRST_ORDER, MODE_REPTILE, MamlConfig
from metadr.ppo import PpoConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration input."""


@dataclass(frozen=True)
class RunConfig:
    # run plumbing
    seed: int = 0
    out_dir: str = "out"
    tag: str = "run"
    workers: int = 1
    # environment
    hours_per_day: int = 10
    lambda_: float = 10.0
    dhat_fraction: float = 0.5
    off_peak_price: float = 0.10
    shoulder_price: float = 0.20
    peak_price: float = 0.40
    price_jitter: float = 0.10
    baseline_base: float = 15.0
    baseline_bump: float = 10.0
    baseline_noise_sigma: float = 1.0
    history_days: int = 60
    cs_fixed_fraction: float = 0.4
    cs_curtail_fraction: float = 0.3
    cs_shift_fraction: float = 0.3
    t_curtail: int = 3
    t_shift: int = 3
    threshold: float = 5.0
    multiplier_low: float = 0.5
    multiplier_high: float = 2.0
    # ppo
    clip_epsilon: float = 0.3
    value_coef: float = 0.5
    sgd_learning_rate: float = 0.01
    epochs_per_batch: int = 4
    days_per_iteration: int = 16
    # maml
    meta_learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    tasks_per_meta_step: int = 8
    inner_steps: int = 5
    meta_iterations: int = 200
    checkpoint_at: tuple[int, ...] = (50, 100, 150, 200)
    meta_grad_mode: str = MODE_FIRST_ORDER
    # evaluation protocol
    eval_days: int = 100
    trials: int = 5
    final_window_days: int = 20
    eval_baseline_seed: int = 2001
    eval_price_seed: int = 907
    eval_multiplier: float = 1.0


# JSON key -> dataclass attribute. Only "lambda" needs renaming (keyword).
_KEY_TO_ATTR = {f.name: f.name for f in dataclasses.fields(RunConfig) if f.name != "lambda_"}
_KEY_TO_ATTR["lambda"] = "lambda_"
_ATTR_TO_KEY = {attr: key for key, attr in _KEY_TO_ATTR.items()}

_POSITIVE = {
    "hours_per_day", "off_peak_price", "shoulder_price", "peak_price",
    "baseline_base", "baseline_noise_sigma", "threshold", "multiplier_low",
    "sgd_learning_rate", "days_per_iteration", "meta_learning_rate",
    "tasks_per_meta_step", "eval_days", "trials", "final_window_days",
    "eval_multiplier", "workers",
}
_NON_NEGATIVE = {
    "lambda", "baseline_bump", "cs_fixed_fraction", "cs_curtail_fraction",
    "cs_shift_fraction", "t_curtail", "t_shift", "value_coef",
    "epochs_per_batch", "inner_steps", "meta_iterations",
}


def _validate(cfg: RunConfig) -> None:
    def fail(key, message):
        raise ConfigError(f"config value {key!r} {message}")

    for key in _POSITIVE:
        if getattr(cfg, _KEY_TO_ATTR[key]) <= 0:
            fail(key, f"must be > 0, got {getattr(cfg, _KEY_TO_ATTR[key])}")
    for key in _NON_NEGATIVE:
        if getattr(cfg, _KEY_TO_ATTR[key]) < 0:
            fail(key, f"must be >= 0, got {getattr(cfg, _KEY_TO_ATTR[key])}")
    if not 0.0 < cfg.dhat_fraction <= 1.0:
        fail("dhat_fraction", f"must be in (0, 1], got {cfg.dhat_fraction}")
    if not 0.0 <= cfg.price_jitter < 1.0:
        fail("price_jitter", f"must be in [0, 1), got {cfg.price_jitter}")
    if not 0.0 < cfg.clip_epsilon < 1.0:
        fail("clip_epsilon", f"must be in (0, 1), got {cfg.clip_epsilon}")
    if cfg.multiplier_high < cfg.multiplier_low:
        fail("multiplier_high", "must be >= multiplier_low")
    if cfg.history_days < 2:
        fail("history_days", f"must be >= 2, got {cfg.history_days}")
    if not 0.0 < cfg.adam_beta1 < 1.0:
        fail("adam_beta1", f"must be in (0, 1), got {cfg.adam_beta1}")
    if not 0.0 < cfg.adam_beta2 < 1.0:
        fail("adam_beta2", f"must be in (0, 1), got {cfg.adam_beta2}")
    if cfg.meta_grad_mode not in (MODE_FIRST_ORDER, MODE_REPTILE):
        fail("meta_grad_mode",
             f"must be one of {MODE_FIRST_ORDER!r}/{MODE_REPTILE!r}, "
             f"got {cfg.meta_grad_mode!r}")
    if any(c < 1 for c in cfg.checkpoint_at):
        fail("checkpoint_at", "entries must be >= 1")
    if cfg.final_window_days > cfg.eval_days:
        fail("final_window_days", "must be <= eval_days")
    if cfg.cs_fixed_fraction + cfg.cs_curtail_fraction + cfg.cs_shift_fraction <= 0:
        fail("cs_fixed_fraction", "fractions must sum to > 0")


def _coerce(key: str, value, target):
    try:
        if isinstance(target, bool):
            raise TypeError
        if isinstance(target, int) and not isinstance(target, bool):
            if isinstance(value, float) and not value.is_integer():
                raise TypeError
            return int(value)
        if isinstance(target, float):
            return float(value)
        if isinstance(target, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(target, tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(
            f"config value {key!r} has the wrong type: expected "
            f"{type(target).__name__}, got {value!r}"
        ) from None
    raise ConfigError(f"config value {key!r} has unsupported type")


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load defaults, then the JSON file, then flag overrides; validate."""
    defaults = RunConfig()
    values = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(RunConfig)}
    for source_name, source in (("config file", _load_file(path)),
                                ("override", overrides or {})):
        for key, value in source.items():
            if key not in _KEY_TO_ATTR:
                raise ConfigError(f"unknown {source_name} key {key!r}")
            attr = _KEY_TO_ATTR[key]
            values[attr] = _coerce(key, value, getattr(defaults, attr))
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _load_file(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolved_json(cfg: RunConfig) -> str:
    """Canonical JSON text of the resolved config (stable byte output)."""
    data = {
        _ATTR_TO_KEY[f.name]: getattr(cfg, f.name)
        for f in dataclasses.fields(RunConfig)
    }
    data["checkpoint_at"] = list(cfg.checkpoint_at)
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def fingerprint(cfg: RunConfig) -> str:
    return hashlib.sha256(resolved_json(cfg).encode("utf-8")).hexdigest()


def write_resolved(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "resolved_config.json"
    target.write_text(resolved_json(cfg))
    return target


def to_env_config(cfg: RunConfig) -> EnvConfig:
    return EnvConfig(
        hours_per_day=cfg.hours_per_day,
        reward=RewardConfig(cfg.lambda_, cfg.dhat_fraction),
        off_peak_price=cfg.off_peak_price,
        shoulder_price=cfg.shoulder_price,
        peak_price=cfg.peak_price,
        price_jitter=cfg.price_jitter,
        baseline_base=cfg.baseline_base,
        baseline_bump=cfg.baseline_bump,
        baseline_noise_sigma=cfg.baseline_noise_sigma,
        history_days=cfg.history_days,
        cs_fixed_fraction=cfg.cs_fixed_fraction,
        cs_curtail_fraction=cfg.cs_curtail_fraction,
        cs_shift_fraction=cfg.cs_shift_fraction,
        t_curtail=cfg.t_curtail,
        t_shift=cfg.t_shift,
        threshold=cfg.threshold,
    )


def to_ppo_config(cfg: RunConfig) -> PpoConfig:
    return PpoConfig(
        clip_epsilon=cfg.clip_epsilon,
        value_coef=cfg.value_coef,
        sgd_learning_rate=cfg.sgd_learning_rate,
        epochs_per_batch=cfg.epochs_per_batch,
        days_per_iteration=cfg.days_per_iteration,
    )


def to_maml_config(cfg: RunConfig, *, ensure_final_checkpoint: bool = False) -> MamlConfig:
    """MamlConfig adapter.

    With ensure_final_checkpoint the cadence gains meta_iterations itself so
    the adaptation experiments always have a final checkpoint to start from.
    """
    cadence = [c for c in cfg.checkpoint_at if c <= cfg.meta_iterations]
    if ensure_final_checkpoint and cfg.meta_iterations > 0:
        cadence.append(cfg.meta_iterations)
    return MamlConfig(
        meta_learning_rate=cfg.meta_learning_rate,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        tasks_per_meta_step=cfg.tasks_per_meta_step,
        inner_steps=cfg.inner_steps,
        meta_iterations=cfg.meta_iterations,
        checkpoint_at=tuple(cadence) if cadence else (),
        meta_grad_mode=cfg.meta_grad_mode,
    )
