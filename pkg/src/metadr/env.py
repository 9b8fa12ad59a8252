"""Office demand-response simulator.

Each episode is one workday: the agent posts an incentive point per hour,
a simulated occupant responds deterministically, and the realized demand is
costed against a time-of-use grid price. Episodes terminate after a single
step; day-to-day context travels through the observation (yesterday's
demand).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

POINT_MIN = 0.0
POINT_MAX = 10.0

KIND_LINEAR = "linear"
KIND_SINUSOIDAL = "sinusoidal"
KIND_THRESHOLD_EXP = "threshold_exp"
KIND_CURTAIL_SHIFT = "curtail_shift"
DETERMINISTIC_KINDS = (KIND_LINEAR, KIND_SINUSOIDAL, KIND_THRESHOLD_EXP)
ALL_KINDS = DETERMINISTIC_KINDS + (KIND_CURTAIL_SHIFT,)

# Seed-stream tags keep the baseline and price draws independent.
_BASELINE_STREAM = 101
_PRICE_STREAM = 102


@dataclass(frozen=True)
class RewardConfig:
    """Reward shaping: cost log-penalty plus a demand-collapse penalty."""

    lambda_penalty: float = 10.0
    dhat_fraction: float = 0.5

    def __post_init__(self):
        if self.lambda_penalty < 0.0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 < self.dhat_fraction <= 1.0:
            raise ValueError("dhat_fraction must be in (0, 1]")


@dataclass(frozen=True)
class EnvConfig:
    """Constants shared by every environment instance of a run."""

    hours_per_day: int = 10
    reward: RewardConfig = field(default_factory=RewardConfig)
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

    def __post_init__(self):
        if self.hours_per_day < 1:
            raise ValueError("hours_per_day must be >= 1")
        for name in ("off_peak_price", "shoulder_price", "peak_price"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.price_jitter < 1.0:
            raise ValueError("price_jitter must be in [0, 1)")
        if self.history_days < 2:
            raise ValueError("history_days must be >= 2")
        for name in ("cs_fixed_fraction", "cs_curtail_fraction", "cs_shift_fraction"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.cs_fixed_fraction + self.cs_curtail_fraction + self.cs_shift_fraction <= 0.0:
            raise ValueError("curtail-and-shift fractions must sum to > 0")
        if self.t_curtail < 0 or self.t_shift < 0:
            raise ValueError("t_curtail and t_shift must be >= 0")


@dataclass(frozen=True)
class DayGrid:
    """One day's grid context: hourly prices and the historical baseline."""

    hours_per_day: int
    grid_price: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid_price", np.asarray(self.grid_price, dtype=np.float64))
        object.__setattr__(self, "baseline", np.asarray(self.baseline, dtype=np.float64))
        for name in ("grid_price", "baseline"):
            arr = getattr(self, name)
            if arr.shape != (self.hours_per_day,):
                raise ValueError(f"{name} must have length {self.hours_per_day}")
            if not (arr > 0.0).all():
                raise ValueError(f"{name} entries must be positive")


@dataclass(frozen=True)
class DeterministicFunction:
    """Occupant that maps points to demand through a fixed response curve."""

    kind: str
    multiplier: float
    d_min: np.ndarray
    d_max: np.ndarray
    threshold: float = 5.0

    def __post_init__(self):
        if self.kind not in DETERMINISTIC_KINDS:
            raise ValueError(f"unknown deterministic response kind {self.kind!r}")
        if self.multiplier <= 0.0:
            raise ValueError("multiplier must be positive")
        object.__setattr__(self, "d_min", np.asarray(self.d_min, dtype=np.float64))
        object.__setattr__(self, "d_max", np.asarray(self.d_max, dtype=np.float64))
        if self.d_min.shape != self.d_max.shape:
            raise ValueError("d_min and d_max must have the same length")
        if not (self.d_min > 0.0).all():
            raise ValueError("d_min must be positive")
        if not (self.d_min <= self.d_max).all():
            raise ValueError("d_min must be <= d_max elementwise")


@dataclass(frozen=True)
class CurtailAndShift:
    """Occupant with fixed, curtailable, and time-shiftable load components."""

    b_fixed: np.ndarray
    b_curtail: np.ndarray
    b_shift: np.ndarray
    t_curtail: int = 3
    t_shift: int = 3

    def __post_init__(self):
        for name in ("b_fixed", "b_curtail", "b_shift"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
            if (getattr(self, name) < 0.0).any():
                raise ValueError(f"{name} entries must be >= 0")
        if not (self.b_fixed.shape == self.b_curtail.shape == self.b_shift.shape):
            raise ValueError("load components must share one length")
        total = self.b_fixed + self.b_curtail + self.b_shift
        if not (total > 0.0).any():
            raise ValueError("total load must be positive in at least one hour")
        if self.t_curtail < 0 or self.t_shift < 0:
            raise ValueError("t_curtail and t_shift must be >= 0")


PersonModel = DeterministicFunction | CurtailAndShift


@dataclass(frozen=True)
class TaskSpec:
    """One sampled environment configuration."""

    person_kind: str
    multiplier: float
    baseline_seed: int
    price_seed: int

    def __post_init__(self):
        if self.person_kind not in ALL_KINDS:
            raise ValueError(f"unknown person kind {self.person_kind!r}")


@dataclass(frozen=True)
class TaskDistribution:
    """Sampling domain for training tasks."""

    kinds: tuple[str, ...]
    multiplier_low: float = 0.5
    multiplier_high: float = 2.0

    def __post_init__(self):
        for kind in self.kinds:
            if kind not in ALL_KINDS:
                raise ValueError(f"unknown person kind {kind!r}")
        if not 0.0 < self.multiplier_low <= self.multiplier_high:
            raise ValueError("multiplier range must satisfy 0 < low <= high")


def _sorted_quantile(sorted_vals: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile of an ascending array."""
    idx = q * (len(sorted_vals) - 1)
    lo = int(math.floor(idx))
    frac = idx - lo
    if lo + 1 >= len(sorted_vals):
        return float(sorted_vals[-1])
    return float(sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo]))


def generate_baseline(seed: int, hours: int, *, base: float = 15.0,
                      bump: float = 10.0, noise_sigma: float = 1.0,
                      history_days: int = 60):
    """Synthetic workday consumption profile.

    Returns (baseline, d_min, d_max): one day's profile plus the per-hour
    5%/95% quantiles of `history_days` draws from the same distribution.
    """
    if hours < 1:
        raise ValueError("hours must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _BASELINE_STREAM)))
    t = np.arange(hours, dtype=np.float64)
    center = (hours - 1) / 2.0
    width = hours / 4.0
    profile = base + bump * np.exp(-((t - center) ** 2) / (2.0 * width * width))
    history = np.maximum(profile + rng.normal(0.0, noise_sigma, (history_days, hours)), 1.0)
    baseline = np.maximum(profile + rng.normal(0.0, noise_sigma, hours), 1.0)
    d_min = np.empty(hours)
    d_max = np.empty(hours)
    for h in range(hours):
        col = np.sort(history[:, h])
        d_min[h] = _sorted_quantile(col, 0.05)
        d_max[h] = _sorted_quantile(col, 0.95)
    return baseline, d_min, d_max


def generate_grid_price(seed: int, hours: int, *, off_peak: float = 0.10,
                        shoulder: float = 0.20, peak: float = 0.40,
                        jitter: float = 0.10) -> np.ndarray:
    """Time-of-use price curve with seeded multiplicative jitter.

    The day splits into off-peak (first 30% of hours), shoulder, peak
    (60-90%), and a shoulder tail; for a 10-hour day that is hours 0-2,
    3-5, 6-8, and 9.
    """
    if hours < 1:
        raise ValueError("hours must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _PRICE_STREAM)))
    tiers = np.empty(hours)
    for h in range(hours):
        frac = h / hours
        if frac < 0.3:
            tiers[h] = off_peak
        elif frac < 0.6:
            tiers[h] = shoulder
        elif frac < 0.9:
            tiers[h] = peak
        else:
            tiers[h] = shoulder
    return tiers * (1.0 + rng.uniform(-jitter, jitter, hours))


def deterministic_response(person: DeterministicFunction, points, baseline) -> np.ndarray:
    """Demand of a deterministic-function occupant, clipped to [d_min, d_max]."""
    p = np.asarray(points, dtype=np.float64)
    b = np.asarray(baseline, dtype=np.float64)
    if p.shape != b.shape:
        raise ValueError("points and baseline must share one length")
    if person.kind == KIND_LINEAR:
        raw = b - p * person.multiplier
    elif person.kind == KIND_SINUSOIDAL:
        raw = b - np.sin(p) * person.multiplier
    else:  # threshold exponential; responds only strictly above the threshold
        raw = b - np.exp(p) * (p > person.threshold)
    return np.clip(raw, person.d_min, person.d_max)


def curtail_shift_response(person: CurtailAndShift, points) -> np.ndarray:
    """Demand of a curtail-and-shift occupant.

    Curtailable load vanishes in the t_curtail highest-point hours (ties:
    earlier hour first). Each hour's shiftable load moves in full to the
    lowest-point hour inside [t - t_shift, t + t_shift] (ties: earliest).
    """
    p = np.asarray(points, dtype=np.float64)
    hours = person.b_fixed.shape[0]
    if p.shape != (hours,):
        raise ValueError(f"points must have length {hours}")
    demand = person.b_fixed.copy()
    order = np.argsort(-p, kind="stable")
    curtailed = set(order[: min(person.t_curtail, hours)].tolist())
    for t in range(hours):
        if t not in curtailed:
            demand[t] += person.b_curtail[t]
    for t in range(hours):
        lo = max(0, t - person.t_shift)
        hi = min(hours - 1, t + person.t_shift)
        receiver = lo + int(np.argmin(p[lo : hi + 1]))
        demand[receiver] += person.b_shift[t]
    return demand


def respond(person: PersonModel, points, baseline) -> np.ndarray:
    if isinstance(person, DeterministicFunction):
        return deterministic_response(person, points, baseline)
    return curtail_shift_response(person, points)


def compute_reward(demand, grid_price, baseline, cfg: RewardConfig) -> float:
    """-log(cost) minus the lambda penalty when cost falls below d-hat."""
    d = np.asarray(demand, dtype=np.float64)
    g = np.asarray(grid_price, dtype=np.float64)
    b = np.asarray(baseline, dtype=np.float64)
    cost = float(d @ g)
    if cost <= 0.0:
        raise ValueError(f"demand cost must be positive, got {cost}")
    dhat = cfg.dhat_fraction * float(b @ g)
    reward = -math.log(cost)
    if cost < dhat:
        reward -= cfg.lambda_penalty
    return reward


class OfficeEnv:
    """Day-step environment: one step simulates a full day and terminates."""

    def __init__(self, person: PersonModel, grid: DayGrid, reward_cfg: RewardConfig):
        self._person = person
        self._grid = grid
        self._reward_cfg = reward_cfg
        self._mean_baseline = float(grid.baseline.mean())
        self._mean_price = float(grid.grid_price.mean())
        self._prev_demand = grid.baseline.copy()

    @property
    def hours_per_day(self) -> int:
        return self._grid.hours_per_day

    @property
    def obs_dim(self) -> int:
        return 3 * self._grid.hours_per_day

    @property
    def act_dim(self) -> int:
        return self._grid.hours_per_day

    @property
    def grid(self) -> DayGrid:
        return self._grid

    @property
    def person(self) -> PersonModel:
        return self._person

    def observation(self) -> np.ndarray:
        """[yesterday's demand, grid price, baseline], mean-scaled per channel."""
        return np.concatenate([
            self._prev_demand / self._mean_baseline,
            self._grid.grid_price / self._mean_price,
            self._grid.baseline / self._mean_baseline,
        ])

    def reset(self) -> np.ndarray:
        self._prev_demand = self._grid.baseline.copy()
        return self.observation()

    def step(self, action):
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (self.act_dim,):
            raise ValueError(f"action must have shape ({self.act_dim},), got {a.shape}")
        points = np.clip(a, POINT_MIN, POINT_MAX)
        demand = respond(self._person, points, self._grid.baseline)
        cost = float(demand @ self._grid.grid_price)
        reward = compute_reward(demand, self._grid.grid_price, self._grid.baseline,
                                self._reward_cfg)
        dhat = self._reward_cfg.dhat_fraction * float(
            self._grid.baseline @ self._grid.grid_price
        )
        self._prev_demand = demand
        info = {
            "demand": demand,
            "cost": cost,
            "penalty": cost < dhat,
            "points": points,
        }
        return self.observation(), reward, True, info


def build_person(task: TaskSpec, cfg: EnvConfig):
    """Realize a task's person model and day grid from its seeds."""
    baseline, d_min, d_max = generate_baseline(
        task.baseline_seed, cfg.hours_per_day, base=cfg.baseline_base,
        bump=cfg.baseline_bump, noise_sigma=cfg.baseline_noise_sigma,
        history_days=cfg.history_days,
    )
    price = generate_grid_price(
        task.price_seed, cfg.hours_per_day, off_peak=cfg.off_peak_price,
        shoulder=cfg.shoulder_price, peak=cfg.peak_price, jitter=cfg.price_jitter,
    )
    grid = DayGrid(cfg.hours_per_day, price, baseline)
    if task.person_kind == KIND_CURTAIL_SHIFT:
        person: PersonModel = CurtailAndShift(
            b_fixed=cfg.cs_fixed_fraction * baseline,
            b_curtail=cfg.cs_curtail_fraction * baseline,
            b_shift=cfg.cs_shift_fraction * baseline,
            t_curtail=cfg.t_curtail,
            t_shift=cfg.t_shift,
        )
    else:
        person = DeterministicFunction(
            kind=task.person_kind, multiplier=task.multiplier,
            d_min=d_min, d_max=d_max, threshold=cfg.threshold,
        )
    return person, grid


def build_env(task: TaskSpec, cfg: EnvConfig) -> OfficeEnv:
    person, grid = build_person(task, cfg)
    return OfficeEnv(person, grid, cfg.reward)


def sample_task(dist: TaskDistribution, rng: np.random.Generator) -> TaskSpec:
    """Draw one task: uniform kind, uniform multiplier, fresh seeds."""
    if not dist.kinds:
        raise ValueError("task distribution has no person kinds")
    kind = dist.kinds[int(rng.integers(len(dist.kinds)))]
    multiplier = float(rng.uniform(dist.multiplier_low, dist.multiplier_high))
    baseline_seed = int(rng.integers(2**31 - 1))
    price_seed = int(rng.integers(2**31 - 1))
    return TaskSpec(kind, multiplier, baseline_seed, price_seed)


def with_reward(cfg: EnvConfig, reward: RewardConfig) -> EnvConfig:
    return replace(cfg, reward=reward)
