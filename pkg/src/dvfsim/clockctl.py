"""DVFS controller: transition planning, the LRU transition cache and wake-up handling."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .powermodel import CalibrationProfile, ClockConfig, InvalidConfig, McuActive, ComponentState, power_mW


class UnknownTask(KeyError):
    pass


class PathMode(str, Enum):
    SLOW = "slow"
    CACHED = "cached"


# Relative share of each reconfiguration step; the slow path also resolves the
# hardware state and translates register values before applying them.
_SLOW_STEPS = (
    ("resolve_state", 0.2),
    ("select_voltage_range", 0.1),
    ("switch_sysclk_to_safe", 0.1),
    ("configure_source", 0.4),
    ("apply_dividers", 0.1),
    ("switch_sysclk", 0.1),
)
_CACHED_STEPS = (
    ("replay_register_ops", 0.8),
    ("wait_ready", 0.2),
)


def _ms_to_ns(ms: float) -> int:
    return int(round(ms * 1_000_000))


@dataclass(frozen=True)
class TransitionPlan:
    from_config: ClockConfig
    to_config: ClockConfig
    ops: tuple[tuple[str, int], ...]
    total_duration_ns: int
    mode: PathMode

    @property
    def total_duration_s(self) -> float:
        return self.total_duration_ns / 1e9

    @property
    def is_identity(self) -> bool:
        return self.from_config == self.to_config


def _split(total_ns: int, steps) -> tuple[tuple[str, int], ...]:
    ops = []
    remaining = total_ns
    for i, (name, share) in enumerate(steps):
        ns = remaining if i == len(steps) - 1 else int(round(total_ns * share))
        remaining -= ns
        ops.append((name, ns))
    return tuple(ops)


def plan_transition(src: ClockConfig, dst: ClockConfig, profile: CalibrationProfile) -> TransitionPlan:
    """Plan the uncached (slow path) reconfiguration from ``src`` to ``dst``."""
    profile.validate(src)
    profile.validate(dst)
    if src == dst:
        return TransitionPlan(src, dst, (), 0, PathMode.SLOW)
    total = _ms_to_ns(profile.transition_uncached_ms)
    return TransitionPlan(src, dst, _split(total, _SLOW_STEPS), total, PathMode.SLOW)


def _cached_plan(src: ClockConfig, dst: ClockConfig, profile: CalibrationProfile) -> TransitionPlan:
    total = _ms_to_ns(profile.transition_cached_ms)
    return TransitionPlan(src, dst, _split(total, _CACHED_STEPS), total, PathMode.CACHED)


def transition_power_mW(src: ClockConfig, dst: ClockConfig, profile: CalibrationProfile) -> float:
    """Power drawn while reconfiguring: a share of the faster endpoint's active power."""
    hi = max(src, dst, key=lambda c: (c.core_hz, profile.mcu_active_current_mA(c)))
    return profile.transition_active_equivalent * power_mW(ComponentState.mcu(McuActive(hi)), profile)


@dataclass(frozen=True)
class TransitionResult:
    elapsed_ns: int
    energy_J: float
    cache_hit: bool
    plan: TransitionPlan
    power_mW: float

    @property
    def elapsed_s(self) -> float:
        return self.elapsed_ns / 1e9


@dataclass
class TransitionCache:
    """Bounded map (from, to) -> cached plan with least-recently-used eviction."""

    profile: CalibrationProfile
    capacity: int | None = None
    entries: OrderedDict = field(default_factory=OrderedDict)
    hits: int = 0
    misses: int = 0

    def __post_init__(self):
        if self.capacity is None:
            self.capacity = self.profile.transition_cache_capacity
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def peek_duration_ns(self, src: ClockConfig, dst: ClockConfig) -> int:
        """Duration the next ``src -> dst`` transition would take, without touching LRU order."""
        if src == dst:
            return 0
        if (src, dst) in self.entries:
            return self.entries[(src, dst)].total_duration_ns
        return _ms_to_ns(self.profile.transition_uncached_ms)

    def lookup(self, src: ClockConfig, dst: ClockConfig) -> TransitionPlan | None:
        plan = self.entries.get((src, dst))
        if plan is not None:
            self.entries.move_to_end((src, dst))
        return plan

    def insert(self, plan: TransitionPlan) -> None:
        if self.capacity == 0:
            return
        key = (plan.from_config, plan.to_config)
        self.entries[key] = plan
        self.entries.move_to_end(key)
        while len(self.entries) > self.capacity:
            self.entries.popitem(last=False)

    def prewarm(self, src: ClockConfig, dst: ClockConfig) -> None:
        """Populate an entry as boot-time setup would, without counting it."""
        if src != dst:
            self.insert(_cached_plan(src, dst, self.profile))


def execute_transition(cache: TransitionCache, src: ClockConfig, dst: ClockConfig) -> TransitionResult:
    profile = cache.profile
    profile.validate(src)
    profile.validate(dst)
    if src == dst:
        return TransitionResult(0, 0.0, False, plan_transition(src, dst, profile), 0.0)
    plan = cache.lookup(src, dst)
    hit = plan is not None
    if hit:
        cache.hits += 1
    else:
        cache.misses += 1
        plan = plan_transition(src, dst, profile)
        cache.insert(_cached_plan(src, dst, profile))
    p = transition_power_mW(src, dst, profile)
    return TransitionResult(plan.total_duration_ns, p * plan.total_duration_ns * 1e-12, hit, plan, p)


@dataclass(frozen=True)
class DvfsPolicy:
    """Static per-task clock assignment determined offline."""

    task_targets: Mapping[str, ClockConfig]
    default_config: ClockConfig

    def target(self, task: str) -> ClockConfig:
        try:
            return self.task_targets[task]
        except KeyError:
            raise UnknownTask(task) from None

    @classmethod
    def static(cls, config: ClockConfig, tasks, profile: CalibrationProfile) -> DvfsPolicy:
        return cls({t: config for t in tasks}, profile.reset_config)


def on_wakeup(cache: TransitionCache, policy: DvfsPolicy, next_task: str) -> TransitionResult:
    """Go straight from the post-reset clock to the next task's target."""
    target = policy.target(next_task)
    return execute_transition(cache, policy.default_config, target)


def check_policy(policy: DvfsPolicy, profile: CalibrationProfile) -> None:
    for task, cfg in policy.task_targets.items():
        try:
            profile.validate(cfg)
        except InvalidConfig as exc:
            raise InvalidConfig(f"task {task!r}: {exc}") from None
