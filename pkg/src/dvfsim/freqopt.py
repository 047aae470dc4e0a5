"""Offline frequency selection from two-part task profiles.

A task is modelled as ``compute_cycles`` that scale with the core clock plus a
fixed ``wait_time_s`` during which the MCU stays active while some other
component (usually the radio) sets the pace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .powermodel import (
    MHZ,
    CalibrationProfile,
    ClockConfig,
    ComponentState,
    McuActive,
    SourceKind,
    power_mW,
)
from .simcore import SimTrace


class Metric(str, Enum):
    ENERGY = "energy"
    EDP = "edp"
    TIME = "time"


@dataclass(frozen=True)
class TaskProfile:
    compute_cycles: int
    wait_time_s: float = 0.0
    # radio occupancy during the wait, seconds per state; the remainder of the
    # task is spent in ``background_state``
    wait_states: Mapping[str, float] = field(default_factory=dict)
    label: str = ""
    background_state: str = "off"

    def __post_init__(self):
        if self.compute_cycles < 0 or self.wait_time_s < 0:
            raise ValueError("cycles and wait time must be non-negative")
        if self.compute_cycles == 0 and self.wait_time_s == 0:
            raise ValueError("a task needs compute cycles or wait time")
        if sum(self.wait_states.values()) > self.wait_time_s * (1 + 1e-9) + 1e-12:
            raise ValueError("wait states exceed the wait time")

    def scaled(self, c: float) -> TaskProfile:
        return replace(self, compute_cycles=int(round(self.compute_cycles * c)))

    def to_dict(self) -> dict:
        return {"compute_cycles": self.compute_cycles, "wait_time_s": self.wait_time_s,
                "wait_states": dict(self.wait_states), "label": self.label,
                "background_state": self.background_state}

    @classmethod
    def from_dict(cls, d: Mapping) -> TaskProfile:
        return cls(int(d.get("compute_cycles", 0)), float(d.get("wait_time_s", 0.0)),
                   dict(d.get("wait_states", {})), d.get("label", ""), d.get("background_state", "off"))


@dataclass(frozen=True)
class SweepRow:
    config: ClockConfig
    time_s: float
    energy_J: float
    edp_Js: float
    cycles_consumed: float
    # relative to the reference row of a sweep; None for a lone evaluation
    rel_time: float | None = None
    rel_energy: float | None = None
    rel_edp: float | None = None
    rel_cycles: float | None = None

    def value(self, metric: Metric | str) -> float:
        metric = Metric(metric)
        return {Metric.ENERGY: self.energy_J, Metric.EDP: self.edp_Js, Metric.TIME: self.time_s}[metric]

    def as_dict(self) -> dict:
        return {
            "source": self.config.kind.value, "mhz": self.config.mhz, "voltage_V": self.config.core_voltage,
            "time_s": self.time_s, "energy_J": self.energy_J, "edp_Js": self.edp_Js,
            "cycles": self.cycles_consumed, "rel_time": self.rel_time, "rel_energy": self.rel_energy,
            "rel_edp": self.rel_edp, "rel_cycles": self.rel_cycles,
        }


def _radio_mW(state: str, calibration: CalibrationProfile) -> float:
    return power_mW(ComponentState.radio(state), calibration)


def evaluate(profile: TaskProfile, config: ClockConfig, calibration: CalibrationProfile) -> SweepRow:
    calibration.validate(config)
    compute_s = profile.compute_cycles / config.core_hz
    time_s = compute_s + profile.wait_time_s
    mcu = power_mW(ComponentState.mcu(McuActive(config)), calibration) * time_s
    busy = math.fsum(profile.wait_states.values())
    radio = math.fsum(_radio_mW(s, calibration) * d for s, d in profile.wait_states.items())
    radio += _radio_mW(profile.background_state, calibration) * (time_s - busy)
    energy = (mcu + radio) * 1e-3
    return SweepRow(config, time_s, energy, energy * time_s, profile.compute_cycles + profile.wait_time_s * config.core_hz)


def _reference(rows: Sequence[SweepRow]) -> SweepRow:
    # the fastest level, PLL preferred since f_max needs it
    return max(rows, key=lambda r: (r.config.core_hz, r.config.kind is SourceKind.PLL))


def sweep(profile: TaskProfile, levels: Iterable[ClockConfig], calibration: CalibrationProfile) -> list[SweepRow]:
    rows = []
    for cfg in levels:
        try:
            rows.append(evaluate(profile, cfg, calibration))
        except ValueError:
            continue  # infeasible (source, level) pair
    if not rows:
        return rows
    ref = _reference(rows)
    return [
        replace(r, rel_time=r.time_s / ref.time_s, rel_energy=r.energy_J / ref.energy_J,
                rel_edp=r.edp_Js / ref.edp_Js, rel_cycles=r.cycles_consumed / ref.cycles_consumed)
        for r in rows
    ]


def select_optimal(rows: Sequence[SweepRow], metric: Metric | str) -> ClockConfig:
    if not rows:
        raise ValueError("no rows to choose from")
    best = min(rows, key=lambda r: (r.value(metric), r.config.core_hz, r.config.kind is not SourceKind.RC))
    return best.config


# -- named workloads -----------------------------------------------------------------


def fft_profile(calibration: CalibrationProfile) -> TaskProfile:
    """The FFT benchmark: pure compute."""
    return TaskProfile(calibration.cycles("fft"), label="fft")


def extract_request_profile(trace: SimTrace, request_id: str) -> TaskProfile:
    """Two-part profile of one request window of a simulated trace.

    The wait lasts from the window start to the end of the last radio-bound
    (busy) item; whatever the MCU computes afterwards is the compute part.
    Fixed-length holds count as wait.
    """
    win = trace.window(request_id)
    records = [r for r in trace.work_log if win.start_ns <= r.start_ns and r.end_ns <= win.end_ns]
    busy = [r for r in records if r.work.is_busy]
    wait_end = max((r.end_ns for r in busy), default=win.start_ns)
    after = [r for r in records if r.start_ns >= wait_end and not r.work.is_busy]
    cycles = sum(r.work.cycles for r in after)
    hold_ns = sum(r.work.hold_ns for r in after)
    states: dict[str, int] = {}
    tail = "off"
    for seg in trace.radio:
        for a, b in win.ranges:
            lo, hi = max(a, seg.start_ns), min(b, seg.end_ns, wait_end)
            if hi > lo:
                states[seg.state] = states.get(seg.state, 0) + hi - lo
        if seg.start_ns < win.end_ns <= seg.end_ns:
            tail = seg.state
    wait_ns = wait_end - win.start_ns + hold_ns
    return TaskProfile(cycles, wait_ns / 1e9, {k: v / 1e9 for k, v in states.items()}, request_id, tail)


def levels_from_spec(text: str, calibration: CalibrationProfile) -> list[ClockConfig]:
    """Parse ``"24,80"`` or ``"24rc,80pll"`` style level lists; bare numbers expand to every source."""
    out = []
    for tok in (t.strip().lower() for t in text.split(",") if t.strip()):
        kinds = [k for k in ("rc", "pll") if tok.endswith(k)]
        num = float(tok[: -len(kinds[0])] if kinds else tok)
        for kind in kinds or ("rc", "pll"):
            if num in calibration.levels_for(kind):
                out.append(calibration.config(num, kind))
        if not any(c.core_hz == int(round(num * MHZ)) for c in out):
            raise ValueError(f"no clock level {tok!r}")
    return out
