"""Deterministic discrete-event runs of one constrained node.

A run has two phases. First the radio timeline is built from the MAC mode and
application traffic; it never depends on the MCU clock. Then the MCU work
queue is resolved against the DVFS policy (sleep, wake-up transitions,
in-place switches, idling) and every interval's energy is accumulated as
``power_mW * duration_ns`` products.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import mac80154 as mac
from .clockctl import DvfsPolicy, TransitionCache, check_policy, execute_transition, on_wakeup
from .mac80154 import (
    US,
    ConfigError,
    DeadlineMiss,
    Direction,
    DsmeConfig,
    GtsSlot,
    IdtxConfig,
    McuWork,
    MacSchedule,
    RadioInterval,
)
from .netstack import StackOverheads, TransactionPlan, dtls_cycles, plan_coap_exchange
from .powermodel import (
    MHZ,
    CalibrationProfile,
    ClockConfig,
    Component,
    ComponentState,
    EnergyReport,
    LPM,
    McuActive,
    McuTransition,
    RadioState,
    SourceKind,
    energy_J_from_products,
    integrate_power,
    power_mW,
)

NS = 1_000_000_000
TRACE_HEADER = ("t_start_s", "t_end_s", "component", "state", "power_mW", "label")
BASE_TASKS = ("timer", "mac", "app")


class ShapeMismatch(ValueError):
    """Two runs cannot be compared because their scenarios differ in shape."""


def _ns(seconds: float) -> int:
    return int(round(seconds * NS))


# -- scenario --------------------------------------------------------------------


@dataclass(frozen=True)
class MacConfig:
    mode: str = "off"
    idle_radio: RadioState = RadioState.OFF
    idtx: IdtxConfig = IdtxConfig()
    poll_offset_s: float = 0.25
    dsme: DsmeConfig = DsmeConfig()
    allocation_handshake: bool = True
    response_delay_us: int = 2000

    def __post_init__(self):
        if self.mode not in ("off", "idle", "idtx", "dsme"):
            raise ConfigError(f"unknown MAC mode {self.mode!r}")
        object.__setattr__(self, "idle_radio", RadioState(self.idle_radio))

    @classmethod
    def from_dict(cls, d: Mapping | None) -> MacConfig:
        d = dict(d or {})
        mode = d.pop("mode", "off")
        idle = d.pop("radio", "rx_listen" if mode == "idle" else "off")
        idtx_keys = {k: d.pop(k) for k in ("poll_interval_s", "poll_cmd_psdu_bytes", "prep_cycles", "post_cycles", "rx_cycles") if k in d}
        if "wake_margin_us" in d:
            idtx_keys["wake_margin_us"] = d["wake_margin_us"]
        poll_offset = d.pop("poll_offset_s", 0.25)
        handshake = d.pop("allocation_handshake", True)
        delay = d.pop("response_delay_us", 2000)
        gts = [GtsSlot(g["dir"], g.get("superframe", 0), g["slot"], g.get("channel", 0)) for g in d.pop("gts", [])]
        alternating = d.pop("gts_alternating", 0)
        spread = d.pop("gts_spread", None)
        dsme_keys = {k: d.pop(k) for k in list(d) if k in DsmeConfig.__dataclass_fields__}
        if d:
            raise ConfigError(f"unknown mac keys {sorted(d)}")
        dsme = DsmeConfig(**dsme_keys)
        if alternating:
            gts += list(mac.alternating_gts(dsme, alternating))
        if spread and spread.get("count", 0):
            gts += list(mac.spread_gts(dsme, spread["count"], Direction.parse(spread["dir"])))
        dsme = dsme.with_gts(gts)
        return cls(mode, RadioState(idle), IdtxConfig(**idtx_keys), poll_offset, dsme, handshake, delay)


@dataclass(frozen=True)
class AppConfig:
    method: str = "GET"
    payload_bytes: int = 16
    secure: bool = False
    burst: int = 1
    block_size: int = 64
    start_s: float | None = None
    window_us: int = 10_000

    @classmethod
    def from_dict(cls, d: Mapping | None) -> AppConfig | None:
        if not d:
            return None
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown app keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Job:
    """Extra CPU work: released at ``release_s`` or right after poll ``after_poll``."""

    task: str
    cycles: int
    release_s: float | None = None
    after_poll: int | None = None
    name: str = ""

    def __post_init__(self):
        if (self.release_s is None) == (self.after_poll is None):
            raise ConfigError("a job needs exactly one of release_s / after_poll")


@dataclass(frozen=True)
class Scenario:
    profile: CalibrationProfile
    duration_s: float
    clock: ClockConfig | None = None
    task_targets: Mapping[str, ClockConfig] = field(default_factory=dict)
    seed: int = 0
    lpm: bool = True
    timer: bool = True
    prewarm_cache: bool = True
    mac: MacConfig = MacConfig()
    app: AppConfig | None = None
    overheads: StackOverheads = StackOverheads()
    jobs: tuple[Job, ...] = ()

    def __post_init__(self):
        if self.duration_s < 0:
            raise ConfigError("negative duration")
        if self.clock is None:
            object.__setattr__(self, "clock", self.profile.config(self.profile.f_max_MHz, SourceKind.PLL))
        object.__setattr__(self, "jobs", tuple(self.jobs))
        self.profile.validate(self.clock)
        check_policy(self.policy, self.profile)

    @property
    def horizon_ns(self) -> int:
        return _ns(self.duration_s)

    @property
    def tasks(self) -> list[str]:
        names = list(BASE_TASKS)
        for t in [j.task for j in self.jobs] + list(self.task_targets):
            if t not in names:
                names.append(t)
        return names

    @property
    def policy(self) -> DvfsPolicy:
        targets = {t: self.task_targets.get(t, self.clock) for t in self.tasks}
        return DvfsPolicy(targets, self.profile.reset_config)

    def with_clock(self, cfg: ClockConfig, keep_overrides: bool = False) -> Scenario:
        return replace(self, clock=cfg, task_targets=dict(self.task_targets) if keep_overrides else {})

    def with_profile(self, profile: CalibrationProfile) -> Scenario:
        def conv(c: ClockConfig) -> ClockConfig:
            return profile.config(c.mhz, c.kind)

        return replace(
            self,
            profile=profile,
            clock=conv(self.clock),
            task_targets={k: conv(v) for k, v in self.task_targets.items()},
        )

    @classmethod
    def from_dict(cls, data: Mapping, profile: CalibrationProfile) -> Scenario:
        d = dict(data)
        d.pop("_comment", None)
        d.pop("name", None)

        def cfg(spec: Mapping) -> ClockConfig:
            return profile.config(spec["mhz"] if "mhz" in spec else spec["target_mhz"], spec.get("source", "pll"))

        clock = cfg(d.pop("clock")) if "clock" in d else None
        targets = {t["id"]: cfg(t) for t in d.pop("tasks", [])}
        jobs = tuple(
            Job(j["task"], int(j["cycles"]) if "cycles" in j else profile.cycles(j["task"]),
                j.get("release_s"), j.get("after_poll"), j.get("name", ""))
            for j in d.pop("jobs", [])
        )
        kwargs = dict(
            profile=profile,
            duration_s=d.pop("duration_s"),
            clock=clock,
            task_targets=targets,
            mac=MacConfig.from_dict(d.pop("mac", None)),
            app=AppConfig.from_dict(d.pop("app", None)),
            overheads=StackOverheads.from_dict(d.pop("overheads", None)).validate(),
            jobs=jobs,
        )
        for key in ("seed", "lpm", "timer", "prewarm_cache"):
            if key in d:
                kwargs[key] = d.pop(key)
        if d:
            raise ConfigError(f"unknown scenario keys {sorted(d)}")
        return cls(**kwargs)


# -- trace and report ------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    start_ns: int
    end_ns: int
    component: str
    state: str
    power_mW: float
    label: str

    @property
    def product(self) -> float:
        return self.power_mW * (self.end_ns - self.start_ns)


@dataclass(frozen=True)
class WorkRecord:
    """One executed MCU work item with its actual start and end."""

    work: McuWork
    start_ns: int
    end_ns: int
    config: ClockConfig
    # when the MCU turned to this item, before any in-place clock switch
    dispatch_ns: int = -1

    def __post_init__(self):
        if self.dispatch_ns < 0:
            object.__setattr__(self, "dispatch_ns", self.start_ns)


@dataclass(frozen=True)
class RequestWindow:
    start_ns: int
    end_ns: int
    request_id: str
    # sub-ranges that count toward the window's energy (all of it unless clipped)
    ranges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.ranges:
            object.__setattr__(self, "ranges", ((self.start_ns, self.end_ns),))

    @property
    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns


@dataclass
class SimTrace:
    horizon_ns: int
    mcu: list[Segment] = field(default_factory=list)
    radio: list[Segment] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)
    request_windows: list[RequestWindow] = field(default_factory=list)
    work_log: list[WorkRecord] = field(default_factory=list)
    radio_intervals: list[RadioInterval] = field(default_factory=list)

    @property
    def segments(self) -> list[Segment]:
        return sorted(self.mcu + self.radio, key=lambda s: (s.start_ns, s.component))

    def intervals(self) -> list[tuple[int, int, str, str, str]]:
        """Merged view: ``(start, end, mcu_state, radio_state, label)`` over every boundary."""
        cuts = sorted({0, self.horizon_ns} | {s.start_ns for s in self.mcu + self.radio} | {s.end_ns for s in self.mcu + self.radio})
        out = []
        i = j = 0
        for a, b in zip(cuts, cuts[1:]):
            while i < len(self.mcu) and self.mcu[i].end_ns <= a:
                i += 1
            while j < len(self.radio) and self.radio[j].end_ns <= a:
                j += 1
            m, r = self.mcu[i], self.radio[j]
            out.append((a, b, m.state, r.state, r.label if r.label != "idle" else m.label))
        return out

    def radio_boundaries(self) -> list[tuple[int, int, str]]:
        return [(s.start_ns, s.end_ns, s.state) for s in self.radio]

    def energy_in(self, ranges: Iterable[tuple[int, int]]) -> EnergyReport:
        """Energy of the piecewise power function restricted to ``ranges``."""
        ranges = list(ranges)
        per: dict[str, list[float]] = {"mcu": [], "radio": []}
        for segs in (self.mcu, self.radio):
            for s in segs:
                for a, b in ranges:
                    lo, hi = max(a, s.start_ns), min(b, s.end_ns)
                    if hi > lo:
                        per[s.component].append(s.power_mW * (hi - lo))
        total = sum(b - a for a, b in ranges)
        return EnergyReport.build({k: energy_J_from_products(v) for k, v in per.items()}, total / NS)

    def window(self, request_id: str) -> RequestWindow:
        for w in self.request_windows:
            if w.request_id == request_id:
                return w
        raise KeyError(request_id)


@dataclass(frozen=True)
class RunReport:
    energy: EnergyReport
    per_request: Mapping[str, EnergyReport]
    average_current_mA: float
    deadline_misses: tuple[DeadlineMiss, ...]
    timing: Mapping[str, float]
    cache_hits: int = 0
    cache_misses: int = 0
    label: str = ""

    @property
    def requests(self) -> dict[str, EnergyReport]:
        return {k: v for k, v in self.per_request.items() if k.startswith("req")}

    @property
    def per_request_mean_J(self) -> float:
        reqs = self.requests or self.per_request
        return math.fsum(r.energy_J for r in reqs.values()) / len(reqs) if reqs else 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "energy_J": self.energy.energy_J,
            "duration_s": self.energy.duration_s,
            "edp_Js": self.energy.edp_Js,
            "per_component_J": dict(self.energy.per_component_J),
            "average_current_mA": self.average_current_mA,
            "per_request_mean_J": self.per_request_mean_J,
            "per_request": {
                k: {"energy_J": v.energy_J, "duration_s": v.duration_s, "per_component_J": dict(v.per_component_J)}
                for k, v in self.per_request.items()
            },
            "deadline_misses": [
                {"label": m.check.label, "at_s": m.check.at_ns / NS, "needed_s": m.needed_ns / NS,
                 "available_s": m.check.available_window_ns / NS}
                for m in self.deadline_misses
            ],
            "timing": dict(self.timing),
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
        }


# -- radio timeline ----------------------------------------------------------------


@dataclass
class _Plan:
    schedule: MacSchedule
    windows: list[tuple[str, str, str]] = field(default_factory=list)  # (id, start tag, end tag)
    clip: list[tuple[int, int]] = field(default_factory=list)  # time excluded from windows


def _app_items(plan: TransactionPlan, scn: Scenario, k: int, b: int, issue_ns: int, resp_ns: int, last: bool) -> list[McuWork]:
    ex = plan.exchanges[b]
    p = scn.profile
    first = b == 0
    hold = int(round(p.coap_stack_hold_us * US))
    issue = McuWork(
        issue_ns, "app", f"req{k}:issue" if first else f"req{k}:block{b}",
        cycles=p.cycles("coap_request") + dtls_cycles(ex.request, scn.overheads),
        tag=f"req{k}:start" if first else "",
        hold_ns=hold,
    )
    done = McuWork(
        resp_ns, "app", f"req{k}:response" if last else f"req{k}:block{b}:response",
        cycles=p.cycles("coap_response") + dtls_cycles(ex.response, scn.overheads),
        tag=f"req{k}:done" if last else "",
        hold_ns=hold,
    )
    return [issue, done]


def _overlaps(a0: int, a1: int, spans: Sequence[tuple[int, int]]) -> tuple[int, int] | None:
    for s0, s1 in spans:
        if a0 < s1 and s0 < a1:
            return s0, s1
    return None


def _plan_idtx(scn: Scenario, rng: random.Random) -> _Plan:
    m = scn.mac
    cfg = m.idtx
    horizon = scn.horizon_ns
    period = cfg.poll_interval_ns
    margin = cfg.wake_margin_us * US
    first = _ns(m.poll_offset_s)
    if first < margin:
        raise ConfigError("first poll must leave room for the wake margin")
    grid = list(range(first, horizon, period))
    pending: dict[int, list[int]] = {}
    owner: dict[int, tuple[int, int, bool]] = {}
    sched = MacSchedule()
    windows = []
    poll_len = mac.idtx_poll_transaction(cfg, (), 0).end_ns

    if scn.app is not None:
        app = scn.app
        plan = plan_coap_exchange(app.method, app.payload_bytes, app.secure, scn.overheads, app.block_size)
        anchor = _ns(app.start_s) if app.start_s is not None else first
        used: set[int] = set()
        for k in range(app.burst):
            for b, ex in enumerate(plan.exchanges):
                start = anchor + app.window_us * US
                busy_polls = [(g - margin, g + poll_len + 4 * mac.MS) for g in grid]
                while True:
                    up = mac.csma_uplink(rng, [f.psdu_bytes for f in ex.request.frames], start, "mac", f"req{k}:up{b}",
                                         cfg.wake_margin_us, cfg.prep_cycles, cfg.post_cycles)
                    hit = _overlaps(start - margin, up.end_ns, busy_polls)
                    if hit is None:
                        break
                    start = hit[1]
                sched.extend(up)
                j = next((i for i, g in enumerate(grid) if g - margin >= up.end_ns and i not in used), None)
                if j is None:
                    raise ConfigError(f"request {k} has no poll left before the horizon")
                used.add(j)
                pending[j] = [f.psdu_bytes for f in ex.response.frames]
                last = b == len(plan.exchanges) - 1
                owner[j] = (k, b, last)
                resp_end = grid[j] + mac.idtx_poll_transaction(cfg, pending[j], 0).end_ns
                sched.mcu_work += _app_items(plan, scn, k, b, anchor, resp_end, last)
                anchor = resp_end
            windows.append((f"req{k}", f"req{k}:start", f"req{k}:done"))

    for j, g in enumerate(grid):
        frames = pending.get(j, ())
        tx = mac.idtx_poll_transaction(cfg, frames, g, "mac", label=f"poll{j}")
        if tx.end_ns > horizon:
            break
        work = list(tx.mcu_work)
        work[0] = replace(work[0], tag=f"poll{j}:start")
        work[-1] = replace(work[-1], tag=f"poll{j}:done")
        tx.mcu_work = work
        sched.extend(tx)
        if j not in owner:
            windows.append((f"poll{j}", f"poll{j}:start", f"poll{j}:done"))
    return _Plan(sched, windows)


def _plan_idle(scn: Scenario, rng: random.Random) -> _Plan:
    sched = MacSchedule()
    windows = []
    app = scn.app
    if app is not None:
        plan = plan_coap_exchange(app.method, app.payload_bytes, app.secure, scn.overheads, app.block_size)
        anchor = _ns(app.start_s if app.start_s is not None else 0.25)
        for k in range(app.burst):
            for b, ex in enumerate(plan.exchanges):
                up = mac.csma_uplink(rng, [f.psdu_bytes for f in ex.request.frames], anchor + app.window_us * US,
                                     "mac", f"req{k}:up{b}")
                down = mac.idle_rx([f.psdu_bytes for f in ex.response.frames], up.end_ns + scn.mac.response_delay_us * US,
                                   "mac", f"req{k}:down{b}")
                sched.extend(up)
                sched.extend(down)
                last = b == len(plan.exchanges) - 1
                sched.mcu_work += _app_items(plan, scn, k, b, anchor, down.end_ns, last)
                anchor = down.end_ns
            windows.append((f"req{k}", f"req{k}:start", f"req{k}:done"))
    return _Plan(sched, windows)


def _dsme_excluded(cfg: DsmeConfig, horizon: int) -> list[tuple[int, int]]:
    """Beacon slots and CAPs: time outside the CFP."""
    out = []
    for abs_sf in range(-(-horizon // cfg.superframe_ns)):
        s = abs_sf * cfg.superframe_ns
        end = s + cfg.slot_ns * (1 + mac.CAP_SLOTS if cfg.has_cap(abs_sf % cfg.superframes_per_multisuperframe) else 1)
        out.append((s, min(end, horizon)))
    return out


def _plan_dsme(scn: Scenario, rng: random.Random) -> _Plan:
    cfg = scn.mac.dsme
    horizon = scn.horizon_ns
    guard = cfg.guard_us * US
    traffic: dict[tuple[int, int], list[int]] = {}
    work: list[McuWork] = []
    windows = []
    if scn.app is not None:
        app = scn.app
        plan = plan_coap_exchange(app.method, app.payload_bytes, app.secure, scn.overheads, app.block_size)
        anchor = _ns(app.start_s) if app.start_s is not None else cfg.slot_ns * (1 + mac.CAP_SLOTS)
        taken: set[tuple[int, int]] = set()
        first_msf = None

        def take(direction: Direction, not_before: int) -> mac.GtsOccurrence:
            nonlocal first_msf
            occ = mac.next_gts(cfg, direction, not_before, taken)
            if first_msf is None:
                first_msf = occ.msf
            if occ.msf != first_msf or occ.start_ns + cfg.slot_ns > horizon:
                raise mac.CapacityError("burst does not complete within one CFP")
            taken.add((occ.msf, occ.gts_index))
            return occ

        for k in range(app.burst):
            for b, ex in enumerate(plan.exchanges):
                t = anchor + app.window_us * US
                for f in ex.request.frames:
                    occ = take(Direction.UPLINK, t)
                    traffic[(occ.msf, occ.gts_index)] = [f.psdu_bytes]
                    t = occ.start_ns + cfg.slot_ns
                resp_end = t
                for f in ex.response.frames:
                    occ = take(Direction.DOWNLINK, t)
                    traffic[(occ.msf, occ.gts_index)] = [f.psdu_bytes]
                    t = occ.start_ns + cfg.slot_ns
                    resp_end = (occ.start_ns + guard + mac.PHY.airtime_ns(f.psdu_bytes) + mac.PHY.turnaround_ns
                                + mac.PHY.airtime_ns(mac.ACK_PSDU))
                last = b == len(plan.exchanges) - 1
                work += _app_items(plan, scn, k, b, anchor, resp_end, last)
                anchor = resp_end
            windows.append((f"req{k}", f"req{k}:start", f"req{k}:done"))
    sched = mac.build_dsme_schedule(cfg, horizon, traffic, "mac", rng, scn.mac.allocation_handshake)
    sched.mcu_work = sorted(sched.mcu_work + work, key=lambda w: w.release_ns)
    return _Plan(sched, windows, _dsme_excluded(cfg, horizon))


def _plan(scn: Scenario, rng: random.Random) -> _Plan:
    mode = scn.mac.mode
    if mode == "off":
        if scn.app is not None:
            raise ConfigError("application traffic needs a MAC mode other than 'off'")
        return _Plan(MacSchedule())
    return {"idle": _plan_idle, "idtx": _plan_idtx, "dsme": _plan_dsme}[mode](scn, rng)


# -- MCU resolution ------------------------------------------------------------------


class _Accumulator:
    """Builds the MCU segment list and the online energy sums."""

    def __init__(self, profile: CalibrationProfile):
        self.profile = profile
        self.segments: list[Segment] = []
        self.products: dict[str, list[float]] = {"mcu": [], "radio": []}

    def add(self, component: str, start: int, end: int, state: ComponentState, label: str, target: list[Segment]):
        if end <= start:
            return
        p = power_mW(state, self.profile)
        target.append(Segment(start, end, component, _state_name(state), p, label))
        self.products[component].append(p * (end - start))


def _state_name(state: ComponentState) -> str:
    s = state.state
    if isinstance(s, McuActive):
        return f"active@{s.config.label()}"
    if isinstance(s, McuTransition):
        return f"transition:{s.from_config.label()}->{s.to_config.label()}"
    if s is LPM or state.component is Component.MCU:
        return "lpm"
    return s.value


def _compute_ns(cycles: int, cfg: ClockConfig) -> int:
    return -(-cycles * NS // cfg.core_hz)


def _resolve_mcu(scn: Scenario, work: list[McuWork], acc: _Accumulator, trace: SimTrace, cache: TransitionCache):
    horizon = scn.horizon_ns
    policy = scn.policy
    lpm_min = int(round(scn.profile.lpm_min_idle_us * US))
    segs = trace.mcu
    awake = not scn.lpm
    cfg = scn.clock if awake else policy.default_config
    t = 0

    def active(a, b, label):
        acc.add("mcu", a, b, ComponentState.mcu(McuActive(cfg)), label, segs)

    def switch(src: ClockConfig, dst: ClockConfig, at: int, why: str) -> int:
        res = execute_transition(cache, src, dst)
        if res.elapsed_ns:
            acc.add("mcu", at, at + res.elapsed_ns, ComponentState.mcu(McuTransition(src, dst)), why, segs)
            trace.events.append((at, f"transition:{'hit' if res.cache_hit else 'miss'}:{src.label()}->{dst.label()}"))
        return at + res.elapsed_ns

    for w in sorted(work, key=lambda w: w.release_ns):
        target = policy.target(w.task)
        start = max(t, w.release_ns)
        if not awake:
            acc.add("mcu", t, start, ComponentState.mcu(LPM), "sleep", segs)
            trace.events.append((start, f"wakeup:{w.task}"))
            res = on_wakeup(cache, policy, w.task)
            if res.elapsed_ns:
                acc.add("mcu", start, start + res.elapsed_ns,
                        ComponentState.mcu(McuTransition(policy.default_config, target)), "wakeup", segs)
                trace.events.append((start, f"transition:{'hit' if res.cache_hit else 'miss'}:"
                                            f"{policy.default_config.label()}->{target.label()}"))
            start += res.elapsed_ns
            cfg, awake = target, True
        elif start > t:
            if scn.lpm and start - t >= lpm_min:
                acc.add("mcu", t, start, ComponentState.mcu(LPM), "sleep", segs)
                trace.events.append((start, f"wakeup:{w.task}"))
                res = on_wakeup(cache, policy, w.task)
                if res.elapsed_ns:
                    acc.add("mcu", start, start + res.elapsed_ns,
                            ComponentState.mcu(McuTransition(policy.default_config, target)), "wakeup", segs)
                    trace.events.append((start, f"transition:{'hit' if res.cache_hit else 'miss'}:"
                                                f"{policy.default_config.label()}->{target.label()}"))
                start += res.elapsed_ns
                cfg = target
            else:
                active(t, start, "idle")
        dispatch = start
        if target != cfg:
            start = switch(cfg, target, start, f"switch:{w.task}")
            cfg = target
        end = max(start, w.until_ns) if w.is_busy else start + _compute_ns(w.cycles, cfg) + w.hold_ns
        active(start, end, w.label)
        trace.work_log.append(WorkRecord(w, start, end, cfg, dispatch))
        t = end
    if t > horizon:
        raise ConfigError(f"MCU work runs past the horizon ({t} ns > {horizon} ns)")
    if awake and not scn.lpm:
        active(t, horizon, "idle")
    else:
        acc.add("mcu", t, horizon, ComponentState.mcu(LPM), "sleep", segs)


# -- run -----------------------------------------------------------------------------


def _timer_work(scn: Scenario) -> list[McuWork]:
    if not scn.timer:
        return []
    period = _ns(scn.profile.timer_wakeup_period_s)
    cycles = scn.profile.timer_wakeup_cycles
    hold = int(round(scn.profile.timer_wakeup_sync_us * US))
    return [McuWork(t, "timer", "timer", cycles=cycles, hold_ns=hold) for t in range(period // 2, scn.horizon_ns, period)]


def _job_work(scn: Scenario, sched: MacSchedule) -> list[McuWork]:
    out = []
    for i, job in enumerate(scn.jobs):
        name = job.name or f"{job.task}{i}"
        if job.release_s is not None:
            rel = _ns(job.release_s)
        else:
            ends = [w.release_ns for w in sched.mcu_work if w.tag == f"poll{job.after_poll}:done"]
            if not ends:
                raise ConfigError(f"job {name}: poll {job.after_poll} does not exist")
            rel = ends[0]
        out.append(McuWork(rel, job.task, name, cycles=job.cycles, tag=f"job:{name}"))
    return out


def _prewarm(cache: TransitionCache, scn: Scenario) -> None:
    configs = list(dict.fromkeys(scn.policy.task_targets.values()))
    for c in configs:
        cache.prewarm(scn.profile.reset_config, c)
    for a in configs:
        for b in configs:
            cache.prewarm(a, b)


def run(scenario: Scenario) -> tuple[SimTrace, RunReport]:
    """Simulate ``scenario``; equal scenarios (including the seed) give identical traces."""
    scn = scenario
    horizon = scn.horizon_ns
    trace = SimTrace(horizon)
    acc = _Accumulator(scn.profile)
    cache = TransitionCache(scn.profile)
    if scn.prewarm_cache:
        _prewarm(cache, scn)
    if horizon == 0:
        report = RunReport(EnergyReport.build({"mcu": 0.0, "radio": 0.0}, 0.0), {}, 0.0, (), {}, label=scn.clock.label())
        return trace, report

    rng = random.Random(scn.seed)
    plan = _plan(scn, rng)
    sched = plan.schedule.tiled(horizon, scn.mac.idle_radio)
    trace.radio_intervals = sched.intervals
    for iv in sched.intervals:
        acc.add("radio", iv.start_ns, iv.end_ns, ComponentState.radio(iv.state), iv.label, trace.radio)
    trace.events += [(t, m) for t, m in sched.markers]

    jobs = _job_work(scn, sched)
    work = sorted(sched.mcu_work + _timer_work(scn) + jobs, key=lambda w: w.release_ns)
    _resolve_mcu(scn, work, acc, trace, cache)
    trace.events.sort()

    misses = tuple(mac.check_deadlines(sched, scn.policy.target("mac")))
    for m in misses:
        trace.events.append((m.check.at_ns, f"deadline_miss:{m.check.label}"))
    trace.events.sort()

    by_tag = {}
    for rec in trace.work_log:
        if rec.work.tag:
            by_tag.setdefault(rec.work.tag, rec)
    win_specs = list(plan.windows) + [(f"job:{j.name or f'{j.task}{i}'}",) * 3 for i, j in enumerate(scn.jobs)]
    for rid, t0, t1 in win_specs:
        if t0 not in by_tag or t1 not in by_tag:
            continue
        a, b = by_tag[t0].dispatch_ns, by_tag[t1].end_ns
        rid = rid.removeprefix("job:")
        trace.request_windows.append(RequestWindow(a, b, rid, _clip(a, b, plan.clip)))
    # a poll that belongs to an application request is already inside that request's window
    reqs = [(w.start_ns, w.end_ns) for w in trace.request_windows if w.request_id.startswith("req")]
    trace.request_windows = [
        w for w in trace.request_windows
        if not (w.request_id.startswith("poll") and _overlaps(w.start_ns, w.end_ns, reqs))
    ]
    trace.request_windows.sort(key=lambda w: (w.start_ns, w.request_id))

    per_comp = {k: energy_J_from_products(v) for k, v in acc.products.items()}
    energy = EnergyReport.build(per_comp, horizon / NS)
    per_request = {w.request_id: trace.energy_in(w.ranges) for w in trace.request_windows}
    reqs = [w for w in trace.request_windows if w.request_id.startswith("req")]
    timing = {}
    if reqs:
        timing["burst_s"] = (reqs[-1].end_ns - reqs[0].start_ns) / NS
        timing["first_issue_s"] = reqs[0].start_ns / NS
        timing["last_done_s"] = reqs[-1].end_ns / NS
        timing["request_count"] = len(reqs)
    avg = energy.energy_J / (scn.profile.supply_voltage_V * energy.duration_s) * 1e3
    report = RunReport(energy, per_request, avg, misses, timing, cache.hits, cache.misses, scn.clock.label())
    return trace, report


def _clip(a: int, b: int, excluded: Sequence[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    ranges = [(a, b)]
    for x0, x1 in excluded:
        if x1 <= a or x0 >= b:
            continue
        nxt = []
        for r0, r1 in ranges:
            if x1 <= r0 or x0 >= r1:
                nxt.append((r0, r1))
                continue
            if r0 < x0:
                nxt.append((r0, x0))
            if x1 < r1:
                nxt.append((x1, r1))
        ranges = nxt
    return tuple(ranges)


# -- trace export ----------------------------------------------------------------------


def _fmt_s(ns: int) -> str:
    return f"{ns // NS}.{ns % NS:09d}"


def _parse_s(text: str) -> int:
    value = Decimal(text) * NS
    if value != value.to_integral_value():
        raise ValueError(f"time {text} is not a whole number of nanoseconds")
    return int(value)


def trace_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for s in trace.segments:
        w.writerow((_fmt_s(s.start_ns), _fmt_s(s.end_ns), s.component, s.state, repr(s.power_mW), s.label))
    return buf.getvalue()


def export_trace(trace: SimTrace, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(trace_csv(trace))
    return path


def read_trace(source: str | Path | io.TextIOBase) -> list[tuple[int, int, str, str, float, str]]:
    """Rows of an exported trace with times back in integer nanoseconds."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError("not a trace file")
    return [(_parse_s(a), _parse_s(b), c, st, float(p), lab) for a, b, c, st, p, lab in rows[1:]]


def reintegrate(source) -> EnergyReport:
    """Energy of an exported trace, computed from the file alone."""
    rows = read_trace(source)
    return integrate_power((a, b, c, p) for a, b, c, _, p, _ in rows)


# -- comparison ------------------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    energy_ratio: float
    average_current_ratio: float
    per_request_ratio: Mapping[str, float]
    per_request_mean_ratio: float
    timing_delta_s: Mapping[str, float]

    @property
    def saving(self) -> float:
        return 1.0 - self.energy_ratio


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def compare_runs(reference: RunReport, candidate: RunReport) -> Comparison:
    if not math.isclose(reference.energy.duration_s, candidate.energy.duration_s) or set(reference.per_request) != set(
        candidate.per_request
    ):
        raise ShapeMismatch("runs differ in duration or request set")
    return Comparison(
        _ratio(candidate.energy.energy_J, reference.energy.energy_J),
        _ratio(candidate.average_current_mA, reference.average_current_mA),
        {k: _ratio(candidate.per_request[k].energy_J, v.energy_J) for k, v in reference.per_request.items()},
        _ratio(candidate.per_request_mean_J, reference.per_request_mean_J),
        {k: candidate.timing[k] - v for k, v in reference.timing.items() if k in candidate.timing},
    )
