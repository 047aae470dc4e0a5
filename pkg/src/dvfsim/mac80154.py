"""IEEE 802.15.4 MAC operating modes as timed radio schedules.

All times are integer nanoseconds. Radio boundaries produced here never depend
on the MCU clock; MCU demands are attached as work items (compute cycles or
busy spans) that the simulator resolves against a clock policy.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .powermodel import RadioState

US = 1_000
MS = 1_000_000


class MacError(Exception):
    pass


class ConfigError(MacError, ValueError):
    pass


class OutOfRange(ConfigError):
    pass


class FrameTooLarge(MacError, ValueError):
    pass


class ChannelAccessFailure(MacError):
    """CSMA/CA gave up; the frame is dropped (no retransmissions)."""


class CapacityError(MacError):
    pass


# -- PHY ---------------------------------------------------------------------


@dataclass(frozen=True)
class PhyTiming:
    """2.4 GHz O-QPSK PHY constants."""

    symbol_us: int = 16
    byte_airtime_us: int = 32
    phy_overhead_bytes: int = 6
    turnaround_us: int = 192
    max_psdu_bytes: int = 127
    unit_backoff_symbols: int = 20
    cca_symbols: int = 8

    def airtime_ns(self, psdu: int) -> int:
        if psdu > self.max_psdu_bytes:
            raise FrameTooLarge(f"PSDU of {psdu} B exceeds {self.max_psdu_bytes} B")
        if psdu < 0:
            raise ValueError("negative PSDU length")
        return (psdu + self.phy_overhead_bytes) * self.byte_airtime_us * US

    @property
    def turnaround_ns(self) -> int:
        return self.turnaround_us * US

    @property
    def unit_backoff_ns(self) -> int:
        return self.unit_backoff_symbols * self.symbol_us * US

    @property
    def cca_ns(self) -> int:
        return self.cca_symbols * self.symbol_us * US


PHY = PhyTiming()
ACK_PSDU = 5


# -- schedule containers -------------------------------------------------------


@dataclass(frozen=True)
class RadioInterval:
    start_ns: int
    end_ns: int
    state: RadioState
    label: str


@dataclass(frozen=True)
class McuWork:
    """Something the MCU must do.

    A compute item runs ``cycles`` as soon as possible after ``release_ns``.
    A busy item (``until_ns`` set) keeps the MCU active up to ``until_ns``
    regardless of clock speed, e.g. while the driver waits on the radio.
    ``hold_ns`` adds a fixed-length active wait after the cycles, such as a
    peripheral register synchronization.
    """

    release_ns: int
    task: str
    label: str
    cycles: int = 0
    until_ns: int | None = None
    tag: str = ""
    hold_ns: int = 0

    @property
    def is_busy(self) -> bool:
        return self.until_ns is not None


@dataclass(frozen=True)
class DeadlineCheck:
    required_cycles: int
    available_window_ns: int
    at_ns: int
    label: str


@dataclass(frozen=True)
class DeadlineMiss:
    check: DeadlineCheck
    core_hz: int
    needed_ns: int


@dataclass
class MacSchedule:
    intervals: list[RadioInterval] = field(default_factory=list)
    mcu_work: list[McuWork] = field(default_factory=list)
    deadline_checks: list[DeadlineCheck] = field(default_factory=list)
    markers: list[tuple[int, str]] = field(default_factory=list)

    def extend(self, other: MacSchedule) -> None:
        self.intervals.extend(other.intervals)
        self.mcu_work.extend(other.mcu_work)
        self.deadline_checks.extend(other.deadline_checks)
        self.markers.extend(other.markers)

    @property
    def end_ns(self) -> int:
        return max((iv.end_ns for iv in self.intervals), default=0)

    def tiled(self, horizon_ns: int, idle: RadioState = RadioState.OFF) -> MacSchedule:
        """Sorted copy whose intervals exactly tile ``[0, horizon_ns]``."""
        acts = sorted((iv for iv in self.intervals if iv.end_ns > iv.start_ns), key=lambda iv: iv.start_ns)
        out: list[RadioInterval] = []
        t = 0
        for iv in acts:
            if iv.start_ns < t:
                raise ConfigError(f"overlapping radio activity at {iv.start_ns} ns ({iv.label})")
            if iv.end_ns > horizon_ns:
                raise ConfigError(f"radio activity {iv.label} exceeds the horizon")
            if iv.start_ns > t:
                out.append(RadioInterval(t, iv.start_ns, idle, "idle"))
            out.append(iv)
            t = iv.end_ns
        if t < horizon_ns:
            out.append(RadioInterval(t, horizon_ns, idle, "idle"))
        return MacSchedule(
            out,
            sorted(self.mcu_work, key=lambda w: w.release_ns),
            sorted(self.deadline_checks, key=lambda d: d.at_ns),
            sorted(self.markers),
        )

    def radio_on_ns(self) -> int:
        off = {RadioState.OFF, RadioState.SLEEP}
        return sum(iv.end_ns - iv.start_ns for iv in self.intervals if iv.state not in off)

    def boundaries(self) -> list[tuple[int, int, str]]:
        return [(iv.start_ns, iv.end_ns, iv.state.value) for iv in self.intervals]


class _Seq:
    """Appends back-to-back radio segments starting at ``t``."""

    def __init__(self, t: int, phy: PhyTiming = PHY):
        self.t = t
        self.phy = phy
        self.intervals: list[RadioInterval] = []

    def add(self, dur: int, state: RadioState, label: str) -> int:
        if dur > 0:
            self.intervals.append(RadioInterval(self.t, self.t + dur, state, label))
        self.t += dur
        return self.t

    def tx(self, psdu: int, label: str) -> int:
        return self.add(self.phy.airtime_ns(psdu), RadioState.TX, label)

    def rx(self, psdu: int, label: str) -> int:
        return self.add(self.phy.airtime_ns(psdu), RadioState.RX_BUSY, label)

    def turnaround(self, label: str = "turnaround") -> int:
        return self.add(self.phy.turnaround_ns, RadioState.RX_LISTEN, label)


# -- CSMA/CA -------------------------------------------------------------------


@dataclass(frozen=True)
class CsmaParams:
    min_be: int = 3
    max_be: int = 5
    max_backoffs: int = 4


@dataclass(frozen=True)
class CsmaState:
    nb: int = 0
    be: int = 3
    params: CsmaParams = CsmaParams()

    def __post_init__(self):
        p = self.params
        if not p.min_be <= self.be <= p.max_be or self.nb > p.max_backoffs:
            raise ValueError(f"invalid CSMA state NB={self.nb} BE={self.be}")

    @classmethod
    def initial(cls, params: CsmaParams = CsmaParams()) -> CsmaState:
        return cls(0, params.min_be, params)

    def on_busy(self) -> CsmaState:
        nb = self.nb + 1
        if nb > self.params.max_backoffs:
            raise ChannelAccessFailure(f"channel busy after {nb} backoffs")
        return CsmaState(nb, min(self.be + 1, self.params.max_be), self.params)


def _rng(seed_or_rng: int | random.Random) -> random.Random:
    return seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)


def csma_attempt(seed_or_rng: int | random.Random, state: CsmaState, phy: PhyTiming = PHY) -> int:
    """Random backoff delay in ns for one CSMA attempt: U[0, 2^BE - 1] unit backoffs."""
    rng = _rng(seed_or_rng)
    return rng.randint(0, 2**state.be - 1) * phy.unit_backoff_ns


@dataclass(frozen=True)
class CsmaOutcome:
    intervals: list[RadioInterval]
    tx_start_ns: int
    attempts: int


def csma_access(
    rng: random.Random,
    start_ns: int,
    channel_busy: Callable[[int, int], bool] | None = None,
    params: CsmaParams = CsmaParams(),
    phy: PhyTiming = PHY,
) -> CsmaOutcome:
    """Run unslotted CSMA/CA from ``start_ns`` until the channel is clear.

    ``channel_busy(t0, t1)`` reports whether the CCA window overlaps another
    transmission; the default is an ideal, always idle channel.
    """
    state = CsmaState.initial(params)
    seq = _Seq(start_ns, phy)
    attempts = 0
    while True:
        attempts += 1
        seq.add(csma_attempt(rng, state, phy), RadioState.RX_LISTEN, "backoff")
        cca_start = seq.t
        seq.add(phy.cca_ns, RadioState.RX_LISTEN, "cca")
        if channel_busy is None or not channel_busy(cca_start, seq.t):
            break
        state = state.on_busy()
    seq.turnaround()
    return CsmaOutcome(seq.intervals, seq.t, attempts)


# -- Indirect transmissions ----------------------------------------------------


@dataclass(frozen=True)
class IdtxConfig:
    poll_interval_s: float = 1.0
    poll_cmd_psdu_bytes: int = 12
    ack_psdu_bytes: int = ACK_PSDU
    wake_margin_us: int = 1000
    prep_cycles: int = 1500
    post_cycles: int = 1000
    rx_cycles: int = 1500

    def __post_init__(self):
        if self.poll_interval_s <= 0:
            raise ConfigError("poll interval must be positive")

    @property
    def poll_interval_ns(self) -> int:
        return int(round(self.poll_interval_s * 1e9))


def idtx_poll_transaction(
    cfg: IdtxConfig,
    pending: Sequence[int] = (),
    start_ns: int = 0,
    task: str = "mac",
    phy: PhyTiming = PHY,
    label: str = "poll",
) -> MacSchedule:
    """One MLME-POLL exchange starting at ``start_ns``; one poll per pending frame."""
    for psdu in pending:
        if psdu > phy.max_psdu_bytes:
            raise FrameTooLarge(f"pending frame of {psdu} B")
    seq = _Seq(start_ns, phy)
    markers = []
    frames = list(pending)
    while True:
        seq.tx(cfg.poll_cmd_psdu_bytes, f"{label}:poll_cmd")
        seq.turnaround()
        seq.rx(cfg.ack_psdu_bytes, f"{label}:poll_ack")
        if not frames:
            break
        psdu = frames.pop(0)
        seq.add(phy.turnaround_ns, RadioState.RX_LISTEN, f"{label}:await_data")
        seq.rx(psdu, f"{label}:data")
        markers.append((seq.t, f"{label}:rx_done"))
        seq.turnaround()
        seq.tx(cfg.ack_psdu_bytes, f"{label}:data_ack")
        if not frames:
            break  # the data frame's pending bit tells the node nothing more is queued
        seq.turnaround("inter_poll")
    margin = cfg.wake_margin_us * US
    work = [
        McuWork(start_ns - margin, task, f"{label}:prep", cycles=cfg.prep_cycles),
        McuWork(start_ns, task, f"{label}:radio", until_ns=seq.t),
        McuWork(seq.t, task, f"{label}:post", cycles=cfg.post_cycles + cfg.rx_cycles * len(pending)),
    ]
    return MacSchedule(seq.intervals, work, [], markers)


def csma_uplink(
    rng: random.Random,
    psdus: Sequence[int],
    start_ns: int,
    task: str = "mac",
    label: str = "uplink",
    wake_margin_us: int = 1000,
    prep_cycles: int = 1500,
    post_cycles: int = 1000,
    channel_busy=None,
    phy: PhyTiming = PHY,
) -> MacSchedule:
    """Back-to-back CSMA/CA data frames, each acknowledged."""
    t = start_ns
    intervals: list[RadioInterval] = []
    for i, psdu in enumerate(psdus):
        if psdu > phy.max_psdu_bytes:
            raise FrameTooLarge(f"uplink frame of {psdu} B")
        out = csma_access(rng, t, channel_busy, phy=phy)
        seq = _Seq(out.tx_start_ns, phy)
        seq.tx(psdu, f"{label}:data")
        seq.turnaround()
        seq.rx(ACK_PSDU, f"{label}:ack")
        intervals += out.intervals + seq.intervals
        t = seq.t
    margin = wake_margin_us * US
    work = [
        McuWork(start_ns - margin, task, f"{label}:prep", cycles=prep_cycles),
        McuWork(start_ns, task, f"{label}:radio", until_ns=t),
        McuWork(t, task, f"{label}:post", cycles=post_cycles),
    ]
    return MacSchedule(intervals, work, [], [(t, f"{label}:tx_done")])


def idle_rx(psdus: Sequence[int], start_ns: int, task: str = "mac", label: str = "rx", rx_cycles: int = 1500) -> MacSchedule:
    """Frames arriving at an always-listening radio, each acknowledged."""
    seq = _Seq(start_ns)
    markers = []
    for i, psdu in enumerate(psdus):
        if i:
            seq.turnaround("inter_frame")
        seq.rx(psdu, f"{label}:data")
        markers.append((seq.t, f"{label}:rx_done"))
        seq.turnaround()
        seq.tx(ACK_PSDU, f"{label}:ack")
    work = [
        McuWork(start_ns, task, f"{label}:radio", until_ns=seq.t),
        McuWork(seq.t, task, f"{label}:post", cycles=rx_cycles * len(psdus)),
    ]
    return MacSchedule(seq.intervals, work, [], markers)


# -- DSME ----------------------------------------------------------------------

SLOTS_PER_SUPERFRAME = 16
CAP_SLOTS = 8
BASE_SLOT_SYMBOLS = 60
BASE_SUPERFRAME_SYMBOLS = BASE_SLOT_SYMBOLS * SLOTS_PER_SUPERFRAME


class Direction(str, Enum):
    UPLINK = "uplink"
    DOWNLINK = "downlink"

    @classmethod
    def parse(cls, s: str) -> Direction:
        s = s.lower()
        if s in ("tx", "up", "uplink", "ul"):
            return cls.UPLINK
        if s in ("rx", "down", "downlink", "dl"):
            return cls.DOWNLINK
        raise ConfigError(f"unknown GTS direction {s!r}")


def _check_order(name: str, value: int) -> None:
    if not 0 <= value <= 14:
        raise OutOfRange(f"{name}={value} outside [0, 14]")


def dsme_slot_duration(so: int, phy: PhyTiming = PHY) -> int:
    """Slot duration in ns: 60 * 2^SO symbols."""
    _check_order("SO", so)
    return BASE_SLOT_SYMBOLS * 2**so * phy.symbol_us * US


def dsme_superframe_duration(so: int, phy: PhyTiming = PHY) -> int:
    _check_order("SO", so)
    return BASE_SUPERFRAME_SYMBOLS * 2**so * phy.symbol_us * US


def dsme_multisuperframe_duration(mo: int, phy: PhyTiming = PHY) -> int:
    """Multisuperframe duration in ns: 960 * 2^MO symbols."""
    _check_order("MO", mo)
    return BASE_SUPERFRAME_SYMBOLS * 2**mo * phy.symbol_us * US


@dataclass(frozen=True)
class GtsSlot:
    direction: Direction
    superframe_index: int
    slot_index: int
    channel: int = 0

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction.parse(self.direction) if isinstance(self.direction, str) else self.direction)


@dataclass(frozen=True)
class DsmeConfig:
    so: int = 3
    mo: int = 10
    bo: int = 10
    cap_reduction: bool = True
    gts: tuple[GtsSlot, ...] = ()
    guard_us: int = 400
    wake_margin_us: int = 1000
    preprocessing_cycles: int = 12000
    rx_prep_cycles: int = 3000
    beacon_cycles: int = 6000
    beacon_psdu_bytes: int = 40
    alloc_cmd_psdu_bytes: int = 20

    def __post_init__(self):
        object.__setattr__(self, "gts", tuple(self.gts))
        for name in ("so", "mo", "bo"):
            _check_order(name.upper(), getattr(self, name))
        if not self.so <= self.mo <= self.bo:
            raise ConfigError(f"require SO <= MO <= BO, got {self.so}, {self.mo}, {self.bo}")
        seen = set()
        for g in self.gts:
            key = (g.superframe_index, g.slot_index, g.channel)
            if key in seen:
                raise ConfigError(f"duplicate GTS {key}")
            seen.add(key)
            if not 0 <= g.superframe_index < self.superframes_per_multisuperframe:
                raise ConfigError(f"GTS superframe {g.superframe_index} out of range")
            if g.slot_index not in self.cfp_slots(g.superframe_index):
                raise ConfigError(f"GTS slot {g.slot_index} is not a CFP slot of superframe {g.superframe_index}")

    @property
    def superframes_per_multisuperframe(self) -> int:
        return 2 ** (self.mo - self.so)

    @property
    def slot_ns(self) -> int:
        return dsme_slot_duration(self.so)

    @property
    def superframe_ns(self) -> int:
        return dsme_superframe_duration(self.so)

    @property
    def multisuperframe_ns(self) -> int:
        return dsme_multisuperframe_duration(self.mo)

    @property
    def beacon_interval_ns(self) -> int:
        return BASE_SUPERFRAME_SYMBOLS * 2**self.bo * PHY.symbol_us * US

    def has_cap(self, superframe_index: int) -> bool:
        return not self.cap_reduction or superframe_index == 0

    def cfp_slots(self, superframe_index: int) -> range:
        first = 1 + CAP_SLOTS if self.has_cap(superframe_index) else 1
        return range(first, SLOTS_PER_SUPERFRAME)

    def cfp_slot_count(self) -> int:
        return sum(len(self.cfp_slots(i)) for i in range(self.superframes_per_multisuperframe))

    def slot_start(self, msf: int, superframe_index: int, slot_index: int) -> int:
        return msf * self.multisuperframe_ns + superframe_index * self.superframe_ns + slot_index * self.slot_ns

    def cfp_position(self, k: int) -> tuple[int, int]:
        """Map the k-th CFP slot of a multisuperframe to (superframe, slot)."""
        for sf in range(self.superframes_per_multisuperframe):
            slots = self.cfp_slots(sf)
            if k < len(slots):
                return sf, slots[k]
            k -= len(slots)
        raise ConfigError("CFP index beyond the multisuperframe")

    def with_gts(self, gts: Iterable[GtsSlot]) -> DsmeConfig:
        from dataclasses import replace

        return replace(self, gts=tuple(gts))


def alternating_gts(cfg: DsmeConfig, per_direction: int, first: Direction = Direction.UPLINK) -> tuple[GtsSlot, ...]:
    """``per_direction`` GTS each way, alternating, equally spaced across the CFP."""
    n = 2 * per_direction
    total = cfg.cfp_slot_count()
    if n > total:
        raise ConfigError(f"{n} GTS exceed {total} CFP slots")
    other = Direction.DOWNLINK if first is Direction.UPLINK else Direction.UPLINK
    out = []
    for i in range(n):
        sf, slot = cfg.cfp_position(i * total // n)
        out.append(GtsSlot(first if i % 2 == 0 else other, sf, slot))
    return tuple(out)


def spread_gts(cfg: DsmeConfig, count: int, direction: Direction) -> tuple[GtsSlot, ...]:
    """``count`` GTS of one direction, equally spaced across the CFP."""
    total = cfg.cfp_slot_count()
    if count > total:
        raise ConfigError(f"{count} GTS exceed {total} CFP slots")
    return tuple(GtsSlot(direction, *cfg.cfp_position(i * total // count)) for i in range(count))


@dataclass(frozen=True)
class GtsOccurrence:
    msf: int
    gts_index: int
    slot: GtsSlot
    start_ns: int


def gts_occurrences(cfg: DsmeConfig, horizon_ns: int) -> list[GtsOccurrence]:
    out = []
    n_msf = -(-horizon_ns // cfg.multisuperframe_ns)
    for msf in range(n_msf):
        for i, g in enumerate(cfg.gts):
            start = cfg.slot_start(msf, g.superframe_index, g.slot_index)
            if start + cfg.slot_ns <= horizon_ns:
                out.append(GtsOccurrence(msf, i, g, start))
    out.sort(key=lambda o: o.start_ns)
    return out


def next_gts(cfg: DsmeConfig, direction: Direction, not_before_ns: int, taken: set | None = None) -> GtsOccurrence:
    """Earliest owned GTS of ``direction`` starting at or after ``not_before_ns``."""
    taken = taken or set()
    best = None
    msf = max(0, not_before_ns // cfg.multisuperframe_ns)
    for m in (msf, msf + 1, msf + 2):
        for i, g in enumerate(cfg.gts):
            if g.direction is not direction or (m, i) in taken:
                continue
            start = cfg.slot_start(m, g.superframe_index, g.slot_index)
            if start >= not_before_ns and (best is None or start < best.start_ns):
                best = GtsOccurrence(m, i, g, start)
        if best is not None:
            return best
    raise CapacityError(f"no {direction.value} GTS allocated")


def build_dsme_schedule(
    cfg: DsmeConfig,
    horizon_ns: int,
    traffic: Mapping[tuple[int, int], Sequence[int]] | None = None,
    task: str = "mac",
    rng: random.Random | None = None,
    allocation_handshake: bool = True,
) -> MacSchedule:
    """Radio schedule of one DSME node over ``horizon_ns``.

    ``traffic`` maps a GTS occurrence ``(multisuperframe, gts_index)`` to the
    PSDU lengths pending (uplink) or arriving (downlink) in that slot.
    """
    if horizon_ns < cfg.multisuperframe_ns:
        raise ConfigError("horizon shorter than one multisuperframe")
    traffic = traffic or {}
    rng = rng or random.Random(0)
    sched = MacSchedule()
    slot = cfg.slot_ns
    guard = cfg.guard_us * US
    margin = cfg.wake_margin_us * US

    def wake(at: int, cycles: int, label: str, check: bool = False):
        sched.mcu_work.append(McuWork(at - margin, task, f"{label}:prep", cycles=cycles))
        if check:
            sched.deadline_checks.append(DeadlineCheck(cycles, margin, at, label))

    n_sf = -(-horizon_ns // cfg.superframe_ns)
    beacon_every = cfg.beacon_interval_ns // cfg.superframe_ns
    for abs_sf in range(n_sf):
        sf_start = abs_sf * cfg.superframe_ns
        if sf_start + cfg.superframe_ns > horizon_ns:
            break
        sf = abs_sf % cfg.superframes_per_multisuperframe
        if abs_sf % beacon_every == 0:
            seq = _Seq(sf_start)
            seq.add(guard, RadioState.RX_LISTEN, "beacon:guard")
            seq.rx(cfg.beacon_psdu_bytes, "beacon:rx")
            sched.intervals += seq.intervals
            # enhanced-beacon parsing counts as preprocessing and shares its deadline
            if sf_start >= margin:
                wake(sf_start, cfg.preprocessing_cycles, "beacon")
            sched.deadline_checks.append(DeadlineCheck(cfg.preprocessing_cycles, margin, sf_start, "beacon"))
            sched.mcu_work.append(McuWork(sf_start, task, "beacon:radio", until_ns=seq.t, tag="beacon"))
            sched.mcu_work.append(McuWork(seq.t, task, "beacon:post", cycles=cfg.beacon_cycles, tag="beacon"))
            sched.markers.append((sf_start, "beacon"))
        if cfg.has_cap(sf):
            cap_start = sf_start + slot
            cap_end = cap_start + CAP_SLOTS * slot
            sched.markers.append((cap_start, "cap_start"))
            sched.markers.append((cap_end, "cap_end"))
            busy = []
            t = cap_start
            if allocation_handshake and abs_sf == 0:
                for d in sorted({g.direction.value for g in cfg.gts}):
                    out = csma_access(rng, t)
                    seq = _Seq(out.tx_start_ns)
                    seq.tx(cfg.alloc_cmd_psdu_bytes, f"gts_alloc:{d}")
                    seq.turnaround()
                    seq.rx(ACK_PSDU, f"gts_alloc:{d}:ack")
                    seq.turnaround()
                    seq.rx(cfg.alloc_cmd_psdu_bytes, f"gts_alloc:{d}:response")
                    seq.turnaround()
                    seq.tx(ACK_PSDU, f"gts_alloc:{d}:response_ack")
                    busy += [iv if iv.label not in ("backoff", "cca", "turnaround") else
                             RadioInterval(iv.start_ns, iv.end_ns, iv.state, "cap:" + iv.label)
                             for iv in out.intervals + seq.intervals]
                    t = seq.t
            if t > cap_end:
                raise CapacityError("GTS allocation handshake overruns the CAP")
            sched.intervals += busy
            if t < cap_end:
                sched.intervals.append(RadioInterval(t, cap_end, RadioState.RX_LISTEN, "cap:listen"))
            sched.mcu_work.append(McuWork(cap_start, task, "cap:radio", until_ns=cap_end, tag="cap"))
    for occ in gts_occurrences(cfg, horizon_ns):
        s = occ.start_ns
        frames = list(traffic.get((occ.msf, occ.gts_index), ()))
        if len(frames) > 1:
            raise CapacityError("one data frame per GTS")
        label = f"gts{occ.gts_index}:{occ.slot.direction.value}"
        if occ.slot.direction is Direction.DOWNLINK:
            seq = _Seq(s)
            if frames:
                seq.add(guard, RadioState.RX_LISTEN, f"{label}:guard")
                seq.rx(frames[0], f"{label}:data")
                sched.markers.append((seq.t, f"{label}:rx_done"))
                seq.turnaround()
                seq.tx(ACK_PSDU, f"{label}:ack")
            else:
                seq.add(slot, RadioState.RX_LISTEN, f"{label}:listen")
            if seq.t > s + slot:
                raise CapacityError(f"{label} frame does not fit the slot")
            sched.intervals += seq.intervals
            wake(s, cfg.rx_prep_cycles, label)
            sched.mcu_work.append(McuWork(s, task, f"{label}:radio", until_ns=seq.t))
        elif frames:
            seq = _Seq(s + guard)
            seq.tx(frames[0], f"{label}:data")
            seq.turnaround()
            seq.rx(ACK_PSDU, f"{label}:ack")
            if seq.t > s + slot:
                raise CapacityError(f"{label} frame does not fit the slot")
            sched.intervals += seq.intervals
            sched.markers.append((seq.t, f"{label}:tx_done"))
            wake(s, cfg.preprocessing_cycles, label, check=True)
            sched.mcu_work.append(McuWork(s, task, f"{label}:radio", until_ns=seq.t))
    return sched.tiled(horizon_ns, RadioState.OFF)


def check_deadlines(schedule: MacSchedule, config) -> list[DeadlineMiss]:
    """Misses where the required cycles do not fit their window at the given clock.

    ``config`` is a ``ClockConfig`` or a plain frequency in Hz.
    """
    core_hz = getattr(config, "core_hz", config)
    misses = []
    for chk in schedule.deadline_checks:
        needed = -(-chk.required_cycles * 1_000_000_000 // core_hz)
        if needed > chk.available_window_ns:
            misses.append(DeadlineMiss(chk, core_hz, needed))
    return misses
