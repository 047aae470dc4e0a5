"""Clock configurations, the component-state power model and energy arithmetic."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

MHZ = 1_000_000
V_LOW = 1.0
V_HIGH = 1.2


class PowerModelError(Exception):
    pass


class InvalidConfig(PowerModelError, ValueError):
    """A clock configuration is not valid under the profile."""


class UnknownLevel(InvalidConfig):
    """The frequency is not one of the profile's declared levels."""


class OverlapError(PowerModelError, ValueError):
    """An interval assigns two states to the same component."""


class SourceKind(str, Enum):
    RC = "rc"
    PLL = "pll"


class Component(str, Enum):
    MCU = "mcu"
    RADIO = "radio"


class RadioState(str, Enum):
    OFF = "off"
    SLEEP = "sleep"
    RX_LISTEN = "rx_listen"
    RX_BUSY = "rx_busy"
    TX = "tx"


def voltage_rule(core_hz: float, threshold_hz: float = 26 * MHZ) -> float:
    """Core voltage required for ``core_hz``: 1.0 V below the threshold, 1.2 V at/above."""
    if core_hz <= 0:
        raise InvalidConfig(f"core frequency must be positive, got {core_hz}")
    return V_LOW if core_hz < threshold_hz else V_HIGH


@dataclass(frozen=True)
class ClockSource:
    kind: SourceKind
    pll_input_hz: int | None = None

    def __post_init__(self):
        kind = SourceKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is SourceKind.RC and self.pll_input_hz is not None:
            raise InvalidConfig("RC-direct source has no PLL input")
        if kind is SourceKind.PLL and self.pll_input_hz is None:
            object.__setattr__(self, "pll_input_hz", 16 * MHZ)

    @classmethod
    def rc(cls) -> ClockSource:
        return cls(SourceKind.RC)

    @classmethod
    def pll(cls, input_hz: int = 16 * MHZ) -> ClockSource:
        return cls(SourceKind.PLL, input_hz)


@dataclass(frozen=True)
class ClockConfig:
    """Clock source plus core frequency; the core voltage is derived, never free."""

    source: ClockSource
    core_hz: int
    core_voltage: float | None = None
    threshold_hz: float = field(default=26 * MHZ, compare=False, repr=False)

    def __post_init__(self):
        expected = voltage_rule(self.core_hz, self.threshold_hz)
        if self.core_voltage is None:
            object.__setattr__(self, "core_voltage", expected)
        elif self.core_voltage != expected:
            raise InvalidConfig(
                f"{self.core_hz / MHZ:g} MHz requires {expected} V, got {self.core_voltage} V"
            )

    @property
    def mhz(self) -> float:
        return self.core_hz / MHZ

    @property
    def kind(self) -> SourceKind:
        return self.source.kind

    def label(self) -> str:
        return f"{self.mhz:g}MHz-{self.kind.value}"


@dataclass(frozen=True)
class McuActive:
    config: ClockConfig


@dataclass(frozen=True)
class McuLpm:
    pass


@dataclass(frozen=True)
class McuTransition:
    """Clock reconfiguration in progress; draws a share of the faster endpoint's active power."""

    from_config: ClockConfig
    to_config: ClockConfig

    @property
    def faster(self) -> ClockConfig:
        return max(self.from_config, self.to_config, key=lambda c: c.core_hz)


LPM = McuLpm()
McuState = McuActive | McuLpm | McuTransition


@dataclass(frozen=True)
class ComponentState:
    component: Component
    state: McuActive | McuLpm | McuTransition | RadioState

    def __post_init__(self):
        comp = Component(self.component)
        object.__setattr__(self, "component", comp)
        if comp is Component.MCU and not isinstance(self.state, (McuActive, McuLpm, McuTransition)):
            raise PowerModelError(f"invalid MCU state {self.state!r}")
        if comp is Component.RADIO:
            object.__setattr__(self, "state", RadioState(self.state))

    @classmethod
    def mcu(cls, state: McuActive | McuLpm | McuTransition) -> ComponentState:
        return cls(Component.MCU, state)

    @classmethod
    def radio(cls, state: RadioState | str) -> ComponentState:
        return cls(Component.RADIO, RadioState(state))


def _vkey(v: float) -> str:
    return f"{v:.1f}"


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-device table of fitted currents, timings and software cycle counts.

    Voltage-keyed maps use ``"1.0"``/``"1.2"`` string keys so the JSON form
    round-trips unchanged.
    """

    mcu_base_current_mA: Mapping[str, float]
    mcu_slope_mA_per_MHz: Mapping[str, Mapping[str, float]]
    mcu_lpm_current_uA: float
    radio_current_mA: Mapping[str, float]
    supply_voltage_V: float = 3.3
    frequency_levels_MHz: tuple[float, ...] = (8, 16, 24, 32, 48, 80)
    rc_levels_MHz: tuple[float, ...] = (8, 16, 24, 32, 48)
    reset_clock_MHz: float = 4
    voltage_threshold_MHz: float = 26
    timer_wakeup_period_s: float = 1.0
    timer_wakeup_cycles: int = 2000
    timer_wakeup_sync_us: float = 0.0
    transition_uncached_ms: float = 25.0
    transition_cached_ms: float = 0.5
    transition_active_equivalent: float = 1.0
    transition_cache_capacity: int = 8
    lpm_min_idle_us: float = 2000.0
    # fixed-time MCU activity per CoAP datagram (driver waits, frame transfers)
    coap_stack_hold_us: float = 0.0
    software_cycles: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frequency_levels_MHz", tuple(sorted(self.frequency_levels_MHz)))
        object.__setattr__(self, "rc_levels_MHz", tuple(sorted(self.rc_levels_MHz)))

    # -- clock helpers -------------------------------------------------

    @property
    def threshold_hz(self) -> float:
        return self.voltage_threshold_MHz * MHZ

    @property
    def f_max_MHz(self) -> float:
        return max(self.frequency_levels_MHz)

    def levels_for(self, kind: SourceKind | str) -> tuple[float, ...]:
        kind = SourceKind(kind)
        if kind is SourceKind.RC:
            return tuple(f for f in self.rc_levels_MHz if f in self.frequency_levels_MHz)
        return self.frequency_levels_MHz

    def config(self, mhz: float, source: SourceKind | str | ClockSource = SourceKind.PLL) -> ClockConfig:
        """Build and validate the configuration for ``mhz`` on ``source``."""
        if not isinstance(source, ClockSource):
            source = ClockSource(SourceKind(source))
        cfg = ClockConfig(source, int(round(mhz * MHZ)), threshold_hz=self.threshold_hz)
        self.validate(cfg)
        return cfg

    @property
    def reset_config(self) -> ClockConfig:
        return ClockConfig(ClockSource.rc(), int(round(self.reset_clock_MHz * MHZ)), threshold_hz=self.threshold_hz)

    def validate(self, cfg: ClockConfig) -> None:
        if cfg.core_voltage != voltage_rule(cfg.core_hz, self.threshold_hz):
            raise InvalidConfig(f"{cfg.label()} violates the voltage rule")
        mhz = cfg.core_hz / MHZ
        if cfg.kind is SourceKind.RC and math.isclose(mhz, self.reset_clock_MHz):
            return
        if not any(math.isclose(mhz, f) for f in self.levels_for(cfg.kind)):
            raise UnknownLevel(f"{mhz:g} MHz is not a declared {cfg.kind.value} level")

    def all_configs(self) -> list[ClockConfig]:
        """Every feasible (source, level) pair, RC first within a level."""
        out = []
        for f in self.frequency_levels_MHz:
            for kind in (SourceKind.RC, SourceKind.PLL):
                if f in self.levels_for(kind):
                    out.append(self.config(f, kind))
        return out

    # -- currents --------------------------------------------------------

    def mcu_active_current_mA(self, cfg: ClockConfig) -> float:
        v = _vkey(cfg.core_voltage)
        return self.mcu_base_current_mA[v] + self.mcu_slope_mA_per_MHz[cfg.kind.value][v] * cfg.core_hz / MHZ

    def static_share(self, cfg: ClockConfig | None = None) -> float:
        cfg = cfg or self.config(self.f_max_MHz, SourceKind.PLL)
        return self.mcu_base_current_mA[_vkey(cfg.core_voltage)] / self.mcu_active_current_mA(cfg)

    def cycles(self, name: str) -> int:
        return int(round(self.software_cycles.get(name, 0)))

    # -- invariants ------------------------------------------------------

    def check(self) -> list[str]:
        """Return the list of violated profile invariants (empty when valid)."""
        problems = []
        base = self.mcu_base_current_mA
        slopes = self.mcu_slope_mA_per_MHz
        if base[_vkey(V_HIGH)] < base[_vkey(V_LOW)]:
            problems.append("I_base(1.2 V) < I_base(1.0 V)")
        for v in (V_LOW, V_HIGH):
            if slopes["pll"][_vkey(v)] < slopes["rc"][_vkey(v)]:
                problems.append(f"PLL slope below RC slope at {v} V")
            for kind in ("rc", "pll"):
                if slopes[kind][_vkey(v)] <= 0:
                    problems.append(f"non-positive {kind} slope at {v} V")
            if base[_vkey(v)] <= 0:
                problems.append(f"non-positive base current at {v} V")
        if self.mcu_lpm_current_uA <= 0:
            problems.append("non-positive LPM current")
        r = self.radio_current_mA
        if r["off"] < 0 or any(r[s] <= 0 for s in ("sleep", "rx_listen", "rx_busy", "tx")):
            problems.append("radio currents must be positive (off may be zero)")
        if not (r["off"] <= r["sleep"] <= min(r["rx_listen"], r["rx_busy"], r["tx"])):
            problems.append("radio ordering off <= sleep <= active states violated")
        share = self.static_share()
        if not 0.06 <= share <= 0.14:
            problems.append(f"static share at f_max is {share:.3f}, outside 10% +- 4 pp")
        return problems

    def scaled(self, c: float) -> CalibrationProfile:
        """Copy with every current multiplied by ``c``."""
        return replace(
            self,
            mcu_base_current_mA={k: v * c for k, v in self.mcu_base_current_mA.items()},
            mcu_slope_mA_per_MHz={
                s: {k: v * c for k, v in m.items()} for s, m in self.mcu_slope_mA_per_MHz.items()
            },
            mcu_lpm_current_uA=self.mcu_lpm_current_uA * c,
            radio_current_mA={k: v * c for k, v in self.radio_current_mA.items()},
        )

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frequency_levels_MHz"] = list(self.frequency_levels_MHz)
        d["rc_levels_MHz"] = list(self.rc_levels_MHz)
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> CalibrationProfile:
        data = dict(data)
        data.pop("_comment", None)
        for key in ("frequency_levels_MHz", "rc_levels_MHz"):
            if key in data:
                data[key] = tuple(data[key])
        profile = cls(**data)
        missing = {"off", "sleep", "rx_listen", "rx_busy", "tx"} - set(profile.radio_current_mA)
        if missing:
            raise PowerModelError(f"radio_current_mA lacks {sorted(missing)}")
        return profile

    @classmethod
    def load(cls, path: str | Path) -> CalibrationProfile:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def default_profile() -> CalibrationProfile:
    """The shipped, fitted default profile."""
    text = resources.files("dvfsim.data").joinpath("default_profile.json").read_text()
    return CalibrationProfile.from_dict(json.loads(text))


def current_of(state: ComponentState, profile: CalibrationProfile) -> float:
    """Supply current in mA drawn by one component state."""
    if state.component is Component.RADIO:
        return profile.radio_current_mA[state.state.value]
    if isinstance(state.state, McuLpm):
        return profile.mcu_lpm_current_uA / 1000.0
    if isinstance(state.state, McuTransition):
        profile.validate(state.state.from_config)
        profile.validate(state.state.to_config)
        return profile.transition_active_equivalent * profile.mcu_active_current_mA(state.state.faster)
    cfg = state.state.config
    profile.validate(cfg)
    return profile.mcu_active_current_mA(cfg)


def power_mW(state: ComponentState, profile: CalibrationProfile) -> float:
    return profile.supply_voltage_V * current_of(state, profile)


def power_of(state: ComponentState, profile: CalibrationProfile) -> float:
    """Power in W drawn from the supply by ``state``."""
    return power_mW(state, profile) / 1000.0


@dataclass(frozen=True)
class EnergyReport:
    energy_J: float
    duration_s: float
    edp_Js: float
    per_component_J: Mapping[str, float]

    @classmethod
    def build(cls, per_component_J: Mapping[str, float], duration_s: float) -> EnergyReport:
        energy = math.fsum(per_component_J.values())
        return cls(energy, duration_s, energy * duration_s, dict(per_component_J))

    @property
    def average_power_W(self) -> float:
        return self.energy_J / self.duration_s if self.duration_s else 0.0


def energy_J_from_products(products: Iterable[float]) -> float:
    """Sum of ``power_mW * duration_ns`` products, converted to joules.

    ``fsum`` is correctly rounded, so the result does not depend on the order
    in which intervals are visited.
    """
    return math.fsum(products) * 1e-12


def to_ns(duration_s: float) -> int:
    return int(round(duration_s * 1e9))


def integrate(
    intervals: Sequence[tuple[float, Iterable[ComponentState]]],
    profile: CalibrationProfile,
    *,
    unit: str = "s",
) -> EnergyReport:
    """Integrate piecewise-constant component states.

    Durations are seconds (``unit="s"``) or integer nanoseconds (``unit="ns"``);
    both are quantized to whole nanoseconds before multiplying.
    """
    per_comp: dict[str, list[float]] = {}
    total_ns = 0
    for duration, states in intervals:
        if duration < 0:
            raise PowerModelError("negative interval duration")
        ns = int(duration) if unit == "ns" else to_ns(duration)
        seen = set()
        for st in states:
            if st.component in seen:
                raise OverlapError(f"two states for {st.component.value} in one interval")
            seen.add(st.component)
            per_comp.setdefault(st.component.value, []).append(power_mW(st, profile) * ns)
        total_ns += ns
    return EnergyReport.build({k: energy_J_from_products(v) for k, v in per_comp.items()}, total_ns / 1e9)


def integrate_power(rows: Iterable[tuple[int, int, str, float]]) -> EnergyReport:
    """Integrate ``(start_ns, end_ns, component, power_mW)`` rows of a power trace."""
    per_comp: dict[str, list[float]] = {}
    lo, hi = None, None
    for start, end, comp, p in rows:
        if end < start:
            raise PowerModelError("interval ends before it starts")
        per_comp.setdefault(comp, []).append(p * (end - start))
        lo = start if lo is None else min(lo, start)
        hi = end if hi is None else max(hi, end)
    duration = 0 if lo is None else hi - lo
    return EnergyReport.build({k: energy_J_from_products(v) for k, v in per_comp.items()}, duration / 1e9)
