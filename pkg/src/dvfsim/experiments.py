"""Scenario presets and the measurements built on them.

Each headline quantity, such as per-request energy or burst timing, is computed
here once. The CLI and the calibration script reuse it, and so do the
acceptance checks.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

from .mac80154 import CapacityError
from .netstack import plan_coap_exchange, StackOverheads
from .powermodel import CalibrationProfile, ClockConfig, SourceKind
from .simcore import RunReport, Scenario, SimTrace, run

PAYLOADS = (1, 16, 64, 128, 256)
METHODS = ("GET", "POST")
MAC_MODES = ("idtx", "dsme")


class UnknownPreset(KeyError):
    pass


def preset_names() -> list[str]:
    root = resources.files("dvfsim").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


@lru_cache(maxsize=None)
def _preset_text(name: str) -> str:
    path = resources.files("dvfsim").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise UnknownPreset(name)
    return path.read_text()


def preset_dict(name: str) -> dict:
    return json.loads(_preset_text(name))


def scenario(
    base: str | Mapping,
    profile: CalibrationProfile,
    cfg: ClockConfig | None = None,
    **overrides,
) -> Scenario:
    """Scenario from a preset name or dict, optionally pinned to one clock config.

    Pinning replaces the clock of every task; ``overrides`` replace top-level
    keys, and ``app``/``mac`` dicts are merged into the preset's.
    """
    d = preset_dict(base) if isinstance(base, str) else copy.deepcopy(dict(base))
    for key, value in overrides.items():
        if key in ("app", "mac") and isinstance(value, Mapping):
            d[key] = {**d.get(key, {}), **value}
        else:
            d[key] = value
    if cfg is not None:
        d["clock"] = {"mhz": cfg.mhz, "source": cfg.kind.value}
        d.pop("tasks", None)
    return Scenario.from_dict(d, profile)


def cfg_of(profile: CalibrationProfile, mhz: float, source: str = "pll") -> ClockConfig:
    return profile.config(mhz, source)


def f_max(profile: CalibrationProfile) -> ClockConfig:
    return profile.config(profile.f_max_MHz, SourceKind.PLL)


# -- baseline and poll loop -------------------------------------------------------------


def average_current(profile: CalibrationProfile, preset: str, cfg: ClockConfig, **overrides) -> float:
    return run(scenario(preset, profile, cfg, **overrides))[1].average_current_mA


def poll_energy_J(profile: CalibrationProfile, cfg: ClockConfig) -> float:
    """Mean energy of one poll-only IDTX request window."""
    report = run(scenario("idtx_poll", profile, cfg))[1]
    polls = [r.energy_J for k, r in report.per_request.items() if k.startswith("poll")]
    return sum(polls) / len(polls)


# -- two-task trace with an in-place FFT switch ---------------------------------------


@dataclass(frozen=True)
class FftResult:
    static_J: float
    dynamic_J: float
    static_trace: SimTrace
    dynamic_trace: SimTrace

    @property
    def delta_J(self) -> float:
        return self.dynamic_J - self.static_J


def fft_overhead(profile: CalibrationProfile) -> FftResult:
    """FFT window energy: static f_max vs the dynamic (switch in place) policy."""
    dyn_tr, dyn = run(scenario("fft_switch", profile))
    st_tr, st = run(scenario("fft_switch", profile, f_max(profile)))
    return FftResult(st.per_request["fft"].energy_J, dyn.per_request["fft"].energy_J, st_tr, dyn_tr)


# -- CoAP ----------------------------------------------------------------------------------


def coap_duration_s(profile: CalibrationProfile, mac: str, method: str, payload: int, secure: bool, burst: int,
                    overheads: StackOverheads = StackOverheads()) -> float:
    blocks = plan_coap_exchange(method, payload, secure, overheads).blocks
    if mac == "idtx":
        return 0.25 + burst * blocks * 1.0 + 2.0
    if mac == "idle":
        return 1.0 + burst * blocks * 0.1
    return preset_dict("coap_dsme")["duration_s"]


def coap_run(
    profile: CalibrationProfile,
    mac: str,
    method: str,
    payload: int,
    secure: bool,
    cfg: ClockConfig,
    burst: int | None = None,
    seed: int = 0,
) -> RunReport:
    """Run a CoAP burst; DSME bursts shrink until they fit one CFP."""
    base = f"coap_{mac}"
    burst = burst or preset_dict(base)["app"]["burst"]
    while True:
        app = {"method": method, "payload_bytes": payload, "secure": secure, "burst": burst}
        try:
            return run(scenario(base, profile, cfg, app=app, seed=seed,
                                duration_s=coap_duration_s(profile, mac, method, payload, secure, burst)))[1]
        except CapacityError:
            if mac != "dsme" or burst == 1:
                raise
            burst -= 1


def coap_saving(profile: CalibrationProfile, mac: str, method: str, payload: int, secure: bool,
                cfg: ClockConfig, reference: ClockConfig | None = None) -> float:
    ref = coap_run(profile, mac, method, payload, secure, reference or f_max(profile))
    cand = coap_run(profile, mac, method, payload, secure, cfg)
    return 1.0 - cand.per_request_mean_J / ref.per_request_mean_J


# -- timing table ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BurstRow:
    mac: str
    method: str
    payload: int
    secure: bool
    tburst_min_s: float
    max_delta_s: float
    levels: tuple[str, ...]


def burst_report(reports: Mapping[str, RunReport], mac: str = "", method: str = "", payload: int = 0,
                 secure: bool = False) -> BurstRow:
    """Shortest burst duration and the largest spread across clock levels."""
    from .simcore import ShapeMismatch

    if len(reports) < 1:
        raise ShapeMismatch("no runs to compare")
    counts = {r.timing.get("request_count") for r in reports.values()}
    if len(counts) != 1 or None in counts:
        raise ShapeMismatch("runs differ in request count")
    durations = [r.timing["burst_s"] for r in reports.values()]
    return BurstRow(mac, method, payload, secure, min(durations), max(durations) - min(durations), tuple(reports))


def burst_timing(profile: CalibrationProfile, mac: str, levels: Iterable[ClockConfig], method: str = "GET",
                 payload: int = 16, secure: bool = False) -> BurstRow:
    reports = {}
    for cfg in levels:
        r = coap_run(profile, mac, method, payload, secure, cfg)
        if r.deadline_misses:
            continue
        reports[cfg.label()] = r
    return burst_report(reports, mac, method, payload, secure)


def deadline_clean_levels(profile: CalibrationProfile, preset: str = "dsme_idle") -> list[ClockConfig]:
    return [c for c in profile.all_configs() if not run(scenario(preset, profile, c))[1].deadline_misses]
