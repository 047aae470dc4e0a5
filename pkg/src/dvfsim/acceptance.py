"""The thirteen acceptance checks, shared by ``dvfsim selftest`` and the test suite.

Checks 1-7 compare calibrated savings and timings of the shipped profile
against published targets; checks 8-13 are properties that hold for any
valid profile.
"""

from __future__ import annotations

import io
import random
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from typing import Callable

from . import experiments as ex
from . import freqopt as fo
from .clockctl import TransitionCache, execute_transition
from .mac80154 import CapacityError, MacError
from .netstack import NetstackError, StackOverheads, fragment
from .powermodel import CalibrationProfile, ClockConfig, SourceKind, default_profile
from .simcore import Scenario, reintegrate, run, trace_csv

# k(1.0 V) / k(1.2 V): dynamic current falls roughly in proportion to the core voltage
SLOPE_RATIO_BAND = (0.78, 1.0)
# k_pll / k_rc at equal voltage: the PLL adds a bounded share on top of the oscillator
PLL_RC_RATIO_BAND = (1.0, 1.5)


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.title}: {self.detail}"


def _within(x: float, target: float, tol: float) -> bool:
    return abs(x - target) <= tol


# -- calibrated reproduction -----------------------------------------------------------


def sleep_baseline(p: CalibrationProfile) -> Result:
    hi = ex.average_current(p, "sleep", ex.f_max(p))
    lo = ex.average_current(p, "sleep", ex.cfg_of(p, 8, "rc"))
    s = 1 - lo / hi
    return Result(1, "sleep baseline 8 MHz RC vs 80 MHz", _within(s, 0.45, 0.05),
                  f"saving {s:.1%} (45% +- 5 pp)", {"saving": s})


def idtx_poll_loop(p: CalibrationProfile) -> Result:
    i80 = ex.average_current(p, "idtx_poll", ex.f_max(p))
    i24 = ex.average_current(p, "idtx_poll", ex.cfg_of(p, 24, "pll"))
    i24rc = ex.average_current(p, "idtx_poll", ex.cfg_of(p, 24, "rc"))
    s, extra = 1 - i24 / i80, (i24 - i24rc) / i80
    ok = _within(s, 0.19, 0.03) and _within(extra, 0.05, 0.02)
    return Result(2, "IDTX poll loop", ok, f"24 MHz PLL saves {s:.1%} (19% +- 3 pp), RC adds {extra:.1%} (5% +- 2 pp)",
                  {"saving": s, "rc_extra": extra})


def single_request(p: CalibrationProfile) -> Result:
    e80 = ex.poll_energy_J(p, ex.f_max(p))
    e24 = ex.poll_energy_J(p, ex.cfg_of(p, 24, "rc"))
    r = e24 / e80
    return Result(3, "single IDTX request 24/80 MHz", _within(r, 66.1 / 79.4, 0.05),
                  f"{e24 * 1e6:.1f} uJ / {e80 * 1e6:.1f} uJ = {r:.3f} (0.833 +- 0.05)",
                  {"ratio": r, "e24_uJ": e24 * 1e6, "e80_uJ": e80 * 1e6})


def dvfs_break_even(p: CalibrationProfile) -> Result:
    fft = ex.fft_overhead(p)
    d = fft.delta_J * 1e6
    saving = (ex.poll_energy_J(p, ex.f_max(p)) - ex.poll_energy_J(p, ex.cfg_of(p, 24, "rc"))) * 1e6
    ok = _within(d, 5.0, 1.0) and d < 13.3 and d < saving
    return Result(4, "DVFS break-even", ok,
                  f"FFT overhead {d:.2f} uJ (5 +- 1), below 13.3 uJ and the simulated {saving:.1f} uJ request saving",
                  {"delta_uJ": d, "static_uJ": fft.static_J * 1e6, "request_saving_uJ": saving})


def dsme_idle(p: CalibrationProfile) -> Result:
    ref = run(ex.scenario("dsme_idle", p, ex.f_max(p)))[1].energy.energy_J
    best, best_cfg, misses = 0.0, None, {}
    for cfg in p.all_configs():
        r = run(ex.scenario("dsme_idle", p, cfg))[1]
        misses[cfg.label()] = len(r.deadline_misses)
        if not r.deadline_misses and 1 - r.energy.energy_J / ref > best:
            best, best_cfg = 1 - r.energy.energy_J / ref, cfg
    at8 = [misses[c.label()] for c in p.all_configs() if c.mhz == 8]
    at24 = [misses[c.label()] for c in p.all_configs() if c.mhz == 24]
    ok = _within(best, 0.52, 0.05) and all(m >= 1 for m in at8) and all(m == 0 for m in at24)
    return Result(5, "DSME idle, 0 GTS", ok,
                  f"best saving {best:.1%} at {best_cfg.label() if best_cfg else '-'} (52% +- 5 pp); "
                  f"misses at 8 MHz {at8}, at 24 MHz {at24}",
                  {"best_saving": best, "misses": misses})


COAP_BANDS = {"dsme": (0.35, 0.37), "idtx": (0.25, 0.30)}


def coap_savings(p: CalibrationProfile) -> Result:
    c24 = ex.cfg_of(p, 24, "pll")
    vals, ok = {}, True
    for mac, (lo, hi) in COAP_BANDS.items():
        for method in ex.METHODS:
            for payload in (16, 64):
                s = ex.coap_saving(p, mac, method, payload, False, c24)
                vals[f"{mac} {method} {payload}B"] = s
                ok &= lo - 0.03 <= s <= hi + 0.03
    best = max(ex.coap_saving(p, mac, "GET", n, True, c24) for mac in ex.MAC_MODES for n in ex.PAYLOADS)
    vals["coaps GET best"] = best
    ok &= best >= 0.32
    detail = ", ".join(f"{k} {v:.1%}" for k, v in vals.items())
    return Result(6, "CoAP savings at 24 MHz", ok, detail + " (DSME 32-40%, IDTX 22-33%, CoAPS >= 32%)", vals)


def timing_table(p: CalibrationProfile) -> Result:
    levels = ex.deadline_clean_levels(p)
    idtx = ex.burst_timing(p, "idtx", levels)
    dsme = ex.burst_timing(p, "dsme", levels)
    ok = (_within(idtx.tburst_min_s * 1e3, 10_007, 50) and idtx.max_delta_s * 1e3 <= 5
          and _within(dsme.tburst_min_s * 1e3, 2_237, 50) and dsme.max_delta_s * 1e3 <= 3)
    return Result(7, "burst timing table", ok,
                  f"IDTX {idtx.tburst_min_s * 1e3:.1f} ms, dt {idtx.max_delta_s * 1e3:.2f} ms (10007 +- 50, <= 5); "
                  f"DSME {dsme.tburst_min_s * 1e3:.1f} ms, dt {dsme.max_delta_s * 1e3:.2f} ms (2237 +- 50, <= 3)",
                  {"idtx_ms": idtx.tburst_min_s * 1e3, "idtx_dt_ms": idtx.max_delta_s * 1e3,
                   "dsme_ms": dsme.tburst_min_s * 1e3, "dsme_dt_ms": dsme.max_delta_s * 1e3})


# -- calibration-independent properties --------------------------------------------------


def random_scenario(p: CalibrationProfile, rng: random.Random) -> Scenario:
    """A small random scenario; may raise a configuration error for infeasible draws."""
    configs = p.all_configs()
    pick = lambda: rng.choice(configs)  # noqa: E731
    mode = rng.choice(("off", "idle", "idtx", "dsme"))
    clock = pick()
    d: dict = {
        "duration_s": rng.randrange(0, 3_000_000_000) / 1e9,
        "clock": {"mhz": clock.mhz, "source": clock.kind.value},
        "seed": rng.randrange(2**31),
        "lpm": rng.random() < 0.8,
        "timer": rng.random() < 0.7,
        "prewarm_cache": rng.random() < 0.5,
        "mac": {"mode": mode},
    }
    if rng.random() < 0.5:
        d["tasks"] = [{"id": t, "target_mhz": c.mhz, "source": c.kind.value}
                      for t in rng.sample(("mac", "app", "timer"), rng.randint(1, 3)) for c in [pick()]]
    if mode == "idtx":
        d["mac"]["poll_interval_s"] = rng.choice((0.25, 0.5, 1.0))
        d["mac"]["poll_offset_s"] = rng.choice((0.05, 0.25))
    if mode == "dsme":
        so = rng.randint(1, 3)
        d["mac"].update(so=so, mo=so + rng.randint(0, 2), bo=so + 2, gts_alternating=rng.choice((0, 2, 4)))
    if mode != "off" and rng.random() < 0.6:
        d["app"] = {"method": rng.choice(ex.METHODS), "payload_bytes": rng.choice(ex.PAYLOADS),
                    "secure": rng.random() < 0.5, "burst": rng.randint(1, 2)}
    if rng.random() < 0.3:
        d["jobs"] = [{"task": "fft", "cycles": rng.randrange(1, 200_000), "release_s": d["duration_s"] * rng.random() * 0.5}]
    return Scenario.from_dict(d, p)


def energy_conservation(p: CalibrationProfile, n: int = 1000, seed: int = 8) -> Result:
    rng = random.Random(seed)
    done = rejected = 0
    bad = []
    while done < n:
        try:
            trace, report = run(random_scenario(p, rng))
        except (MacError, NetstackError, ValueError):
            rejected += 1
            continue
        again = reintegrate(io.StringIO(trace_csv(trace)))
        if again.energy_J != report.energy.energy_J or dict(again.per_component_J) != dict(report.energy.per_component_J):
            bad.append(done)
        done += 1
    return Result(8, "energy conservation", not bad,
                  f"{n - len(bad)}/{n} random scenarios re-integrate exactly ({rejected} infeasible draws skipped)",
                  {"mismatches": bad})


def determinism(p: CalibrationProfile, seeds=(0, 1, 7)) -> Result:
    diffs = []
    for name in ex.preset_names():
        for seed in seeds:
            a = trace_csv(run(ex.scenario(name, p, seed=seed))[0])
            b = trace_csv(run(ex.scenario(name, p, seed=seed))[0])
            if a != b:
                diffs.append(f"{name}/{seed}")
    return Result(9, "determinism", not diffs,
                  f"{len(ex.preset_names()) * len(seeds) - len(diffs)} preset/seed pairs byte-identical", {"diffs": diffs})


def random_overheads(rng: random.Random) -> StackOverheads:
    """Rejection-sample overheads that satisfy the StackOverheads invariants."""
    while True:
        o = StackOverheads(
            mac_header_bytes=rng.randint(3, 30), sixlowpan_iphc_udp_bytes=rng.randint(2, 40),
            sixlowpan_frag1_bytes=rng.randint(4, 8), sixlowpan_fragn_bytes=rng.randint(5, 8),
            coap_base_bytes=rng.randint(4, 30), coap_block_option_bytes=rng.randint(1, 4),
            dtls_record_bytes=rng.randint(0, 80),
        )
        if not o.problems():
            return o


def fragmentation(p: CalibrationProfile | None = None, n: int = 2000, seed: int = 10) -> Result:
    rng = random.Random(seed)
    bad = []
    for i in range(n):
        o = StackOverheads() if i == 0 else random_overheads(rng)
        ok = (len(fragment(64, False, o)) == 1 and len(fragment(128, False, o)) > 1
              and len(fragment(64, True, o)) > 1)
        if not ok:
            bad.append(o)
    return Result(10, "fragmentation thresholds", not bad,
                  f"{n - len(bad)}/{n} valid overhead sets: plain 64 B in 1 frame, plain 128 B and secure 64 B fragmented",
                  {"failures": [str(o) for o in bad[:5]]})


def random_profile(rng: random.Random, base: CalibrationProfile) -> CalibrationProfile:
    """A random profile meeting the monotonicity invariants and the physical slope bands."""
    from dataclasses import replace

    while True:
        k12 = rng.uniform(0.01, 0.3)
        rc = {"1.2": k12, "1.0": k12 * rng.uniform(*SLOPE_RATIO_BAND)}
        pll = {v: rc[v] * rng.uniform(*PLL_RC_RATIO_BAND) for v in rc}
        b12 = pll["1.2"] * 80 * rng.uniform(0.06, 0.16) / 0.9
        b10 = b12 * rng.uniform(0.3, 1.0)
        radio = sorted(rng.uniform(0.5, 30) for _ in range(3))
        prof = replace(
            base,
            mcu_base_current_mA={"1.0": b10, "1.2": b12},
            mcu_slope_mA_per_MHz={"rc": rc, "pll": pll},
            mcu_lpm_current_uA=rng.uniform(0.1, 20),
            radio_current_mA={"off": 0.0, "sleep": rng.uniform(1e-4, 0.4), "rx_listen": radio[0],
                              "rx_busy": radio[1], "tx": radio[2]},
        )
        if not prof.check():
            return prof


def _brute(rows, metric):
    vals = [r.value(metric) for r in rows]
    best = min(vals)
    tied = [r for r, v in zip(rows, vals) if v == best]
    lowest = min(r.config.core_hz for r in tied)
    tied = [r for r in tied if r.config.core_hz == lowest]
    rc = [r for r in tied if r.config.kind is SourceKind.RC]
    return (rc or tied)[0].config


def optimizer_oracle(p: CalibrationProfile, n: int = 1000, seed: int = 11) -> Result:
    rng = random.Random(seed)
    mismatches, fft_bad, wait_bad = 0, 0, 0
    for _ in range(n):
        prof = random_profile(rng, p)
        configs = prof.all_configs()
        levels = rng.sample(configs, rng.randint(1, len(configs)))
        cycles = rng.choice((0, rng.randrange(1, 10**7)))
        wait = rng.choice((0.0, rng.uniform(1e-4, 0.1))) if cycles else rng.uniform(1e-4, 0.1)
        busy = wait * rng.random()
        task = fo.TaskProfile(cycles, wait, {"rx_busy": busy * 0.6, "tx": busy * 0.4}, "random")
        rows = fo.sweep(task, levels, prof)
        for metric in fo.Metric:
            if fo.select_optimal(rows, metric) != _brute(rows, metric):
                mismatches += 1
        every = fo.sweep(fo.fft_profile(prof), configs, prof)
        if fo.select_optimal(every, fo.Metric.EDP) != ex.f_max(prof):
            fft_bad += 1
        wait = fo.sweep(fo.TaskProfile(0, rng.uniform(1e-3, 1.0), {"rx_busy": 0.0}), configs, prof)
        if fo.select_optimal(wait, fo.Metric.ENERGY).core_hz != min(c.core_hz for c in configs):
            wait_bad += 1
    ok = not (mismatches or fft_bad or wait_bad)
    return Result(11, "optimizer oracle", ok,
                  f"{n} random profiles: {mismatches} argmin mismatches, FFT EDP-argmin off f_max {fft_bad}x, "
                  f"pure-wait energy-argmin off f_min {wait_bad}x",
                  {"mismatches": mismatches, "fft_bad": fft_bad, "wait_bad": wait_bad})


SCHEDULE_PRESETS = {"idtx": ("idtx_poll", "coap_idtx"), "dsme": ("dsme_idle", "coap_dsme"), "idle": ("radio_on", "coap_idle")}


def radio_invariance(p: CalibrationProfile, seed: int = 3) -> Result:
    changed, checked = [], 0
    for mode, presets in SCHEDULE_PRESETS.items():
        for preset in presets:
            ref = None
            for cfg in p.all_configs():
                try:
                    trace, report = run(ex.scenario(preset, p, cfg, seed=seed))
                except CapacityError:
                    continue
                if report.deadline_misses:
                    continue
                bounds = trace.radio_boundaries()
                checked += 1
                if ref is None:
                    ref = bounds
                elif bounds != ref:
                    changed.append(f"{preset}@{cfg.label()}")
    return Result(12, "radio schedule invariance", not changed,
                  f"{checked} deadline-clean runs over {len(SCHEDULE_PRESETS)} MAC modes, {len(changed)} differ",
                  {"changed": changed})


class ReferenceLru:
    """Straight-line LRU model used to replay transition sequences."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.order: list = []
        self.hits = self.misses = 0

    def access(self, key) -> bool:
        src, dst = key
        if src == dst:
            return False
        if key in self.order:
            self.order.remove(key)
            self.order.append(key)
            self.hits += 1
            return True
        self.misses += 1
        if self.capacity:
            self.order.append(key)
            if len(self.order) > self.capacity:
                self.order.pop(0)
        return False


def cache_semantics(p: CalibrationProfile, n: int = 10_000, seed: int = 13) -> Result:
    rng = random.Random(seed)
    configs = p.all_configs()
    bad = 0
    for _ in range(n):
        cap = rng.randint(0, 10)
        pool = rng.sample(configs, rng.randint(2, 5))
        cache, ref = TransitionCache(p, cap), ReferenceLru(cap)
        cur = rng.choice(pool)
        for _ in range(rng.randint(1, 40)):
            nxt = rng.choice(pool)
            got = execute_transition(cache, cur, nxt).cache_hit
            want = ref.access((cur, nxt))
            if got != want or list(cache.entries) != ref.order:
                bad += 1
                break
            cur = nxt
        else:
            if (cache.hits, cache.misses) != (ref.hits, ref.misses):
                bad += 1
    return Result(13, "transition cache LRU semantics", not bad,
                  f"{n - bad}/{n} random sequences match the reference replay", {"failures": bad})


CHECKS: dict[int, Callable[[CalibrationProfile], Result]] = {
    1: sleep_baseline, 2: idtx_poll_loop, 3: single_request, 4: dvfs_break_even, 5: dsme_idle,
    6: coap_savings, 7: timing_table, 8: energy_conservation, 9: determinism, 10: fragmentation,
    11: optimizer_oracle, 12: radio_invariance, 13: cache_semantics,
}


def run_all(profile: CalibrationProfile | None = None, only=None) -> list[Result]:
    profile = profile or default_profile()
    return [CHECKS[i](profile) for i in sorted(CHECKS) if not only or i in only]
