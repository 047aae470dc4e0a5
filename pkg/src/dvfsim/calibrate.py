"""Least-squares fit of the default calibration profile.

Run ``python -m dvfsim.calibrate [--out PATH]``. The free parameters are the
MCU and radio currents, the transition power share and a few software cycle
counts; the residuals are the relative-saving and energy targets below, each
scaled by its tolerance so that one unit of residual equals one tolerance.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from . import experiments as ex
from .acceptance import SLOPE_RATIO_BAND
from .powermodel import CalibrationProfile, default_profile

# (metric, target, tolerance); savings are fractions, energies are µJ
TARGETS = (
    ("sleep_saving", 0.45, 0.05),
    ("idtx_loop_saving", 0.19, 0.015),
    ("idtx_rc_extra", 0.05, 0.01),
    ("request_80_uJ", 79.4, 4.0),
    ("request_24_uJ", 66.1, 4.0),
    ("fft_static_uJ", 29.5, 1.0),
    ("fft_delta_uJ", 5.0, 1.0),
    ("dsme_idle_best_saving", 0.52, 0.05),
    ("dsme_coap_get16_saving", 0.36, 0.03),
    ("dsme_coap_get64_saving", 0.36, 0.03),
    ("dsme_coap_post16_saving", 0.36, 0.03),
    ("dsme_coap_post64_saving", 0.36, 0.03),
    ("idtx_coap_get16_saving", 0.275, 0.03),
    ("idtx_coap_get64_saving", 0.275, 0.03),
    ("idtx_coap_post16_saving", 0.275, 0.03),
    ("idtx_coap_post64_saving", 0.275, 0.03),
    ("static_share", 0.10, 0.04),
)
# one-sided: metric must reach at least the target
FLOORS = (("coaps_get_best_saving", 0.34, 0.01),)

REQUEST_24 = (24, "rc")
# the two related payload sizes compared at reduced frequency
COAP_PAYLOADS = (16, 64)


def measure(profile: CalibrationProfile, full: bool = True) -> dict[str, float]:
    """Every calibration-facing metric of ``profile``."""
    hi = ex.f_max(profile)
    c24 = ex.cfg_of(profile, 24, "pll")
    m: dict[str, float] = {}
    i80 = ex.average_current(profile, "sleep", hi)
    m["sleep_saving"] = 1 - ex.average_current(profile, "sleep", ex.cfg_of(profile, 8, "rc")) / i80
    p80 = ex.average_current(profile, "idtx_poll", hi)
    p24 = ex.average_current(profile, "idtx_poll", c24)
    p24rc = ex.average_current(profile, "idtx_poll", ex.cfg_of(profile, 24, "rc"))
    m["idtx_loop_saving"] = 1 - p24 / p80
    m["idtx_rc_extra"] = (p24 - p24rc) / p80
    m["request_80_uJ"] = ex.poll_energy_J(profile, hi) * 1e6
    m["request_24_uJ"] = ex.poll_energy_J(profile, ex.cfg_of(profile, *REQUEST_24)) * 1e6
    fft = ex.fft_overhead(profile)
    m["fft_static_uJ"] = fft.static_J * 1e6
    m["fft_delta_uJ"] = fft.delta_J * 1e6
    m["dsme_idle_best_saving"] = dsme_best_saving(profile)
    for mac in ("dsme", "idtx"):
        for method in ex.METHODS:
            for payload in COAP_PAYLOADS:
                m[f"{mac}_coap_{method.lower()}{payload}_saving"] = ex.coap_saving(profile, mac, method, payload, False, c24)
    m["static_share"] = profile.static_share()
    if full:
        m["coaps_get_best_saving"] = coaps_best_saving(profile)
    else:
        m["coaps_get_best_saving"] = ex.coap_saving(profile, "dsme", "GET", 1, True, c24)
    return m


def dsme_best_saving(profile: CalibrationProfile) -> float:
    from .simcore import run

    ref = run(ex.scenario("dsme_idle", profile, ex.f_max(profile)))[1].energy.energy_J
    best = 0.0
    for cfg in profile.all_configs():
        r = run(ex.scenario("dsme_idle", profile, cfg))[1]
        if not r.deadline_misses:
            best = max(best, 1 - r.energy.energy_J / ref)
    return best


def coaps_best_saving(profile: CalibrationProfile) -> float:
    c24 = ex.cfg_of(profile, 24, "pll")
    return max(ex.coap_saving(profile, mac, "GET", p, True, c24) for mac in ex.MAC_MODES for p in ex.PAYLOADS)


# -- parameter vector ---------------------------------------------------------------

NAMES = (
    "base10", "base12", "rc10", "rc12", "dpll10", "dpll12", "lpm_uA",
    "rx_listen", "rx_busy", "tx", "trans", "timer_cycles", "sync_us", "hold_us", "coap_request", "coap_response", "fft",
)


def to_vector(p: CalibrationProfile) -> np.ndarray:
    b, s = p.mcu_base_current_mA, p.mcu_slope_mA_per_MHz
    r, c = p.radio_current_mA, p.software_cycles
    vals = [
        b["1.0"], b["1.2"], s["rc"]["1.0"], s["rc"]["1.2"],
        max(s["pll"]["1.0"] - s["rc"]["1.0"], 1e-6), max(s["pll"]["1.2"] - s["rc"]["1.2"], 1e-6),
        p.mcu_lpm_current_uA, r["rx_listen"], r["rx_busy"], r["tx"], p.transition_active_equivalent,
        p.timer_wakeup_cycles, max(p.timer_wakeup_sync_us, 1.0), max(p.coap_stack_hold_us, 1.0), c["coap_request"], c["coap_response"], c["fft"],
    ]
    return np.log(np.asarray(vals, dtype=float))


def from_vector(x: np.ndarray, template: CalibrationProfile) -> CalibrationProfile:
    v = dict(zip(NAMES, np.exp(x)))
    r = lambda y: float(f"{y:.4g}")  # noqa: E731  (keep the JSON readable)
    rc10, rc12 = r(v["rc10"]), r(v["rc12"])
    return replace(
        template,
        mcu_base_current_mA={"1.0": r(v["base10"]), "1.2": r(max(v["base12"], v["base10"]))},
        mcu_slope_mA_per_MHz={
            "rc": {"1.0": rc10, "1.2": rc12},
            "pll": {"1.0": r(rc10 + v["dpll10"]), "1.2": r(rc12 + v["dpll12"])},
        },
        mcu_lpm_current_uA=r(v["lpm_uA"]),
        radio_current_mA={**template.radio_current_mA, "rx_listen": r(v["rx_listen"]),
                          "rx_busy": r(v["rx_busy"]), "tx": r(v["tx"])},
        transition_active_equivalent=r(v["trans"]),
        timer_wakeup_cycles=int(round(v["timer_cycles"])),
        timer_wakeup_sync_us=r(v["sync_us"]),
        coap_stack_hold_us=r(v["hold_us"]),
        software_cycles={**template.software_cycles, "coap_request": int(round(v["coap_request"])),
                         "coap_response": int(round(v["coap_response"])), "fft": int(round(v["fft"]))},
    )


def priors(profile: CalibrationProfile) -> list[float]:
    """Weak physical plausibility terms, in log space."""
    b, s = profile.mcu_base_current_mA, profile.mcu_slope_mA_per_MHz
    r, c = profile.radio_current_mA, profile.software_cycles
    ln = math.log
    out = [
        ln(r["tx"] / r["rx_busy"]) / 0.15,
        max(0.0, ln(r["rx_listen"] / r["rx_busy"])) / 0.05,
        (ln(b["1.0"] / b["1.2"]) - ln(0.6)) / 0.5,
        (ln(profile.timer_wakeup_cycles) - ln(4000)) / 1.5,
        (ln(c["coap_request"]) - ln(20000)) / 1.0,
        (ln(c["coap_response"]) - ln(20000)) / 1.0,
        (ln(profile.timer_wakeup_sync_us) - ln(100)) / 1.5,
        max(0.0, ln(profile.coap_stack_hold_us / 8000)) / 0.05,
    ]
    for kind in ("rc", "pll"):
        ratio = s[kind]["1.0"] / s[kind]["1.2"]
        out.append(max(0.0, ln(SLOPE_RATIO_BAND[0] / ratio), ln(ratio / SLOPE_RATIO_BAND[1])) / 0.02)
    return out


def residuals(profile: CalibrationProfile, full: bool = False) -> np.ndarray:
    m = measure(profile, full=full)
    res = [(m[k] - t) / tol for k, t, tol in TARGETS]
    res += [min(0.0, m[k] - t) / tol for k, t, tol in FLOORS]
    return np.asarray(res + priors(profile))


def fit(template: CalibrationProfile, max_nfev: int = 200, verbose: int = 0) -> CalibrationProfile:
    x0 = to_vector(template)

    def fun(x):
        try:
            return residuals(from_vector(x, template))
        except Exception:  # infeasible corner (e.g. invalid profile); push the solver away
            return np.full(len(TARGETS) + len(FLOORS) + len(priors(template)), 1e3)

    sol = least_squares(fun, x0, diff_step=1e-3, max_nfev=max_nfev, verbose=verbose)
    return from_vector(sol.x, template)


def report(profile: CalibrationProfile) -> str:
    m = measure(profile)
    lines = []
    for k, t, tol in TARGETS:
        lines.append(f"{k:26s} {m[k]:10.4f}  target {t} +- {tol}")
    for k, t, tol in FLOORS:
        lines.append(f"{k:26s} {m[k]:10.4f}  floor {t}")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Fit the default calibration profile.")
    ap.add_argument("--start", help="profile JSON to start from (default: shipped profile)")
    ap.add_argument("--out", help="where to write the fitted profile")
    ap.add_argument("--max-nfev", type=int, default=200)
    ap.add_argument("--report-only", action="store_true")
    args = ap.parse_args(argv)
    start = CalibrationProfile.load(args.start) if args.start else default_profile()
    if args.report_only:
        print(report(start))
        return 0
    fitted = fit(start, args.max_nfev, verbose=1)
    print(report(fitted))
    problems = fitted.check()
    if problems:
        print("profile invariants violated:", problems, file=sys.stderr)
    if args.out:
        fitted.dump(args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
