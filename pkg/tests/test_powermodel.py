import itertools
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from dvfsim.powermodel import (
    MHZ,
    CalibrationProfile,
    ClockConfig,
    ClockSource,
    Component,
    ComponentState,
    EnergyReport,
    InvalidConfig,
    LPM,
    McuActive,
    OverlapError,
    RadioState,
    SourceKind,
    UnknownLevel,
    default_profile,
    integrate,
    integrate_power,
    power_of,
    voltage_rule,
)

P = default_profile()


@pytest.mark.parametrize("mhz, volts", [(24, 1.0), (32, 1.2), (80, 1.2), (8, 1.0), (26, 1.2), (25.999, 1.0)])
def test_voltage_rule(mhz, volts):
    assert voltage_rule(mhz * MHZ) == volts


def test_config_rejects_foreign_voltage():
    with pytest.raises(InvalidConfig):
        ClockConfig(ClockSource.pll(), 80 * MHZ, core_voltage=1.0)


def test_rc_has_no_80mhz():
    with pytest.raises(UnknownLevel):
        P.config(80, "rc")


def test_unknown_level():
    with pytest.raises(UnknownLevel):
        P.config(40, "pll")


def test_reset_clock_is_valid_rc():
    cfg = P.reset_config
    assert cfg.mhz == 4 and cfg.kind is SourceKind.RC
    P.validate(cfg)


def test_radio_off_draws_nothing():
    assert power_of(ComponentState.radio(RadioState.OFF), P) == 0.0


def test_active_power_formula():
    cfg = P.config(80, "pll")
    expected = 3.3 * (P.mcu_base_current_mA["1.2"] + P.mcu_slope_mA_per_MHz["pll"]["1.2"] * 80) / 1000
    assert power_of(ComponentState.mcu(McuActive(cfg)), P) == pytest.approx(expected, rel=1e-12)


def test_lpm_power():
    assert power_of(ComponentState.mcu(LPM), P) == pytest.approx(3.3 * P.mcu_lpm_current_uA * 1e-6)


def test_active_power_monotone_over_all_pairs():
    # brute force: any pair of levels on one source orders like the frequencies
    for kind in SourceKind:
        cfgs = [P.config(f, kind) for f in P.levels_for(kind)]
        for a, b in itertools.combinations(cfgs, 2):
            pa, pb = (power_of(ComponentState.mcu(McuActive(c)), P) for c in (a, b))
            assert (pa < pb) == (a.core_hz < b.core_hz)
    assert power_of(ComponentState.mcu(McuActive(P.config(24))), P) < power_of(
        ComponentState.mcu(McuActive(P.config(80))), P
    )


def test_default_profile_is_consistent():
    assert P.check() == []
    assert 0.06 <= P.static_share() <= 0.14


def test_profile_json_round_trip(tmp_path):
    path = tmp_path / "p.json"
    P.dump(path)
    assert CalibrationProfile.load(path) == P
    assert json.loads(path.read_text())["supply_voltage_V"] == 3.3


def test_check_flags_violations():
    bad = CalibrationProfile.from_dict({**P.to_dict(), "mcu_base_current_mA": {"1.0": 0.5, "1.2": 0.4}})
    assert any("I_base" in p for p in bad.check())


def _mw(total_mw):
    # a radio state whose power is exactly total_mw under a synthetic profile
    prof = CalibrationProfile.from_dict({**P.to_dict(), "supply_voltage_V": 1.0,
                                         "radio_current_mA": {"off": 0.0, "sleep": 0.5, "rx_listen": 1.0,
                                                              "rx_busy": 10.0, "tx": 10.0}})
    state = {10: RadioState.TX, 1: RadioState.RX_LISTEN}[total_mw]
    return prof, ComponentState.radio(state)


def test_integrate_piecewise():
    prof, ten = _mw(10)
    _, one = _mw(1)
    rep = integrate([(1.0, [ten]), (2.0, [one])], prof)
    assert rep.energy_J == pytest.approx(12e-3)
    assert rep.duration_s == 3.0
    assert rep.edp_Js == pytest.approx(36e-3)


def test_integrate_empty():
    rep = integrate([], P)
    assert (rep.energy_J, rep.duration_s, rep.edp_Js) == (0.0, 0.0, 0.0)


def test_integrate_rejects_two_states_per_component():
    with pytest.raises(OverlapError):
        integrate([(1.0, [ComponentState.radio("tx"), ComponentState.radio("off")])], P)


def test_report_invariants():
    rep = EnergyReport.build({"mcu": 0.1, "radio": 0.2}, 2.0)
    assert rep.energy_J == math.fsum([0.1, 0.2])
    assert rep.edp_Js == rep.energy_J * rep.duration_s


def test_integrate_power_matches_integrate():
    cfg = P.config(24, "rc")
    states = [(0.001, [ComponentState.mcu(McuActive(cfg)), ComponentState.radio("tx")]),
              (0.5, [ComponentState.mcu(LPM), ComponentState.radio("off")])]
    a = integrate(states, P)
    rows, t = [], 0
    for dur, sts in states:
        ns = round(dur * 1e9)
        for s in sts:
            from dvfsim.powermodel import power_mW
            rows.append((t, t + ns, s.component.value, power_mW(s, P)))
        t += ns
    b = integrate_power(rows)
    assert a.energy_J == b.energy_J and a.duration_s == b.duration_s


levels = st.sampled_from(P.all_configs())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**9), st.sampled_from(list(RadioState)), levels), max_size=8),
       st.floats(0.01, 100))
def test_scaling_currents_scales_energy(rows, c):
    intervals = [(ns, [ComponentState.radio(r), ComponentState.mcu(McuActive(cfg))]) for ns, r, cfg in rows]
    a = integrate(intervals, P, unit="ns")
    b = integrate(intervals, P.scaled(c), unit="ns")
    assert b.energy_J == pytest.approx(a.energy_J * c, rel=1e-9, abs=1e-18)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100))
def test_scaling_keeps_argmin(c):
    cfgs = P.all_configs()
    for prof_a, prof_b in [(P, P.scaled(c))]:
        best = lambda prof: min(cfgs, key=lambda x: power_of(ComponentState.mcu(McuActive(x)), prof))  # noqa: E731
        assert best(prof_a) == best(prof_b)


@given(st.integers(0, 10**10), st.integers(0, 10**10))
def test_linear_in_duration(a, b):
    s = [ComponentState.radio("rx_busy")]
    ea = integrate([(a, s)], P, unit="ns").energy_J
    eb = integrate([(b, s)], P, unit="ns").energy_J
    eab = integrate([(a + b, s)], P, unit="ns").energy_J
    assert eab == pytest.approx(ea + eb, rel=1e-12, abs=1e-18)


def test_component_enum_values():
    assert {c.value for c in Component} == {"mcu", "radio"}
