import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from dvfsim import experiments as ex
from dvfsim.acceptance import random_scenario
from dvfsim.mac80154 import MacError
from dvfsim.netstack import NetstackError
from dvfsim.powermodel import default_profile
from dvfsim.simcore import (
    TRACE_HEADER,
    Scenario,
    ShapeMismatch,
    compare_runs,
    export_trace,
    read_trace,
    reintegrate,
    run,
    trace_csv,
)

P = default_profile()
F80 = ex.f_max(P)


def test_zero_duration_is_empty():
    trace, report = run(Scenario(P, 0.0))
    assert trace.segments == [] and report.energy.energy_J == 0.0
    assert trace_csv(trace) == ",".join(TRACE_HEADER) + "\n"


def test_sleep_scenario_has_ten_wakeups():
    trace, report = run(ex.scenario("sleep", P))
    assert report.energy.duration_s == pytest.approx(10.0)
    assert sum(1 for s in trace.mcu if s.label == "timer") == 10
    lpm = sum(s.end_ns - s.start_ns for s in trace.mcu if s.state == "lpm")
    assert lpm / trace.horizon_ns > 0.99


def test_sleep_saving():
    hi = ex.average_current(P, "sleep", F80)
    lo = ex.average_current(P, "sleep", P.config(8, "rc"))
    assert 1 - lo / hi == pytest.approx(0.45, abs=0.05)


def test_idtx_poll_savings():
    i80 = ex.average_current(P, "idtx_poll", F80)
    i24 = ex.average_current(P, "idtx_poll", P.config(24, "pll"))
    i24rc = ex.average_current(P, "idtx_poll", P.config(24, "rc"))
    assert 1 - i24 / i80 == pytest.approx(0.19, abs=0.03)
    assert (i24 - i24rc) / i80 == pytest.approx(0.05, abs=0.02)


def test_average_current_identity():
    _, r = run(ex.scenario("idtx_poll", P))
    assert r.average_current_mA == pytest.approx(r.energy.energy_J / (3.3 * r.energy.duration_s) * 1e3, rel=1e-12)


def test_fft_switch_trace_round_trip(tmp_path):
    trace, report = run(ex.scenario("fft_switch", P))
    path = export_trace(trace, tmp_path / "t.csv")
    again = reintegrate(path)
    assert again.energy_J == report.energy.energy_J
    assert read_trace(path)[0][:2] == (0, trace.segments[0].end_ns)


def test_fft_switch_fft_windows():
    fft = ex.fft_overhead(P)
    assert fft.static_J * 1e6 == pytest.approx(29.5, abs=1)
    assert fft.dynamic_J * 1e6 == pytest.approx(34.5, abs=1.5)


def test_wakeup_goes_straight_to_target():
    trace, _ = run(ex.scenario("fft_switch", P))
    wakes = [m for _, m in trace.events if m.startswith("transition") and "4MHz-rc->" in m]
    assert wakes and all("->24MHz-rc" in m or "->80MHz-pll" in m for m in wakes)


def test_identical_runs_compare_to_one():
    _, a = run(ex.scenario("coap_idtx", P))
    _, b = run(ex.scenario("coap_idtx", P))
    c = compare_runs(a, b)
    assert c.energy_ratio == 1.0 and c.per_request_mean_ratio == 1.0
    assert all(v == 1.0 for v in c.per_request_ratio.values())
    assert all(v == 0.0 for v in c.timing_delta_s.values())


def test_compare_shape_mismatch():
    _, a = run(ex.scenario("idtx_poll", P))
    _, b = run(ex.scenario("sleep", P))
    with pytest.raises(ShapeMismatch):
        compare_runs(a, b)


def test_dsme_idle_ratio_at_24mhz():
    _, ref = run(ex.scenario("dsme_idle", P, F80))
    _, r24 = run(ex.scenario("dsme_idle", P, P.config(24, "rc")))
    assert compare_runs(ref, r24).energy_ratio == pytest.approx(0.48, abs=0.05)


def test_idtx_burst_delta():
    reports = {c.label(): ex.coap_run(P, "idtx", "GET", 16, False, c) for c in (P.config(24, "pll"), F80)}
    assert ex.burst_report(reports).max_delta_s * 1e3 <= 3.4


def test_per_request_energy_below_total():
    for preset in ("coap_idtx", "coap_dsme", "idtx_poll", "fft_switch"):
        _, r = run(ex.scenario(preset, P))
        assert sum(v.energy_J for v in r.per_request.values()) <= r.energy.energy_J


def test_dsme_windows_skip_cap():
    trace, _ = run(ex.scenario("coap_dsme", P))
    cap_end = 9 * 7_680_000
    for w in trace.request_windows:
        assert all(a >= cap_end for a, _ in w.ranges)


def test_request_windows_nest_in_run():
    trace, _ = run(ex.scenario("coap_idtx", P))
    assert len([w for w in trace.request_windows if w.request_id.startswith("req")]) == 10
    assert all(0 <= w.start_ns < w.end_ns <= trace.horizon_ns for w in trace.request_windows)


def test_mcu_segments_tile():
    for preset in ex.preset_names():
        trace, _ = run(ex.scenario(preset, P))
        segs = trace.mcu
        assert segs[0].start_ns == 0 and segs[-1].end_ns == trace.horizon_ns
        assert all(a.end_ns == b.start_ns for a, b in zip(segs, segs[1:]))


def test_unknown_scenario_key():
    with pytest.raises(ValueError):
        Scenario.from_dict({"duration_s": 1, "colour": "red"}, P)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_random_scenarios_conserve_energy_and_repeat(seed):
    rng = random.Random(seed)
    try:
        scn = random_scenario(P, rng)
        trace, report = run(scn)
    except (MacError, NetstackError, ValueError):
        return
    text = trace_csv(trace)
    assert reintegrate(io.StringIO(text)).energy_J == report.energy.energy_J
    assert trace_csv(run(scn)[0]) == text
