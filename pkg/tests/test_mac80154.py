import random

import pytest
from hypothesis import given, settings, strategies as st

from dvfsim import experiments as ex
from dvfsim import mac80154 as mac
from dvfsim.mac80154 import (
    PHY,
    ChannelAccessFailure,
    ConfigError,
    CsmaState,
    DsmeConfig,
    Direction,
    FrameTooLarge,
    GtsSlot,
    IdtxConfig,
    OutOfRange,
    build_dsme_schedule,
    check_deadlines,
    csma_access,
    csma_attempt,
    dsme_multisuperframe_duration,
    dsme_slot_duration,
    idtx_poll_transaction,
)
from dvfsim.powermodel import RadioState, default_profile
from dvfsim.simcore import run

US, MS = 1_000, 1_000_000
P = default_profile()


def test_airtime():
    assert PHY.airtime_ns(127) == 4_256 * US
    assert PHY.airtime_ns(12) == 576 * US


@pytest.mark.parametrize("so, ns", [(3, 7_680_000), (0, 960_000), (1, 1_920_000)])
def test_slot_duration(so, ns):
    assert dsme_slot_duration(so) == ns


@pytest.mark.parametrize("mo, ns", [(10, 15_728_640_000), (0, 15_360_000)])
def test_multisuperframe_duration(mo, ns):
    assert dsme_multisuperframe_duration(mo) == ns


def test_superframes_per_multisuperframe():
    assert DsmeConfig(so=3, mo=10, bo=10).superframes_per_multisuperframe == 128


def test_orders_out_of_range():
    with pytest.raises(OutOfRange):
        dsme_slot_duration(15)
    with pytest.raises(ConfigError):
        DsmeConfig(so=4, mo=3, bo=3)


def test_duplicate_gts_rejected():
    g = GtsSlot(Direction.UPLINK, 0, 9, 0)
    with pytest.raises(ConfigError):
        DsmeConfig(gts=(g, g))


def _radio_on(intervals):
    return sum(iv.end_ns - iv.start_ns for iv in intervals if iv.state not in (RadioState.OFF, RadioState.SLEEP))


def test_idtx_empty_poll():
    s = idtx_poll_transaction(IdtxConfig(), [])
    assert _radio_on(s.intervals) == (576 + 192 + 352) * US
    assert [iv.state for iv in s.intervals] == [RadioState.TX, RadioState.RX_LISTEN, RadioState.RX_BUSY]


def test_idtx_pending_frame_adds_reception_and_ack():
    empty = idtx_poll_transaction(IdtxConfig(), [])
    full = idtx_poll_transaction(IdtxConfig(), [127])
    busy = [iv for iv in full.intervals if iv.state is RadioState.RX_BUSY]
    assert max(iv.end_ns - iv.start_ns for iv in busy) == 4_256 * US
    assert sum(iv.state is RadioState.TX for iv in full.intervals) == 2
    assert _radio_on(full.intervals) > _radio_on(empty.intervals) + 4_256 * US


def test_idtx_one_poll_per_pending_frame():
    s = idtx_poll_transaction(IdtxConfig(), [60, 60])
    assert sum(iv.label.endswith("poll_cmd") for iv in s.intervals) == 2


def test_idtx_frame_too_large():
    with pytest.raises(FrameTooLarge):
        idtx_poll_transaction(IdtxConfig(), [128])


def test_idtx_request_energy_ratio():
    e80 = ex.poll_energy_J(P, ex.f_max(P))
    e24 = ex.poll_energy_J(P, P.config(24, "rc"))
    assert e80 * 1e6 == pytest.approx(79.4, abs=4)
    assert e24 * 1e6 == pytest.approx(66.1, abs=4)


def test_backoff_values_for_be3():
    seen = {csma_attempt(seed, CsmaState(0, 3)) for seed in range(400)}
    assert seen == {k * 320 * US for k in range(8)}


def test_idle_channel_single_cca():
    out = csma_access(random.Random(1), 0)
    assert out.attempts == 1
    assert sum(iv.label == "cca" for iv in out.intervals) == 1


def test_backoff_is_seeded():
    assert csma_attempt(42, CsmaState(0, 3)) == csma_attempt(42, CsmaState(0, 3))
    a, b = random.Random(42), random.Random(42)
    assert [csma_attempt(a, CsmaState(0, 5)) for _ in range(2)] == [csma_attempt(b, CsmaState(0, 5)) for _ in range(2)]


def test_busy_channel_fails_after_max_backoffs():
    with pytest.raises(ChannelAccessFailure):
        csma_access(random.Random(0), 0, channel_busy=lambda a, b: True)


def test_be_saturates():
    s = CsmaState.initial()
    for _ in range(3):
        s = s.on_busy()
    assert s.be == 5


def test_dsme_zero_gts_layout():
    cfg = DsmeConfig(so=3, mo=10, bo=10)
    sched = build_dsme_schedule(cfg, cfg.multisuperframe_ns, allocation_handshake=False).tiled(cfg.multisuperframe_ns)
    beacons = [iv for iv in sched.intervals if iv.label.startswith("beacon")]
    cap = [iv for iv in sched.intervals if "cap" in iv.label]
    assert sum(iv.state is RadioState.RX_BUSY for iv in beacons) == 1 and len(cap) == 1
    assert cap[0].end_ns - cap[0].start_ns == 8 * cfg.slot_ns
    others = [iv for iv in sched.intervals if iv not in beacons + cap]
    assert all(iv.state is RadioState.OFF for iv in others)


def test_unused_downlink_costs_more_than_uplink():
    base = DsmeConfig(so=3, mo=10, bo=10)
    on = {}
    for d in Direction:
        cfg = base.with_gts([GtsSlot(d, 1, 1, 0)])
        on[d] = build_dsme_schedule(cfg, cfg.multisuperframe_ns, allocation_handshake=False).radio_on_ns()
    assert on[Direction.DOWNLINK] > on[Direction.UPLINK]


def test_uplink_slot_with_full_frame():
    cfg = DsmeConfig(so=3, mo=10, bo=10).with_gts([GtsSlot(Direction.UPLINK, 1, 1, 0)])
    sched = build_dsme_schedule(cfg, cfg.multisuperframe_ns, {(0, 0): [127]}, allocation_handshake=False)
    tx = [iv for iv in sched.intervals if iv.state is RadioState.TX and "gts" in iv.label]
    assert tx[0].end_ns - tx[0].start_ns == 4_256 * US
    slot_start = cfg.slot_start(0, 1, 1)
    assert tx[0].end_ns < slot_start + cfg.slot_ns


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 7), st.integers(0, 7))
def test_downlink_gts_monotone(a, b):
    lo, hi = sorted((a, b))
    base = DsmeConfig(so=3, mo=6, bo=6)
    on = []
    for n in (lo, hi):
        cfg = base.with_gts(mac.spread_gts(base, n, Direction.DOWNLINK))
        on.append(build_dsme_schedule(cfg, cfg.multisuperframe_ns, allocation_handshake=False).radio_on_ns())
    assert on[0] <= on[1]


def test_deadlines():
    cfg = DsmeConfig(so=3, mo=10, bo=10)
    sched = build_dsme_schedule(cfg, cfg.multisuperframe_ns)
    assert check_deadlines(sched, P.config(8, "rc"))
    assert not check_deadlines(sched, P.config(24, "rc"))
    free = build_dsme_schedule(DsmeConfig(so=3, mo=10, bo=10, preprocessing_cycles=0), cfg.multisuperframe_ns)
    assert all(not check_deadlines(free, c) for c in P.all_configs())


def test_schedule_tiles_horizon():
    for preset in ("idtx_poll", "dsme_idle", "coap_dsme", "coap_idtx", "radio_on"):
        trace, _ = run(ex.scenario(preset, P))
        segs = trace.radio
        assert segs[0].start_ns == 0 and segs[-1].end_ns == trace.horizon_ns
        assert all(a.end_ns == b.start_ns for a, b in zip(segs, segs[1:]))


def test_radio_boundaries_independent_of_clock():
    for preset in ("idtx_poll", "coap_idtx", "coap_dsme"):
        ref = run(ex.scenario(preset, P, ex.f_max(P)))[0].radio_boundaries()
        for cfg in (P.config(24, "rc"), P.config(48, "pll")):
            assert run(ex.scenario(preset, P, cfg))[0].radio_boundaries() == ref


def test_idtx_burst_timing():
    row = ex.burst_timing(P, "idtx", [P.config(24, "pll"), P.config(48, "rc"), ex.f_max(P)])
    assert row.tburst_min_s * 1e3 >= 10_007 - 50
    assert row.max_delta_s * 1e3 <= 5
