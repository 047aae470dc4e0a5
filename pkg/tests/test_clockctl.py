import random

import pytest
from hypothesis import given, settings, strategies as st

from dvfsim import experiments as ex
from dvfsim.acceptance import ReferenceLru
from dvfsim.clockctl import (
    DvfsPolicy,
    PathMode,
    TransitionCache,
    UnknownTask,
    execute_transition,
    on_wakeup,
    plan_transition,
)
from dvfsim.powermodel import ClockConfig, ClockSource, UnknownLevel, default_profile
from dvfsim.simcore import run

P = default_profile()
C8, C24, C48, C80 = P.config(8, "rc"), P.config(24, "pll"), P.config(48, "pll"), P.config(80, "pll")


def test_slow_path_is_25ms():
    plan = plan_transition(C24, C80, P)
    assert plan.total_duration_ns == 25_000_000 and plan.mode is PathMode.SLOW
    assert sum(ns for _, ns in plan.ops) == plan.total_duration_ns


def test_identity_plan_is_empty():
    plan = plan_transition(C24, C24, P)
    assert plan.ops == () and plan.total_duration_ns == 0


def test_slow_path_is_path_independent():
    assert plan_transition(C8, C48, P).total_duration_ns == plan_transition(C24, C80, P).total_duration_ns


def test_invalid_level_rejected():
    bogus = ClockConfig(ClockSource.pll(), 40_000_000)
    with pytest.raises(UnknownLevel):
        plan_transition(C24, bogus, P)


def test_miss_then_hit():
    cache = TransitionCache(P)
    a = execute_transition(cache, C24, C80)
    b = execute_transition(cache, C24, C80)
    assert (a.elapsed_ns, a.cache_hit) == (25_000_000, False)
    assert (b.elapsed_ns, b.cache_hit) == (500_000, True)
    assert (cache.hits, cache.misses) == (1, 1)


def test_transition_energy_uses_faster_endpoint():
    cache = TransitionCache(P)
    up = execute_transition(cache, C24, C80)
    down = execute_transition(cache, C80, C24)
    assert up.power_mW == down.power_mW
    assert up.energy_J == pytest.approx(up.power_mW * 25e-3 * 1e-3)


def test_capacity_one_lru():
    cache = TransitionCache(P, capacity=1)
    hits = [execute_transition(cache, a, b).cache_hit for a, b in [(C24, C80), (C80, C24), (C24, C80)]]
    assert hits == [False, False, False]
    assert len(cache) == 1


def test_capacity_bound_holds():
    cache = TransitionCache(P, capacity=3)
    cfgs = P.all_configs()
    rng = random.Random(1)
    cur = cfgs[0]
    for _ in range(200):
        nxt = rng.choice(cfgs)
        res = execute_transition(cache, cur, nxt)
        assert len(cache) <= 3
        if res.cache_hit:
            assert res.plan.from_config == cur and res.plan.to_config == nxt
        cur = nxt


def test_wakeup_is_one_direct_transition():
    policy = DvfsPolicy({"mac": C24}, P.reset_config)
    cache = TransitionCache(P)
    res = on_wakeup(cache, policy, "mac")
    assert res.plan.from_config == P.reset_config and res.plan.to_config == C24
    assert cache.misses == 1 and not res.cache_hit
    assert on_wakeup(cache, policy, "mac").cache_hit


def test_wakeup_into_default_is_free():
    policy = DvfsPolicy({"idle": P.reset_config}, P.reset_config)
    res = on_wakeup(TransitionCache(P), policy, "idle")
    assert res.elapsed_ns == 0 and res.energy_J == 0


def test_unknown_task():
    with pytest.raises(UnknownTask):
        on_wakeup(TransitionCache(P), DvfsPolicy({}, P.reset_config), "nope")


def test_fft_overhead_and_break_even():
    fft = ex.fft_overhead(P)
    assert fft.static_J * 1e6 == pytest.approx(29.5, abs=1.0)
    assert fft.delta_J * 1e6 == pytest.approx(5.0, abs=1.0)
    saving = ex.poll_energy_J(P, C80) - ex.poll_energy_J(P, P.config(24, "rc"))
    assert fft.delta_J < saving


def test_trace_transition_time_matches_hit_miss_count():
    for preset in ("fft_switch", "idtx_poll", "coap_idtx"):
        trace, report = run(ex.scenario(preset, P, prewarm_cache=False))
        spent = sum(s.end_ns - s.start_ns for s in trace.mcu if s.state.startswith("transition"))
        assert spent == report.cache_misses * 25_000_000 + report.cache_hits * 500_000


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 6), st.lists(st.integers(0, 4), min_size=1, max_size=30), st.integers(0, 2**16))
def test_lru_matches_reference(cap, walk, seed):
    pool = random.Random(seed).sample(P.all_configs(), 5)
    cache, ref = TransitionCache(P, cap), ReferenceLru(cap)
    cur = pool[0]
    for i in walk:
        nxt = pool[i]
        assert execute_transition(cache, cur, nxt).cache_hit == ref.access((cur, nxt))
        assert list(cache.entries) == ref.order
        cur = nxt
