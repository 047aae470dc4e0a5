"""Acceptance gate: one test per criterion, each at its stated tolerance."""

import pytest

from dvfsim import acceptance
from dvfsim.powermodel import default_profile

P = default_profile()

NAMES = {
    1: "sleep_baseline_45pct",
    2: "idtx_poll_loop_19pct_and_rc_5pct",
    3: "single_request_ratio_0833",
    4: "dvfs_break_even_5uJ",
    5: "dsme_idle_52pct_and_deadlines",
    6: "coap_savings_bands",
    7: "burst_timing_table",
    8: "energy_conservation_1000_scenarios",
    9: "determinism_byte_identical",
    10: "fragmentation_thresholds",
    11: "optimizer_oracle_1000_profiles",
    12: "radio_schedule_invariance",
    13: "cache_lru_10000_replays",
}


@pytest.mark.parametrize("number", sorted(acceptance.CHECKS), ids=[f"{n:02d}_{NAMES[n]}" for n in sorted(acceptance.CHECKS)])
def test_criterion(number):
    result = acceptance.CHECKS[number](P)
    print(result.line())
    assert result.passed, result.line()
