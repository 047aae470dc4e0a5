import math

import pytest
from hypothesis import given, settings, strategies as st

from dvfsim.netstack import (
    MAX_PSDU,
    Dir,
    NetstackError,
    StackOverheads,
    UnsupportedMethod,
    bind_to_mac,
    fragment,
    plan_coap_exchange,
)

O = StackOverheads()

valid_overheads = st.builds(
    StackOverheads,
    mac_header_bytes=st.integers(3, 30), sixlowpan_iphc_udp_bytes=st.integers(2, 40),
    sixlowpan_frag1_bytes=st.integers(4, 8), sixlowpan_fragn_bytes=st.integers(5, 8),
    coap_base_bytes=st.integers(4, 30), coap_block_option_bytes=st.integers(1, 4),
    dtls_record_bytes=st.integers(0, 80),
).filter(lambda o: not o.problems())


def test_default_overheads_valid():
    assert O.problems() == []
    assert 64 <= O.plain_capacity() < 128
    assert O.secure_capacity() < 64


def test_29_byte_record_breaks_secure_threshold():
    assert StackOverheads(dtls_record_bytes=29).problems()


def test_plain_64_single_frame():
    assert len(fragment(64, False)) == 1


def test_secure_64_two_frames():
    assert len(fragment(64, True)) == 2


def test_plain_16_psdu():
    (f,) = fragment(16, False)
    assert f.psdu_bytes == 16 + 11 + 11 + 12 == 50


def test_plain_128_fragments():
    assert len(fragment(128, False)) > 1


def test_get16_minimal_exchange():
    plan = plan_coap_exchange("GET", 16, False)
    assert plan.count(Dir.UP) == 1 and plan.count(Dir.DOWN) == 1


def test_get128_two_blocks():
    plan = plan_coap_exchange("GET", 128, False)
    assert plan.blocks == 2
    assert plan.count(Dir.UP) == 2 and plan.count(Dir.DOWN) == 2


def test_post64_secure():
    plan = plan_coap_exchange("POST", 64, True)
    assert plan.count(Dir.UP) == 2 and plan.count(Dir.DOWN) == 1
    assert plan.cpu_extra_cycles > 0


def test_unsupported_method():
    with pytest.raises(UnsupportedMethod):
        plan_coap_exchange("PUT", 16, False)


def test_payload_must_be_positive():
    with pytest.raises(NetstackError):
        plan_coap_exchange("GET", 0, False)


def test_bind_idtx_get16():
    kinds = [e.kind for e in bind_to_mac(plan_coap_exchange("GET", 16, False), "idtx")]
    assert sorted(kinds) == ["csma_tx", "indirect_rx", "poll"]


def test_bind_idtx_polls_per_downlink_frame():
    plan = plan_coap_exchange("GET", 64, True)
    assert len(plan.exchanges[0].response.frames) == 2
    assert sum(e.kind == "poll" for e in bind_to_mac(plan, "idtx")) == 2


def test_bind_dsme_fifo():
    events = bind_to_mac(plan_coap_exchange("GET", 16, False), "dsme")
    assert [(e.kind, e.direction) for e in events] == [("gts_tx", Dir.UP), ("gts_rx", Dir.DOWN)]


payloads = st.integers(1, 600)
methods = st.sampled_from(["GET", "POST"])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 600), st.booleans(), valid_overheads)
def test_fragments_conserve_bytes(payload, secure, o):
    frames = fragment(payload, secure, o)
    compressed = o.sixlowpan_iphc_udp_bytes + o.coap_base_bytes + payload + (o.dtls_record_bytes if secure else 0)
    assert sum(f.content_bytes for f in frames) == compressed
    assert all(f.psdu_bytes <= MAX_PSDU for f in frames)


@settings(max_examples=150, deadline=None)
@given(methods, payloads)
def test_secure_dominates_plain(method, payload):
    plain, secure = plan_coap_exchange(method, payload, False), plan_coap_exchange(method, payload, True)
    assert len(secure.frames) >= len(plain.frames)
    assert secure.cpu_extra_cycles >= plain.cpu_extra_cycles


@given(payloads)
def test_blocks(payload):
    plan = plan_coap_exchange("GET", payload, False)
    assert plan.blocks == (math.ceil(payload / 64) if payload > 64 else 1)


@given(st.integers(1, 64))
def test_get_post_mirror(payload):
    g, p = plan_coap_exchange("GET", payload, False), plan_coap_exchange("POST", payload, False)
    assert len(g.frames) == len(p.frames)
    assert g.count(Dir.UP) == p.count(Dir.DOWN) and g.count(Dir.DOWN) == p.count(Dir.UP)


@settings(max_examples=300, deadline=None)
@given(valid_overheads)
def test_thresholds_for_every_valid_overhead_set(o):
    assert len(fragment(64, False, o)) == 1
    assert len(fragment(128, False, o)) > 1
    assert len(fragment(64, True, o)) > 1
