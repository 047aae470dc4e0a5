"""Frame-level planning of CoAP(S) exchanges over 6LoWPAN and IEEE 802.15.4."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Mapping

MAX_PSDU = 127


class NetstackError(Exception):
    pass


class UnsupportedMethod(NetstackError, ValueError):
    pass


class Method(str, Enum):
    GET = "GET"
    POST = "POST"

    @classmethod
    def parse(cls, value) -> Method:
        try:
            return cls(str(value).upper())
        except ValueError:
            raise UnsupportedMethod(f"unsupported CoAP method {value!r}") from None


class Dir(str, Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class StackOverheads:
    mac_header_bytes: int = 11
    sixlowpan_iphc_udp_bytes: int = 11
    sixlowpan_frag1_bytes: int = 4
    sixlowpan_fragn_bytes: int = 5
    coap_base_bytes: int = 12
    coap_block_option_bytes: int = 3
    dtls_record_bytes: int = 37
    dtls_cycles_per_byte: int = 160
    dtls_cycles_per_record: int = 9000

    @classmethod
    def from_dict(cls, data: Mapping | None) -> StackOverheads:
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise NetstackError(f"unknown overhead keys {sorted(unknown)}")
        return cls(**data)

    def plain_capacity(self) -> int:
        return MAX_PSDU - self.mac_header_bytes - self.sixlowpan_iphc_udp_bytes - self.coap_base_bytes

    def secure_capacity(self) -> int:
        return self.plain_capacity() - self.dtls_record_bytes

    def problems(self) -> list[str]:
        out = []
        if any(getattr(self, f.name) < 0 for f in fields(self)):
            out.append("negative overhead")
        if not 64 <= self.plain_capacity() < 128:
            out.append(f"plain single-frame capacity {self.plain_capacity()} outside [64, 128)")
        if not self.secure_capacity() < 64:
            out.append(f"secure single-frame capacity {self.secure_capacity()} not below 64")
        if MAX_PSDU - self.mac_header_bytes - self.sixlowpan_fragn_bytes < 8:
            out.append("fragments cannot carry payload")
        return out

    def validate(self) -> StackOverheads:
        problems = self.problems()
        if problems:
            raise NetstackError("; ".join(problems))
        return self


@dataclass(frozen=True)
class Frame:
    direction: Dir
    psdu_bytes: int
    layer: str
    content_bytes: int = 0


@dataclass(frozen=True)
class Datagram:
    """One UDP datagram and the MAC frames carrying it."""

    direction: Dir
    coap_bytes: int
    compressed_bytes: int
    frames: tuple[Frame, ...]
    secure: bool


@dataclass(frozen=True)
class Exchange:
    """One CoAP round trip: a request datagram and its response."""

    request: Datagram
    response: Datagram
    block: int


@dataclass(frozen=True)
class TransactionPlan:
    method: Method
    payload_bytes: int
    secure: bool
    exchanges: tuple[Exchange, ...]
    cpu_extra_cycles: int
    block_size: int = 64

    @property
    def blocks(self) -> int:
        return len(self.exchanges)

    @property
    def frames(self) -> list[Frame]:
        out = []
        for ex in self.exchanges:
            out += ex.request.frames
            out += ex.response.frames
        return out

    def count(self, direction: Dir) -> int:
        return sum(1 for f in self.frames if f.direction is direction)


def fragment(
    payload_bytes: int,
    secure: bool,
    overheads: StackOverheads = StackOverheads(),
    direction: Dir = Dir.UP,
    options_bytes: int = 0,
) -> list[Frame]:
    """MAC frames carrying one CoAP datagram with ``payload_bytes`` of payload.

    A single frame when the compressed datagram fits, otherwise FRAG1 plus
    FRAGN frames whose payload chunks are multiples of 8 bytes (except the last).
    """
    if payload_bytes < 0:
        raise NetstackError("negative payload")
    o = overheads
    coap_bytes = o.coap_base_bytes + options_bytes + payload_bytes
    compressed = o.sixlowpan_iphc_udp_bytes + coap_bytes + (o.dtls_record_bytes if secure else 0)
    if o.mac_header_bytes + compressed <= MAX_PSDU:
        return [Frame(direction, o.mac_header_bytes + compressed, "single", compressed)]
    frames = []
    first_cap = (MAX_PSDU - o.mac_header_bytes - o.sixlowpan_frag1_bytes) // 8 * 8
    rest_cap = (MAX_PSDU - o.mac_header_bytes - o.sixlowpan_fragn_bytes) // 8 * 8
    chunk = min(first_cap, compressed)
    frames.append(Frame(direction, o.mac_header_bytes + o.sixlowpan_frag1_bytes + chunk, "frag1", chunk))
    remaining = compressed - chunk
    while remaining > 0:
        chunk = min(rest_cap, remaining)
        frames.append(Frame(direction, o.mac_header_bytes + o.sixlowpan_fragn_bytes + chunk, "fragn", chunk))
        remaining -= chunk
    return frames


def compressed_size(payload_bytes: int, secure: bool, overheads: StackOverheads = StackOverheads(), options_bytes: int = 0) -> int:
    o = overheads
    return o.sixlowpan_iphc_udp_bytes + o.coap_base_bytes + options_bytes + payload_bytes + (o.dtls_record_bytes if secure else 0)


def _datagram(direction: Dir, payload: int, options: int, secure: bool, o: StackOverheads) -> Datagram:
    frames = tuple(fragment(payload, secure, o, direction, options))
    return Datagram(direction, o.coap_base_bytes + options + payload, compressed_size(payload, secure, o, options), frames, secure)


def plan_coap_exchange(
    method,
    payload_bytes: int,
    secure: bool,
    overheads: StackOverheads = StackOverheads(),
    block_size: int = 64,
) -> TransactionPlan:
    """Plan one application-level CoAP(S) transaction.

    Payloads above ``block_size`` use block-wise transfer, one round trip per block.
    """
    method = Method.parse(method)
    if payload_bytes < 1:
        raise NetstackError("payload must be at least one byte")
    o = overheads
    blockwise = payload_bytes > block_size
    n_blocks = math.ceil(payload_bytes / block_size) if blockwise else 1
    opt = o.coap_block_option_bytes if blockwise else 0
    exchanges = []
    for b in range(n_blocks):
        chunk = min(block_size, payload_bytes - b * block_size) if blockwise else payload_bytes
        if method is Method.GET:
            # block 0 may be requested without a Block2 option
            req = _datagram(Dir.UP, 0, opt if b > 0 else 0, secure, o)
            resp = _datagram(Dir.DOWN, chunk, opt, secure, o)
        else:
            req = _datagram(Dir.UP, chunk, opt, secure, o)
            resp = _datagram(Dir.DOWN, 0, opt, secure, o)
        exchanges.append(Exchange(req, resp, b))
    cycles = 0
    if secure:
        records = 2 * len(exchanges)
        nbytes = sum(ex.request.coap_bytes + ex.response.coap_bytes for ex in exchanges)
        cycles = records * o.dtls_cycles_per_record + nbytes * o.dtls_cycles_per_byte
    return TransactionPlan(method, payload_bytes, secure, tuple(exchanges), cycles, block_size)


def dtls_cycles(datagram: Datagram, overheads: StackOverheads) -> int:
    if not datagram.secure:
        return 0
    return overheads.dtls_cycles_per_record + datagram.coap_bytes * overheads.dtls_cycles_per_byte


class MacMode(str, Enum):
    IDLE = "idle"
    IDTX = "idtx"
    DSME = "dsme"


@dataclass(frozen=True)
class MacEvent:
    kind: str
    direction: Dir
    psdu_bytes: int
    exchange: int


def bind_to_mac(plan: TransactionPlan, mode) -> list[MacEvent]:
    """Abstract MAC events realizing ``plan`` in order.

    IDTX precedes every downlink frame with a poll; DSME maps frames onto owned
    GTS of matching direction (slot placement happens in the simulator).
    """
    mode = MacMode(mode)
    events = []
    for i, ex in enumerate(plan.exchanges):
        for f in ex.request.frames:
            kind = "gts_tx" if mode is MacMode.DSME else "csma_tx"
            events.append(MacEvent(kind, Dir.UP, f.psdu_bytes, i))
        for f in ex.response.frames:
            if mode is MacMode.IDTX:
                events.append(MacEvent("poll", Dir.UP, 0, i))
                events.append(MacEvent("indirect_rx", Dir.DOWN, f.psdu_bytes, i))
            elif mode is MacMode.DSME:
                events.append(MacEvent("gts_rx", Dir.DOWN, f.psdu_bytes, i))
            else:
                events.append(MacEvent("rx", Dir.DOWN, f.psdu_bytes, i))
    return events
