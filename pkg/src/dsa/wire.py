"""Inter-robot request/response messages and resource accounting.

Layout (little-endian, 4-byte fields throughout)::

    request:  sender u32 | target u32 | count u32        | count x ts u32
    response: sender u32 | target u32 | n_beliefs u16 n_messages u16
              | (n_beliefs + n_messages) x (ts u32, eta_x f32, eta_y f32, lam f32)

so a request is ``12 + 4n`` bytes and a response ``12 + 16m`` bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .gbp_core import FLOPS_PER_BELIEF_TERM, GaussianCanonical
from .swarm_graph import RobotGraph

HEADER_BYTES = 12
REQUEST_ENTRY_BYTES = 4
RESPONSE_ITEM_BYTES = 16
FLOPS_MESSAGE_PAIR = 13

_REQ_HEADER = struct.Struct("<III")
_RESP_HEADER = struct.Struct("<IIHH")
_ITEM = struct.Struct("<Ifff")
_F32 = struct.Struct("<f")
_F32x3 = struct.Struct("<fff")


class WireDecodeError(ValueError):
    pass


def f32(x: float) -> float:
    """Round to the nearest 32-bit float."""
    return _F32.unpack(_F32.pack(x))[0]


def request_size(n_entries: int) -> int:
    return HEADER_BYTES + REQUEST_ENTRY_BYTES * n_entries


def response_size(n_items: int) -> int:
    return HEADER_BYTES + RESPONSE_ITEM_BYTES * n_items


@dataclass(frozen=True)
class WireRequest:
    sender_id: int
    target_id: int
    entries: tuple[int, ...] = ()

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    def encode(self) -> bytes:
        n = len(self.entries)
        return _REQ_HEADER.pack(self.sender_id, self.target_id, n) + struct.pack(f"<{n}I", *self.entries)

    @classmethod
    def decode(cls, data: bytes) -> "WireRequest":
        if len(data) < HEADER_BYTES:
            raise WireDecodeError(f"request shorter than its header ({len(data)} bytes)")
        sender, target, n = _REQ_HEADER.unpack_from(data)
        if len(data) != request_size(n):
            raise WireDecodeError(f"request claims {n} entries but has {len(data)} bytes")
        return cls(sender, target, struct.unpack_from(f"<{n}I", data, HEADER_BYTES))


@dataclass(frozen=True)
class WireItem:
    """One tagged Gaussian; values are stored already rounded to float32."""

    tag: int
    eta_x: float
    eta_y: float
    lam: float

    def __post_init__(self):
        ex, ey, lam = _F32x3.unpack(_F32x3.pack(self.eta_x, self.eta_y, self.lam))
        object.__setattr__(self, "eta_x", ex)
        object.__setattr__(self, "eta_y", ey)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def of(cls, tag: int, g: GaussianCanonical) -> "WireItem":
        return cls(tag, g.eta_x, g.eta_y, g.lam)

    @property
    def gaussian(self) -> GaussianCanonical:
        return GaussianCanonical(self.eta_x, self.eta_y, self.lam)


@dataclass(frozen=True)
class WireResponse:
    sender_id: int
    target_id: int
    beliefs: tuple[WireItem, ...] = ()
    messages: tuple[WireItem, ...] = ()

    @property
    def item_count(self) -> int:
        return len(self.beliefs) + len(self.messages)

    def encode(self) -> bytes:
        parts = [_RESP_HEADER.pack(self.sender_id, self.target_id, len(self.beliefs), len(self.messages))]
        parts.extend(_ITEM.pack(it.tag, it.eta_x, it.eta_y, it.lam) for it in self.beliefs + self.messages)
        return b"".join(parts)

    @classmethod
    def decode(cls, data: bytes) -> "WireResponse":
        if len(data) < HEADER_BYTES:
            raise WireDecodeError(f"response shorter than its header ({len(data)} bytes)")
        sender, target, nb, nm = _RESP_HEADER.unpack_from(data)
        if len(data) != response_size(nb + nm):
            raise WireDecodeError(f"response claims {nb + nm} items but has {len(data)} bytes")
        items = tuple(WireItem(*_ITEM.unpack_from(data, HEADER_BYTES + RESPONSE_ITEM_BYTES * k))
                      for k in range(nb + nm))
        return cls(sender, target, items[:nb], items[nb:])


@dataclass
class ResourceCounters:
    flops: int = 0
    bytes_tx: int = 0
    bytes_rx: int = 0
    messages_tx: int = 0

    def belief_update(self, n_factors: int) -> None:
        self.flops += FLOPS_PER_BELIEF_TERM * n_factors

    def factor_message_pair(self) -> None:
        self.flops += FLOPS_MESSAGE_PAIR

    def tx(self, n: int) -> None:
        self.bytes_tx += n
        self.messages_tx += 1

    def rx(self, n: int) -> None:
        self.bytes_rx += n

    def reset(self) -> None:
        self.flops = self.bytes_tx = self.bytes_rx = self.messages_tx = 0

    def snapshot(self) -> tuple[int, int, int]:
        return (self.flops, self.bytes_tx, self.bytes_rx)


def account(counters: ResourceCounters, event: str, amount: int = 0) -> None:
    """Apply one accounting event: ``belief_update`` (amount = attached
    factors), ``factor_message_pair``, ``tx`` or ``rx`` (amount = bytes)."""
    if event == "belief_update":
        counters.belief_update(amount)
    elif event == "factor_message_pair":
        counters.factor_message_pair()
    elif event == "tx":
        counters.tx(amount)
    elif event == "rx":
        counters.rx(amount)
    else:
        raise ValueError(f"unknown accounting event {event!r}")


def build_request(graph: RobotGraph, target_id: int) -> WireRequest:
    return WireRequest(graph.robot_id, target_id, tuple(graph.outward_timesteps(target_id)))


def handle_request(graph: RobotGraph, req: WireRequest) -> WireResponse:
    if req.target_id != graph.robot_id:
        raise ValueError(f"request for robot {req.target_id} delivered to robot {graph.robot_id}")
    beliefs = tuple(WireItem.of(ts, graph.by_ts[ts].belief) for ts in req.entries if ts in graph.by_ts)
    messages = []
    for ts in graph.outward_timesteps(req.sender_id):
        f = graph.outward[(ts, req.sender_id)]
        messages.append(WireItem.of(ts, f.send(1, graph.r_damp, graph.counters)))
    return WireResponse(graph.robot_id, req.sender_id, beliefs, tuple(messages))


def apply_response(graph: RobotGraph, resp: WireResponse) -> None:
    if resp.target_id != graph.robot_id:
        raise ValueError(f"response for robot {resp.target_id} delivered to robot {graph.robot_id}")
    for item in resp.beliefs:
        f = graph.outward.get((item.tag, resp.sender_id))
        if f is None:
            continue
        f.remote_belief = item.gaussian
        f.send(0, graph.r_damp, graph.counters)
    for item in resp.messages:
        graph.deliver_remote_message(item.tag, resp.sender_id, item.gaussian)


def exchange(requester: RobotGraph, responder: RobotGraph, dump=None) -> tuple[int, int]:
    """One atomic request/response round trip through the byte encoding.

    Returns the encoded (request, response) sizes. ``dump`` may be a binary
    stream receiving each message as a u32 length prefix plus its bytes.
    """
    req_bytes = build_request(requester, responder.robot_id).encode()
    _count(requester, responder, req_bytes, dump)
    resp_bytes = handle_request(responder, WireRequest.decode(req_bytes)).encode()
    _count(responder, requester, resp_bytes, dump)
    apply_response(requester, WireResponse.decode(resp_bytes))
    return len(req_bytes), len(resp_bytes)


def _count(src: RobotGraph, dst: RobotGraph, data: bytes, dump) -> None:
    if src.counters is not None:
        src.counters.tx(len(data))
    if dst.counters is not None:
        dst.counters.rx(len(data))
    if dump is not None:
        dump.write(struct.pack("<I", len(data)))
        dump.write(data)


def read_dump(stream) -> list[bytes]:
    """Split a wire dump back into its messages (requests and responses alternate)."""
    out = []
    while True:
        head = stream.read(4)
        if not head:
            return out
        if len(head) != 4:
            raise WireDecodeError("truncated length prefix")
        (n,) = struct.unpack("<I", head)
        body = stream.read(n)
        if len(body) != n:
            raise WireDecodeError("truncated record")
        out.append(body)
