"""Case-study prototypes built purely on the five client primitives.

These are the desk-scale versions of the classic rapid-prototyping
exercises: flooding, two-way relaying with XOR network coding, a
signal-strength topology sort, and RSSI monitoring series.  Each agent
talks to its node through a client object (SimClient or PrawnClient);
none of them reach into engine internals.

Network-coding frames ride inside ordinary data payloads:

    plain (endpoint to relay):   0x00 | dst id (8) | seq (2) | data
    coded (relay broadcast):     0x01 | id1 (8) | seq1 (2) | len1 (2)
                                      | id2 (8) | seq2 (2) | len2 (2)
                                      | XOR of the two payloads, padded
                                      to the longer length
    forwarded (relay unicast):   0x02 | src id (8) | seq (2) | data

A decoder that finds its own id among a coded pair XORs its stored copy
back out and trims to the other payload's length, recovering the peer's
data bit-exactly.
"""

from __future__ import annotations

import collections
import struct
from typing import Iterable, Optional

from . import codec

PLAIN = 0x00
CODED = 0x01
FORWARDED = 0x02

_PLAIN_HDR = struct.Struct(">BQH")
_FWD_HDR = struct.Struct(">BQH")
_CODED_HDR = struct.Struct(">BQHHQHH")


def _xor(a: bytes, b: bytes) -> bytes:
    length = max(len(a), len(b))
    a = a.ljust(length, b"\x00")
    b = b.ljust(length, b"\x00")
    return bytes(x ^ y for x, y in zip(a, b))


def run_polled(net, agents: Iterable, start_ms: int, end_ms: int, poll_every_ms: int) -> None:
    """Drive agents on a fixed deterministic polling grid, in list order."""
    agents = list(agents)
    t = start_ms
    while t <= end_ms:
        net.run_until(t)
        for agent in agents:
            agent.poll()
        t += poll_every_ms


# -- flooding -----------------------------------------------------------------

class FloodingAgent:
    """Rebroadcast every payload exactly once (suppress by payload identity)."""

    def __init__(self, client):
        self.client = client
        self.seen: set[bytes] = set()
        self.transmissions = 0
        self.deliveries = 0  # payloads accepted from the network

    def originate(self, payload: bytes) -> None:
        self.seen.add(bytes(payload))
        self.client.send_broadcast(payload)
        self.transmissions += 1

    def poll(self) -> None:
        while True:
            message = self.client.receive()
            if message is None:
                return
            payload = message.payload
            if payload in self.seen:
                continue
            self.seen.add(payload)
            self.deliveries += 1
            self.client.send_broadcast(payload)
            self.transmissions += 1

    def has(self, payload: bytes) -> bool:
        return bytes(payload) in self.seen


def run_flooding(net, node_names, origin: str, payload: bytes,
                 *, start_ms: Optional[int] = None, settle_rounds: int = 20,
                 poll_every_ms: int = 50) -> dict:
    """Flood one payload from `origin`; returns per-node tx/delivery stats."""
    from .sim import SimClient

    agents = {name: FloodingAgent(SimClient(net, name)) for name in node_names}
    t = net.now if start_ms is None else start_ms
    net.run_until(t)
    agents[origin].originate(payload)
    run_polled(net, agents.values(), t + poll_every_ms,
               t + settle_rounds * poll_every_ms, poll_every_ms)
    return {
        name: {"transmissions": agent.transmissions,
               "delivered": agent.deliveries,
               "has_payload": agent.has(payload)}
        for name, agent in agents.items()
    }


# -- network coding -----------------------------------------------------------

class CodingEndpoint:
    """One side of a two-way exchange through a relay."""

    def __init__(self, client, node_name: str, relay: str):
        self.client = client
        self.node_id = codec.node_id_from_name(node_name)
        self.relay = relay
        self.next_seq = 0
        self.sent: dict[int, bytes] = {}
        self.received: dict[int, bytes] = {}

    def send_via_relay(self, payload: bytes) -> int:
        seq = self.next_seq
        self.next_seq = (self.next_seq + 1) & 0xFFFF
        self.sent[seq] = bytes(payload)
        self.client.send(self.relay, _PLAIN_HDR.pack(PLAIN, 0, seq) + payload)
        return seq

    def poll(self) -> None:
        while True:
            message = self.client.receive()
            if message is None:
                return
            frame = message.payload
            if not frame:
                continue
            if frame[0] == FORWARDED and len(frame) >= _FWD_HDR.size:
                _, _, seq = _FWD_HDR.unpack_from(frame)
                self.received[seq] = frame[_FWD_HDR.size:]
            elif frame[0] == CODED and len(frame) >= _CODED_HDR.size:
                self._decode(frame)

    def _decode(self, frame: bytes) -> None:
        _, id1, seq1, len1, id2, seq2, len2 = _CODED_HDR.unpack_from(frame)
        mixed = frame[_CODED_HDR.size:]
        if id1 == self.node_id:
            own_seq, peer_seq, peer_len = seq1, seq2, len2
        elif id2 == self.node_id:
            own_seq, peer_seq, peer_len = seq2, seq1, len1
        else:
            return  # coded pair not for us
        own = self.sent.get(own_seq)
        if own is None:
            return
        self.received[peer_seq] = _xor(mixed, own)[:peer_len]


class CodingRelay:
    """Queue packets; XOR cross-source pairs, forward same-source heads.

    With coding disabled every packet is forwarded individually, which is
    the baseline the 3-versus-4 transmission comparison runs against.
    """

    def __init__(self, client, coding: bool = True):
        self.client = client
        self.coding = coding
        self.queue: collections.deque = collections.deque()
        self.coded_log: list[tuple[bytes, bytes, bytes]] = []
        self.coded_tx = 0
        self.forwarded_tx = 0
        self._peer_cache: dict[int, int] = {}

    def poll(self) -> None:
        while True:
            message = self.client.receive()
            if message is None:
                break
            frame = message.payload
            if not frame or frame[0] != PLAIN or len(frame) < _PLAIN_HDR.size:
                continue
            _, _, seq = _PLAIN_HDR.unpack_from(frame)
            self.queue.append((message.sender_id, seq, frame[_PLAIN_HDR.size:]))
        self._drain()

    def _drain(self) -> None:
        if not self.coding:
            while self.queue:
                self._forward(self.queue.popleft())
            return
        while len(self.queue) >= 2:
            first, second = self.queue[0], self.queue[1]
            if first[0] != second[0]:
                self._broadcast_coded(first, second)
                self.queue.popleft()
                self.queue.popleft()
            else:
                # Same source twice: forward the earlier packet, keep the
                # newer one queued as the standby.
                self._forward(self.queue.popleft())

    def _broadcast_coded(self, first, second) -> None:
        id1, seq1, data1 = first
        id2, seq2, data2 = second
        mixed = _xor(data1, data2)
        self.coded_log.append((data1, data2, mixed))
        header = _CODED_HDR.pack(CODED, id1, seq1, len(data1), id2, seq2, len(data2))
        self.client.send_broadcast(header + mixed)
        self.coded_tx += 1

    def _forward(self, entry) -> None:
        src_id, seq, data = entry
        self.client.send(self._peer_of(src_id), _FWD_HDR.pack(FORWARDED, src_id, seq) + data)
        self.forwarded_tx += 1

    def _peer_of(self, src_id: int) -> int:
        # Two-endpoint relay: the destination is the other known neighbor.
        peer = self._peer_cache.get(src_id)
        if peer is None:
            for neighbor in self.client.neighbors().neighbors:
                if neighbor.id != src_id:
                    self._peer_cache[src_id] = peer = neighbor.id
                    break
            else:
                raise RuntimeError("relay has no second neighbor to forward to")
        return peer

    def flush(self) -> None:
        while self.queue:
            self._forward(self.queue.popleft())


def run_network_coding(net, a: str, relay: str, b: str, pairs: int,
                       *, coding: bool = True, start_ms: Optional[int] = None,
                       step_ms: int = 2) -> dict:
    """Exchange `pairs` alternating packets A->B and B->A through the relay."""
    from .sim import SimClient

    end_a = CodingEndpoint(SimClient(net, a), a, relay)
    end_b = CodingEndpoint(SimClient(net, b), b, relay)
    mid = CodingRelay(SimClient(net, relay), coding=coding)
    t = net.now if start_ms is None else start_ms
    payload_a = lambda i: b"A>" + i.to_bytes(2, "big") * 3
    payload_b = lambda i: b"B>" + i.to_bytes(2, "big") * 2
    for i in range(pairs):
        net.run_until(t)
        end_a.send_via_relay(payload_a(i))
        end_b.send_via_relay(payload_b(i))
        t += step_ms
        net.run_until(t)
        mid.poll()
        end_a.poll()
        end_b.poll()
        t += step_ms
    net.run_until(t)
    mid.poll()
    mid.flush()
    end_a.poll()
    end_b.poll()
    data_tx = sum(1 for e in net.events if e.event == "TX" and e.kind == "data")
    return {
        "pairs": pairs,
        "data_transmissions": data_tx,
        "relay_coded": mid.coded_tx,
        "relay_forwarded": mid.forwarded_tx,
        "a_received": dict(end_a.received),
        "b_received": dict(end_b.received),
        "a_sent": dict(end_a.sent),
        "b_sent": dict(end_b.sent),
        "coded_log": mid.coded_log,
    }


# -- topology control ---------------------------------------------------------

def _best_rssi(neighbor) -> Optional[float]:
    best = None
    for row in neighbor.rows:
        rssi = getattr(row, "rssi_dbm", None)
        if rssi is None:
            rssi = getattr(row, "last_rssi_dbm", None)
        if rssi is not None and (best is None or rssi > best):
            best = rssi
    return best


def sort_by_signal(report) -> list:
    """Neighbors strongest-first; ties by id ascending; unknown RSSI last.

    Accepts an NBRS reply, a table snapshot, or a plain neighbor list.
    """
    neighbors = getattr(report, "neighbors", None)
    if neighbors is None:
        neighbors = getattr(report, "entries", report)
    def key(n):
        rssi = _best_rssi(n)
        return (0, -rssi, n.id) if rssi is not None else (1, 0.0, n.id)
    return sorted(neighbors, key=key)


# -- monitoring ---------------------------------------------------------------

def rssi_series(events, observer: str) -> dict[str, list[tuple[int, float]]]:
    """Beacon RSSI time series seen by `observer`, keyed by transmitter."""
    series: dict[str, list[tuple[int, float]]] = {}
    for e in events:
        if e.event == "RX" and e.node == observer and e.kind == "beacon":
            series.setdefault(e.peer, []).append((e.t, e.rssi_dbm))
    return series
