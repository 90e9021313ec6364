"""Protocol engine: beaconing, feedback, and the client request surface.

The engine is written as a reactive core with no threads and no clock of
its own.  Callers drive it with four entry points, passing an explicit
millisecond timestamp:

    start(now)                  arm the beacon schedule
    next_deadline()             earliest time any internal event is due
    on_timeout(now)             run everything due at or before `now`
    on_frame(frame, meta)       a radio frame arrived
    handle_request(data, now)   a client datagram arrived; returns the reply

This makes the engine equally at home behind a selectors-based socket
loop (EngineRunner below) and inside a simulated network that steps
virtual time deterministically.

Each beacon period the engine transmits one beacon per configured power
level, lowest first, spread across the period at offsets (i * period) // k
for the i-th of k levels.  At the end of each period it closes the
accounting cycle and broadcasts one feedback packet per known neighbor,
then starts over.  Sequence numbers come from a single 16-bit counter
shared by all power levels, wrapping at 65535.
"""

from __future__ import annotations

import collections
import logging
import selectors
import socket
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import codec, protocol
from .neighbors import (
    DEFAULT_DEAD_RETENTION_CYCLES,
    DEFAULT_DEAD_THRESHOLD,
    DEFAULT_GRACE_FACTOR,
    DEFAULT_PER_WINDOW,
    NeighborTable,
)
from .transport import RxMeta, UdpTransport

log = logging.getLogger("prawn.engine")

DEFAULT_BEACON_PERIOD_MS = 10000
DEFAULT_NEIGHBOR_PORT = 3010
DEFAULT_CLIENT_PORT = 3020
DEFAULT_INTERFACE = "ath0"
DEFAULT_POWER_LEVELS = (1, 12, 100)
DEFAULT_QUEUE_BOUND = 1024

# Operational payload cap.  The binding constraint is not the radio frame
# (65507 - 4) but the MSG reply datagram, which carries the payload as
# base64 plus id, name (up to 255 octets) and framing: 3*(65507-278)//4
# = 48921.  48000 leaves headroom and is easy to remember.
MAX_DATA_PAYLOAD = 48000


def derive_mac(node_id: int) -> bytes:
    """Deterministic locally-administered MAC for nodes without radio hardware."""
    return bytes([0x02]) + node_id.to_bytes(8, "big")[3:]


@dataclass(frozen=True)
class EngineConfig:
    """Validated engine settings.  Field defaults mirror the CLI defaults."""

    node_name: str = field(default_factory=socket.gethostname)
    beacon_period_ms: int = DEFAULT_BEACON_PERIOD_MS
    neighbor_port: int = DEFAULT_NEIGHBOR_PORT
    client_port: int = DEFAULT_CLIENT_PORT
    interface_name: str = DEFAULT_INTERFACE
    power_levels_mw: tuple[int, ...] = DEFAULT_POWER_LEVELS
    power_control_enabled: bool = True
    fixed_tx_power_mw: Optional[int] = None
    per_window: int = DEFAULT_PER_WINDOW
    dead_threshold: int = DEFAULT_DEAD_THRESHOLD
    grace_factor: float = DEFAULT_GRACE_FACTOR
    dead_retention_cycles: int = DEFAULT_DEAD_RETENTION_CYCLES
    queue_bound: int = DEFAULT_QUEUE_BOUND
    known_names: tuple[str, ...] = ()
    mac: Optional[bytes] = None

    def __post_init__(self) -> None:
        name = self.node_name
        if not name or len(name.encode()) > codec.MAX_NAME_OCTETS:
            raise ValueError("node name must be 1..255 octets")
        if any(ch.isspace() for ch in name):
            raise ValueError("node name must not contain whitespace")
        if not 1 <= self.beacon_period_ms <= 0xFFFF:
            raise ValueError("beacon period must be 1..65535 ms")
        levels = self.power_levels_mw
        if not levels:
            raise ValueError("at least one power level required")
        if any(not 1 <= p <= 255 for p in levels):
            raise ValueError("power levels must be 1..255 mW")
        if any(a >= b for a, b in zip(levels, levels[1:])):
            raise ValueError("power levels must be strictly ascending")
        if self.fixed_tx_power_mw is not None and not 1 <= self.fixed_tx_power_mw <= 255:
            raise ValueError("fixed transmit power must be 1..255 mW")
        for label, value in (
            ("per_window", self.per_window),
            ("dead_threshold", self.dead_threshold),
            ("dead_retention_cycles", self.dead_retention_cycles),
            ("queue_bound", self.queue_bound),
        ):
            if value < 1:
                raise ValueError(f"{label} must be >= 1")
        if self.grace_factor <= 0:
            raise ValueError("grace_factor must be positive")
        for label, port in (("neighbor", self.neighbor_port), ("client", self.client_port)):
            if not 0 <= port <= 0xFFFF:
                raise ValueError(f"{label} port out of range")
        if self.mac is not None and len(self.mac) != 6:
            raise ValueError("mac must be exactly 6 octets")

    @property
    def node_id(self) -> int:
        return codec.node_id_from_name(self.node_name)

    @property
    def default_tx_power_mw(self) -> int:
        """Power used for data and feedback when the caller does not choose."""
        if self.fixed_tx_power_mw is not None:
            return self.fixed_tx_power_mw
        return max(self.power_levels_mw)

    @property
    def cycle_levels(self) -> tuple[int, ...]:
        """Powers beaconed each cycle, ascending.

        A fixed power (-P) or disabled power control (-n) collapses the
        cycle to a single level; discovery keeps running, link probing at
        multiple powers stops.
        """
        if self.fixed_tx_power_mw is not None:
            return (self.fixed_tx_power_mw,)
        if not self.power_control_enabled:
            return (self.default_tx_power_mw,)
        return self.power_levels_mw


@dataclass
class EngineCounters:
    beacons_tx: int = 0
    feedback_tx: int = 0
    data_tx: int = 0
    frames_rx: int = 0
    malformed_frames: int = 0
    queue_dropped: int = 0
    send_failures: int = 0


class PrawnEngine:
    """Single-node protocol state machine."""

    def __init__(self, config: EngineConfig, transport) -> None:
        self.config = config
        self.transport = transport
        self.node_id = config.node_id
        self.mac = config.mac if config.mac is not None else derive_mac(self.node_id)
        self._names = {}
        for name in config.known_names:
            if not name or any(ch.isspace() for ch in name):
                log.warning("ignoring unusable known name %r", name)
                continue
            self._names[codec.node_id_from_name(name)] = name
        self._names[self.node_id] = config.node_name
        self.table = NeighborTable(
            self.node_id,
            config.node_name,
            per_window=config.per_window,
            dead_threshold=config.dead_threshold,
            grace_factor=config.grace_factor,
            dead_retention_cycles=config.dead_retention_cycles,
            name_resolver=self._names.get,
        )
        self.counters = EngineCounters()
        self.rx_queue: collections.deque = collections.deque()
        self.sequence = 0
        self.dirty = False  # set whenever neighbor state changes; UIs may clear it
        self._started = False
        self._cycle_start = 0
        self._level_index = 0

    # -- schedule ----------------------------------------------------------

    def start(self, now: int) -> None:
        if self._started:
            raise RuntimeError("engine already started")
        self._started = True
        self._cycle_start = now
        self._level_index = 0

    def learn_name(self, name: str) -> None:
        """Register a human-readable name for id resolution in replies."""
        self._names[codec.node_id_from_name(name)] = name

    def resolve_name(self, node_id: int) -> Optional[str]:
        return self._names.get(node_id)

    def _next_beacon_at(self) -> int:
        period = self.config.beacon_period_ms
        k = len(self.config.cycle_levels)
        return self._cycle_start + (self._level_index * period) // k

    def _cycle_close_at(self) -> int:
        return self._cycle_start + self.config.beacon_period_ms

    def next_deadline(self) -> Optional[int]:
        if not self._started:
            return None
        deadline = min(self._next_beacon_at(), self._cycle_close_at())
        table_deadline = self.table.next_deadline()
        if table_deadline is not None:
            deadline = min(deadline, table_deadline)
        return deadline

    def on_timeout(self, now: int) -> None:
        """Run every internal event due at or before `now`, in order."""
        if not self._started:
            return
        self.table.tick(now)
        while self._cycle_close_at() <= now or self._next_beacon_at() <= now:
            # Within one pass the earliest event goes first; a cycle close
            # precedes the next cycle's first beacon at the same instant so
            # feedback always reflects the finished cycle.
            if self._cycle_close_at() <= self._next_beacon_at():
                self._close_cycle(self._cycle_close_at())
            else:
                self._emit_beacon(self.config.cycle_levels[self._level_index])
                self._level_index += 1

    def _close_cycle(self, boundary: int) -> None:
        for dest_id, min_power, rssi in self.table.close_cycle(boundary):
            packet = codec.FeedbackPacket(dest_id, min_power, rssi)
            self._transmit(packet.encode(), None, self.config.default_tx_power_mw)
            self.counters.feedback_tx += 1
        self._cycle_start = boundary
        self._level_index = 0

    def _emit_beacon(self, power_mw: int) -> None:
        beacon = codec.Beacon(
            tx_power_mw=power_mw,
            transmitter_id=self.node_id,
            beacon_period_ms=self.config.beacon_period_ms,
            mac=self.mac,
            sequence=self.sequence,
        )
        self.sequence = (self.sequence + 1) & 0xFFFF
        self._transmit(beacon.encode(), None, power_mw)
        self.counters.beacons_tx += 1

    def _transmit(self, frame: bytes, dest, power_mw: int) -> bool:
        try:
            self.transport.send(frame, dest, power_mw)
            return True
        except (OSError, ValueError) as exc:
            self.counters.send_failures += 1
            log.warning("transmit failed: %s", exc)
            return False

    # -- inbound radio -----------------------------------------------------

    def on_frame(self, frame: bytes, meta: RxMeta) -> None:
        self.counters.frames_rx += 1
        try:
            packet = codec.decode_frame(frame)
        except codec.PacketError as exc:
            self.counters.malformed_frames += 1
            log.debug("dropped malformed frame from %s: %s", meta.source, exc)
            return
        if isinstance(packet, codec.Beacon):
            if packet.transmitter_id == self.node_id:
                return
            self.table.record_beacon(packet, meta.source, meta.rssi_dbm, meta.arrival)
            self.dirty = True
        elif isinstance(packet, codec.FeedbackPacket):
            self.table.record_feedback(packet, meta.source, meta.arrival)
            self.dirty = True
        else:
            self._enqueue_data(packet, meta)

    def _enqueue_data(self, packet: codec.DataPacket, meta: RxMeta) -> None:
        if len(packet.payload) > MAX_DATA_PAYLOAD:
            # A conforming peer never sends this; the MSG reply would not
            # fit one datagram, so the message could never be delivered.
            self.counters.malformed_frames += 1
            return
        entry = self.table.lookup_by_address(meta.source)
        if entry is not None:
            sender_id = entry.id
            sender_name = entry.name or codec.short_hex(entry.id)
        else:
            sender_id, sender_name = 0, protocol.UNKNOWN_NAME_TOKEN
        if len(self.rx_queue) >= self.config.queue_bound:
            self.rx_queue.popleft()
            self.counters.queue_dropped += 1
        self.rx_queue.append((sender_id, sender_name, packet.payload))

    # -- client request surface --------------------------------------------

    def handle_request(self, datagram: bytes, now: int) -> bytes:
        """Parse one client datagram and return exactly one reply datagram."""
        self.on_timeout(now)  # catch up so replies reflect current state
        try:
            request = protocol.parse_request(datagram)
        except protocol.ProtocolError as exc:
            return protocol.render_reply(protocol.ErrorReply(exc.code, str(exc)))
        if isinstance(request, protocol.InfoRequest):
            reply = self._info_reply()
        elif isinstance(request, protocol.NbrsRequest):
            reply = protocol.nbrs_reply_from_snapshot(self.table.snapshot(now))
        elif isinstance(request, protocol.RecvRequest):
            reply = self._recv_reply()
        elif isinstance(request, protocol.SendRequest):
            reply = self._send(request.dest_id, request.power_mw, request.payload)
        else:
            assert isinstance(request, protocol.SendBroadcastRequest)
            reply = self._send_broadcast(request.power_mw, request.payload)
        return protocol.render_reply(reply)

    def _info_reply(self) -> protocol.InfoReply:
        cfg = self.config
        return protocol.InfoReply(
            (
                ("name", cfg.node_name),
                ("id", codec.hex_id(self.node_id)),
                ("beacon_period_ms", str(cfg.beacon_period_ms)),
                ("neighbor_port", str(cfg.neighbor_port)),
                ("client_port", str(cfg.client_port)),
                ("power_levels_mw", ",".join(str(p) for p in cfg.cycle_levels)),
                ("per_window", str(cfg.per_window)),
            )
        )

    def _recv_reply(self) -> protocol.Reply:
        if not self.rx_queue:
            return protocol.EmptyReply()
        sender_id, sender_name, payload = self.rx_queue.popleft()
        return protocol.MsgReply(sender_id, sender_name, payload)

    def _send(self, dest_id: int, power_mw: Optional[int], payload: bytes) -> protocol.Reply:
        entry = self.table.lookup(dest_id)
        if entry is None:
            return protocol.ErrorReply(
                protocol.ERR_UNKNOWN_DESTINATION,
                f"no neighbor {codec.hex_id(dest_id)}",
            )
        if len(payload) > MAX_DATA_PAYLOAD:
            return protocol.ErrorReply(
                protocol.ERR_OVERSIZE, f"payload exceeds {MAX_DATA_PAYLOAD} octets"
            )
        frame = codec.DataPacket(power_mw or 0, payload).encode()
        power = power_mw if power_mw is not None else self.config.default_tx_power_mw
        if not self._transmit(frame, entry.network_address, power):
            return protocol.ErrorReply("send-failed", "transport rejected the frame")
        self.counters.data_tx += 1
        return protocol.OkReply()

    def _send_broadcast(self, power_mw: Optional[int], payload: bytes) -> protocol.Reply:
        if len(payload) > MAX_DATA_PAYLOAD:
            return protocol.ErrorReply(
                protocol.ERR_OVERSIZE, f"payload exceeds {MAX_DATA_PAYLOAD} octets"
            )
        frame = codec.DataPacket(power_mw or 0, payload).encode()
        power = power_mw if power_mw is not None else self.config.default_tx_power_mw
        if not self._transmit(frame, None, power):
            return protocol.ErrorReply("send-failed", "transport rejected the frame")
        self.counters.data_tx += 1
        return protocol.OkReply()


class EngineRunner:
    """Socket-facing wrapper: real UDP transports plus a select loop.

    Binds the neighbor socket and the loopback client socket, then
    multiplexes both against the engine's timer deadlines.  `stop()` is
    thread-safe via a self-pipe.
    """

    def __init__(
        self,
        config: EngineConfig,
        *,
        host: str = "",
        client_host: str = "127.0.0.1",
        broadcast_targets: Optional[list] = None,
    ) -> None:
        self.config = config
        self.transport = UdpTransport(
            host,
            config.neighbor_port,
            interface=config.interface_name,
            broadcast_targets=broadcast_targets,
        )
        try:
            # No SO_REUSEADDR: a second engine on the same port must fail loudly.
            self.client_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self.client_sock.bind((client_host, config.client_port))
            self.client_sock.setblocking(False)
        except OSError:
            self.transport.close()
            raise
        self.engine = PrawnEngine(config, self.transport)
        self._waker_r, self._waker_w = socket.socketpair()
        self._waker_r.setblocking(False)
        self._stopped = False
        self._render: Optional[Callable[[PrawnEngine], None]] = None

    @property
    def neighbor_address(self) -> tuple:
        return self.transport.local_address

    @property
    def client_address(self) -> tuple:
        return self.client_sock.getsockname()

    def stop(self) -> None:
        self._stopped = True
        try:
            self._waker_w.send(b"x")
        except OSError:
            pass

    def run(self, on_change: Optional[Callable[[PrawnEngine], None]] = None) -> None:
        """Run until stop().  `on_change` fires after neighbor state changes."""
        self._render = on_change
        sel = selectors.DefaultSelector()
        sel.register(self.transport.fileno(), selectors.EVENT_READ, "radio")
        sel.register(self.client_sock, selectors.EVENT_READ, "client")
        sel.register(self._waker_r, selectors.EVENT_READ, "waker")
        origin = time.monotonic()
        now_ms = lambda: int((time.monotonic() - origin) * 1000)
        engine = self.engine
        engine.start(now_ms())
        engine.on_timeout(now_ms())
        try:
            while not self._stopped:
                deadline = engine.next_deadline()
                timeout = None
                if deadline is not None:
                    timeout = max(0, deadline - now_ms()) / 1000.0
                for key, _ in sel.select(timeout):
                    if key.data == "waker":
                        try:
                            while self._waker_r.recv(4096):
                                pass
                        except (BlockingIOError, OSError):
                            pass
                    elif key.data == "radio":
                        now = now_ms()
                        while True:
                            got = self.transport.recv()
                            if got is None:
                                break
                            frame, addr = got
                            engine.on_frame(frame, RxMeta(addr, None, now))
                    else:
                        now = now_ms()
                        while True:
                            try:
                                data, addr = self.client_sock.recvfrom(65535)
                            except (BlockingIOError, InterruptedError):
                                break
                            reply = engine.handle_request(data, now)
                            try:
                                self.client_sock.sendto(reply, addr)
                            except OSError as exc:
                                log.warning("client reply failed: %s", exc)
                engine.on_timeout(now_ms())
                if engine.dirty and self._render is not None:
                    engine.dirty = False
                    self._render(engine)
        finally:
            sel.close()
            self.close()

    def close(self) -> None:
        self.transport.close()
        for sock in (self.client_sock, self._waker_r, self._waker_w):
            try:
                sock.close()
            except OSError:
                pass
