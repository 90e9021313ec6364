"""Deterministic multi-node simulator and the protocol-overhead accountant.

A SimNet hosts several engines on a shared MediumModel under a virtual
millisecond clock.  Nothing here is threaded or wall-clock dependent:
the net repeatedly asks every engine for its next deadline and steps
straight to the earliest one, so two runs of the same scenario with the
same seed produce byte-identical traces.

Node addresses inside the simulation are simply node names; unicast
data frames route by name, broadcasts fan out to every other running
node, and every delivery is gated by the medium (path loss, receiver
sensitivity, optional Bernoulli loss).

Mobility is piecewise linear: scripted `move` actions append waypoints
and a node's position at any instant interpolates between them, so an
RSSI sampled at delivery time equals `rssi_at` evaluated at the exact
scripted position.

Scenario files are UTF-8 text: `key=value` globals, `node` declarations
and `at` action lines, `#` comments:

    duration=60000
    seed=7
    sensitivity_dbm=-80
    node Alice 0 0
    node Bob 30 0 period=1000 powers=1,12,100
    at 5000 move Alice 10 0
    at 8000 stop Bob
    at 9000 call Alice NBRS
    at 9500 snapshot Alice

Trace output is one event per line:

    t=<ms> <node> TX <kind> <power>mW <len>B dest=<name|*>
    t=<ms> <node> RX <kind> from=<src> rssi=<dBm, one decimal>
    t=<ms> <node> SNAPSHOT neighbors=<count>
    t=<ms> <node> ERR <text>
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional, Union

from . import protocol
from .client import PrawnError, PrawnReplyError, ReceivedMessage
from .codec import PACKET_TYPE_BEACON, PACKET_TYPE_DATA, PACKET_TYPE_FEEDBACK
from .engine import EngineConfig, PrawnEngine
from .neighbors import Snapshot
from .transport import MediumModel, RxMeta

_KIND_NAMES = {
    PACKET_TYPE_BEACON: "beacon",
    PACKET_TYPE_DATA: "data",
    PACKET_TYPE_FEEDBACK: "feedback",
}

BROADCAST = "*"


@dataclass(frozen=True, slots=True)
class TraceEvent:
    t: int
    node: str
    event: str  # TX | RX | SNAPSHOT | ERR
    kind: str = ""
    peer: str = ""  # dest for TX, source for RX
    power_mw: int = 0
    size: int = 0
    rssi_dbm: Optional[float] = None
    detail: str = ""

    def to_line(self) -> str:
        if self.event == "TX":
            return "t=%d %s TX %s %dmW %dB dest=%s" % (
                self.t, self.node, self.kind, self.power_mw, self.size, self.peer
            )
        if self.event == "RX":
            return "t=%d %s RX %s from=%s rssi=%.1f" % (
                self.t, self.node, self.kind, self.peer, self.rssi_dbm
            )
        if self.event == "SNAPSHOT":
            return "t=%d %s SNAPSHOT %s" % (self.t, self.node, self.detail)
        return "t=%d %s ERR %s" % (self.t, self.node, self.detail)


def format_trace(events) -> str:
    return "\n".join(e.to_line() for e in events) + ("\n" if events else "")


def trace_to_csv(events) -> str:
    """RX events as CSV (t_ms, receiver, kind, source, rssi_dbm) for plotting."""
    lines = ["t_ms,node,kind,source,rssi_dbm"]
    for e in events:
        if e.event == "RX":
            lines.append("%d,%s,%s,%s,%.3f" % (e.t, e.node, e.kind, e.peer, e.rssi_dbm))
    return "\n".join(lines) + "\n"


class _SimTransport:
    """Engine-facing send hook; receiving happens via SimNet delivery."""

    def __init__(self, net: "SimNet", node_name: str):
        self.net = net
        self.node_name = node_name

    def send(self, frame: bytes, dest, power_mw: int) -> None:
        self.net._transmit(self.node_name, bytes(frame), dest, power_mw)


class _SimNode:
    __slots__ = ("name", "engine", "stopped", "waypoints")

    def __init__(self, name: str, engine: PrawnEngine, position, now: int):
        self.name = name
        self.engine = engine
        self.stopped = False
        self.waypoints: list[tuple[int, float, float]] = [(now, position[0], position[1])]

    def position_at(self, t: int) -> tuple[float, float]:
        points = self.waypoints
        if t <= points[0][0]:
            return points[0][1], points[0][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(points, points[1:]):
            if t <= t1:
                if t1 == t0:
                    return x1, y1
                f = (t - t0) / (t1 - t0)
                return x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        last = points[-1]
        return last[1], last[2]

    def add_waypoint(self, t: int, x: float, y: float) -> None:
        if self.waypoints and t < self.waypoints[-1][0]:
            raise ValueError("waypoints must not move backwards in time")
        self.waypoints.append((t, float(x), float(y)))


class SimNet:
    """A virtual radio neighborhood driven to deadlines in roster order."""

    def __init__(self, medium: Optional[MediumModel] = None):
        self.medium = medium if medium is not None else MediumModel()
        self.nodes: dict[str, _SimNode] = {}
        self.now = 0
        self.events: list[TraceEvent] = []
        self._names: dict[str, str] = {}  # shared roster for name resolution
        self._pending: list = []  # (deliver_at, seq, rx_name, frame, tx_name, rssi)
        self._pending_seq = 0

    # -- topology ----------------------------------------------------------

    def add_node(self, name: str, position=(0.0, 0.0), **config_overrides) -> PrawnEngine:
        if name in self.nodes:
            raise ValueError(f"duplicate node name {name!r}")
        known = config_overrides.pop("known_names", ())
        roster = tuple(self.nodes) + tuple(known)
        config = EngineConfig(node_name=name, known_names=roster, **config_overrides)
        engine = PrawnEngine(config, _SimTransport(self, name))
        # Let everybody resolve everybody: names are global in a scenario.
        for other in self.nodes.values():
            other.engine.learn_name(name)
        node = _SimNode(name, engine, position, self.now)
        self.nodes[name] = node
        self.medium.set_position(name, (float(position[0]), float(position[1])))
        engine.start(self.now)
        return engine

    def stop_node(self, name: str) -> None:
        self._node(name).stopped = True

    def move_node(self, name: str, x: float, y: float, at: Optional[int] = None) -> None:
        """Add a waypoint: the node reaches (x, y) at time `at` (default now)."""
        self._node(name).add_waypoint(self.now if at is None else at, x, y)

    def _node(self, name: str) -> _SimNode:
        node = self.nodes.get(name)
        if node is None:
            raise ValueError(f"unknown node {name!r}")
        return node

    def _refresh_positions(self) -> None:
        for node in self.nodes.values():
            self.medium.set_position(node.name, node.position_at(self.now))

    def position_of(self, name: str) -> tuple[float, float]:
        return self._node(name).position_at(self.now)

    # -- radio -------------------------------------------------------------

    def _transmit(self, tx_name: str, frame: bytes, dest, power_mw: int) -> None:
        kind = _KIND_NAMES.get(frame[0], "?")
        self._refresh_positions()
        if dest is None:
            receivers = [n for n in self.nodes.values() if n.name != tx_name and not n.stopped]
            dest_label = BROADCAST
        else:
            target = self.nodes.get(dest)
            receivers = [target] if target is not None and not target.stopped else []
            dest_label = str(dest)
        self.events.append(
            TraceEvent(self.now, tx_name, "TX", kind, dest_label, power_mw, len(frame))
        )
        for rx in receivers:
            rssi = self.medium.deliver(frame, tx_name, rx.name, power_mw)
            if rssi is None:
                continue
            deliver_at = self.now + self.medium.propagation_delay_ms
            if deliver_at <= self.now:
                self._deliver(rx, frame, tx_name, rssi)
            else:
                self._pending_seq += 1
                heapq.heappush(
                    self._pending,
                    (deliver_at, self._pending_seq, rx.name, frame, tx_name, rssi),
                )

    def _deliver(self, rx: _SimNode, frame: bytes, tx_name: str, rssi: float) -> None:
        kind = _KIND_NAMES.get(frame[0], "?")
        self.events.append(
            TraceEvent(self.now, rx.name, "RX", kind, tx_name, 0, len(frame), rssi)
        )
        rx.engine.on_frame(frame, RxMeta(tx_name, rssi, self.now))

    # -- clock -------------------------------------------------------------

    def _next_event_time(self) -> Optional[int]:
        best: Optional[int] = None
        for node in self.nodes.values():
            if node.stopped:
                continue
            d = node.engine.next_deadline()
            if d is not None and (best is None or d < best):
                best = d
        if self._pending and (best is None or self._pending[0][0] < best):
            best = self._pending[0][0]
        return best

    def run_until(self, t_end: int) -> None:
        """Advance the virtual clock, firing every event at or before t_end."""
        while True:
            t = self._next_event_time()
            if t is None or t > t_end:
                break
            self.now = max(self.now, t)
            while self._pending and self._pending[0][0] <= self.now:
                _, _, rx_name, frame, tx_name, rssi = heapq.heappop(self._pending)
                rx = self.nodes[rx_name]
                if not rx.stopped:
                    self._deliver(rx, frame, tx_name, rssi)
            for node in list(self.nodes.values()):
                if node.stopped:
                    continue
                d = node.engine.next_deadline()
                if d is not None and d <= self.now:
                    node.engine.on_timeout(self.now)
        self.now = max(self.now, t_end)

    # -- scripted interaction ----------------------------------------------

    def client_call(self, name: str, request: Union[str, bytes]) -> Optional[bytes]:
        """Feed one client datagram to a node; None if the node is stopped."""
        node = self._node(name)
        data = request.encode() if isinstance(request, str) else bytes(request)
        if not data.endswith(b"\n"):
            data += b"\n"
        if node.stopped:
            self.events.append(
                TraceEvent(self.now, name, "ERR", detail="client call to stopped node")
            )
            return None
        return node.engine.handle_request(data, self.now)

    def snapshot(self, name: str) -> Snapshot:
        node = self._node(name)
        node.engine.on_timeout(self.now)
        snap = node.engine.table.snapshot(self.now)
        self.events.append(
            TraceEvent(self.now, name, "SNAPSHOT", detail="neighbors=%d" % len(snap.entries))
        )
        return snap


class SimClient:
    """The five client primitives against an in-sim engine.

    Requests travel as real grammar datagrams through handle_request, so
    prototype code written against this class exercises the same parsing
    and rendering as a socket client.
    """

    def __init__(self, net: SimNet, node_name: str):
        self.net = net
        self.node_name = node_name

    def _request(self, req) -> protocol.Reply:
        raw = self.net.client_call(self.node_name, protocol.render_request(req))
        if raw is None:
            raise PrawnError(f"node {self.node_name} is stopped")
        reply = protocol.parse_reply(raw)
        if isinstance(reply, protocol.ErrorReply):
            raise PrawnReplyError(reply.code, reply.text)
        return reply

    def info(self) -> dict:
        return self._request(protocol.InfoRequest()).as_dict()

    def neighbors(self) -> protocol.NbrsReply:
        return self._request(protocol.NbrsRequest())

    def send(self, dest, message, power_mw: Optional[int] = None) -> None:
        from .client import _encode_payload, _resolve_destination

        self._request(
            protocol.SendRequest(
                _resolve_destination(dest), power_mw, _encode_payload(message)
            )
        )

    def send_broadcast(self, message, power_mw: Optional[int] = None) -> None:
        from .client import _encode_payload

        self._request(protocol.SendBroadcastRequest(power_mw, _encode_payload(message)))

    def receive(self) -> Optional[ReceivedMessage]:
        reply = self._request(protocol.RecvRequest())
        if isinstance(reply, protocol.EmptyReply):
            return None
        return ReceivedMessage(reply.sender_id, reply.sender_name, reply.payload)


# -- scenarios ---------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class NodeSpec:
    name: str
    x: float = 0.0
    y: float = 0.0
    overrides: tuple = ()  # (key, value) pairs for EngineConfig


@dataclass(frozen=True, slots=True)
class Action:
    at_ms: int
    verb: str  # move | stop | call | snapshot
    node: str
    args: tuple = ()


@dataclass(frozen=True, slots=True)
class Scenario:
    nodes: tuple
    actions: tuple = ()
    duration_ms: int = 10000
    seed: int = 0
    pl0_db: float = 40.0
    exponent_n: float = 3.0
    sensitivity_dbm: float = -80.0
    loss_prob: float = 0.0
    propagation_delay_ms: int = 0

    def __post_init__(self):
        names = [spec.name for spec in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("node names must be unique")
        known = set(names)
        for action in self.actions:
            if action.node not in known:
                raise ValueError(f"action references unknown node {action.node!r}")
            if not 0 <= action.at_ms <= self.duration_ms:
                raise ValueError("action time outside scenario duration")

    def medium(self) -> MediumModel:
        return MediumModel(
            pl0_db=self.pl0_db,
            exponent_n=self.exponent_n,
            sensitivity_dbm=self.sensitivity_dbm,
            loss_prob=self.loss_prob,
            seed=self.seed,
            propagation_delay_ms=self.propagation_delay_ms,
        )


@dataclass(slots=True)
class CallRecord:
    t: int
    node: str
    request: bytes
    reply: Optional[bytes]


@dataclass(slots=True)
class RunResult:
    net: SimNet
    events: list
    calls: list
    snapshots: list  # (t, node, Snapshot)

    def trace_text(self) -> str:
        return format_trace(self.events)


def run_scenario(scenario: Scenario) -> RunResult:
    net = SimNet(scenario.medium())
    for spec in scenario.nodes:
        net.add_node(spec.name, (spec.x, spec.y), **dict(spec.overrides))
    calls: list[CallRecord] = []
    snapshots = []
    ordered = sorted(enumerate(scenario.actions), key=lambda kv: (kv[1].at_ms, kv[0]))
    for _, action in ordered:
        net.run_until(action.at_ms)
        if action.verb == "move":
            x, y = action.args
            net.move_node(action.node, float(x), float(y))
        elif action.verb == "stop":
            net.stop_node(action.node)
        elif action.verb == "call":
            request = action.args[0].encode() + b"\n"
            reply = net.client_call(action.node, request)
            calls.append(CallRecord(net.now, action.node, request, reply))
        elif action.verb == "snapshot":
            snapshots.append((net.now, action.node, net.snapshot(action.node)))
        else:
            raise ValueError(f"unknown action verb {action.verb!r}")
    net.run_until(scenario.duration_ms)
    return RunResult(net, net.events, calls, snapshots)


_NODE_OVERRIDE_KEYS = {
    "period": ("beacon_period_ms", int),
    "powers": ("power_levels_mw", lambda v: tuple(int(x) for x in v.split(",") if x)),
    "fixed_power": ("fixed_tx_power_mw", int),
    "power_control": ("power_control_enabled",
                      lambda v: v.lower() not in ("0", "false", "no", "off")),
    "per_window": ("per_window", int),
    "dead_threshold": ("dead_threshold", int),
    "grace": ("grace_factor", float),
    "retention": ("dead_retention_cycles", int),
    "queue_bound": ("queue_bound", int),
}

_GLOBAL_KEYS = {
    "duration": ("duration_ms", int),
    "seed": ("seed", int),
    "pl0_db": ("pl0_db", float),
    "exponent_n": ("exponent_n", float),
    "sensitivity_dbm": ("sensitivity_dbm", float),
    "loss_prob": ("loss_prob", float),
    "propagation_delay_ms": ("propagation_delay_ms", int),
}


def parse_scenario(text: str) -> Scenario:
    """Parse the scenario file format documented in the module docstring."""
    globals_kw: dict = {}
    nodes: list[NodeSpec] = []
    actions: list[Action] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            if tokens[0] == "node":
                if len(tokens) < 4:
                    raise ValueError("node needs: node <name> <x> <y> [k=v ...]")
                overrides = []
                for tok in tokens[4:]:
                    key, _, value = tok.partition("=")
                    if key not in _NODE_OVERRIDE_KEYS:
                        raise ValueError(f"unknown node setting {key!r}")
                    target, convert = _NODE_OVERRIDE_KEYS[key]
                    overrides.append((target, convert(value)))
                nodes.append(
                    NodeSpec(tokens[1], float(tokens[2]), float(tokens[3]),
                             tuple(overrides))
                )
            elif tokens[0] == "at":
                if len(tokens) < 4:
                    raise ValueError("action needs: at <ms> <verb> <node> [args]")
                at_ms, verb, node = int(tokens[1]), tokens[2], tokens[3]
                if verb == "move":
                    args: tuple = (float(tokens[4]), float(tokens[5]))
                elif verb == "call":
                    args = (" ".join(tokens[4:]),)
                elif verb in ("stop", "snapshot"):
                    args = ()
                else:
                    raise ValueError(f"unknown action verb {verb!r}")
                actions.append(Action(at_ms, verb, node, args))
            elif "=" in tokens[0] and len(tokens) == 1:
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in _GLOBAL_KEYS:
                    raise ValueError(f"unknown setting {key!r}")
                target, convert = _GLOBAL_KEYS[key]
                globals_kw[target] = convert(value)
            else:
                raise ValueError(f"unrecognized line {line!r}")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"scenario line {lineno}: {exc}") from None
    return Scenario(nodes=tuple(nodes), actions=tuple(actions), **globals_kw)


# -- overhead accountant ------------------------------------------------------

@dataclass(frozen=True, slots=True)
class OverheadReport:
    """Per-node control overhead for one beacon period, plus rates."""

    beacon_bytes: float
    feedback_bytes: float
    data_header_bytes: float
    per_node_bytes_per_period: float
    per_node_bits_per_s: float
    network_bits_per_s: float

    def __post_init__(self):
        total = self.beacon_bytes + self.feedback_bytes + self.data_header_bytes
        if total != self.per_node_bytes_per_period:
            raise ValueError("totals must equal the sum of parts")


def overhead(nodes: int, period_ms: int, levels: int, neighbors_per_node: int,
             data_pkts_per_s: float) -> OverheadReport:
    """Closed-form control-plane overhead.

    Per node per period: 24 octets per beacon x `levels`, 16 octets of
    feedback per neighbor, and a 4-octet header on every data packet
    sent during the period.
    """
    if nodes < 1 or levels < 1 or period_ms <= 0:
        raise ValueError("nodes, levels and period must be positive")
    if neighbors_per_node < 0 or data_pkts_per_s < 0:
        raise ValueError("neighbor count and data rate must be non-negative")
    period_s = period_ms / 1000.0
    beacon = 24.0 * levels
    feedback = 16.0 * neighbors_per_node
    data_headers = 4.0 * data_pkts_per_s * period_s
    per_period = beacon + feedback + data_headers
    per_node_rate = per_period * 8.0 / period_s
    return OverheadReport(
        beacon_bytes=beacon,
        feedback_bytes=feedback,
        data_header_bytes=data_headers,
        per_node_bytes_per_period=per_period,
        per_node_bits_per_s=per_node_rate,
        network_bits_per_s=nodes * per_node_rate,
    )


def count_overhead_bytes(events, node: str, start_ms: int, end_ms: int) -> dict:
    """Tally transmitted bytes for one node in [start_ms, end_ms) from a trace.

    Data packets contribute only their 4-octet header, matching the
    accountant's definition of protocol overhead.
    """
    tally = {"beacon": 0, "feedback": 0, "data_header": 0}
    for e in events:
        if e.event != "TX" or e.node != node or not start_ms <= e.t < end_ms:
            continue
        if e.kind == "beacon":
            tally["beacon"] += e.size
        elif e.kind == "feedback":
            tally["feedback"] += e.size
        elif e.kind == "data":
            tally["data_header"] += 4
    return tally
