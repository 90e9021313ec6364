"""The loopback request/reply wire grammar between clients and the engine.

Every request and every reply is a single UTF-8 datagram.  Lines end
with LF; tokens are separated by single spaces; payloads travel
base64-encoded (an empty payload is an empty token).  Requests:

    INFO
    NBRS
    SEND <16-hex-id> <power-mW|-> <base64>
    SENDB <power-mW|-> <base64>
    RECV

Replies:

    INFO k=v k=v ...
    OK
    ERR <code> <text>
    EMPTY
    MSG <16-hex-id> <name> <base64>

and the multi-line neighbor report (still one datagram):

    NBRS <count>
    N <16-hex-id> <name|?> <Active|Dead> <period-ms> <mac> <min-power|->
    P <power-mW> <Active|Dead> <recv>/<W> <rssi-dBm|n/a> <consec-losses>
    T <16-hex-id> <min-power|-> <rssi-dBm|n/a> <ok|lost>

One N line per neighbor, followed by its P lines (one per power row)
and T lines (one per two-hop entry).
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass, field
from typing import Optional, Union

from prawn import codec
from prawn.neighbors import ACTIVE, DEAD, Snapshot

ERR_BAD_REQUEST = "bad-request"
ERR_UNKNOWN_DESTINATION = "unknown-destination"
ERR_OVERSIZE = "oversize"

UNKNOWN_NAME_TOKEN = "?"

# Generous receive-buffer bound for reply datagrams (MSG carries base64
# of up to 64 KiB of payload; NBRS grows with the neighbor count).
MAX_REPLY_SIZE = 128 * 1024


class ProtocolError(ValueError):
    """A datagram that does not follow the grammar."""

    def __init__(self, message: str, code: str = ERR_BAD_REQUEST):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Requests


@dataclass(frozen=True, slots=True)
class InfoRequest:
    pass


@dataclass(frozen=True, slots=True)
class NbrsRequest:
    pass


@dataclass(frozen=True, slots=True)
class RecvRequest:
    pass


@dataclass(frozen=True, slots=True)
class SendRequest:
    dest_id: int
    power_mw: Optional[int]
    payload: bytes


@dataclass(frozen=True, slots=True)
class SendBroadcastRequest:
    power_mw: Optional[int]
    payload: bytes


Request = Union[InfoRequest, NbrsRequest, RecvRequest, SendRequest, SendBroadcastRequest]


def _power_token(power_mw: Optional[int]) -> str:
    if power_mw is None:
        return "-"
    if not 1 <= power_mw <= 255:
        raise ValueError("power must be in [1, 255] mW")
    return str(power_mw)


def _parse_power_token(token: str) -> Optional[int]:
    if token == "-":
        return None
    try:
        power = int(token, 10)
    except ValueError:
        raise ProtocolError("power token must be an integer or '-'") from None
    if not 1 <= power <= 255:
        raise ProtocolError("power must be in [1, 255] mW")
    return power


def _parse_payload_token(token: str) -> bytes:
    try:
        payload = base64.b64decode(token.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError):
        raise ProtocolError("payload token is not valid base64") from None
    if len(payload) > codec.MAX_PAYLOAD:
        raise ProtocolError("payload exceeds %d octets" % codec.MAX_PAYLOAD, code=ERR_OVERSIZE)
    return payload


def _payload_token(payload: bytes) -> str:
    if len(payload) > codec.MAX_PAYLOAD:
        raise ValueError("payload exceeds %d octets" % codec.MAX_PAYLOAD)
    return base64.b64encode(payload).decode("ascii")


def render_request(request: Request) -> bytes:
    if isinstance(request, InfoRequest):
        line = "INFO"
    elif isinstance(request, NbrsRequest):
        line = "NBRS"
    elif isinstance(request, RecvRequest):
        line = "RECV"
    elif isinstance(request, SendRequest):
        line = "SEND %s %s %s" % (
            codec.hex_id(request.dest_id),
            _power_token(request.power_mw),
            _payload_token(request.payload),
        )
    elif isinstance(request, SendBroadcastRequest):
        line = "SENDB %s %s" % (_power_token(request.power_mw), _payload_token(request.payload))
    else:
        raise TypeError("not a request: %r" % (request,))
    return (line + "\n").encode("utf-8")


def _split_line(data: bytes) -> list[str]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ProtocolError("datagram is not UTF-8") from None
    if not text.endswith("\n"):
        raise ProtocolError("datagram must end with LF")
    body = text[:-1]
    if "\n" in body:
        raise ProtocolError("request must be a single line")
    return body.split(" ")


def parse_request(data: bytes) -> Request:
    tokens = _split_line(data)
    verb = tokens[0]
    if verb == "INFO" and len(tokens) == 1:
        return InfoRequest()
    if verb == "NBRS" and len(tokens) == 1:
        return NbrsRequest()
    if verb == "RECV" and len(tokens) == 1:
        return RecvRequest()
    if verb == "SEND":
        if len(tokens) != 4:
            raise ProtocolError("SEND takes destination, power, payload")
        try:
            dest = codec.parse_hex_id(tokens[1])
        except ValueError as exc:
            raise ProtocolError(str(exc)) from None
        return SendRequest(dest, _parse_power_token(tokens[2]), _parse_payload_token(tokens[3]))
    if verb == "SENDB":
        if len(tokens) != 3:
            raise ProtocolError("SENDB takes power, payload")
        return SendBroadcastRequest(_parse_power_token(tokens[1]), _parse_payload_token(tokens[2]))
    raise ProtocolError("unknown request %r" % verb)


# ---------------------------------------------------------------------------
# Replies


@dataclass(frozen=True, slots=True)
class InfoReply:
    values: tuple[tuple[str, str], ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.values)


@dataclass(frozen=True, slots=True)
class OkReply:
    pass


@dataclass(frozen=True, slots=True)
class EmptyReply:
    pass


@dataclass(frozen=True, slots=True)
class ErrorReply:
    code: str
    text: str


@dataclass(frozen=True, slots=True)
class MsgReply:
    sender_id: int
    sender_name: str
    payload: bytes


@dataclass(frozen=True, slots=True)
class NbrsPowerRow:
    power_mw: int
    state: str
    received: int
    window: int
    rssi_dbm: Optional[int]
    consecutive_losses: int


@dataclass(frozen=True, slots=True)
class NbrsTwoHop:
    target_id: int
    min_power_mw: Optional[int]
    rssi_dbm: Optional[int]
    lost: bool


@dataclass(frozen=True, slots=True)
class NbrsNeighbor:
    id: int
    name: Optional[str]
    state: str
    beacon_period_ms: int
    mac: bytes
    min_power_mw: Optional[int]
    rows: tuple[NbrsPowerRow, ...] = ()
    two_hop: tuple[NbrsTwoHop, ...] = ()


@dataclass(frozen=True, slots=True)
class NbrsReply:
    neighbors: tuple[NbrsNeighbor, ...]


Reply = Union[InfoReply, OkReply, EmptyReply, ErrorReply, MsgReply, NbrsReply]


def _rssi_token(rssi_dbm: Optional[int]) -> str:
    return "n/a" if rssi_dbm is None else str(rssi_dbm)


def _parse_rssi_token(token: str) -> Optional[int]:
    if token == "n/a":
        return None
    try:
        return int(token, 10)
    except ValueError:
        raise ProtocolError("RSSI token must be an integer or 'n/a'") from None


def _min_power_token(power: Optional[int]) -> str:
    return "-" if power is None else str(power)


def _parse_min_power_token(token: str) -> Optional[int]:
    if token == "-":
        return None
    try:
        power = int(token, 10)
    except ValueError:
        raise ProtocolError("min-power token must be an integer or '-'") from None
    if power < 1:
        raise ProtocolError("min-power must be >= 1 mW")
    return power


def _parse_state_token(token: str) -> str:
    if token not in (ACTIVE, DEAD):
        raise ProtocolError("state must be Active or Dead")
    return token


def render_reply(reply: Reply) -> bytes:
    if isinstance(reply, OkReply):
        return b"OK\n"
    if isinstance(reply, EmptyReply):
        return b"EMPTY\n"
    if isinstance(reply, ErrorReply):
        return ("ERR %s %s\n" % (reply.code, reply.text)).encode("utf-8")
    if isinstance(reply, InfoReply):
        parts = ["INFO"] + ["%s=%s" % kv for kv in reply.values]
        return (" ".join(parts) + "\n").encode("utf-8")
    if isinstance(reply, MsgReply):
        line = "MSG %s %s %s" % (
            codec.hex_id(reply.sender_id),
            reply.sender_name,
            _payload_token(reply.payload),
        )
        return (line + "\n").encode("utf-8")
    if isinstance(reply, NbrsReply):
        lines = ["NBRS %d" % len(reply.neighbors)]
        for n in reply.neighbors:
            lines.append(
                "N %s %s %s %d %s %s"
                % (
                    codec.hex_id(n.id),
                    n.name if n.name is not None else UNKNOWN_NAME_TOKEN,
                    n.state,
                    n.beacon_period_ms,
                    codec.format_mac(n.mac),
                    _min_power_token(n.min_power_mw),
                )
            )
            for row in n.rows:
                lines.append(
                    "P %d %s %d/%d %s %d"
                    % (
                        row.power_mw,
                        row.state,
                        row.received,
                        row.window,
                        _rssi_token(row.rssi_dbm),
                        row.consecutive_losses,
                    )
                )
            for th in n.two_hop:
                lines.append(
                    "T %s %s %s %s"
                    % (
                        codec.hex_id(th.target_id),
                        _min_power_token(th.min_power_mw),
                        _rssi_token(th.rssi_dbm),
                        "lost" if th.lost else "ok",
                    )
                )
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise TypeError("not a reply: %r" % (reply,))


def _parse_hex_token(token: str) -> int:
    try:
        return codec.parse_hex_id(token)
    except ValueError as exc:
        raise ProtocolError(str(exc)) from None


def _parse_nbrs(lines: list[str]) -> NbrsReply:
    header = lines[0].split(" ")
    if len(header) != 2:
        raise ProtocolError("malformed NBRS header")
    try:
        count = int(header[1], 10)
    except ValueError:
        raise ProtocolError("malformed NBRS count") from None
    neighbors: list[NbrsNeighbor] = []
    current: Optional[dict] = None

    def finish() -> None:
        if current is not None:
            neighbors.append(
                NbrsNeighbor(
                    id=current["id"],
                    name=current["name"],
                    state=current["state"],
                    beacon_period_ms=current["period"],
                    mac=current["mac"],
                    min_power_mw=current["min_power"],
                    rows=tuple(current["rows"]),
                    two_hop=tuple(current["two_hop"]),
                )
            )

    for line in lines[1:]:
        tokens = line.split(" ")
        tag = tokens[0]
        if tag == "N":
            if len(tokens) != 7:
                raise ProtocolError("malformed N line")
            finish()
            try:
                mac = codec.parse_mac(tokens[5])
            except ValueError as exc:
                raise ProtocolError(str(exc)) from None
            try:
                period = int(tokens[4], 10)
            except ValueError:
                raise ProtocolError("malformed period") from None
            current = {
                "id": _parse_hex_token(tokens[1]),
                "name": None if tokens[2] == UNKNOWN_NAME_TOKEN else tokens[2],
                "state": _parse_state_token(tokens[3]),
                "period": period,
                "mac": mac,
                "min_power": _parse_min_power_token(tokens[6]),
                "rows": [],
                "two_hop": [],
            }
        elif tag == "P":
            if current is None or len(tokens) != 6:
                raise ProtocolError("malformed P line")
            recv_window = tokens[3].split("/")
            if len(recv_window) != 2:
                raise ProtocolError("malformed recv/window token")
            try:
                power = int(tokens[1], 10)
                received, window = int(recv_window[0], 10), int(recv_window[1], 10)
                losses = int(tokens[5], 10)
            except ValueError:
                raise ProtocolError("malformed P line numbers") from None
            current["rows"].append(
                NbrsPowerRow(
                    power_mw=power,
                    state=_parse_state_token(tokens[2]),
                    received=received,
                    window=window,
                    rssi_dbm=_parse_rssi_token(tokens[4]),
                    consecutive_losses=losses,
                )
            )
        elif tag == "T":
            if current is None or len(tokens) != 5:
                raise ProtocolError("malformed T line")
            if tokens[4] not in ("ok", "lost"):
                raise ProtocolError("two-hop status must be ok or lost")
            current["two_hop"].append(
                NbrsTwoHop(
                    target_id=_parse_hex_token(tokens[1]),
                    min_power_mw=_parse_min_power_token(tokens[2]),
                    rssi_dbm=_parse_rssi_token(tokens[3]),
                    lost=tokens[4] == "lost",
                )
            )
        else:
            raise ProtocolError("unknown NBRS line tag %r" % tag)
    finish()
    if len(neighbors) != count:
        raise ProtocolError("NBRS count %d does not match %d entries" % (count, len(neighbors)))
    return NbrsReply(tuple(neighbors))


def parse_reply(data: bytes) -> Reply:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ProtocolError("datagram is not UTF-8") from None
    if not text.endswith("\n"):
        raise ProtocolError("datagram must end with LF")
    lines = text[:-1].split("\n")
    first = lines[0].split(" ")
    verb = first[0]
    if verb == "NBRS":
        return _parse_nbrs(lines)
    if len(lines) != 1:
        raise ProtocolError("only NBRS replies span multiple lines")
    if verb == "OK" and len(first) == 1:
        return OkReply()
    if verb == "EMPTY" and len(first) == 1:
        return EmptyReply()
    if verb == "ERR":
        if len(first) < 2:
            raise ProtocolError("ERR needs a code")
        code_and_text = lines[0].split(" ", 2)
        return ErrorReply(code_and_text[1], code_and_text[2] if len(code_and_text) > 2 else "")
    if verb == "INFO":
        values = []
        for token in first[1:]:
            if "=" not in token:
                raise ProtocolError("INFO tokens must be k=v")
            key, value = token.split("=", 1)
            values.append((key, value))
        return InfoReply(tuple(values))
    if verb == "MSG":
        if len(first) != 4:
            raise ProtocolError("malformed MSG reply")
        return MsgReply(_parse_hex_token(first[1]), first[2], _parse_payload_token(first[3]))
    raise ProtocolError("unknown reply %r" % verb)


# ---------------------------------------------------------------------------
# Snapshot serialization


def nbrs_reply_from_snapshot(snapshot: Snapshot) -> NbrsReply:
    """Project the engine's full snapshot onto the wire grammar."""
    neighbors = []
    for e in snapshot.entries:
        rows = tuple(
            NbrsPowerRow(
                power_mw=row.power_mw,
                state=row.state,
                received=row.received_in_window,
                window=row.window_size,
                rssi_dbm=None if row.last_rssi_dbm is None else round(row.last_rssi_dbm),
                consecutive_losses=row.consecutive_losses,
            )
            for row in e.rows
        )
        two_hop = tuple(
            NbrsTwoHop(t.target_id, t.min_power_mw, t.rssi_dbm, t.lost) for t in e.two_hop
        )
        neighbors.append(
            NbrsNeighbor(
                id=e.id,
                name=e.name,
                state=e.state,
                beacon_period_ms=e.beacon_period_ms,
                mac=e.mac,
                min_power_mw=e.min_rx_power_mw,
                rows=rows,
                two_hop=two_hop,
            )
        )
    return NbrsReply(tuple(neighbors))
