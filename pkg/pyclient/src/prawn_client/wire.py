"""Wire grammar for the engine's client protocol.

Requests are single LF-terminated lines with single-space separators;
binary payloads travel as base64 tokens.  Five requests exist:

    INFO
    NBRS
    RECV
    SEND <16-hex destination id> <power mW | -> <base64 payload>
    SENDB <power mW | -> <base64 payload>

Replies are ``OK``, ``EMPTY``, ``ERR <code> <text>``, ``INFO k=v ...``,
``MSG <16-hex id> <name> <base64>``, or the only multi-line form,
``NBRS <count>`` followed by ``N``/``P``/``T`` detail lines.

Node ids are 64-bit FNV-1a hashes of the node name's UTF-8 octets.
Everything here is pure functions over bytes; no sockets.
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass
from typing import Optional, Union

# One request and one reply per UDP datagram; stay under the IPv4 limit.
MAX_DATAGRAM = 65507

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


class WireError(ValueError):
    """A datagram that does not follow the grammar."""


def node_id_for(name: str) -> int:
    """64-bit FNV-1a hash of the name's UTF-8 octets."""
    h = _FNV_OFFSET
    for octet in name.encode("utf-8"):
        h = ((h ^ octet) * _FNV_PRIME) & _U64
    return h


# -- reply values ---------------------------------------------------------------

@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Empty:
    pass


@dataclass(frozen=True)
class Error:
    code: str
    text: str


@dataclass(frozen=True)
class Info:
    values: dict


@dataclass(frozen=True)
class Message:
    sender_id: int
    sender: str
    payload: bytes


@dataclass(frozen=True)
class PowerLevel:
    power_mw: int
    state: str
    received: int
    window: int
    rssi_dbm: Optional[int]
    losses: int


@dataclass(frozen=True)
class TwoHopNeighbor:
    target_id: int
    min_power_mw: Optional[int]
    rssi_dbm: Optional[int]
    lost: bool


@dataclass(frozen=True)
class Neighbor:
    id: int
    name: Optional[str]  # None when the engine has no name for the id
    state: str
    period_ms: int
    mac: str
    min_power_mw: Optional[int]
    levels: tuple
    two_hop: tuple


@dataclass(frozen=True)
class NeighborReport:
    neighbors: tuple

    def __iter__(self):
        return iter(self.neighbors)

    def __len__(self):
        return len(self.neighbors)


Reply = Union[Ok, Empty, Error, Info, Message, NeighborReport]


# -- request encoding -----------------------------------------------------------

def _hex_id(node_id: int) -> str:
    if not 0 <= node_id <= _U64:
        raise ValueError("node id must fit in 64 bits")
    return "%016X" % node_id


def _power_text(power_mw: Optional[int]) -> str:
    if power_mw is None:
        return "-"
    if not isinstance(power_mw, int) or not 1 <= power_mw <= 255:
        raise ValueError("power must be an integer in [1, 255] mW")
    return str(power_mw)


def _finish(line: str) -> bytes:
    datagram = (line + "\n").encode("utf-8")
    if len(datagram) > MAX_DATAGRAM:
        raise ValueError("request exceeds one UDP datagram")
    return datagram


def encode_info() -> bytes:
    return b"INFO\n"


def encode_neighbors() -> bytes:
    return b"NBRS\n"


def encode_receive() -> bytes:
    return b"RECV\n"


def encode_send(dest_id: int, power_mw: Optional[int], payload: bytes) -> bytes:
    token = base64.b64encode(payload).decode("ascii")
    return _finish("SEND %s %s %s" % (_hex_id(dest_id), _power_text(power_mw), token))


def encode_send_broadcast(power_mw: Optional[int], payload: bytes) -> bytes:
    token = base64.b64encode(payload).decode("ascii")
    return _finish("SENDB %s %s" % (_power_text(power_mw), token))


# -- reply decoding -------------------------------------------------------------

def _parse_id(token: str) -> int:
    if len(token) != 16:
        raise WireError("node id must be 16 hex digits")
    try:
        return int(token, 16)
    except ValueError:
        raise WireError("bad node id %r" % token) from None


def _parse_payload(token: str) -> bytes:
    try:
        return base64.b64decode(token.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError):
        raise WireError("payload token is not valid base64") from None


def _parse_optional_int(token: str, none_token: str, what: str) -> Optional[int]:
    if token == none_token:
        return None
    try:
        return int(token, 10)
    except ValueError:
        raise WireError("bad %s %r" % (what, token)) from None


def _parse_state(token: str) -> str:
    if token not in ("Active", "Dead"):
        raise WireError("bad state %r" % token)
    return token


def _parse_neighbors(lines: list[str]) -> NeighborReport:
    head = lines[0].split(" ")
    if len(head) != 2 or not head[1].isdigit():
        raise WireError("bad NBRS header")
    count = int(head[1], 10)
    neighbors: list[Neighbor] = []
    pending: Optional[dict] = None

    def close() -> None:
        if pending is not None:
            neighbors.append(
                Neighbor(
                    id=pending["id"],
                    name=pending["name"],
                    state=pending["state"],
                    period_ms=pending["period"],
                    mac=pending["mac"],
                    min_power_mw=pending["min_power"],
                    levels=tuple(pending["levels"]),
                    two_hop=tuple(pending["two_hop"]),
                )
            )

    for line in lines[1:]:
        fields = line.split(" ")
        if fields[0] == "N" and len(fields) == 7:
            close()
            if not fields[4].isdigit():
                raise WireError("bad beacon period %r" % fields[4])
            pending = {
                "id": _parse_id(fields[1]),
                "name": None if fields[2] == "?" else fields[2],
                "state": _parse_state(fields[3]),
                "period": int(fields[4], 10),
                "mac": fields[5],
                "min_power": _parse_optional_int(fields[6], "-", "min power"),
                "levels": [],
                "two_hop": [],
            }
        elif fields[0] == "P" and len(fields) == 6 and pending is not None:
            received, slash, window = fields[3].partition("/")
            if slash != "/" or not received.isdigit() or not window.isdigit():
                raise WireError("bad received/window %r" % fields[3])
            pending["levels"].append(
                PowerLevel(
                    power_mw=int(fields[1], 10),
                    state=_parse_state(fields[2]),
                    received=int(received, 10),
                    window=int(window, 10),
                    rssi_dbm=_parse_optional_int(fields[4], "n/a", "RSSI"),
                    losses=int(fields[5], 10),
                )
            )
        elif fields[0] == "T" and len(fields) == 5 and pending is not None:
            if fields[4] not in ("ok", "lost"):
                raise WireError("bad two-hop status %r" % fields[4])
            pending["two_hop"].append(
                TwoHopNeighbor(
                    target_id=_parse_id(fields[1]),
                    min_power_mw=_parse_optional_int(fields[2], "-", "min power"),
                    rssi_dbm=_parse_optional_int(fields[3], "n/a", "RSSI"),
                    lost=fields[4] == "lost",
                )
            )
        else:
            raise WireError("bad NBRS line %r" % line)
    close()
    if len(neighbors) != count:
        raise WireError("NBRS announced %d neighbors, carried %d" % (count, len(neighbors)))
    return NeighborReport(tuple(neighbors))


def parse_reply(datagram: bytes) -> Reply:
    try:
        text = datagram.decode("utf-8")
    except UnicodeDecodeError:
        raise WireError("reply is not UTF-8") from None
    if not text.endswith("\n"):
        raise WireError("reply must end with LF")
    lines = text[:-1].split("\n")
    fields = lines[0].split(" ")
    kind = fields[0]
    if kind == "NBRS":
        return _parse_neighbors(lines)
    if len(lines) != 1:
        raise WireError("only NBRS replies are multi-line")
    if kind == "OK" and len(fields) == 1:
        return Ok()
    if kind == "EMPTY" and len(fields) == 1:
        return Empty()
    if kind == "ERR" and len(fields) >= 2:
        rest = lines[0].split(" ", 2)
        return Error(rest[1], rest[2] if len(rest) == 3 else "")
    if kind == "INFO":
        values = {}
        for token in fields[1:]:
            key, eq, value = token.partition("=")
            if eq != "=" or not key:
                raise WireError("INFO fields must be key=value")
            values[key] = value
        return Info(values)
    if kind == "MSG" and len(fields) == 4:
        return Message(_parse_id(fields[1]), fields[2], _parse_payload(fields[3]))
    raise WireError("unrecognized reply %r" % lines[0])
