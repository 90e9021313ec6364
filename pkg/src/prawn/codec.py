"""Binary wire formats for the neighbor-discovery protocol.

Three packet kinds travel between nodes, distinguished by their first
octet (type 0 is reserved and never valid on the wire):

  Beacon (24 octets)
      off  0      type, 0x01
      off  1      transmit power, mW, >= 1
      off  2-9    transmitter id, u64 big-endian
      off 10-11   beacon period, ms, u16 big-endian
      off 12-17   MAC address
      off 18-19   sequence number, u16 big-endian
      off 20-23   zero padding

  Data (4 + N octets)
      off  0      type, 0x02
      off  1      transmit power, mW, 0 = sender's default
      off  2-3    payload size N, u16 big-endian
      off  4-     payload

  Feedback (16 octets)
      off  0      type, 0x03
      off  1      unused, encoded 0, ignored on decode
      off  2-9    destination id, u64 big-endian
      off 10      minimum received transmit power, mW, 0 = none this cycle
      off 11      maximum received RSSI, dBm, signed two's complement
      off 12-15   zero padding

All multi-octet integers are big-endian.  A node's id is the 64-bit
FNV-1a hash of its name; consoles abbreviate ids to the low 16 bits
rendered as four hex digits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

PACKET_TYPE_RESERVED = 0
PACKET_TYPE_BEACON = 1
PACKET_TYPE_DATA = 2
PACKET_TYPE_FEEDBACK = 3

BEACON_LEN = 24
FEEDBACK_LEN = 16
DATA_HEADER_LEN = 4
MAX_PAYLOAD = 65535
MAX_NAME_OCTETS = 255

# Feedback RSSI octet value meaning "beacons were heard but the radio
# reported no signal strength" (a real -128 dBm is below thermal noise).
RSSI_UNMEASURED = -128

_BEACON_STRUCT = struct.Struct(">BBQH6sH4x")
_FEEDBACK_STRUCT = struct.Struct(">BBQBb4x")
_DATA_HEADER_STRUCT = struct.Struct(">BBH")

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


class PacketError(ValueError):
    """A frame could not be decoded or a packet field is out of range."""


def node_id_from_name(name: str) -> int:
    """Derive a node's 64-bit id as the FNV-1a hash of its name's octets."""
    data = name.encode("utf-8")
    if not data:
        raise ValueError("node name must be non-empty")
    if len(data) > MAX_NAME_OCTETS:
        raise ValueError("node name exceeds %d octets" % MAX_NAME_OCTETS)
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & _U64_MASK
    return h


def short_hex(node_id: int) -> str:
    """Console display form of an id: low 16 bits as 4 uppercase hex digits."""
    return "%04X" % (node_id & 0xFFFF)


def hex_id(node_id: int) -> str:
    """Full wire-grammar form of an id: 16 uppercase hex digits."""
    if not 0 <= node_id <= _U64_MASK:
        raise ValueError("node id out of 64-bit range")
    return "%016X" % node_id


def parse_hex_id(text: str) -> int:
    """Parse a 16-hex-digit id token (either case)."""
    if len(text) != 16:
        raise ValueError("id token must be 16 hex digits")
    try:
        return int(text, 16)
    except ValueError:
        raise ValueError("id token must be 16 hex digits") from None


def format_mac(mac: bytes) -> str:
    if len(mac) != 6:
        raise ValueError("MAC must be 6 octets")
    return ":".join("%02X" % b for b in mac)


def parse_mac(text: str) -> bytes:
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError("MAC must be 6 colon-separated octets")
    try:
        mac = bytes(int(p, 16) for p in parts)
    except ValueError:
        raise ValueError("MAC octets must be hex") from None
    if any(len(p) != 2 for p in parts):
        raise ValueError("MAC octets must be 2 hex digits each")
    return mac


def _check_range(value: int, lo: int, hi: int, what: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise PacketError("%s must be an integer" % what)
    if not lo <= value <= hi:
        raise PacketError("%s out of range [%d, %d]: %r" % (what, lo, hi, value))


@dataclass(frozen=True, slots=True)
class Beacon:
    tx_power_mw: int
    transmitter_id: int
    beacon_period_ms: int
    mac: bytes
    sequence: int

    def __post_init__(self) -> None:
        _check_range(self.tx_power_mw, 1, 255, "beacon tx power")
        _check_range(self.transmitter_id, 0, _U64_MASK, "transmitter id")
        _check_range(self.beacon_period_ms, 0, 65535, "beacon period")
        _check_range(self.sequence, 0, 65535, "sequence number")
        if not isinstance(self.mac, bytes) or len(self.mac) != 6:
            raise PacketError("MAC must be 6 octets")

    def encode(self) -> bytes:
        return _BEACON_STRUCT.pack(
            PACKET_TYPE_BEACON,
            self.tx_power_mw,
            self.transmitter_id,
            self.beacon_period_ms,
            self.mac,
            self.sequence,
        )


@dataclass(frozen=True, slots=True)
class FeedbackPacket:
    destination_id: int
    min_rx_tx_power_mw: int  # 0 = nothing heard this cycle
    max_rx_rssi_dbm: int

    def __post_init__(self) -> None:
        _check_range(self.destination_id, 0, _U64_MASK, "destination id")
        _check_range(self.min_rx_tx_power_mw, 0, 255, "min rx tx power")
        _check_range(self.max_rx_rssi_dbm, -128, 127, "max rx RSSI")

    def encode(self) -> bytes:
        return _FEEDBACK_STRUCT.pack(
            PACKET_TYPE_FEEDBACK,
            0,
            self.destination_id,
            self.min_rx_tx_power_mw,
            self.max_rx_rssi_dbm,
        )


@dataclass(frozen=True, slots=True)
class DataPacket:
    tx_power_mw: int  # 0 = sender's default power
    payload: bytes

    def __post_init__(self) -> None:
        _check_range(self.tx_power_mw, 0, 255, "data tx power")
        if not isinstance(self.payload, bytes):
            raise PacketError("payload must be bytes")
        if len(self.payload) > MAX_PAYLOAD:
            raise PacketError("payload exceeds %d octets" % MAX_PAYLOAD)

    @property
    def payload_size(self) -> int:
        return len(self.payload)

    def encode(self) -> bytes:
        return (
            _DATA_HEADER_STRUCT.pack(PACKET_TYPE_DATA, self.tx_power_mw, len(self.payload))
            + self.payload
        )


def decode_beacon(frame: bytes) -> Beacon:
    if len(frame) != BEACON_LEN:
        raise PacketError("beacon frame must be %d octets, got %d" % (BEACON_LEN, len(frame)))
    ptype, power, node_id, period, mac, seq = _BEACON_STRUCT.unpack(frame)
    if ptype != PACKET_TYPE_BEACON:
        raise PacketError("not a beacon frame (type %d)" % ptype)
    if power == 0:
        raise PacketError("beacon with zero transmit power")
    return Beacon(power, node_id, period, mac, seq)


def decode_feedback(frame: bytes) -> FeedbackPacket:
    if len(frame) != FEEDBACK_LEN:
        raise PacketError("feedback frame must be %d octets, got %d" % (FEEDBACK_LEN, len(frame)))
    ptype, _unused, dest, min_power, rssi = _FEEDBACK_STRUCT.unpack(frame)
    if ptype != PACKET_TYPE_FEEDBACK:
        raise PacketError("not a feedback frame (type %d)" % ptype)
    return FeedbackPacket(dest, min_power, rssi)


def decode_data(frame: bytes) -> DataPacket:
    if len(frame) < DATA_HEADER_LEN:
        raise PacketError("data frame shorter than its %d-octet header" % DATA_HEADER_LEN)
    ptype, power, size = _DATA_HEADER_STRUCT.unpack(frame[:DATA_HEADER_LEN])
    if ptype != PACKET_TYPE_DATA:
        raise PacketError("not a data frame (type %d)" % ptype)
    actual = len(frame) - DATA_HEADER_LEN
    if size > actual:
        raise PacketError("data frame truncated: declares %d payload octets, has %d" % (size, actual))
    if size < actual:
        raise PacketError("data frame oversized: declares %d payload octets, has %d" % (size, actual))
    return DataPacket(power, frame[DATA_HEADER_LEN:])


def decode_frame(frame: bytes) -> Beacon | FeedbackPacket | DataPacket:
    """Decode any wire frame by its type octet."""
    if not frame:
        raise PacketError("empty frame")
    ptype = frame[0]
    if ptype == PACKET_TYPE_BEACON:
        return decode_beacon(frame)
    if ptype == PACKET_TYPE_DATA:
        return decode_data(frame)
    if ptype == PACKET_TYPE_FEEDBACK:
        return decode_feedback(frame)
    raise PacketError("unknown or reserved packet type %d" % ptype)
