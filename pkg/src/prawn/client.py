"""Client library: the five application-facing primitives.

Talks to a running engine over loopback UDP using the line-oriented
request grammar.  One datagram per request, one datagram per reply.

    client = PrawnClient()
    client.send_broadcast("Hello World")
    message = client.receive()          # None when nothing is queued
    for neighbor in client.neighbors().neighbors:
        ...

Destinations are given by name (hashed to the 64-bit node id) or as a
raw integer id.  `receive` never blocks on the engine side; the library
applies a one-second socket timeout so a dead engine surfaces as
PrawnTimeout rather than a hang.

A client instance holds one socket and supports one outstanding request
at a time; it is not thread-safe.  Create one instance per thread.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass
from typing import Optional, Union

from . import codec, protocol

DEFAULT_ENDPOINT = ("127.0.0.1", 3020)
DEFAULT_TIMEOUT_MS = 1000


class PrawnError(Exception):
    """Base class for client-side failures."""


class PrawnTimeout(PrawnError):
    """The engine did not reply within the timeout."""


class PrawnReplyError(PrawnError):
    """The engine answered with an error reply."""

    def __init__(self, code: str, text: str):
        super().__init__(f"{code}: {text}")
        self.code = code
        self.text = text


@dataclass(frozen=True, slots=True)
class ReceivedMessage:
    sender_id: int
    sender: str
    payload: bytes


def _resolve_destination(dest: Union[str, int]) -> int:
    if isinstance(dest, int):
        if not 0 <= dest < 2**64:
            raise ValueError("node id out of range")
        return dest
    return codec.node_id_from_name(dest)


def _encode_payload(message: Union[str, bytes]) -> bytes:
    return message.encode() if isinstance(message, str) else bytes(message)


class PrawnClient:
    def __init__(
        self,
        endpoint: tuple = DEFAULT_ENDPOINT,
        *,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
    ) -> None:
        self.endpoint = endpoint
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.settimeout(timeout_ms / 1000.0)

    # Request construction is exposed separately from I/O so the exact
    # datagrams the library produces can be checked without sockets.
    @staticmethod
    def build_info() -> bytes:
        return protocol.render_request(protocol.InfoRequest())

    @staticmethod
    def build_neighbors() -> bytes:
        return protocol.render_request(protocol.NbrsRequest())

    @staticmethod
    def build_receive() -> bytes:
        return protocol.render_request(protocol.RecvRequest())

    @staticmethod
    def build_send(dest: Union[str, int], message: Union[str, bytes],
                   power_mw: Optional[int] = None) -> bytes:
        return protocol.render_request(
            protocol.SendRequest(_resolve_destination(dest), power_mw,
                                 _encode_payload(message))
        )

    @staticmethod
    def build_send_broadcast(message: Union[str, bytes],
                             power_mw: Optional[int] = None) -> bytes:
        return protocol.render_request(
            protocol.SendBroadcastRequest(power_mw, _encode_payload(message))
        )

    def _request(self, datagram: bytes) -> protocol.Reply:
        self._sock.sendto(datagram, self.endpoint)
        try:
            data, _ = self._sock.recvfrom(protocol.MAX_REPLY_SIZE)
        except socket.timeout:
            raise PrawnTimeout(f"no reply from engine at {self.endpoint}") from None
        reply = protocol.parse_reply(data)
        if isinstance(reply, protocol.ErrorReply):
            raise PrawnReplyError(reply.code, reply.text)
        return reply

    # -- the five primitives -------------------------------------------------

    def info(self) -> dict:
        """Engine configuration as a key/value dict (values are strings)."""
        reply = self._request(self.build_info())
        if not isinstance(reply, protocol.InfoReply):
            raise PrawnError(f"unexpected reply {reply!r}")
        return reply.as_dict()

    def neighbors(self) -> protocol.NbrsReply:
        """Current neighbor report: per-power statistics and two-hop entries."""
        reply = self._request(self.build_neighbors())
        if not isinstance(reply, protocol.NbrsReply):
            raise PrawnError(f"unexpected reply {reply!r}")
        return reply

    def send(self, dest: Union[str, int], message: Union[str, bytes],
             power_mw: Optional[int] = None) -> None:
        """Unicast to a discovered neighbor, optionally at a chosen power."""
        reply = self._request(self.build_send(dest, message, power_mw))
        if not isinstance(reply, protocol.OkReply):
            raise PrawnError(f"unexpected reply {reply!r}")

    def send_broadcast(self, message: Union[str, bytes],
                       power_mw: Optional[int] = None) -> None:
        """Broadcast to whoever is in range of the chosen power."""
        reply = self._request(self.build_send_broadcast(message, power_mw))
        if not isinstance(reply, protocol.OkReply):
            raise PrawnError(f"unexpected reply {reply!r}")

    def receive(self) -> Optional[ReceivedMessage]:
        """Pop the oldest queued message, or None when the queue is empty."""
        reply = self._request(self.build_receive())
        if isinstance(reply, protocol.EmptyReply):
            return None
        if not isinstance(reply, protocol.MsgReply):
            raise PrawnError(f"unexpected reply {reply!r}")
        return ReceivedMessage(reply.sender_id, reply.sender_name, reply.payload)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "PrawnClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
