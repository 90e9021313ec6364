"""Request/reply session against a running engine.

A session owns one UDP socket and performs one outstanding request at
a time; run parallel sessions for parallel work.  All failures land in
``last_error`` as well as being raised, so quick scripts can poll it.
"""

from __future__ import annotations

import socket
from typing import Optional, Union

from . import wire

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 3020


class ClientError(Exception):
    """Base class for everything this library raises on purpose."""


class RequestTimeout(ClientError):
    """The engine did not answer within the session timeout."""


class ReplyError(ClientError):
    """The engine answered with ERR."""

    def __init__(self, code: str, text: str):
        super().__init__("%s: %s" % (code, text))
        self.code = code
        self.text = text


def _as_node_id(dest: Union[str, int]) -> int:
    if isinstance(dest, str):
        return wire.node_id_for(dest)
    if isinstance(dest, int) and 0 <= dest < (1 << 64):
        return dest
    raise ValueError("destination must be a node name or a 64-bit id")


def _as_payload(message: Union[str, bytes, bytearray]) -> bytes:
    if isinstance(message, str):
        return message.encode("utf-8")
    if isinstance(message, (bytes, bytearray)):
        return bytes(message)
    raise ValueError("message must be text or octets")


class ClientSession:
    """Five-primitive client for one engine endpoint."""

    def __init__(self, host: str = DEFAULT_HOST, port: int = DEFAULT_PORT,
                 timeout_ms: int = 1000):
        self.endpoint = (host, port)
        self.timeout_ms = timeout_ms
        self.last_error: Optional[Exception] = None
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.connect(self.endpoint)
        self._sock.settimeout(timeout_ms / 1000.0)

    # -- plumbing ---------------------------------------------------------

    def _roundtrip(self, datagram: bytes) -> wire.Reply:
        self.last_error = None
        try:
            self._sock.send(datagram)
            raw = self._sock.recv(wire.MAX_DATAGRAM + 28)
            reply = wire.parse_reply(raw)
        except socket.timeout:
            self.last_error = RequestTimeout("no reply from %s:%d" % self.endpoint)
            raise self.last_error from None
        except wire.WireError as exc:
            self.last_error = ClientError("unparseable reply: %s" % exc)
            raise self.last_error from None
        if isinstance(reply, wire.Error):
            self.last_error = ReplyError(reply.code, reply.text)
            raise self.last_error
        return reply

    def _expect(self, datagram: bytes, kind) -> wire.Reply:
        reply = self._roundtrip(datagram)
        if not isinstance(reply, kind):
            self.last_error = ClientError("unexpected reply %r" % (reply,))
            raise self.last_error
        return reply

    # -- the five primitives ----------------------------------------------

    def info(self) -> dict:
        reply = self._expect(wire.encode_info(), wire.Info)
        return dict(reply.values)

    def neighbors(self) -> wire.NeighborReport:
        return self._expect(wire.encode_neighbors(), wire.NeighborReport)

    def send(self, message: Union[str, bytes], dest: Union[str, int],
             power_mw: Optional[int] = None) -> None:
        datagram = wire.encode_send(_as_node_id(dest), power_mw, _as_payload(message))
        self._expect(datagram, wire.Ok)

    def send_broadcast(self, message: Union[str, bytes],
                       power_mw: Optional[int] = None) -> None:
        self._expect(wire.encode_send_broadcast(power_mw, _as_payload(message)), wire.Ok)

    def receive(self) -> Optional[wire.Message]:
        """Next queued message, or None when the queue is empty."""
        reply = self._roundtrip(wire.encode_receive())
        if isinstance(reply, wire.Empty):
            return None
        if isinstance(reply, wire.Message):
            return reply
        self.last_error = ClientError("unexpected reply %r" % (reply,))
        raise self.last_error

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
