"""Standalone client for the Prawn engine's loopback datagram protocol.

Implements the five primitives (info, neighbors, send, send_broadcast,
receive) over the plain-text wire grammar, with no dependency on the
engine package:

    from prawn_client import ClientSession

    with ClientSession() as node:
        node.send("Hello World", "Bob")
        msg = node.receive()
        if msg:
            print(msg.sender, msg.payload)
"""

from .session import (
    ClientError,
    ClientSession,
    ReplyError,
    RequestTimeout,
)
from .wire import (
    Message,
    Neighbor,
    NeighborReport,
    PowerLevel,
    TwoHopNeighbor,
    WireError,
    node_id_for,
)

__version__ = "0.1.0"

__all__ = [
    "ClientError",
    "ClientSession",
    "Message",
    "Neighbor",
    "NeighborReport",
    "PowerLevel",
    "ReplyError",
    "RequestTimeout",
    "TwoHopNeighbor",
    "WireError",
    "node_id_for",
    "__version__",
]
