"""Prawn: rapid prototyping for wireless mesh protocols.

A beaconing neighbor-discovery engine with per-transmit-power link
statistics, a five-primitive client API served over a loopback
datagram protocol, and a deterministic simulated radio medium for
desk-scale experiments.

Typical entry points:

- run a node: ``python -m prawn -N Alice`` (see ``prawn -h``)
- talk to it: :class:`prawn.PrawnClient`
- simulate a neighborhood: :class:`prawn.sim.SimNet` / ``run_scenario``
"""

from prawn.client import (
    PrawnClient,
    PrawnError,
    PrawnReplyError,
    PrawnTimeout,
    ReceivedMessage,
)
from prawn.codec import (
    Beacon,
    DataPacket,
    FeedbackPacket,
    PacketError,
    node_id_from_name,
    short_hex,
)
from prawn.engine import EngineConfig, EngineRunner, PrawnEngine
from prawn.transport import MediumModel, UdpTransport

__version__ = "0.1.0"

__all__ = [
    "Beacon",
    "DataPacket",
    "EngineConfig",
    "EngineRunner",
    "FeedbackPacket",
    "MediumModel",
    "PacketError",
    "PrawnClient",
    "PrawnEngine",
    "PrawnError",
    "PrawnReplyError",
    "PrawnTimeout",
    "ReceivedMessage",
    "UdpTransport",
    "node_id_from_name",
    "short_hex",
    "__version__",
]
