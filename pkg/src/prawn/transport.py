"""Frame transports: a real UDP-broadcast backend and a simulated radio medium.

The engine only ever calls ``send(frame, dest, tx_power_mw)`` where
``dest`` is an opaque transport address (``None`` means broadcast), so
the same engine runs over real sockets or under the simulator.

The medium model is log-distance path loss with a sensitivity
threshold and optional seeded Bernoulli loss:

    rssi(p, d) = 10*log10(p_mw) - pl0_db - 10*n*log10(d)

referenced at d0 = 1 m; distances below the reference are treated as
1 m (the model is undefined closer in).  A frame is delivered when its
RSSI at the receiver clears the sensitivity threshold.
"""

from __future__ import annotations

import logging
import math
import random
import socket
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

log = logging.getLogger("prawn.transport")

MAX_FRAME = 65507  # largest UDP payload we will hand to the OS

DEFAULT_PL0_DB = 40.0
DEFAULT_EXPONENT_N = 3.0
DEFAULT_SENSITIVITY_DBM = -80.0


@dataclass(frozen=True, slots=True)
class RxMeta:
    """Receive-side metadata attached to every incoming frame."""

    source: object
    rssi_dbm: Optional[float]
    arrival: int


def mw_to_dbm(p_mw: float) -> float:
    if p_mw <= 0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(p_mw)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass
class MediumModel:
    """Shared radio state for simulated nodes."""

    pl0_db: float = DEFAULT_PL0_DB
    exponent_n: float = DEFAULT_EXPONENT_N
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM
    loss_prob: float = 0.0
    seed: int = 0
    propagation_delay_ms: int = 0
    positions: dict = field(default_factory=dict)
    # Optional scripted drop rule: (frame, tx_node, rx_node) -> True to drop.
    drop_filter: Optional[Callable[[bytes, object, object], bool]] = None

    def __post_init__(self) -> None:
        if self.exponent_n <= 0:
            raise ValueError("path-loss exponent must be > 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss probability must be in [0, 1]")
        self._rng = random.Random(self.seed)

    def set_position(self, node, xy: tuple[float, float]) -> None:
        self.positions[node] = (float(xy[0]), float(xy[1]))

    def distance(self, a, b) -> float:
        ax, ay = self.positions[a]
        bx, by = self.positions[b]
        return math.hypot(ax - bx, ay - by)

    def rssi_at(self, tx_power_mw: float, distance_m: float) -> float:
        """Log-distance received power in dBm at the given distance."""
        if distance_m <= 0:
            raise ValueError("distance must be > 0")
        return mw_to_dbm(tx_power_mw) - self.pl0_db - 10.0 * self.exponent_n * math.log10(distance_m)

    def link_rssi(self, tx_node, rx_node, tx_power_mw: float) -> float:
        return self.rssi_at(tx_power_mw, max(1.0, self.distance(tx_node, rx_node)))

    def deliver(self, frame: bytes, tx_node, rx_node, tx_power_mw: float) -> Optional[float]:
        """RSSI at the receiver if the frame arrives, None if it does not."""
        rssi = self.link_rssi(tx_node, rx_node, tx_power_mw)
        if rssi < self.sensitivity_dbm:
            return None
        if self.loss_prob > 0.0 and self._rng.random() < self.loss_prob:
            return None
        if self.drop_filter is not None and self.drop_filter(frame, tx_node, rx_node):
            return None
        return rssi


def interface_broadcast_address(interface: str) -> Optional[str]:
    """Ask the kernel for an interface's IPv4 broadcast address."""
    try:
        import fcntl  # not available off-POSIX; broadcast falls back below
    except ImportError:
        return None
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        packed = struct.pack("256s", interface[:15].encode())
        info = fcntl.ioctl(s.fileno(), 0x8919, packed)  # SIOCGIFBRDADDR
        return socket.inet_ntoa(info[20:24])
    except OSError:
        return None
    finally:
        s.close()


class UdpTransport:
    """Real datagram backend on the neighbor port.

    Wired links cannot attenuate, so the requested transmit power is
    carried only inside the frame and RSSI is reported absent.  A
    desk-scale deployment can pass explicit ``broadcast_targets`` to
    fan out broadcasts by unicast (loopback networks drop genuine
    broadcast datagrams).
    """

    def __init__(
        self,
        host: str,
        port: int,
        *,
        interface: Optional[str] = None,
        broadcast_targets: Optional[list[tuple[str, int]]] = None,
    ):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
        try:
            self._sock.bind((host, port))
        except OSError:
            self._sock.close()
            raise
        self._sock.setblocking(False)
        self.broadcast_targets = list(broadcast_targets) if broadcast_targets else None
        self._broadcast_addr: Optional[str] = None
        if self.broadcast_targets is None:
            if interface:
                self._broadcast_addr = interface_broadcast_address(interface)
            if self._broadcast_addr is None:
                self._broadcast_addr = "255.255.255.255"

    @property
    def local_address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def fileno(self) -> int:
        return self._sock.fileno()

    def send(self, frame: bytes, dest: Optional[tuple[str, int]], tx_power_mw: int) -> None:
        if len(frame) > MAX_FRAME:
            raise ValueError("frame exceeds %d octets" % MAX_FRAME)
        if dest is not None:
            self._sock.sendto(frame, dest)
            return
        if self.broadcast_targets is not None:
            for target in self.broadcast_targets:
                self._sock.sendto(frame, target)
        else:
            port = self.local_address[1]
            self._sock.sendto(frame, (self._broadcast_addr, port))

    def recv(self) -> Optional[tuple[bytes, tuple[str, int]]]:
        try:
            return self._sock.recvfrom(MAX_FRAME)
        except BlockingIOError:
            return None

    def close(self) -> None:
        self._sock.close()
