"""Per-neighbor, per-transmit-power link statistics.

The table tracks, for every neighbor and every transmit power its
beacons arrive at: a sliding window of the last W expected-beacon
outcomes (the packet error rate source), last sequence number and
arrival time, measured signal strength, and an Active/Dead row state
driven by consecutive losses.  Feedback packets addressed to us feed
the reverse-link fields; overheard feedback addressed to others feeds
the two-hop list.

Loss detection is purely time based: a beacon is lost when the period
announced in the neighbor's own beacon header times out (with a
configurable grace factor), one loss per elapsed period after that.
A row is Dead after `dead_threshold` consecutive losses; an entry is
Dead when every row is Dead.  Dead entries linger for a retention
window so they still appear (marked Dead) in reports, then vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from prawn.codec import RSSI_UNMEASURED, Beacon, FeedbackPacket

ACTIVE = "Active"
DEAD = "Dead"

DEFAULT_PER_WINDOW = 5
DEFAULT_DEAD_THRESHOLD = 3
DEFAULT_GRACE_FACTOR = 1.5
DEFAULT_DEAD_RETENTION_CYCLES = 10
TWO_HOP_STALE_CYCLES = 3


def dbm_to_nanowatts(dbm: float) -> float:
    """Convert a dBm figure to nanowatts: 10^(dbm/10 + 6)."""
    return 10.0 ** (dbm / 10.0 + 6.0)


@dataclass(slots=True)
class LossEvent:
    neighbor_id: int
    power_mw: int
    losses: int
    row_state: str


class PowerLevelStats:
    """Reception bookkeeping for one neighbor at one transmit power."""

    __slots__ = (
        "power_mw",
        "window",
        "window_size",
        "dead_threshold",
        "last_sequence",
        "last_arrival",
        "last_rssi_dbm",
        "max_rssi_dbm_cycle",
        "received_this_cycle",
        "total_received",
        "next_loss_deadline",
    )

    def __init__(self, power_mw: int, window_size: int, dead_threshold: int):
        self.power_mw = power_mw
        self.window: list[bool] = []
        self.window_size = window_size
        self.dead_threshold = dead_threshold
        self.last_sequence = 0
        self.last_arrival = 0
        self.last_rssi_dbm: Optional[float] = None
        self.max_rssi_dbm_cycle: Optional[float] = None
        self.received_this_cycle = 0
        self.total_received = 0
        self.next_loss_deadline = math.inf

    def _append(self, outcome: bool) -> None:
        self.window.append(outcome)
        if len(self.window) > self.window_size:
            del self.window[0]

    def record_received(self, now: int, sequence: int, rssi_dbm: Optional[float], period_ms: int, grace: float) -> None:
        self._append(True)
        self.last_sequence = sequence
        self.last_arrival = now
        self.received_this_cycle += 1
        self.total_received += 1
        if rssi_dbm is not None:
            self.last_rssi_dbm = rssi_dbm
            if self.max_rssi_dbm_cycle is None or rssi_dbm > self.max_rssi_dbm_cycle:
                self.max_rssi_dbm_cycle = rssi_dbm
        self.next_loss_deadline = now + grace * max(1, period_ms)

    def record_losses(self, now: int, period_ms: int) -> int:
        """Append one loss per deadline strictly passed (deadline, deadline+P, ...)."""
        if now <= self.next_loss_deadline:
            return 0
        period = max(1, period_ms)
        diff = now - self.next_loss_deadline
        # Count deadlines d = D + k*P with now > d; a diff landing exactly on
        # a period boundary has not passed that boundary's deadline yet.
        elapsed = int(diff // period) if diff % period == 0 else math.floor(diff / period) + 1
        for _ in range(min(elapsed, self.window_size)):
            self._append(False)
        self.next_loss_deadline += elapsed * period
        return elapsed

    @property
    def consecutive_losses(self) -> int:
        run = 0
        for outcome in reversed(self.window):
            if outcome:
                break
            run += 1
        return run

    @property
    def received_in_window(self) -> int:
        return sum(self.window)

    @property
    def per(self) -> Fraction:
        return Fraction(self.window_size - self.received_in_window, self.window_size)

    @property
    def state(self) -> str:
        return DEAD if self.consecutive_losses >= self.dead_threshold else ACTIVE


@dataclass(slots=True)
class TwoHopEntry:
    target_id: int
    min_power_mw: Optional[int]
    rssi_dbm: Optional[int]
    last_seen: int
    lost: bool = False


class NeighborEntry:
    """Everything known about one one-hop neighbor."""

    __slots__ = (
        "id",
        "name",
        "mac",
        "network_address",
        "beacon_period_ms",
        "per_power",
        "min_rx_power_mw",
        "reverse_min_power_mw",
        "reverse_max_rssi_dbm",
        "two_hop",
        "dead_since",
        "first_seen",
    )

    def __init__(self, node_id: int, name: Optional[str], mac: bytes, address, period_ms: int, now: int):
        self.id = node_id
        self.name = name
        self.mac = mac
        self.network_address = address
        self.beacon_period_ms = period_ms
        self.per_power: dict[int, PowerLevelStats] = {}
        self.min_rx_power_mw: Optional[int] = None
        self.reverse_min_power_mw: Optional[int] = None
        self.reverse_max_rssi_dbm: Optional[int] = None
        self.two_hop: dict[int, TwoHopEntry] = {}
        self.dead_since: Optional[int] = None
        self.first_seen = now

    @property
    def state(self) -> str:
        rows = self.per_power.values()
        return DEAD if rows and all(r.state == DEAD for r in rows) else ACTIVE

    def per(self, power_mw: int) -> Fraction:
        row = self.per_power.get(power_mw)
        if row is None:
            raise ValueError("no statistics for power %d mW" % power_mw)
        return row.per


# Snapshot structures: a frozen, serializable view of the table,
# deterministically ordered (entries by id, rows by power, two-hop by target).

@dataclass(frozen=True, slots=True)
class SnapshotPowerRow:
    power_mw: int
    state: str
    received_in_window: int
    window_size: int
    per: Fraction
    last_rssi_dbm: Optional[float]
    consecutive_losses: int
    last_sequence: int
    total_received: int
    last_arrival_ms: int


@dataclass(frozen=True, slots=True)
class SnapshotTwoHop:
    target_id: int
    min_power_mw: Optional[int]
    rssi_dbm: Optional[int]
    lost: bool


@dataclass(frozen=True, slots=True)
class SnapshotEntry:
    id: int
    name: Optional[str]
    state: str
    mac: bytes
    beacon_period_ms: int
    min_rx_power_mw: Optional[int]
    reverse_min_power_mw: Optional[int]
    reverse_max_rssi_dbm: Optional[int]
    rows: tuple[SnapshotPowerRow, ...]
    two_hop: tuple[SnapshotTwoHop, ...]


@dataclass(frozen=True, slots=True)
class Snapshot:
    self_id: int
    self_name: str
    at_ms: int
    entries: tuple[SnapshotEntry, ...]


class NeighborTable:
    """Single-owner neighbor state; every mutation carries the caller's clock."""

    def __init__(
        self,
        self_id: int,
        self_name: str,
        *,
        per_window: int = DEFAULT_PER_WINDOW,
        dead_threshold: int = DEFAULT_DEAD_THRESHOLD,
        grace_factor: float = DEFAULT_GRACE_FACTOR,
        dead_retention_cycles: int = DEFAULT_DEAD_RETENTION_CYCLES,
        name_resolver: Optional[Callable[[int], Optional[str]]] = None,
    ):
        if per_window < 1:
            raise ValueError("PER window must be >= 1")
        if dead_threshold < 1:
            raise ValueError("dead threshold must be >= 1")
        self.self_id = self_id
        self.self_name = self_name
        self.per_window = per_window
        self.dead_threshold = dead_threshold
        self.grace_factor = grace_factor
        self.dead_retention_cycles = dead_retention_cycles
        self.name_resolver = name_resolver or (lambda _id: None)
        self.entries: dict[int, NeighborEntry] = {}
        self.counters = {"feedback_from_unknown": 0}
        self._by_address: dict = {}
        self._last_tick = -1

    # -- lookups ---------------------------------------------------------

    def lookup(self, node_id: int) -> Optional[NeighborEntry]:
        return self.entries.get(node_id)

    def lookup_by_address(self, address) -> Optional[NeighborEntry]:
        node_id = self._by_address.get(address)
        return self.entries.get(node_id) if node_id is not None else None

    # -- mutations -------------------------------------------------------

    def record_beacon(self, beacon: Beacon, source, rssi_dbm: Optional[float], now: int) -> NeighborEntry:
        entry = self.entries.get(beacon.transmitter_id)
        if entry is None:
            entry = NeighborEntry(
                beacon.transmitter_id,
                self.name_resolver(beacon.transmitter_id),
                beacon.mac,
                source,
                beacon.beacon_period_ms,
                now,
            )
            self.entries[beacon.transmitter_id] = entry
        entry.mac = beacon.mac
        entry.network_address = source
        entry.beacon_period_ms = beacon.beacon_period_ms
        entry.dead_since = None
        self._by_address[source] = entry.id
        row = entry.per_power.get(beacon.tx_power_mw)
        if row is None:
            row = PowerLevelStats(beacon.tx_power_mw, self.per_window, self.dead_threshold)
            entry.per_power[beacon.tx_power_mw] = row
        row.record_received(now, beacon.sequence, rssi_dbm, beacon.beacon_period_ms, self.grace_factor)
        return entry

    def record_feedback(self, fb: FeedbackPacket, source, now: int) -> None:
        sender = self.lookup_by_address(source)
        if sender is None:
            self.counters["feedback_from_unknown"] += 1
            return
        min_power = fb.min_rx_tx_power_mw or None
        rssi: Optional[int] = None
        if min_power is not None and fb.max_rx_rssi_dbm != RSSI_UNMEASURED:
            rssi = fb.max_rx_rssi_dbm
        if fb.destination_id == self.self_id:
            sender.reverse_min_power_mw = min_power
            sender.reverse_max_rssi_dbm = rssi
            return
        existing = sender.two_hop.get(fb.destination_id)
        if min_power is None:
            # The sender no longer hears the target: keep the entry, flag it.
            if existing is None:
                existing = TwoHopEntry(fb.destination_id, None, None, now, lost=True)
                sender.two_hop[fb.destination_id] = existing
            existing.last_seen = now
            existing.lost = True
        else:
            sender.two_hop[fb.destination_id] = TwoHopEntry(
                fb.destination_id, min_power, rssi, now, lost=False
            )

    def tick(self, now: int) -> list[LossEvent]:
        """Advance time: append due losses, age two-hop entries, purge stale Dead entries."""
        if now <= self._last_tick:
            return []
        self._last_tick = now
        events: list[LossEvent] = []
        for entry in list(self.entries.values()):
            was_alive = entry.state == ACTIVE
            for power in sorted(entry.per_power):
                row = entry.per_power[power]
                lost = row.record_losses(now, entry.beacon_period_ms)
                if lost:
                    events.append(LossEvent(entry.id, power, lost, row.state))
            if entry.state == DEAD:
                if was_alive or entry.dead_since is None:
                    entry.dead_since = now
                retention = self.dead_retention_cycles * max(1, entry.beacon_period_ms)
                if now - entry.dead_since > retention:
                    self._purge(entry)
                    continue
            stale_after = TWO_HOP_STALE_CYCLES * max(1, entry.beacon_period_ms)
            for th in entry.two_hop.values():
                if not th.lost and now - th.last_seen > stale_after:
                    th.lost = True
        return events

    def _purge(self, entry: NeighborEntry) -> None:
        del self.entries[entry.id]
        if self._by_address.get(entry.network_address) == entry.id:
            del self._by_address[entry.network_address]

    def close_cycle(self, now: int) -> list[tuple[int, int, int]]:
        """Latch per-cycle statistics and produce one feedback triple per
        retained neighbor: (destination id, min power or 0, max RSSI octet)."""
        out: list[tuple[int, int, int]] = []
        for node_id in sorted(self.entries):
            entry = self.entries[node_id]
            heard = [p for p, row in entry.per_power.items() if row.received_this_cycle > 0]
            entry.min_rx_power_mw = min(heard) if heard else None
            maxima = [
                entry.per_power[p].max_rssi_dbm_cycle
                for p in heard
                if entry.per_power[p].max_rssi_dbm_cycle is not None
            ]
            if entry.min_rx_power_mw is None:
                rssi_octet = RSSI_UNMEASURED
            elif maxima:
                rssi_octet = max(-127, min(127, round(max(maxima))))
            else:
                rssi_octet = RSSI_UNMEASURED
            for row in entry.per_power.values():
                row.received_this_cycle = 0
                row.max_rssi_dbm_cycle = None
            out.append((node_id, entry.min_rx_power_mw or 0, rssi_octet))
        return out

    # -- deadlines for the engine's timer --------------------------------

    def next_deadline(self) -> Optional[int]:
        """Earliest engine-clock ms at which tick() would change state."""
        best: Optional[float] = None
        for entry in self.entries.values():
            period = max(1, entry.beacon_period_ms)
            for row in entry.per_power.values():
                if row.next_loss_deadline is not math.inf:
                    d = math.floor(row.next_loss_deadline) + 1
                    best = d if best is None else min(best, d)
            if entry.dead_since is not None:
                d = entry.dead_since + self.dead_retention_cycles * period + 1
                best = d if best is None else min(best, d)
            stale_after = TWO_HOP_STALE_CYCLES * period
            for th in entry.two_hop.values():
                if not th.lost:
                    d = th.last_seen + stale_after + 1
                    best = d if best is None else min(best, d)
        return int(best) if best is not None else None

    # -- reporting --------------------------------------------------------

    def snapshot(self, now: int) -> Snapshot:
        entries = []
        for node_id in sorted(self.entries):
            e = self.entries[node_id]
            rows = tuple(
                SnapshotPowerRow(
                    power_mw=p,
                    state=row.state,
                    received_in_window=row.received_in_window,
                    window_size=row.window_size,
                    per=row.per,
                    last_rssi_dbm=row.last_rssi_dbm,
                    consecutive_losses=row.consecutive_losses,
                    last_sequence=row.last_sequence,
                    total_received=row.total_received,
                    last_arrival_ms=row.last_arrival,
                )
                for p, row in sorted(e.per_power.items())
            )
            two_hop = tuple(
                SnapshotTwoHop(t.target_id, t.min_power_mw, t.rssi_dbm, t.lost)
                for _, t in sorted(e.two_hop.items())
            )
            entries.append(
                SnapshotEntry(
                    id=e.id,
                    name=e.name,
                    state=e.state,
                    mac=e.mac,
                    beacon_period_ms=e.beacon_period_ms,
                    min_rx_power_mw=e.min_rx_power_mw,
                    reverse_min_power_mw=e.reverse_min_power_mw,
                    reverse_max_rssi_dbm=e.reverse_max_rssi_dbm,
                    rows=rows,
                    two_hop=two_hop,
                )
            )
        return Snapshot(self.self_id, self.self_name, now, tuple(entries))
