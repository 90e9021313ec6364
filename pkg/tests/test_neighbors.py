"""Neighbor-table behavior: windows, losses, death, feedback, two-hop, snapshots.

Timing expectations are hand-derived from the loss rule: a beacon is
lost when now > last_arrival + grace * period (strictly), one more
loss per further elapsed period, row Dead at `dead_threshold`
consecutive losses.
"""

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prawn import codec
from prawn.neighbors import (
    ACTIVE,
    DEAD,
    NeighborTable,
    dbm_to_nanowatts,
)

BOB = codec.node_id_from_name("Bob")
ALICE = codec.node_id_from_name("Alice")
JOHN = codec.node_id_from_name("John")
PDA = codec.node_id_from_name("PDA")
MAC_A = bytes.fromhex("0014A7FA89C2")
MAC_B = bytes.fromhex("004096A73051")


def table(**kwargs) -> NeighborTable:
    return NeighborTable(BOB, "Bob", **kwargs)


def beacon(node_id=ALICE, power=100, period=1000, seq=0, mac=MAC_A):
    return codec.Beacon(power, node_id, period, mac, seq)


class TestRecordBeacon:
    def test_first_beacon_creates_active_entry(self):
        t = table()
        t.record_beacon(beacon(), "addr-a", -54.0, now=0)
        entry = t.lookup(ALICE)
        assert entry is not None
        assert entry.state == ACTIVE
        assert list(entry.per_power) == [100]
        assert entry.per_power[100].received_in_window == 1

    def test_five_received_shows_5_of_5(self):
        t = table()
        for i in range(5):
            t.record_beacon(beacon(seq=i), "addr-a", -54.0, now=i * 1000)
        row = t.lookup(ALICE).per_power[100]
        assert row.received_in_window == 5
        assert row.window_size == 5
        assert row.per == 0

    def test_beacon_refreshes_period_and_address(self):
        t = table()
        t.record_beacon(beacon(period=1000), "addr-1", None, now=0)
        t.record_beacon(beacon(period=500, seq=1), "addr-2", None, now=400)
        entry = t.lookup(ALICE)
        assert entry.beacon_period_ms == 500
        assert entry.network_address == "addr-2"
        assert t.lookup_by_address("addr-2") is entry

    def test_rows_are_per_power(self):
        t = table()
        t.record_beacon(beacon(power=1), "a", -84.0, now=0)
        t.record_beacon(beacon(power=12, seq=1), "a", -73.0, now=333)
        t.record_beacon(beacon(power=100, seq=2), "a", -64.0, now=666)
        assert sorted(t.lookup(ALICE).per_power) == [1, 12, 100]


class TestLossAndDeath:
    def test_no_loss_before_deadline(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        assert t.tick(1500) == []
        assert t.lookup(ALICE).per_power[100].consecutive_losses == 0

    def test_one_loss_just_past_grace(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        events = t.tick(1501)
        assert len(events) == 1 and events[0].losses == 1
        assert t.lookup(ALICE).per_power[100].consecutive_losses == 1

    def test_one_more_loss_per_period(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        t.tick(1501)
        assert t.tick(2500) == []
        events = t.tick(2501)
        assert len(events) == 1
        assert t.lookup(ALICE).per_power[100].consecutive_losses == 2

    def test_death_after_three_consecutive_losses(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        t.tick(3500)
        entry = t.lookup(ALICE)
        assert entry.per_power[100].consecutive_losses == 2
        assert entry.state == ACTIVE
        t.tick(3501)
        assert entry.per_power[100].consecutive_losses == 3
        assert entry.per_power[100].state == DEAD
        assert entry.state == DEAD

    def test_late_tick_appends_all_elapsed_losses(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        events = t.tick(4700)  # deadline 1500, then 2500, 3500 elapsed
        assert events[0].losses == 4
        assert t.lookup(ALICE).state == DEAD

    def test_beacon_revives_dead_row(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        t.tick(3501)
        assert t.lookup(ALICE).state == DEAD
        t.record_beacon(beacon(seq=9), "a", None, now=4000)
        entry = t.lookup(ALICE)
        assert entry.state == ACTIVE
        assert entry.per_power[100].consecutive_losses == 0
        assert entry.dead_since is None

    def test_entry_dead_only_when_all_rows_dead(self):
        t = table()
        t.record_beacon(beacon(power=1), "a", None, now=0)
        t.record_beacon(beacon(power=100, seq=1), "a", None, now=666)
        # Only 1 mW beacons stop; 100 mW keeps arriving.
        for i in range(2, 8):
            t.record_beacon(beacon(power=100, seq=i), "a", None, now=666 + (i - 1) * 1000)
            t.tick(700 + (i - 1) * 1000)
        entry = t.lookup(ALICE)
        assert entry.per_power[1].state == DEAD
        assert entry.per_power[100].state == ACTIVE
        assert entry.state == ACTIVE

    def test_monotone_tick_is_noop(self):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        t.tick(1501)
        assert t.tick(1501) == []
        assert t.tick(1000) == []

    def test_dead_entry_purged_after_retention(self):
        t = table(dead_retention_cycles=2)
        t.record_beacon(beacon(), "a", None, now=0)
        t.tick(3501)  # dead here
        assert t.lookup(ALICE).state == DEAD
        t.tick(5501)  # 3501 + 2*1000 boundary: strictly-after rule
        assert t.lookup(ALICE) is not None
        t.tick(5502)
        assert t.lookup(ALICE) is None
        assert t.lookup_by_address("a") is None


class TestPer:
    def test_four_of_five(self):
        t = table()
        t.record_beacon(beacon(power=12), "a", None, now=0)
        row = t.lookup(ALICE).per_power[12]
        row.window[:] = [True, True, False, True, True]
        assert t.lookup(ALICE).per(12) == Fraction(1, 5)

    def test_bounds(self):
        t = table()
        t.record_beacon(beacon(power=12), "a", None, now=0)
        row = t.lookup(ALICE).per_power[12]
        row.window[:] = [True] * 5
        assert row.per == 0
        row.window[:] = [False] * 5
        assert row.per == 1

    def test_unknown_power_rejected(self):
        t = table()
        t.record_beacon(beacon(power=12), "a", None, now=0)
        with pytest.raises(ValueError):
            t.lookup(ALICE).per(99)

    @given(st.lists(st.booleans(), min_size=0, max_size=5))
    def test_per_equals_complement_of_received(self, outcomes):
        t = table()
        t.record_beacon(beacon(power=12), "a", None, now=0)
        row = t.lookup(ALICE).per_power[12]
        row.window[:] = outcomes
        assert row.per == 1 - Fraction(sum(outcomes), 5)
        assert 0 <= row.per <= 1


class TestConsecutiveLossesInvariant:
    @given(st.lists(st.booleans(), min_size=0, max_size=12))
    def test_equals_trailing_loss_run_of_window(self, outcomes):
        t = table()
        t.record_beacon(beacon(), "a", None, now=0)
        row = t.lookup(ALICE).per_power[100]
        window = []
        for o in outcomes:
            window.append(o)
            if len(window) > 5:
                del window[0]
        row.window[:] = window
        expected = 0
        for o in reversed(window):
            if o:
                break
            expected += 1
        assert row.consecutive_losses == expected


class TestCycleAccounting:
    def test_min_rx_power_of_heard_levels(self):
        t = table()
        t.record_beacon(beacon(power=12), "a", -73.5, now=333)
        t.record_beacon(beacon(power=100, seq=1), "a", -64.3, now=666)
        triples = t.close_cycle(1000)
        assert triples == [(ALICE, 12, -64)]
        assert t.lookup(ALICE).min_rx_power_mw == 12

    def test_all_levels_heard_gives_lowest(self):
        t = table()
        for now, p in ((0, 1), (333, 12), (666, 100)):
            t.record_beacon(beacon(power=p), "a", -60.0, now=now)
        t.close_cycle(1000)
        assert t.lookup(ALICE).min_rx_power_mw == 1

    def test_silent_cycle_gives_absent_and_zero_field(self):
        t = table()
        t.record_beacon(beacon(power=100), "a", -54.0, now=0)
        t.close_cycle(1000)
        triples = t.close_cycle(2000)
        assert triples == [(ALICE, 0, codec.RSSI_UNMEASURED)]
        assert t.lookup(ALICE).min_rx_power_mw is None

    def test_accumulators_reset_at_close(self):
        t = table()
        t.record_beacon(beacon(power=100), "a", -54.0, now=0)
        t.close_cycle(1000)
        row = t.lookup(ALICE).per_power[100]
        assert row.received_this_cycle == 0
        assert row.max_rssi_dbm_cycle is None

    def test_unmeasured_rssi_feedback_octet(self):
        t = table()
        t.record_beacon(beacon(power=12), "a", None, now=0)
        assert t.close_cycle(1000) == [(ALICE, 12, codec.RSSI_UNMEASURED)]

    def test_feedback_covers_dead_retained_neighbors(self):
        # close_cycle runs every period in the engine; keep that cadence here.
        t = table()
        t.record_beacon(beacon(), "a", -54.0, now=0)
        for boundary in (1000, 2000, 3000):
            t.tick(boundary)
            t.close_cycle(boundary)
        t.tick(3501)
        assert t.lookup(ALICE).state == DEAD
        triples = t.close_cycle(4000)
        assert triples == [(ALICE, 0, codec.RSSI_UNMEASURED)]


class TestFeedback:
    def test_feedback_to_self_sets_reverse_fields(self):
        t = table()
        t.record_beacon(beacon(node_id=ALICE), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(BOB, 100, -54), "a", now=10)
        entry = t.lookup(ALICE)
        assert entry.reverse_min_power_mw == 100
        assert entry.reverse_max_rssi_dbm == -54
        assert entry.two_hop == {}

    def test_feedback_to_other_creates_two_hop(self):
        t = table()
        t.record_beacon(beacon(node_id=ALICE), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(JOHN, 100, -78), "a", now=10)
        th = t.lookup(ALICE).two_hop[JOHN]
        assert (th.min_power_mw, th.rssi_dbm, th.lost) == (100, -78, False)

    def test_feedback_from_unknown_source_dropped(self):
        t = table()
        t.record_feedback(codec.FeedbackPacket(BOB, 100, -54), "nowhere", now=0)
        assert t.entries == {}
        assert t.counters["feedback_from_unknown"] == 1

    def test_min_zero_marks_two_hop_lost(self):
        t = table()
        t.record_beacon(beacon(node_id=ALICE), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(PDA, 100, -50), "a", now=10)
        t.record_feedback(codec.FeedbackPacket(PDA, 0, codec.RSSI_UNMEASURED), "a", now=1010)
        th = t.lookup(ALICE).two_hop[PDA]
        assert th.lost

    def test_min_zero_to_self_clears_reverse(self):
        t = table()
        t.record_beacon(beacon(node_id=ALICE), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(BOB, 100, -54), "a", now=10)
        t.record_feedback(codec.FeedbackPacket(BOB, 0, codec.RSSI_UNMEASURED), "a", now=1010)
        entry = t.lookup(ALICE)
        assert entry.reverse_min_power_mw is None
        assert entry.reverse_max_rssi_dbm is None

    def test_two_hop_goes_stale_after_three_via_periods(self):
        t = table()
        t.record_beacon(beacon(node_id=ALICE, period=1000), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(JOHN, 100, -78), "a", now=0)
        # Keep the via row alive while its feedback about JOHN stops.
        for i in range(1, 5):
            t.record_beacon(beacon(node_id=ALICE, period=1000, seq=i), "a", -54.0, now=i * 1000)
        t.tick(3000)
        assert not t.lookup(ALICE).two_hop[JOHN].lost
        t.tick(3001)
        assert t.lookup(ALICE).two_hop[JOHN].lost

    def test_two_hop_purged_with_via_entry(self):
        t = table(dead_retention_cycles=1)
        t.record_beacon(beacon(node_id=ALICE), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(JOHN, 100, -78), "a", now=0)
        t.tick(3501)
        t.tick(4502)
        assert t.lookup(ALICE) is None

    def test_two_hop_always_references_live_via(self):
        t = table()
        t.record_beacon(beacon(node_id=ALICE), "a", -54.0, now=0)
        t.record_feedback(codec.FeedbackPacket(JOHN, 100, -78), "a", now=0)
        for entry_id, entry in t.entries.items():
            for target in entry.two_hop:
                assert entry_id in t.entries


class TestDbmToNanowatts:
    def test_console_values(self):
        assert abs(dbm_to_nanowatts(-54) - 3.9810717) / 3.9810717 < 1e-4
        assert abs(dbm_to_nanowatts(-78) - 0.0158489) / 0.0158489 < 1e-4
        assert dbm_to_nanowatts(0) == 1_000_000


class TestSnapshot:
    def test_empty(self):
        snap = table().snapshot(0)
        assert snap.entries == ()
        assert snap.self_name == "Bob"

    def test_sorted_by_id(self):
        t = table()
        for node_id in (JOHN, ALICE, PDA):
            t.record_beacon(beacon(node_id=node_id), "addr-%x" % node_id, -54.0, now=0)
        snap = t.snapshot(0)
        ids = [e.id for e in snap.entries]
        assert ids == sorted(ids)

    def test_dead_entry_retained_and_marked(self):
        t = table()
        t.record_beacon(beacon(node_id=PDA), "a", -78.0, now=0)
        t.tick(3501)
        snap = t.snapshot(3501)
        assert snap.entries[0].state == DEAD

    def test_replay_determinism(self):
        events = [
            ("beacon", ALICE, 100, 0, -54.0),
            ("beacon", JOHN, 12, 333, -73.0),
            ("tick", None, None, 1501, None),
            ("beacon", ALICE, 100, 1600, -55.0),
            ("close", None, None, 2000, None),
        ]

        def run():
            t = table()
            seq = 0
            for kind, nid, power, now, rssi in events:
                if kind == "beacon":
                    t.record_beacon(beacon(node_id=nid, power=power, seq=seq), "a%x" % nid, rssi, now)
                    seq += 1
                elif kind == "tick":
                    t.tick(now)
                else:
                    t.close_cycle(now)
            return t.snapshot(3000)

        assert run() == run()

    def test_name_resolution(self):
        t = NeighborTable(BOB, "Bob", name_resolver={ALICE: "Alice"}.get)
        t.record_beacon(beacon(node_id=ALICE), "a", None, now=0)
        t.record_beacon(beacon(node_id=JOHN, mac=MAC_B), "b", None, now=0)
        snap = t.snapshot(0)
        names = {e.id: e.name for e in snap.entries}
        assert names[ALICE] == "Alice"
        assert names[JOHN] is None
