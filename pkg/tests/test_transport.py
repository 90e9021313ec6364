"""Radio math and transport behavior, including medium-model properties."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prawn.transport import (
    MediumModel,
    UdpTransport,
    dbm_to_mw,
    mw_to_dbm,
)


class TestConversions:
    def test_mw_to_dbm(self):
        assert mw_to_dbm(1) == 0
        assert mw_to_dbm(100) == pytest.approx(20.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            mw_to_dbm(0)
        with pytest.raises(ValueError):
            mw_to_dbm(-5)

    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_roundtrip(self, p):
        assert dbm_to_mw(mw_to_dbm(p)) == pytest.approx(p, rel=1e-9)


class TestRssiAt:
    def test_hand_checked_values(self):
        m = MediumModel()
        assert m.rssi_at(100, 1) == pytest.approx(-20.0)
        assert m.rssi_at(100, 10) == pytest.approx(-50.0)
        assert m.rssi_at(1, 10) == pytest.approx(-70.0)

    def test_doubling_distance_costs_903_centibel(self):
        m = MediumModel()
        drop = m.rssi_at(100, 10) - m.rssi_at(100, 20)
        assert drop == pytest.approx(10 * 3 * math.log10(2), abs=1e-9)
        assert drop == pytest.approx(9.0309, abs=1e-4)

    def test_zero_distance_rejected(self):
        with pytest.raises(ValueError):
            MediumModel().rssi_at(100, 0)

    def test_bad_model_parameters_rejected(self):
        with pytest.raises(ValueError):
            MediumModel(exponent_n=0)
        with pytest.raises(ValueError):
            MediumModel(loss_prob=1.5)


class TestDelivery:
    def make(self, d=10.0, **kwargs):
        m = MediumModel(**kwargs)
        m.set_position("a", (0, 0))
        m.set_position("b", (d, 0))
        return m

    def test_delivered_with_rssi(self):
        m = self.make(d=10)
        assert m.deliver(b"x", "a", "b", 100) == pytest.approx(-50.0)

    def test_below_sensitivity_dropped(self):
        m = self.make(d=10)
        # 0.1 mW at 10 m: -10 - 40 - 30 = -80 is still delivered (>=); less is not.
        assert m.deliver(b"x", "a", "b", 0.1) == pytest.approx(-80.0)
        assert m.deliver(b"x", "a", "b", 0.09) is None

    def test_loss_prob_one_never_delivers(self):
        m = self.make(d=1, loss_prob=1.0)
        for _ in range(20):
            assert m.deliver(b"x", "a", "b", 100) is None

    def test_seeded_loss_is_deterministic(self):
        def run():
            m = self.make(d=1, loss_prob=0.5, seed=99)
            return [m.deliver(b"x", "a", "b", 100) is not None for _ in range(50)]

        assert run() == run()

    def test_drop_filter(self):
        m = self.make(d=1)
        m.drop_filter = lambda frame, tx, rx: frame == b"drop-me"
        assert m.deliver(b"keep", "a", "b", 100) is not None
        assert m.deliver(b"drop-me", "a", "b", 100) is None

    def test_sub_reference_distance_clamped(self):
        m = self.make(d=0.0)
        assert m.deliver(b"x", "a", "b", 100) == pytest.approx(m.rssi_at(100, 1.0))

    def test_higher_power_never_hurts(self):
        m = self.make(d=30)
        for lo, hi in ((1, 12), (12, 100), (1, 100)):
            if m.deliver(b"x", "a", "b", lo) is not None:
                assert m.deliver(b"x", "a", "b", hi) is not None

    @given(
        xy=st.tuples(
            st.floats(min_value=-200, max_value=200),
            st.floats(min_value=-200, max_value=200),
        ),
        powers=st.lists(st.integers(1, 255), min_size=2, max_size=4, unique=True),
    )
    def test_reachability_nesting(self, xy, powers):
        m = MediumModel()
        m.set_position("tx", (0, 0))
        m.set_position("rx", xy)
        reached = [p for p in sorted(powers) if m.deliver(b"x", "tx", "rx", p) is not None]
        # The set reached at lower power is a prefix of the set at higher power.
        assert reached == sorted(powers)[len(sorted(powers)) - len(reached):]


class TestUdpTransport:
    def test_unicast_roundtrip(self):
        a = UdpTransport("127.0.0.1", 0)
        b = UdpTransport("127.0.0.1", 0)
        try:
            a.send(b"ping", b.local_address, 100)
            data = None
            for _ in range(100):
                data = b.recv()
                if data:
                    break
            assert data is not None
            frame, src = data
            assert frame == b"ping"
            assert src == a.local_address
        finally:
            a.close()
            b.close()

    def test_broadcast_targets_fan_out(self):
        a = UdpTransport("127.0.0.1", 0)
        b = UdpTransport("127.0.0.1", 0)
        c = UdpTransport("127.0.0.1", 0)
        a.broadcast_targets = [b.local_address, c.local_address]
        try:
            a.send(b"hello", None, 100)
            for t in (b, c):
                got = None
                for _ in range(100):
                    got = t.recv()
                    if got:
                        break
                assert got is not None and got[0] == b"hello"
        finally:
            a.close()
            b.close()
            c.close()

    def test_oversize_frame_rejected(self):
        a = UdpTransport("127.0.0.1", 0)
        try:
            with pytest.raises(ValueError):
                a.send(bytes(70000), ("127.0.0.1", 9), 100)
        finally:
            a.close()

    def test_bind_conflict_raises(self):
        a = UdpTransport("127.0.0.1", 0)
        try:
            with pytest.raises(OSError):
                UdpTransport("127.0.0.1", a.local_address[1])
        finally:
            a.close()

    def test_recv_empty_returns_none(self):
        a = UdpTransport("127.0.0.1", 0)
        try:
            assert a.recv() is None
        finally:
            a.close()
