"""Grammar-level tests: exact request bytes, reply parsing, rejection."""

import pytest

from prawn_client import wire

BOB = 0x16566419B10316B4
ALICE = 0x123909CB9F15D167


def test_node_ids_match_engine_hashing():
    assert wire.node_id_for("Bob") == BOB
    assert wire.node_id_for("Alice") == ALICE
    assert wire.node_id_for("") == 0xCBF29CE484222325  # FNV-1a offset basis


def test_request_datagrams_are_exact():
    assert wire.encode_info() == b"INFO\n"
    assert wire.encode_neighbors() == b"NBRS\n"
    assert wire.encode_receive() == b"RECV\n"
    assert (wire.encode_send(BOB, None, b"Hello World")
            == b"SEND 16566419B10316B4 - SGVsbG8gV29ybGQ=\n")
    assert wire.encode_send(BOB, 12, b"\x00\x01\xff") == b"SEND 16566419B10316B4 12 AAH/\n"
    assert wire.encode_send_broadcast(None, b"") == b"SENDB - \n"
    assert wire.encode_send_broadcast(100, b"flood-1") == b"SENDB 100 Zmxvb2QtMQ==\n"


@pytest.mark.parametrize("power", [0, 256, -1, 1.5, "12"])
def test_power_must_be_integer_milliwatts_in_range(power):
    with pytest.raises(ValueError):
        wire.encode_send(BOB, power, b"x")
    with pytest.raises(ValueError):
        wire.encode_send_broadcast(power, b"x")


def test_oversize_request_is_refused_locally():
    with pytest.raises(ValueError):
        wire.encode_send_broadcast(None, b"x" * 65000)


def test_parse_simple_replies():
    assert wire.parse_reply(b"OK\n") == wire.Ok()
    assert wire.parse_reply(b"EMPTY\n") == wire.Empty()
    err = wire.parse_reply(b"ERR oversize payload exceeds 48000 octets\n")
    assert err == wire.Error("oversize", "payload exceeds 48000 octets")
    info = wire.parse_reply(b"INFO name=Alice beacon_period_ms=1000\n")
    assert info.values == {"name": "Alice", "beacon_period_ms": "1000"}
    msg = wire.parse_reply(b"MSG 123909CB9F15D167 Alice SGVsbG8gV29ybGQ=\n")
    assert msg == wire.Message(ALICE, "Alice", b"Hello World")


def test_parse_neighbor_report():
    block = (
        b"NBRS 2\n"
        b"N 16566419B10316B4 Bob Active 1000 00:14:A7:FA:89:C2 12\n"
        b"P 1 Dead 2/5 -84 3\n"
        b"P 100 Active 5/5 -64 0\n"
        b"T 8D5CA919F3CAD950 100 -78 ok\n"
        b"T 6C6911EA2AD1CF3C - n/a lost\n"
        b"N CB4FA6AA9F4CB73D ? Dead 2000 00:40:96:A7:30:51 -\n"
    )
    report = wire.parse_reply(block)
    assert len(report) == 2
    bob, stranger = report.neighbors
    assert (bob.id, bob.name, bob.state, bob.period_ms) == (BOB, "Bob", "Active", 1000)
    assert bob.min_power_mw == 12
    assert [(p.power_mw, p.received, p.window, p.rssi_dbm) for p in bob.levels] == [
        (1, 2, 5, -84), (100, 5, 5, -64)]
    assert [t.lost for t in bob.two_hop] == [False, True]
    assert bob.two_hop[1].min_power_mw is None and bob.two_hop[1].rssi_dbm is None
    assert stranger.name is None and stranger.min_power_mw is None
    assert stranger.levels == () and stranger.two_hop == ()


@pytest.mark.parametrize("datagram", [
    b"OK",                      # missing LF
    b"OK extra\n",
    b"YES\n",
    b"ERR\n",                   # code required
    b"INFO name\n",             # not k=v
    b"MSG 123909CB9F15D167 Alice not-base64!\n",
    b"MSG 1239 Alice aGk=\n",   # short id
    b"NBRS x\n",
    b"NBRS 2\nN 16566419B10316B4 Bob Active 1000 00:14:A7:FA:89:C2 12\n",  # count lies
    b"NBRS 0\nP 1 Active 5/5 -64 0\n",  # row before any neighbor
    b"NBRS 1\nN 16566419B10316B4 Bob Sleepy 1000 00:14:A7:FA:89:C2 -\n",
    b"OK\nOK\n",                # only NBRS may span lines
    b"\xff\xfe\n",
])
def test_malformed_replies_are_rejected(datagram):
    with pytest.raises(wire.WireError):
        wire.parse_reply(datagram)
