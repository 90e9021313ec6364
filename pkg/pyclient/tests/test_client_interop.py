"""Cross-library interop: this client against real engines, both directions.

These tests boot the engine package as a counterparty; the library
under test never imports it.
"""

import socket
import threading
import time

import pytest

from prawn.client import PrawnClient
from prawn.engine import EngineConfig, EngineRunner

from prawn_client import ClientSession, ReplyError, RequestTimeout


def wait_for(predicate, timeout_s=8.0, interval_s=0.05):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval_s)
    raise AssertionError("condition not met within %.1fs" % timeout_s)


@pytest.fixture
def engine_pair():
    def make(name, peers):
        config = EngineConfig(node_name=name, beacon_period_ms=200,
                              neighbor_port=0, client_port=0, known_names=peers)
        return EngineRunner(config, host="127.0.0.1",
                            broadcast_targets=[("127.0.0.1", 9)])

    alice = make("Alice", ("Bob",))
    bob = make("Bob", ("Alice",))
    alice.transport.broadcast_targets = [bob.neighbor_address]
    bob.transport.broadcast_targets = [alice.neighbor_address]
    threads = [threading.Thread(target=r.run, daemon=True) for r in (alice, bob)]
    for t in threads:
        t.start()
    yield alice, bob
    for r in (alice, bob):
        r.stop()
    for t in threads:
        t.join(timeout=3.0)


def test_hello_world_both_directions(engine_pair):
    alice_runner, bob_runner = engine_pair
    host_a, port_a = alice_runner.client_address
    with ClientSession(host_a, port_a) as alice, \
         PrawnClient(bob_runner.client_address) as bob:
        assert alice.info()["name"] == "Alice"
        report = wait_for(lambda: alice.neighbors().neighbors or None)
        assert report[0].name == "Bob"
        wait_for(lambda: bob.neighbors().neighbors or None)

        # This library sends, the engine package's client receives.
        alice.send("Hello World", "Bob")
        got = wait_for(bob.receive)
        assert (got.sender, got.payload) == ("Alice", b"Hello World")

        # And the reverse.
        bob.send("Alice", "Hello World")
        got = wait_for(alice.receive)
        assert (got.sender, got.payload) == ("Bob", b"Hello World")
        assert alice.last_error is None


def test_structured_errors_and_empty_queue(engine_pair):
    alice_runner, _ = engine_pair
    host, port = alice_runner.client_address
    with ClientSession(host, port) as alice:
        assert alice.receive() is None  # empty queue reads as None
        with pytest.raises(ReplyError) as exc:
            alice.send(b"x", "Nobody-At-All")
        assert exc.value.code == "unknown-destination"
        assert isinstance(alice.last_error, ReplyError)


def test_timeout_when_nobody_listens():
    # A bound socket nobody reads: requests vanish, the session times out.
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    try:
        with ClientSession(*sink.getsockname(), timeout_ms=80) as ghost:
            with pytest.raises(RequestTimeout):
                ghost.info()
            assert isinstance(ghost.last_error, RequestTimeout)
    finally:
        sink.close()
