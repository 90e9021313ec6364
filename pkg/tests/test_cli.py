"""CLI parsing, config file handling, exit codes, and the console renderer."""

import signal
import socket
import subprocess
import sys
import time
from fractions import Fraction

import pytest

from prawn import codec
from prawn.cli import (
    auto_ip,
    build_parser,
    load_config_file,
    main,
    merge_settings,
    render_neighbor_list,
)
from prawn.neighbors import Snapshot, SnapshotEntry, SnapshotPowerRow, SnapshotTwoHop

ALICE = codec.node_id_from_name("Alice")
BOB = codec.node_id_from_name("Bob")
JOHN = codec.node_id_from_name("John")
PDA = codec.node_id_from_name("PDA")


class TestParser:
    def test_defaults_are_unset(self):
        args = build_parser().parse_args([])
        assert args.name is None
        assert args.beacon_period_ms is None
        assert args.daemon is False
        assert args.verbose == 0

    def test_all_flags(self):
        args = build_parser().parse_args(
            ["-N", "Bob", "-b", "500", "-d", "-vv", "-p", "4010", "-c", "4020",
             "-i", "wlan0", "-P", "12", "-n", "-W", "8"]
        )
        assert args.name == "Bob"
        assert args.beacon_period_ms == 500
        assert args.daemon is True
        assert args.verbose == 2
        assert args.neighbor_port == 4010
        assert args.client_port == 4020
        assert args.interface == "wlan0"
        assert args.fixed_power == 12
        assert args.no_power_control is True
        assert args.per_window == 8

    def test_usage_error_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["-b", "soon"])
        assert exc.value.code == 1

    def test_version_exits_0(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["-V"])
        assert exc.value.code == 0
        assert "prawn" in capsys.readouterr().out

    def test_help_exits_0(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["-h"])
        assert exc.value.code == 0


class TestConfigFile:
    def test_parse_and_precedence(self, tmp_path, caplog):
        cfg_file = tmp_path / "prawn.cfg"
        cfg_file.write_text(
            "# test settings\n"
            "name=FileNode\n"
            "beacon_period_ms = 750   # inline comment\n"
            "power_levels_mw=1,12,100\n"
            "known_names=Alice, Bob\n"
            "mystery_knob=7\n"
            "grace_factor=2.0\n"
            "just a line\n"
        )
        with caplog.at_level("WARNING"):
            cfg = load_config_file(cfg_file)
        assert cfg["name"] == "FileNode"
        assert cfg["beacon_period_ms"] == 750
        assert cfg["power_levels_mw"] == (1, 12, 100)
        assert cfg["known_names"] == ("Alice", "Bob")
        assert cfg["grace_factor"] == 2.0
        assert "mystery_knob" in caplog.text
        assert "not a key=value" in caplog.text

        args = build_parser().parse_args(["-b", "250"])
        config = merge_settings(args, cfg)
        assert config.beacon_period_ms == 250  # flag wins
        assert config.node_name == "FileNode"  # file beats default
        assert config.grace_factor == 2.0

    def test_bad_value_skipped(self, tmp_path, caplog):
        cfg_file = tmp_path / "prawn.cfg"
        cfg_file.write_text("beacon_period_ms=fast\n")
        with caplog.at_level("WARNING"):
            cfg = load_config_file(cfg_file)
        assert cfg == {}
        assert "bad value" in caplog.text

    def test_merge_validates(self):
        args = build_parser().parse_args(["-W", "0"])
        with pytest.raises(ValueError):
            merge_settings(args, {})


class TestMainExitCodes:
    def test_usage_error(self):
        assert main(["-b", "soon"]) == 1

    def test_invalid_settings(self):
        assert main(["-W", "0"]) == 1

    def test_version(self):
        assert main(["-V"]) == 0

    def test_bind_conflict_is_2(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as holder:
            holder.bind(("127.0.0.1", 0))
            port = holder.getsockname()[1]
            assert main(["-N", "X", "-p", "0", "-c", str(port), "-d"]) == 2

    def test_clean_daemon_run_exits_0(self, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "prawn", "-N", "Solo", "-b", "200",
             "-p", "0", "-c", "0", "-d"],
            cwd=tmp_path,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        time.sleep(0.6)
        proc.send_signal(signal.SIGINT)
        out, err = proc.communicate(timeout=5)
        assert proc.returncode == 0, err.decode()
        assert out == b""  # daemon mode stays quiet


def make_snapshot():
    rows = (
        SnapshotPowerRow(
            power_mw=1, state="Active", received_in_window=5, window_size=5,
            per=Fraction(0), last_rssi_dbm=-54.0, consecutive_losses=0,
            last_sequence=57, total_received=19, last_arrival_ms=20020,
        ),
        SnapshotPowerRow(
            power_mw=12, state="Active", received_in_window=4, window_size=5,
            per=Fraction(1, 5), last_rssi_dbm=-42.4, consecutive_losses=1,
            last_sequence=58, total_received=18, last_arrival_ms=19353,
        ),
    )
    two_hop = (
        SnapshotTwoHop(JOHN, None, None, True),
        SnapshotTwoHop(PDA, 100, -50, False),
    )
    entry = SnapshotEntry(
        id=BOB, name="Bob", state="Active", mac=bytes.fromhex("0014A7FA89C2"),
        beacon_period_ms=1000, min_rx_power_mw=1, reverse_min_power_mw=1,
        reverse_max_rssi_dbm=-54, rows=rows, two_hop=two_hop,
    )
    return Snapshot(ALICE, "Alice", 21000, (entry,))


EXPECTED_CONSOLE = """\
================ Neighbor List for node Alice ================
=================================================================
16B4  Active  00:14:A7:FA:89:C2    Beacon period : 1000  Bob
      Weakest beacon received by this neighbor : 1 mW
      -----------------------------------------------------------
1mW  Active  @20  R 0  S 57  B 19 [3.9810717 nW (-54 dBm)]  5/5
12mW  Active  @19  R 1  S 58  B 18 [63.0957344 nW (-42 dBm)]  4/5

2hop-Neighbors:  John (lost)
                 PDA (100 mW, -50 dBm)
=================================================================
"""


class TestRenderer:
    def test_golden_block(self):
        resolver = {JOHN: "John", PDA: "PDA"}.get
        assert render_neighbor_list(make_snapshot(), resolver) == EXPECTED_CONSOLE

    def test_pinned_substrings(self):
        text = render_neighbor_list(make_snapshot(), {JOHN: "John", PDA: "PDA"}.get)
        assert "3.9810717 nW (-54 dBm)" in text
        assert "4/5" in text
        assert "(lost)" in text

    def test_rendering_is_stable(self):
        snap = make_snapshot()
        assert render_neighbor_list(snap) == render_neighbor_list(snap)

    def test_unknown_ids_fall_back_to_short_hex(self):
        text = render_neighbor_list(make_snapshot())
        assert codec.short_hex(JOHN) in text
        assert codec.short_hex(PDA) in text

    def test_empty_table(self):
        snap = Snapshot(ALICE, "Alice", 0, ())
        text = render_neighbor_list(snap)
        assert "Neighbor List for node Alice" in text
        assert "(no neighbors)" in text

    def test_unmeasured_signal_and_unknown_name(self):
        row = SnapshotPowerRow(
            power_mw=100, state="Dead", received_in_window=0, window_size=5,
            per=Fraction(1), last_rssi_dbm=None, consecutive_losses=5,
            last_sequence=9, total_received=3, last_arrival_ms=4000,
        )
        entry = SnapshotEntry(
            id=BOB, name=None, state="Dead", mac=bytes(6), beacon_period_ms=2000,
            min_rx_power_mw=None, reverse_min_power_mw=None,
            reverse_max_rssi_dbm=None, rows=(row,), two_hop=(),
        )
        text = render_neighbor_list(Snapshot(ALICE, "Alice", 9000, (entry,)))
        assert "[n/a]" in text
        assert "Weakest beacon received by this neighbor : -" in text
        assert "  ?" in text
        assert "0/5" in text


def test_auto_ip_uses_low_id_octets():
    assert auto_ip(BOB) == "10.87.22.180"  # 0x16B4
    assert auto_ip(0x0102) == "10.87.1.2"
