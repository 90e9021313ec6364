"""Command line front end and the neighbor-list console renderer.

Options (defaults in parentheses):

    -N  node name (hostname)        -p  neighbor port (3010)
    -b  beacon period ms (10000)    -c  client port (3020)
    -d  run as daemon, no console   -i  interface name (ath0)
    -v  verbose, -vv debug          -P  fixed transmit power, mW
    -W  PER window size (5)         -n  disable power control
    -V  print version and exit      -h  help

A `prawn.cfg` file in the working directory supplies the same settings
as `key=value` lines (`#` starts a comment); command line flags win.
Unknown keys warn and are skipped.  Exit codes: 0 on a clean run, 1 on
usage or configuration errors, 2 when a port cannot be bound.

Nodes deployed on a real ad-hoc interface conventionally number
themselves 10.87.x.y inside the mesh, with x.y taken from the low two
octets of the node id hash; `auto_ip` computes that address.  The
engine itself never assigns addresses.
"""

from __future__ import annotations

import argparse
import logging
import signal
import socket
import sys
import time
from typing import Optional

from . import __version__, codec
from .engine import (
    DEFAULT_BEACON_PERIOD_MS,
    DEFAULT_CLIENT_PORT,
    DEFAULT_INTERFACE,
    DEFAULT_NEIGHBOR_PORT,
    EngineConfig,
    EngineRunner,
    PrawnEngine,
)
from .neighbors import Snapshot, dbm_to_nanowatts

log = logging.getLogger("prawn.cli")

CONFIG_FILENAME = "prawn.cfg"

_SEPARATOR = "=" * 65
_DASHES = "      " + "-" * 59


def auto_ip(node_id: int) -> str:
    """Conventional 10.87.x.y mesh address from the low id octets."""
    return "10.87.%d.%d" % ((node_id >> 8) & 0xFF, node_id & 0xFF)


# -- console renderer -------------------------------------------------------

def _row_signal(row) -> str:
    if row.last_rssi_dbm is None:
        return "n/a"
    dbm = round(row.last_rssi_dbm)
    return "%.7f nW (%d dBm)" % (dbm_to_nanowatts(dbm), dbm)


def render_neighbor_list(snapshot: Snapshot, resolver=None) -> str:
    """Human-readable neighbor list, deterministic for a given snapshot."""
    names = {e.id: e.name for e in snapshot.entries if e.name}

    def display(node_id: int) -> str:
        name = names.get(node_id)
        if name is None and resolver is not None:
            name = resolver(node_id)
        return name if name else codec.short_hex(node_id)

    lines = [
        "================ Neighbor List for node %s ================" % snapshot.self_name
    ]
    if not snapshot.entries:
        lines += [_SEPARATOR, "  (no neighbors)", _SEPARATOR]
        return "\n".join(lines) + "\n"
    for entry in snapshot.entries:
        lines.append(_SEPARATOR)
        lines.append(
            "%s  %-6s  %s    Beacon period : %d  %s"
            % (
                codec.short_hex(entry.id),
                entry.state,
                codec.format_mac(entry.mac),
                entry.beacon_period_ms,
                entry.name or "?",
            )
        )
        weakest = (
            "%d mW" % entry.reverse_min_power_mw
            if entry.reverse_min_power_mw is not None
            else "-"
        )
        lines.append("      Weakest beacon received by this neighbor : %s" % weakest)
        lines.append(_DASHES)
        for row in entry.rows:
            lines.append(
                "%dmW  %-6s  @%d  R %d  S %d  B %d [%s]  %d/%d"
                % (
                    row.power_mw,
                    row.state,
                    row.last_arrival_ms // 1000,
                    row.consecutive_losses,
                    row.last_sequence,
                    row.total_received,
                    _row_signal(row),
                    row.received_in_window,
                    row.window_size,
                )
            )
        if entry.two_hop:
            lines.append("")
            parts = []
            for t in entry.two_hop:
                if t.lost or t.min_power_mw is None:
                    parts.append("%s (lost)" % display(t.target_id))
                else:
                    rssi = "%d dBm" % t.rssi_dbm if t.rssi_dbm is not None else "n/a"
                    parts.append("%s (%d mW, %s)" % (display(t.target_id), t.min_power_mw, rssi))
            lines.append("2hop-Neighbors:  " + parts[0])
            lines.extend(" " * 17 + p for p in parts[1:])
    lines.append(_SEPARATOR)
    return "\n".join(lines) + "\n"


# -- argument and config handling -------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prawn", description="neighborhood discovery engine")
    parser.add_argument("-N", dest="name", metavar="NAME",
                        help="node name (default: hostname)")
    parser.add_argument("-b", dest="beacon_period_ms", metavar="MS", type=int,
                        help="beacon period in ms (default %d)" % DEFAULT_BEACON_PERIOD_MS)
    parser.add_argument("-d", dest="daemon", action="store_true",
                        help="run as daemon (no console output)")
    parser.add_argument("-v", dest="verbose", action="count", default=0,
                        help="verbose; repeat for debug")
    parser.add_argument("-p", dest="neighbor_port", metavar="PORT", type=int,
                        help="neighbor traffic port (default %d)" % DEFAULT_NEIGHBOR_PORT)
    parser.add_argument("-c", dest="client_port", metavar="PORT", type=int,
                        help="client protocol port (default %d)" % DEFAULT_CLIENT_PORT)
    parser.add_argument("-i", dest="interface", metavar="IFACE",
                        help="network interface (default %s)" % DEFAULT_INTERFACE)
    parser.add_argument("-P", dest="fixed_power", metavar="MW", type=int,
                        help="fixed transmit power in mW (disables the power sweep)")
    parser.add_argument("-n", dest="no_power_control", action="store_true",
                        help="disable transmit power control")
    parser.add_argument("-W", dest="per_window", metavar="N", type=int,
                        help="PER window size in beacons (default 5)")
    parser.add_argument("-V", action="version", version="prawn %s" % __version__)
    return parser


# cfg key -> (type converter, settings key)
_CFG_KEYS = {
    "name": (str, "name"),
    "beacon_period_ms": (int, "beacon_period_ms"),
    "neighbor_port": (int, "neighbor_port"),
    "client_port": (int, "client_port"),
    "interface": (str, "interface"),
    "power_levels_mw": (lambda v: tuple(int(x) for x in v.split(",") if x), "power_levels_mw"),
    "fixed_tx_power_mw": (int, "fixed_power"),
    "power_control": (lambda v: v.strip().lower() not in ("0", "false", "no", "off"),
                      "power_control"),
    "per_window": (int, "per_window"),
    "dead_threshold": (int, "dead_threshold"),
    "grace_factor": (float, "grace_factor"),
    "dead_retention_cycles": (int, "dead_retention_cycles"),
    "queue_bound": (int, "queue_bound"),
    "known_names": (lambda v: tuple(x.strip() for x in v.split(",") if x.strip()),
                    "known_names"),
}


def load_config_file(path) -> dict:
    """Parse a key=value settings file; unknown keys warn and are skipped."""
    settings = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                log.warning("%s:%d: not a key=value line, skipped", path, lineno)
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            spec = _CFG_KEYS.get(key)
            if spec is None:
                log.warning("%s:%d: unknown key %r, skipped", path, lineno, key)
                continue
            convert, target = spec
            try:
                settings[target] = convert(value)
            except ValueError:
                log.warning("%s:%d: bad value for %r, skipped", path, lineno, key)
    return settings


def merge_settings(args: argparse.Namespace, cfg: dict) -> EngineConfig:
    """Apply precedence (flags over file over defaults) and validate."""

    def pick(flag_value, cfg_key, default):
        if flag_value is not None:
            return flag_value
        return cfg.get(cfg_key, default)

    power_control = not args.no_power_control and cfg.get("power_control", True)
    return EngineConfig(
        node_name=pick(args.name, "name", socket.gethostname()),
        beacon_period_ms=pick(args.beacon_period_ms, "beacon_period_ms",
                              DEFAULT_BEACON_PERIOD_MS),
        neighbor_port=pick(args.neighbor_port, "neighbor_port", DEFAULT_NEIGHBOR_PORT),
        client_port=pick(args.client_port, "client_port", DEFAULT_CLIENT_PORT),
        interface_name=pick(args.interface, "interface", DEFAULT_INTERFACE),
        power_levels_mw=cfg.get("power_levels_mw", (1, 12, 100)),
        power_control_enabled=power_control,
        fixed_tx_power_mw=pick(args.fixed_power, "fixed_power", None),
        per_window=pick(args.per_window, "per_window", 5),
        dead_threshold=cfg.get("dead_threshold", 3),
        grace_factor=cfg.get("grace_factor", 1.5),
        dead_retention_cycles=cfg.get("dead_retention_cycles", 10),
        queue_bound=cfg.get("queue_bound", 1024),
        known_names=cfg.get("known_names", ()),
    )


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s")


class _ConsoleView:
    """Rate-limited neighbor-list printer for the foreground mode."""

    def __init__(self, out, min_interval_s: float = 1.0):
        self.out = out
        self.min_interval_s = min_interval_s
        self._last = 0.0

    def __call__(self, engine: PrawnEngine) -> None:
        now = time.monotonic()
        if now - self._last < self.min_interval_s:
            return
        self._last = now
        snap = engine.table.snapshot(int(now * 1000))
        self.out.write(render_neighbor_list(snap, resolver=engine.resolve_name))
        self.out.flush()


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0

    _configure_logging(args.verbose)
    cfg = {}
    try:
        cfg = load_config_file(CONFIG_FILENAME)
    except FileNotFoundError:
        pass
    except OSError as exc:
        sys.stderr.write("prawn: cannot read %s: %s\n" % (CONFIG_FILENAME, exc))
        return 1

    try:
        config = merge_settings(args, cfg)
    except ValueError as exc:
        sys.stderr.write("prawn: %s\n" % exc)
        return 1

    try:
        runner = EngineRunner(config)
    except OSError as exc:
        sys.stderr.write(
            "prawn: cannot bind ports %d/%d: %s\n"
            % (config.neighbor_port, config.client_port, exc)
        )
        return 2

    stopping = []

    def _stop(signum, frame):
        if not stopping:
            stopping.append(signum)
            runner.stop()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)

    log.info(
        "node %s id %s mesh-ip %s ports %d/%d",
        config.node_name,
        codec.hex_id(config.node_id),
        auto_ip(config.node_id),
        config.neighbor_port,
        config.client_port,
    )
    on_change = None if args.daemon else _ConsoleView(sys.stdout)
    runner.run(on_change)
    return 0
