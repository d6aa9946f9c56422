"""Command-line front door for the capture client and the collector.

Subcommands mirror how the pieces deploy: ``scan``/``monitor``/``capture``
run on the little box doing the interception, ``serve`` runs the
collector, and ``export``/``delete``/``report`` operate on a collector
store from the shell.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import uuid
from typing import Optional

import httpx
import yaml

from . import reports
from .api import create_app
from .arp import arp_scan
from .endpoints import load_databases
from .identity import load_label_rules, load_oui_database
from .packets import LiveSource, ReplaySource
from .pipeline import DEFAULT_BATCH_SECONDS, CapturePipeline, Uploader
from .privacy import load_or_create_salt
from .store import Store
from .uploads import batch_to_dict

DEFAULT_STATE_DIR = os.path.expanduser("~/.config/lanlens")

REPORT_KINDS = {
    "tls-hygiene": (reports.tls_hygiene, reports.tls_hygiene_csv),
    "http-vs-tls": (reports.http_vs_tls, reports.http_vs_tls_csv),
    "trackers": (reports.tracker_prevalence, reports.tracker_prevalence_csv),
    "control-platforms": (reports.control_platforms,
                          reports.control_platforms_csv),
    "hardcoded-dns": (reports.hardcoded_dns, reports.hardcoded_dns_csv),
}


def _state_dir(args) -> str:
    path = args.state_dir or os.environ.get("LANLENS_HOME", DEFAULT_STATE_DIR)
    os.makedirs(path, exist_ok=True)
    return path


def _load_user_id(state_dir: str) -> str:
    """Random persistent identifier, minted on first use."""
    path = os.path.join(state_dir, "user_id")
    if os.path.exists(path):
        with open(path) as fh:
            return fh.read().strip()
    user_id = uuid.uuid4().hex
    with open(path, "w") as fh:
        fh.write(user_id + "\n")
    return user_id


def _monitor_path(args) -> str:
    return args.state or os.path.join(_state_dir(args), "monitor.json")


def _load_monitor(path: str) -> dict:
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    return {"monitored": [], "overridden": []}


def _save_monitor(path: str, state: dict) -> None:
    with open(path, "w") as fh:
        json.dump({"monitored": sorted(set(state["monitored"])),
                   "overridden": sorted(set(state["overridden"]))},
                  fh, indent=2)
        fh.write("\n")


def _open_store(args) -> Store:
    path = args.store or os.environ.get("LANLENS_STORE", "lanlens.db")
    data_dir = getattr(args, "data_dir", None) \
        or os.environ.get("LANLENS_DATA_DIR")
    kwargs = {}
    if data_dir:
        kwargs["databases"] = load_databases(data_dir)
        kwargs["rules"] = load_label_rules(
            os.path.join(data_dir, "label_rules.yaml"))
        kwargs["oui_db"] = load_oui_database(
            os.path.join(data_dir, "oui_prefixes.csv"))
    return Store(path, **kwargs)


def _open_source(args):
    if args.pcap:
        return ReplaySource(args.pcap)
    if args.interface:
        return LiveSource(args.interface)
    raise SystemExit("one of --pcap or --interface is required")


# --------------------------------------------------------------- commands

def cmd_scan(args) -> int:
    source = _open_source(args)
    hosts = arp_scan(args.subnet, source, engine_mac=args.engine_mac,
                     engine_ip=args.engine_ip, gateway_ip=args.gateway_ip,
                     timeout=args.timeout)
    for host in hosts:
        tag = " gateway" if host.is_gateway else ""
        print(f"{host.mac}  {host.ip}{tag}")
    print(f"{len(hosts)} hosts", file=sys.stderr)
    return 0


def cmd_monitor(args) -> int:
    path = _monitor_path(args)
    state = _load_monitor(path)
    if args.add:
        state["monitored"].append(args.add.lower())
        _save_monitor(path, state)
    elif args.remove:
        state["monitored"] = [m for m in state["monitored"]
                              if m != args.remove.lower()]
        _save_monitor(path, state)
    for mac in sorted(set(state["monitored"])):
        print(mac)
    return 0


def cmd_capture(args) -> int:
    state_dir = _state_dir(args)
    salt = load_or_create_salt(os.path.join(state_dir, "salt"))
    user_id = _load_user_id(state_dir)
    monitor_state = _load_monitor(_monitor_path(args))

    monitored = set(monitor_state["monitored"]) or None
    if args.monitor_all:
        monitored = None
    pipeline = CapturePipeline(
        args.subnet, salt, user_id,
        monitored=monitored,
        overridden=monitor_state.get("overridden", ()),
        timezone_name=args.timezone if args.share_timezone else "",
        batch_seconds=args.batch_seconds)

    uploader = None
    if args.collector:
        uploader = Uploader(httpx.Client(base_url=args.collector),
                            base_url="")
    out_fh = open(args.out, "w") if args.out else None

    source = _open_source(args)
    try:
        for batch in pipeline.run(source):
            if uploader is not None:
                uploader.send(batch)
            if out_fh is not None:
                out_fh.write(json.dumps(batch_to_dict(batch),
                                        sort_keys=True) + "\n")
        if uploader is not None:
            uploader.flush()
    finally:
        if out_fh is not None:
            out_fh.close()
        source.close()

    stats = pipeline.stats
    summary = {"packets": stats.packets, "batches": stats.batches,
               "contacts": stats.contacts, "hellos": stats.hellos,
               "dns": stats.dns, "hints": stats.hints,
               "dropped": stats.dropped}
    if uploader is not None:
        summary["delivered"] = uploader.delivered
        summary["undelivered"] = uploader.pending
        summary["overflow_dropped"] = uploader.dropped
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _serve_settings(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = yaml.safe_load(fh) or {}

    def pick(flag, env_name, cfg_key, default):
        if flag is not None:
            return flag
        if os.environ.get(env_name):
            return os.environ[env_name]
        return cfg.get(cfg_key, default)

    return {
        "host": pick(args.host, "LANLENS_HOST", "host", "127.0.0.1"),
        "port": int(pick(args.port, "LANLENS_PORT", "port", 8000)),
        "store": pick(args.store, "LANLENS_STORE", "store", "lanlens.db"),
        "data_dir": pick(args.data_dir, "LANLENS_DATA_DIR", "data_dir", None),
        "frontend": pick(args.frontend, "LANLENS_FRONTEND", "frontend", None),
    }


def cmd_serve(args) -> int:
    settings = _serve_settings(args)
    args.store = settings["store"]
    args.data_dir = settings["data_dir"]
    store = _open_store(args)
    app = create_app(store, frontend_dir=settings["frontend"])
    import uvicorn
    uvicorn.run(app, host=settings["host"], port=settings["port"])
    return 0


def cmd_export(args) -> int:
    store = _open_store(args)
    os.makedirs(args.out, exist_ok=True)
    for path in store.export_release_csvs(args.out):
        print(path)
    return 0


def cmd_delete(args) -> int:
    store = _open_store(args)
    try:
        if args.only:
            counts = {"hints": store.delete_hints(args.device, args.only)}
        else:
            counts = store.delete_device(args.device)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    print(json.dumps(counts, indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    store = _open_store(args)
    build, render = REPORT_KINDS[args.kind]
    if args.kind == "hardcoded-dns":
        report = build(store, args.expected_resolver)
    else:
        report = build(store)
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        sys.stdout.write(render(report))
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanlens",
        description="LAN traffic inspector: capture client and collector.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source_flags(p):
        p.add_argument("--pcap", help="replay a capture file")
        p.add_argument("--interface", help="capture live on this interface")

    def add_state_flags(p):
        p.add_argument("--state-dir",
                       help="client state directory (salt, user id)")
        p.add_argument("--state", help="monitor state file")

    p = sub.add_parser("scan", help="ARP-sweep a subnet and list hosts")
    add_source_flags(p)
    p.add_argument("--subnet", required=True)
    p.add_argument("--engine-mac", default="02:00:00:00:00:01")
    p.add_argument("--engine-ip", default="0.0.0.0")
    p.add_argument("--gateway-ip")
    p.add_argument("--timeout", type=float, default=3.0)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("monitor", help="add or remove intercepted devices")
    add_state_flags(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--add", metavar="MAC")
    group.add_argument("--remove", metavar="MAC")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("capture",
                       help="parse traffic into anonymized upload batches")
    add_source_flags(p)
    add_state_flags(p)
    p.add_argument("--subnet", required=True,
                   help="local subnet, for the remote/local split")
    p.add_argument("--collector", help="collector base URL to upload to")
    p.add_argument("--out", help="also write batches to this JSONL file")
    p.add_argument("--monitor-all", action="store_true",
                   help="treat every seen device as monitored")
    p.add_argument("--share-timezone", action="store_true",
                   help="include the local timezone in uploads")
    p.add_argument("--timezone", default="UTC")
    p.add_argument("--batch-seconds", type=float,
                   default=DEFAULT_BATCH_SECONDS)
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("serve", help="run the collector service")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--store")
    p.add_argument("--data-dir")
    p.add_argument("--frontend", help="directory of dashboard assets")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="write the three release CSV files")
    p.add_argument("--store")
    p.add_argument("--data-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("delete", help="erase one device's data")
    p.add_argument("--store")
    p.add_argument("--data-dir")
    p.add_argument("--device", required=True)
    p.add_argument("--only", choices=("dhcp", "ssdp"))
    p.set_defaults(func=cmd_delete)

    p = sub.add_parser("report", help="run an analysis over a store")
    p.add_argument("kind", choices=sorted(REPORT_KINDS))
    p.add_argument("--store")
    p.add_argument("--data-dir")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--expected-resolver",
                   help="DHCP resolver for the hardcoded-dns report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
