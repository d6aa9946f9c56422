"""Collector-side persistence: batch ingestion, deletion, queries, CSV export.

A single SQLite file (or in-memory database) holds everything the collector
knows. Ingestion is transactional and idempotent under exact batch replay:
each accepted batch's canonical JSON digest is remembered, and a batch whose
digest is already present is acknowledged without touching any table. Rows
from distinct batches that land in the same flow slot are merged by summing
counters, mirroring the in-client window merge rule.

Deletion is tombstone-based. Once a device is deleted its hashed id can never
reappear through later uploads; rows referencing it are rejected one by one
with reason "deleted" rather than failing the whole batch.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import sqlite3
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .endpoints import (
    DnsIndex,
    ListDatabases,
    SniIndex,
    load_databases,
    resolve_endpoint,
)
from .flows import WINDOW_SECONDS, FlowKey, FlowWindow
from .identity import (
    CATEGORIES,
    EvidenceBundle,
    LabelRules,
    LabelTriple,
    OuiDatabase,
    FINGERBANK_DOMAIN_LIMIT,
    load_label_rules,
    load_oui_database,
    standardize,
    validate,
)
from .privacy import HINT_DELETE_KINDS
from .traffic import HINT_KINDS
from .uploads import (
    CLASSIFICATIONS,
    DnsUpload,
    HintUpload,
    UploadBatch,
    batch_to_dict,
)

MAX_BATCH_SPAN_SECONDS = 60.0
_DEVICE_ID = re.compile(r"[0-9a-f]{64}")

LABELS_CSV = "Device_labels.csv"
FLOWS_CSV = "Network_flows.csv"
HELLOS_CSV = "TLS_client_hello.csv"

LABELS_COLUMNS = ("device_id", "category", "vendor")
FLOWS_COLUMNS = ("device_id", "first_packet_ts", "remote_ip_or_hostname",
                 "remote_port", "protocol", "bytes_sent", "bytes_received")
HELLOS_COLUMNS = ("device_id", "timestamp", "tls_version", "cipher_suites",
                  "fingerprint")

_SECTIONS = ("devices", "flow_windows", "client_hellos", "dns_observations",
             "identity_hints", "labels")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS devices (
    device_id TEXT PRIMARY KEY,
    oui TEXT NOT NULL DEFAULT '',
    classification TEXT NOT NULL DEFAULT 'unknown',
    monitored INTEGER NOT NULL DEFAULT 0,
    overridden INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS labels (
    device_id TEXT PRIMARY KEY,
    raw_name TEXT NOT NULL DEFAULT '',
    raw_category TEXT NOT NULL DEFAULT '',
    raw_vendor TEXT NOT NULL DEFAULT '',
    category TEXT NOT NULL,
    vendor TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS flows (
    device_id TEXT NOT NULL,
    remote_ip TEXT NOT NULL,
    remote_port INTEGER NOT NULL,
    transport TEXT NOT NULL,
    window_start INTEGER NOT NULL,
    bytes_sent INTEGER NOT NULL,
    bytes_received INTEGER NOT NULL,
    first_packet_ts REAL,
    PRIMARY KEY (device_id, remote_ip, remote_port, transport, window_start)
);
CREATE TABLE IF NOT EXISTS hellos (
    device_id TEXT NOT NULL,
    timestamp REAL NOT NULL,
    tls_version TEXT NOT NULL,
    cipher_suites TEXT NOT NULL,
    fingerprint TEXT NOT NULL,
    sni TEXT NOT NULL DEFAULT '',
    remote_ip TEXT NOT NULL DEFAULT '',
    remote_port INTEGER NOT NULL DEFAULT 0,
    UNIQUE (device_id, timestamp, fingerprint)
);
CREATE TABLE IF NOT EXISTS dns (
    device_id TEXT NOT NULL,
    query_name TEXT NOT NULL,
    answers TEXT NOT NULL,
    resolver_ip TEXT NOT NULL,
    timestamp REAL NOT NULL,
    UNIQUE (device_id, query_name, answers, resolver_ip, timestamp)
);
CREATE TABLE IF NOT EXISTS hints (
    device_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    value TEXT NOT NULL,
    timestamp REAL NOT NULL,
    UNIQUE (device_id, kind, value, timestamp)
);
CREATE TABLE IF NOT EXISTS outcomes (
    device_id TEXT NOT NULL,
    method TEXT NOT NULL,
    target TEXT NOT NULL,
    outcome TEXT NOT NULL,
    PRIMARY KEY (device_id, method, target)
);
CREATE TABLE IF NOT EXISTS tombstones (
    device_id TEXT PRIMARY KEY
);
CREATE TABLE IF NOT EXISTS ingested (
    digest TEXT PRIMARY KEY
);
CREATE INDEX IF NOT EXISTS flows_by_device ON flows (device_id);
CREATE INDEX IF NOT EXISTS dns_by_device ON dns (device_id);
"""

_MERGE_FLOW = """
INSERT INTO flows (device_id, remote_ip, remote_port, transport, window_start,
                   bytes_sent, bytes_received, first_packet_ts)
VALUES (?, ?, ?, ?, ?, ?, ?, ?)
ON CONFLICT (device_id, remote_ip, remote_port, transport, window_start)
DO UPDATE SET
    bytes_sent = bytes_sent + excluded.bytes_sent,
    bytes_received = bytes_received + excluded.bytes_received,
    first_packet_ts = CASE
        WHEN first_packet_ts IS NULL THEN excluded.first_packet_ts
        WHEN excluded.first_packet_ts IS NULL THEN first_packet_ts
        ELSE MIN(first_packet_ts, excluded.first_packet_ts)
    END
"""


@dataclass(frozen=True)
class IngestAck:
    """Per-section accepted counts plus per-reason rejected counts."""
    accepted: dict = field(default_factory=dict)
    rejected: dict = field(default_factory=dict)
    duplicate: bool = False

    def total_accepted(self) -> int:
        return sum(self.accepted.values())


def _zero_counts() -> dict:
    return {section: 0 for section in _SECTIONS}


def batch_digest(batch: UploadBatch) -> str:
    canonical = json.dumps(batch_to_dict(batch), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _join_suites(values: Iterable[int]) -> str:
    return "-".join(str(v) for v in values)


class Store:
    """All collector state behind one connection, writes serialized."""

    def __init__(self, path: str = ":memory:", *,
                 databases: Optional[ListDatabases] = None,
                 rules: Optional[LabelRules] = None,
                 oui_db: Optional[OuiDatabase] = None,
                 fingerbank=None):
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._lock = threading.RLock()
        self._databases = databases
        self._rules = rules
        self._oui_db = oui_db
        self._fingerbank = fingerbank
        with self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def databases(self) -> ListDatabases:
        if self._databases is None:
            self._databases = load_databases()
        return self._databases

    @property
    def rules(self) -> LabelRules:
        if self._rules is None:
            self._rules = load_label_rules()
        return self._rules

    @property
    def oui_db(self) -> OuiDatabase:
        if self._oui_db is None:
            self._oui_db = load_oui_database()
        return self._oui_db

    # ------------------------------------------------------------- ingest

    def ingest(self, batch: UploadBatch) -> IngestAck:
        span = batch.time_span()
        if span is not None and span[1] - span[0] > MAX_BATCH_SPAN_SECONDS:
            raise ValueError(
                f"batch spans {span[1] - span[0]:.1f}s, "
                f"limit is {MAX_BATCH_SPAN_SECONDS:.0f}s")

        digest = batch_digest(batch)
        accepted = _zero_counts()
        rejected: dict[str, int] = {}
        with self._lock, self._conn:
            already = self._conn.execute(
                "SELECT 1 FROM ingested WHERE digest = ?", (digest,)).fetchone()
            if already:
                return IngestAck(accepted=accepted, rejected=rejected,
                                 duplicate=True)
            self._conn.execute("INSERT INTO ingested (digest) VALUES (?)",
                               (digest,))
            dead = {row[0] for row in
                    self._conn.execute("SELECT device_id FROM tombstones")}

            def admit(device_id: str) -> Optional[str]:
                if not _DEVICE_ID.fullmatch(device_id):
                    return "unhashed-id"
                if device_id in dead:
                    return "deleted"
                return None

            def reject(reason: str) -> None:
                rejected[reason] = rejected.get(reason, 0) + 1

            for device in batch.devices:
                reason = admit(device.device_id)
                if reason:
                    reject(reason)
                    continue
                self._conn.execute(
                    "INSERT INTO devices (device_id, oui, classification,"
                    " monitored) VALUES (?, ?, ?, ?)"
                    " ON CONFLICT (device_id) DO UPDATE SET"
                    " oui = excluded.oui,"
                    " classification = excluded.classification,"
                    " monitored = excluded.monitored",
                    (device.device_id, device.oui, device.classification,
                     int(device.monitored)))
                accepted["devices"] += 1

            for window in batch.flow_windows:
                reason = admit(window.key.device_id)
                if reason:
                    reject(reason)
                    continue
                self._ensure_device(window.key.device_id)
                self._conn.execute(_MERGE_FLOW, (
                    window.key.device_id, window.key.remote_ip,
                    window.key.remote_port, window.key.transport,
                    window.window_start, window.bytes_sent,
                    window.bytes_received, window.first_packet_ts))
                accepted["flow_windows"] += 1

            for hello in batch.client_hellos:
                reason = admit(hello.device_id)
                if reason:
                    reject(reason)
                    continue
                self._ensure_device(hello.device_id)
                record = hello.record
                self._conn.execute(
                    "INSERT OR IGNORE INTO hellos (device_id, timestamp,"
                    " tls_version, cipher_suites, fingerprint, sni,"
                    " remote_ip, remote_port) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (record.device_id, record.timestamp,
                     record.effective_version,
                     _join_suites(record.cipher_suites), record.fingerprint,
                     record.sni or "", hello.remote_ip, hello.remote_port))
                accepted["client_hellos"] += 1

            for obs in batch.dns_observations:
                reason = admit(obs.device_id)
                if reason:
                    reject(reason)
                    continue
                self._ensure_device(obs.device_id)
                self._conn.execute(
                    "INSERT OR IGNORE INTO dns (device_id, query_name,"
                    " answers, resolver_ip, timestamp) VALUES (?, ?, ?, ?, ?)",
                    (obs.device_id, obs.query_name, " ".join(obs.answers),
                     obs.resolver_ip, obs.timestamp))
                accepted["dns_observations"] += 1

            for hint in batch.identity_hints:
                reason = admit(hint.device_id)
                if reason:
                    reject(reason)
                    continue
                self._ensure_device(hint.device_id)
                self._conn.execute(
                    "INSERT OR IGNORE INTO hints (device_id, kind, value,"
                    " timestamp) VALUES (?, ?, ?, ?)",
                    (hint.device_id, hint.kind, hint.value, hint.timestamp))
                accepted["identity_hints"] += 1

            for triple in batch.labels:
                reason = admit(triple.device_id)
                if reason:
                    reject(reason)
                    continue
                self._ensure_device(triple.device_id)
                self._store_label(triple)
                accepted["labels"] += 1

        return IngestAck(accepted=accepted, rejected=rejected)

    def _ensure_device(self, device_id: str) -> None:
        # a device that uploads observations is by definition monitored
        self._conn.execute(
            "INSERT OR IGNORE INTO devices (device_id, monitored)"
            " VALUES (?, 1)", (device_id,))

    def _store_label(self, triple: LabelTriple) -> None:
        # the collector never trusts client-side standardization
        std = standardize(triple, self.rules)
        self._conn.execute(
            "INSERT INTO labels (device_id, raw_name, raw_category,"
            " raw_vendor, category, vendor) VALUES (?, ?, ?, ?, ?, ?)"
            " ON CONFLICT (device_id) DO UPDATE SET"
            " raw_name = excluded.raw_name,"
            " raw_category = excluded.raw_category,"
            " raw_vendor = excluded.raw_vendor,"
            " category = excluded.category,"
            " vendor = excluded.vendor",
            (std.device_id, std.raw_name, std.raw_category, std.raw_vendor,
             std.std_category, std.std_vendor))
        self._refresh_outcomes(std)

    def _refresh_outcomes(self, std: LabelTriple) -> None:
        evidence = self._evidence_for(std.device_id)
        self._conn.execute("DELETE FROM outcomes WHERE device_id = ?",
                           (std.device_id,))
        for outcome in validate(evidence, std, self.rules):
            self._conn.execute(
                "INSERT INTO outcomes (device_id, method, target, outcome)"
                " VALUES (?, ?, ?, ?)",
                (outcome.device_id, outcome.method, outcome.target,
                 outcome.outcome))

    def _evidence_for(self, device_id: str) -> EvidenceBundle:
        hints = tuple(
            HintUpload(device_id, kind, value, ts)
            for kind, value, ts in self._conn.execute(
                "SELECT kind, value, timestamp FROM hints WHERE device_id = ?"
                " ORDER BY timestamp, kind, value", (device_id,)))
        names = [row[0] for row in self._conn.execute(
            "SELECT query_name FROM dns WHERE device_id = ?"
            " ORDER BY timestamp, query_name", (device_id,))]
        names += [row[0] for row in self._conn.execute(
            "SELECT sni FROM hellos WHERE device_id = ? AND sni != ''"
            " ORDER BY timestamp, sni", (device_id,))]
        domains: list[str] = []
        for name in names:
            registered = self.databases.psl.registered_domain(name) or name
            if registered not in domains:
                domains.append(registered)
            if len(domains) == FINGERBANK_DOMAIN_LIMIT:
                break

        row = self._conn.execute(
            "SELECT oui FROM devices WHERE device_id = ?",
            (device_id,)).fetchone()
        oui = row[0] if row else ""
        oui_vendor = None
        fingerbank_name = None
        if oui:
            padded = oui + ":00:00:00"  # lookup reads the first 3 octets only
            oui_vendor = self.oui_db.lookup(padded)
            if self._fingerbank is not None:
                agent = next((h.value for h in hints
                              if h.kind == "http-user-agent"), None)
                fingerbank_name = self._fingerbank(
                    OuiDatabase.oui_of(padded), agent, tuple(domains))
        return EvidenceBundle(device_id=device_id, hints=hints,
                              oui_vendor=oui_vendor, domains=tuple(domains),
                              fingerbank_name=fingerbank_name)

    # ----------------------------------------------------------- deletion

    def delete_device(self, device_id: str) -> dict:
        """Purge every row for the device and block the id forever.

        Returns per-table deleted row counts. Calling again for an already
        deleted device returns all zeros; a device the store has never seen
        raises KeyError.
        """
        tables = ("devices", "labels", "flows", "hellos", "dns", "hints",
                  "outcomes")
        with self._lock, self._conn:
            if self._conn.execute("SELECT 1 FROM tombstones WHERE device_id"
                                  " = ?", (device_id,)).fetchone():
                return {table: 0 for table in tables}
            if not self._conn.execute(
                    "SELECT 1 FROM devices WHERE device_id = ?",
                    (device_id,)).fetchone():
                raise KeyError(device_id)
            counts = {}
            for table in tables:
                cursor = self._conn.execute(
                    f"DELETE FROM {table} WHERE device_id = ?", (device_id,))
                counts[table] = cursor.rowcount
            self._conn.execute(
                "INSERT INTO tombstones (device_id) VALUES (?)", (device_id,))
        return counts

    def delete_hints(self, device_id: str, only: str) -> int:
        """Drop one scope of discovery hints (see HINT_DELETE_KINDS)."""
        kinds = HINT_DELETE_KINDS[only]
        with self._lock, self._conn:
            if not self._conn.execute(
                    "SELECT 1 FROM devices WHERE device_id = ?",
                    (device_id,)).fetchone():
                raise KeyError(device_id)
            marks = ", ".join("?" for _ in kinds)
            cursor = self._conn.execute(
                f"DELETE FROM hints WHERE device_id = ? AND kind IN ({marks})",
                (device_id, *kinds))
            return cursor.rowcount

    # ------------------------------------------------------------ queries

    def device_exists(self, device_id: str) -> bool:
        return self._conn.execute(
            "SELECT 1 FROM devices WHERE device_id = ?",
            (device_id,)).fetchone() is not None

    def _hint_names(self) -> dict:
        """Best self-announced name per device, for unlabeled rows."""
        order = {"dhcp-hostname": 0, "mdns": 1, "ssdp": 2, "upnp": 3}
        best: dict[str, tuple] = {}
        for device_id, kind, value, ts in self._conn.execute(
                "SELECT device_id, kind, value, timestamp FROM hints"):
            rank = order.get(kind)
            if rank is None or not value:
                continue
            candidate = (rank, -ts, value)
            if device_id not in best or candidate < best[device_id]:
                best[device_id] = candidate
        return {device_id: entry[2] for device_id, entry in best.items()}

    def list_devices(self) -> list[dict]:
        hint_names = self._hint_names()
        rows = self._conn.execute(
            "SELECT d.device_id, d.oui, d.classification, d.monitored,"
            " d.overridden,"
            " COALESCE(l.raw_name, ''), COALESCE(l.category, ''),"
            " COALESCE(l.vendor, ''),"
            " COALESCE((SELECT SUM(bytes_sent) FROM flows f"
            "           WHERE f.device_id = d.device_id), 0),"
            " COALESCE((SELECT SUM(bytes_received) FROM flows f"
            "           WHERE f.device_id = d.device_id), 0)"
            " FROM devices d LEFT JOIN labels l USING (device_id)"
            " ORDER BY d.device_id").fetchall()
        return [
            {"device_id": device_id, "oui": oui, "classification": cls,
             "monitored": bool(monitored), "overridden": bool(overridden),
             "name": name, "hint_name": hint_names.get(device_id, ""),
             "category": category, "vendor": vendor,
             "bytes_sent": sent, "bytes_received": received}
            for (device_id, oui, cls, monitored, overridden, name, category,
                 vendor, sent, received) in rows]

    def get_device(self, device_id: str) -> dict:
        for row in self.list_devices():
            if row["device_id"] == device_id:
                return row
        raise KeyError(device_id)

    def set_monitor(self, device_id: str, monitored: bool) -> dict:
        with self._lock, self._conn:
            cursor = self._conn.execute(
                "UPDATE devices SET monitored = ? WHERE device_id = ?",
                (int(monitored), device_id))
            if cursor.rowcount == 0:
                raise KeyError(device_id)
        return {"device_id": device_id, "monitored": monitored,
                "overridden": self.get_device(device_id)["overridden"]}

    def set_override(self, device_id: str) -> None:
        """Mark a general-purpose device as explicitly opted in by its owner.

        The collector records only the fact of the override. The MAC the
        owner typed to prove possession is checked by the capture client
        against its own interface table and must never reach this store.
        """
        with self._lock, self._conn:
            cursor = self._conn.execute(
                "UPDATE devices SET overridden = 1 WHERE device_id = ?",
                (device_id,))
            if cursor.rowcount == 0:
                raise KeyError(device_id)

    def upsert_label(self, device_id: str, raw_name: str, raw_category: str,
                     raw_vendor: str) -> dict:
        triple = LabelTriple(device_id=device_id, raw_name=raw_name,
                             raw_category=raw_category, raw_vendor=raw_vendor)
        with self._lock, self._conn:
            if not self.device_exists(device_id):
                raise KeyError(device_id)
            self._store_label(triple)
        std = standardize(triple, self.rules)
        return {"device_id": device_id, "category": std.std_category,
                "vendor": std.std_vendor,
                "outcomes": self.device_outcomes(device_id)}

    def device_outcomes(self, device_id: str) -> list[dict]:
        rows = self._conn.execute(
            "SELECT method, target, outcome FROM outcomes WHERE device_id = ?"
            " ORDER BY method, target", (device_id,))
        return [{"method": m, "target": t, "outcome": o} for m, t, o in rows]

    def device_endpoints(self, device_id: str) -> list[dict]:
        """Per-endpoint traffic table for one device.

        Flows are resolved per remote IP, then grouped by the display name
        (hostname when any resolution exists, the bare IP otherwise). A group
        is confident only if every constituent IP resolved confidently; the
        company, country and tracker verdict come from the constituent that
        carried the most bytes.
        """
        if not self.device_exists(device_id):
            raise KeyError(device_id)
        per_ip = self._conn.execute(
            "SELECT remote_ip, remote_port, transport,"
            " SUM(bytes_sent), SUM(bytes_received)"
            " FROM flows WHERE device_id = ?"
            " GROUP BY remote_ip, remote_port, transport",
            (device_id,)).fetchall()
        dns_index, sni_index = self.indexes()
        groups: dict[str, dict] = {}
        for ip, port, transport, sent, received in per_ip:
            info = resolve_endpoint(ip, dns_index, sni_index, self.databases,
                                    device_id=device_id, port=port,
                                    transport=transport)
            display = info.hostname or ip
            group = groups.setdefault(display, {
                "endpoint": display, "bytes_sent": 0, "bytes_received": 0,
                "confident": True, "company": None, "country": None,
                "is_tracker": False, "service": None, "_best": -1})
            group["bytes_sent"] += sent
            group["bytes_received"] += received
            group["confident"] = group["confident"] and info.confident
            if sent + received > group["_best"]:
                group["_best"] = sent + received
                group["company"] = info.company
                group["country"] = info.country
                group["is_tracker"] = info.is_tracker
                group["service"] = info.service_guess
        out = sorted(groups.values(),
                     key=lambda g: (-(g["bytes_sent"] + g["bytes_received"]),
                                    g["endpoint"]))
        for group in out:
            del group["_best"]
        return out

    def bandwidth_series(self, device_id: str, window: int = WINDOW_SECONDS
                         ) -> dict:
        """Per-endpoint byte totals rebucketed to any multiple of 5 seconds."""
        if window < WINDOW_SECONDS or window % WINDOW_SECONDS:
            raise ValueError(
                f"window must be a multiple of {WINDOW_SECONDS}, "
                f"got {window}")
        if not self.device_exists(device_id):
            raise KeyError(device_id)
        rows = self._conn.execute(
            "SELECT remote_ip, window_start, SUM(bytes_sent),"
            " SUM(bytes_received) FROM flows WHERE device_id = ?"
            " GROUP BY remote_ip, window_start", (device_id,)).fetchall()
        dns_index, sni_index = self.indexes()
        display_of: dict[str, str] = {}
        series: dict[str, dict[int, list[int]]] = {}
        for ip, start, sent, received in rows:
            if ip not in display_of:
                info = resolve_endpoint(ip, dns_index, sni_index,
                                        self.databases, device_id=device_id)
                display_of[ip] = info.hostname or ip
            bucket = (start // window) * window
            points = series.setdefault(display_of[ip], {})
            pair = points.setdefault(bucket, [0, 0])
            pair[0] += sent
            pair[1] += received
        out = []
        for endpoint, points in series.items():
            total = sum(s + r for s, r in points.values())
            out.append({
                "endpoint": endpoint,
                "total_bytes": total,
                "points": [
                    {"window_start": start, "bytes_sent": pair[0],
                     "bytes_received": pair[1]}
                    for start, pair in sorted(points.items())],
            })
        out.sort(key=lambda s: (-s["total_bytes"], s["endpoint"]))
        return {"device_id": device_id, "window": window, "series": out}

    def vocabulary(self) -> dict:
        return {
            "categories": list(CATEGORIES),
            "vendors": sorted(set(self.rules.vendor_aliases.values())),
            "classifications": list(CLASSIFICATIONS),
            "hint_kinds": list(HINT_KINDS),
            "hint_delete_scopes": sorted(HINT_DELETE_KINDS),
        }

    # -------------------------------------------------- typed re-readers

    def flow_windows(self) -> list[FlowWindow]:
        rows = self._conn.execute(
            "SELECT device_id, remote_ip, remote_port, transport,"
            " window_start, bytes_sent, bytes_received, first_packet_ts"
            " FROM flows ORDER BY device_id, remote_ip, remote_port,"
            " transport, window_start")
        return [FlowWindow(key=FlowKey(d, ip, port, transport),
                           window_start=start, bytes_sent=sent,
                           bytes_received=received, first_packet_ts=first)
                for d, ip, port, transport, start, sent, received, first
                in rows]

    def dns_uploads(self) -> list[DnsUpload]:
        rows = self._conn.execute(
            "SELECT device_id, query_name, answers, resolver_ip, timestamp"
            " FROM dns ORDER BY device_id, timestamp, query_name")
        return [DnsUpload(device_id=d, query_name=name,
                          answers=tuple(answers.split()),
                          resolver_ip=resolver, timestamp=ts)
                for d, name, answers, resolver, ts in rows]

    def labels_map(self) -> dict:
        """device_id -> (category, vendor) for every labeled device."""
        return {device_id: (category, vendor) for device_id, category, vendor
                in self._conn.execute(
                    "SELECT device_id, category, vendor FROM labels")}

    def hello_rows(self) -> list[tuple]:
        """(device_id, timestamp, tls_version, suites tuple, fingerprint)."""
        rows = self._conn.execute(
            "SELECT device_id, timestamp, tls_version, cipher_suites,"
            " fingerprint FROM hellos"
            " ORDER BY device_id, timestamp, fingerprint")
        return [(d, ts, version,
                 tuple(int(v) for v in suites.split("-") if v), fingerprint)
                for d, ts, version, suites, fingerprint in rows]

    def indexes(self) -> tuple[DnsIndex, SniIndex]:
        """Hostname evidence rebuilt from stored observations."""
        dns_index = DnsIndex()
        for upload in self.dns_uploads():
            dns_index.observe(upload.device_id, upload)
        sni_index = SniIndex()
        for device_id, ts, sni, ip in self._conn.execute(
                "SELECT device_id, timestamp, sni, remote_ip FROM hellos"
                " WHERE sni != '' AND remote_ip != ''"
                " ORDER BY timestamp"):
            sni_index.add(device_id, ip, sni, ts)
        return dns_index, sni_index

    def dump(self) -> dict:
        """Whole-store snapshot for equality assertions."""
        snapshot = {}
        for table in ("devices", "labels", "flows", "hellos", "dns", "hints",
                      "outcomes", "tombstones", "ingested"):
            rows = self._conn.execute(f"SELECT * FROM {table}").fetchall()
            snapshot[table] = sorted(tuple(row) for row in rows)
        return snapshot

    # ------------------------------------------------------------- export

    def export_csv_bytes(self) -> dict:
        """The three release files as bytes, keyed by filename."""
        dns_index, sni_index = self.indexes()

        labels = [(device_id, category, vendor)
                  for device_id, category, vendor in self._conn.execute(
                      "SELECT device_id, category, vendor FROM labels"
                      " ORDER BY device_id")]

        flow_rows = []
        for (device_id, ip, port, transport, start, sent, received,
             first) in self._conn.execute(
                 "SELECT device_id, remote_ip, remote_port, transport,"
                 " window_start, bytes_sent, bytes_received, first_packet_ts"
                 " FROM flows"):
            ts = first if first is not None else float(start)
            display = (dns_index.lookup(ip, device_id)
                       or sni_index.lookup(ip, device_id) or ip)
            flow_rows.append((device_id, ts, display, port, transport,
                              sent, received))
        flow_rows.sort()

        hello_rows = self._conn.execute(
            "SELECT device_id, timestamp, tls_version, cipher_suites,"
            " fingerprint FROM hellos"
            " ORDER BY device_id, timestamp, fingerprint").fetchall()

        return {
            LABELS_CSV: _render_csv(LABELS_COLUMNS, labels),
            FLOWS_CSV: _render_csv(
                FLOWS_COLUMNS,
                [(d, f"{ts:.6f}", display, port, transport, sent, received)
                 for d, ts, display, port, transport, sent, received
                 in flow_rows]),
            HELLOS_CSV: _render_csv(
                HELLOS_COLUMNS,
                [(d, f"{ts:.6f}", version, suites, fingerprint)
                 for d, ts, version, suites, fingerprint in hello_rows]),
        }

    def export_release_csvs(self, directory: str) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        paths = []
        for name, blob in self.export_csv_bytes().items():
            path = os.path.join(directory, name)
            with open(path, "wb") as fh:
                fh.write(blob)
            paths.append(path)
        return paths

    # ------------------------------------------------------------- import

    def import_release_csvs(self, directory: str) -> dict:
        """Load a previously exported release back into this store.

        The release files carry display names (hostname or IP) rather than
        raw IPs, and no hostname evidence; re-exporting an imported store
        therefore reproduces the input byte for byte. Rows that collide on
        (device, remote, port, protocol, window) merge by summing.
        """
        counts = {"labels": 0, "flows": 0, "hellos": 0}
        with self._lock, self._conn:
            for row in _read_csv(os.path.join(directory, LABELS_CSV),
                                 LABELS_COLUMNS):
                device_id, category, vendor = row
                self._ensure_device(device_id)
                self._store_label(LabelTriple(
                    device_id=device_id, raw_category=category,
                    raw_vendor=vendor))
                counts["labels"] += 1
            for row in _read_csv(os.path.join(directory, FLOWS_CSV),
                                 FLOWS_COLUMNS):
                device_id, ts, remote, port, transport, sent, received = row
                first = float(ts)
                start = int(first // WINDOW_SECONDS) * WINDOW_SECONDS
                self._ensure_device(device_id)
                self._conn.execute(_MERGE_FLOW, (
                    device_id, remote, int(port), transport, start,
                    int(sent), int(received), first))
                counts["flows"] += 1
            for row in _read_csv(os.path.join(directory, HELLOS_CSV),
                                 HELLOS_COLUMNS):
                device_id, ts, version, suites, fingerprint = row
                self._ensure_device(device_id)
                self._conn.execute(
                    "INSERT OR IGNORE INTO hellos (device_id, timestamp,"
                    " tls_version, cipher_suites, fingerprint)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (device_id, float(ts), version, suites, fingerprint))
                counts["hellos"] += 1
        return counts


def _render_csv(columns: tuple, rows: Iterable[tuple]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue().encode()


def _read_csv(path: str, columns: tuple) -> list[tuple]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(columns):
            raise ValueError(f"{os.path.basename(path)}: unexpected header"
                             f" {header!r}")
        return [tuple(row) for row in reader]
