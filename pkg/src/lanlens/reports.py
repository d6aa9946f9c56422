"""Fleet-level analyses computed from a collector store snapshot.

Every report is a pure function of the store contents: same store, same
output, byte for byte. Each returns a JSON-ready dict and has a matching
``*_csv`` renderer that flattens it into the shared CRLF CSV shape used
by the release exporter.
"""

from __future__ import annotations

from collections import Counter
from typing import Mapping, Optional, Union

from .endpoints import CONTROL_PORTS, detect_control_platforms, resolve_endpoint
from .identity import CATEGORIES
from .store import Store, _render_csv
from .tls import VERSION_NAMES, WEAK_CLASSES, classify_weak_ciphers, load_cipher_registry

# Bucket for devices that have observations but no owner label yet.
UNLABELED = "(unlabeled)"

# Column order for version counts: oldest protocol first.
VERSION_COLUMNS = tuple(VERSION_NAMES[code] for code in sorted(VERSION_NAMES))

HYGIENE_HEADER = ("vendor", "devices") + VERSION_COLUMNS + WEAK_CLASSES
HTTP_TLS_HEADER = ("category", "devices_http", "devices_tls", "devices_both",
                   "vendors_http", "vendors_tls", "vendors_both")
TRACKER_HEADER = ("domain", "tv_count", "tv_pct", "computer_count",
                  "computer_pct", "computer_decile")
RESOLVER_HEADER = ("device_id", "expected_resolver", "flagged", "reason",
                   "resolvers")
PLATFORM_HEADER = ("platform", "category", "vendor")


def _csv(header: tuple, rows) -> str:
    return _render_csv(header, rows).decode()


def tls_hygiene(store: Store) -> dict:
    """Per-vendor TLS version and weak-cipher exposure.

    A device counts under a version if at least one of its hellos
    negotiated it, so a device that speaks both TLS 1.0 and TLS 1.2
    appears in both columns. Weak-cipher columns likewise count devices,
    not hellos: one RC4 offer anywhere marks the device.
    """
    registry = load_cipher_registry()
    labels = store.labels_map()

    device_versions: dict[str, set] = {}
    device_weak: dict[str, set] = {}
    for device_id, _ts, version, suites, _fp in store.hello_rows():
        versions = device_versions.setdefault(device_id, set())
        if version in VERSION_COLUMNS:
            versions.add(version)
        flags = classify_weak_ciphers(suites, registry)
        weak = device_weak.setdefault(device_id, set())
        for cls, present in zip(WEAK_CLASSES, (flags.has_null,
                                               flags.has_anonymous,
                                               flags.has_export,
                                               flags.has_rc4)):
            if present:
                weak.add(cls)

    by_vendor: dict[str, list] = {}
    for device_id in device_versions:
        vendor = labels.get(device_id, ("", ""))[1] or UNLABELED
        by_vendor.setdefault(vendor, []).append(device_id)

    rows = []
    for vendor, devices in by_vendor.items():
        versions = {name: sum(1 for d in devices if name in device_versions[d])
                    for name in VERSION_COLUMNS}
        weak = {cls: sum(1 for d in devices if cls in device_weak[d])
                for cls in WEAK_CLASSES}
        rows.append({"vendor": vendor, "devices": len(devices),
                     "versions": versions, "weak_ciphers": weak})
    rows.sort(key=lambda row: (-row["devices"], row["vendor"]))
    return {"rows": rows}


def tls_hygiene_csv(report: dict) -> str:
    rows = [(r["vendor"], r["devices"])
            + tuple(r["versions"][name] for name in VERSION_COLUMNS)
            + tuple(r["weak_ciphers"][cls] for cls in WEAK_CLASSES)
            for r in report["rows"]]
    return _csv(HYGIENE_HEADER, rows)


def http_vs_tls(store: Store) -> dict:
    """Per-category device and vendor counts for cleartext HTTP vs TLS.

    HTTP means at least one flow window to remote port 80 over TCP;
    TLS means at least one captured client hello on any port. The
    "both" column can never exceed the smaller of the other two.
    """
    http_devices = {w.key.device_id for w in store.flow_windows()
                    if w.key.remote_port == 80 and w.key.transport == "tcp"}
    tls_devices = {row[0] for row in store.hello_rows()}

    devices = store.list_devices()
    category_of = {d["device_id"]: d["category"] or UNLABELED for d in devices}
    vendor_of = {d["device_id"]: d["vendor"] or UNLABELED for d in devices}

    present = {category_of[d] for d in category_of}
    ordered = [c for c in CATEGORIES if c in present]
    if UNLABELED in present:
        ordered.append(UNLABELED)

    rows = []
    for category in ordered:
        members = {d for d, c in category_of.items() if c == category}
        http = members & http_devices
        tls = members & tls_devices
        both = http & tls
        rows.append({
            "category": category,
            "devices_http": len(http),
            "devices_tls": len(tls),
            "devices_both": len(both),
            "vendors_http": len({vendor_of[d] for d in http}),
            "vendors_tls": len({vendor_of[d] for d in tls}),
            "vendors_both": len({vendor_of[d] for d in both}),
        })
    return {"rows": rows}


def http_vs_tls_csv(report: dict) -> str:
    rows = [tuple(r[col] for col in HTTP_TLS_HEADER) for r in report["rows"]]
    return _csv(HTTP_TLS_HEADER, rows)


def tracker_prevalence(store: Store) -> dict:
    """Tracker reach among TVs versus computers.

    For each advertising or analytics domain observed in the store, the
    report gives the share of TVs and of computers that contacted it.
    Each tracker also gets the decile it occupies when every domain
    contacted by at least one computer is ranked by computer count,
    most-contacted first: decile 1 is mainstream traffic, decile 10 is
    long-tail. Only devices with at least one flow window enter the
    denominators.
    """
    dns_index, sni_index = store.indexes()
    dbs = store.databases
    labels = store.labels_map()

    contacted: dict[str, set] = {}
    for window in store.flow_windows():
        device_id = window.key.device_id
        contacted.setdefault(device_id, set())
        info = resolve_endpoint(window.key.remote_ip, dns_index, sni_index,
                                dbs, device_id=device_id,
                                port=window.key.remote_port,
                                transport=window.key.transport)
        if info.registered_domain:
            contacted[device_id].add(info.registered_domain)

    def cohort(category: str) -> set:
        return {d for d in contacted
                if labels.get(d, ("", ""))[0] == category}

    tvs = cohort("tv")
    computers = cohort("computer")

    tv_counts: Counter = Counter()
    comp_counts: Counter = Counter()
    for device_id, domains in contacted.items():
        bucket = tv_counts if device_id in tvs else (
            comp_counts if device_id in computers else None)
        if bucket is not None:
            bucket.update(domains)

    # Rank every computer-contacted domain once; trackers read their
    # decile out of that shared ordering.
    ranked = sorted(comp_counts, key=lambda d: (-comp_counts[d], d))
    total_ranked = len(ranked)
    decile_of = {domain: 1 + position * 10 // total_ranked
                 for position, domain in enumerate(ranked)}

    def pct(count: int, total: int) -> float:
        return 100.0 * count / total if total else 0.0

    rows = []
    for domain in set(tv_counts) | set(comp_counts):
        if domain not in dbs.tracker_domains:
            continue
        rows.append({
            "domain": domain,
            "tv_count": tv_counts[domain],
            "tv_pct": pct(tv_counts[domain], len(tvs)),
            "computer_count": comp_counts[domain],
            "computer_pct": pct(comp_counts[domain], len(computers)),
            "computer_decile": decile_of.get(domain),
        })
    rows.sort(key=lambda r: (-r["tv_pct"], -r["computer_pct"], r["domain"]))
    return {"tv_total": len(tvs), "computer_total": len(computers),
            "rows": rows}


def tracker_prevalence_csv(report: dict) -> str:
    rows = []
    for r in report["rows"]:
        decile = r["computer_decile"]
        rows.append((r["domain"], r["tv_count"], "%.1f" % r["tv_pct"],
                     r["computer_count"], "%.1f" % r["computer_pct"],
                     "" if decile is None else decile))
    return _csv(TRACKER_HEADER, rows)


def hardcoded_dns(store: Store,
                  expected: Union[str, Mapping[str, str], None]) -> dict:
    """Devices that ignore the resolver the LAN hands out.

    ``expected`` is the DHCP-advertised resolver, either one address for
    the whole network or a per-device mapping. A device is flagged when
    any of its DNS queries went to a different server. Devices whose
    expected resolver is unknown are reported but never flagged; their
    row carries the reason instead.
    """
    per_device: dict[str, Counter] = {}
    for upload in store.dns_uploads():
        per_device.setdefault(upload.device_id, Counter())[
            upload.resolver_ip] += 1

    rows = []
    for device_id in sorted(per_device):
        if isinstance(expected, Mapping):
            expect = expected.get(device_id)
        else:
            expect = expected
        resolvers = per_device[device_id]
        if not expect:
            flagged, reason = False, "unknown-dhcp-resolver"
        else:
            flagged = any(r != expect for r in resolvers)
            reason = None
        rows.append({"device_id": device_id,
                     "expected_resolver": expect or None,
                     "resolvers": {ip: resolvers[ip]
                                   for ip in sorted(resolvers)},
                     "flagged": flagged,
                     "reason": reason})
    return {"rows": rows,
            "flagged_total": sum(1 for r in rows if r["flagged"])}


def hardcoded_dns_csv(report: dict) -> str:
    rows = []
    for r in report["rows"]:
        resolvers = " ".join(f"{ip}:{count}"
                             for ip, count in r["resolvers"].items())
        rows.append((r["device_id"], r["expected_resolver"] or "",
                     "yes" if r["flagged"] else "no", r["reason"] or "",
                     resolvers))
    return _csv(RESOLVER_HEADER, rows)


def control_platforms(store: Store,
                      ports: Optional[tuple] = None) -> dict:
    """Cloud control endpoints shared across device makers.

    Wraps the endpoint-level detector: flows to control-channel ports
    grouped by the registered domain they resolve to, listing which
    (category, vendor) pairs ride on each platform.
    """
    dns_index, sni_index = store.indexes()
    platforms = detect_control_platforms(
        store.flow_windows(), store.labels_map(), dns_index, sni_index,
        store.databases, ports=ports if ports is not None else CONTROL_PORTS)
    rows = [{"platform": platform, "category": category, "vendor": vendor}
            for platform, pairs in sorted(platforms.items())
            for category, vendor in sorted(pairs)]
    return {"rows": rows}


def control_platforms_csv(report: dict) -> str:
    rows = [(r["platform"], r["category"], r["vendor"])
            for r in report["rows"]]
    return _csv(PLATFORM_HEADER, rows)
