"""Remote endpoint enrichment: IP -> hostname, company, tracker flag, country.

Hostname resolution follows a strict precedence so the most trustworthy
evidence wins: the device's own DNS answers, then SNI from its hellos, then
passive DNS, then reverse DNS. Only the first two count as confident;
everything else is carried but marked uncertain.

The "registered domain" reduction (ads.doubleclick.net -> doubleclick.net)
implements the public-suffix algorithm over a bundled snapshot: exception
rules beat wildcard and exact rules, longer rules beat shorter, and the
implicit "*" rule covers unknown TLDs.
"""

from __future__ import annotations

import ipaddress
import importlib.resources
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

CONFIDENT_SOURCES = ("dns-answer", "sni")
RESOLUTION_SOURCES = CONFIDENT_SOURCES + ("passive-dns", "reverse-dns", "none")
CONTROL_PORTS = (1883, 8883, 5222, 5223)


def _data_text(name: str) -> str:
    return importlib.resources.files("lanlens.data").joinpath(name).read_text()


class PublicSuffixList:
    def __init__(self, rules_text: str):
        self._exact: set[tuple[str, ...]] = set()
        self._wildcard: set[tuple[str, ...]] = set()
        self._exception: set[tuple[str, ...]] = set()
        for line in rules_text.splitlines():
            line = line.strip()
            if not line or line.startswith("//"):
                continue
            if line.startswith("!"):
                self._exception.add(tuple(line[1:].lower().split(".")))
            elif line.startswith("*."):
                self._wildcard.add(tuple(line.lower().split(".")))
            else:
                self._exact.add(tuple(line.lower().split(".")))

    @staticmethod
    def _normalize(hostname: str) -> Optional[list[str]]:
        hostname = hostname.strip().rstrip(".").lower()
        if not hostname or "." not in hostname:
            return None
        try:
            ipaddress.ip_address(hostname)
            return None
        except ValueError:
            pass
        labels = hostname.split(".")
        if any(not lab for lab in labels):
            return None
        return labels

    def _suffix_length(self, labels: list[str]) -> int:
        """Number of labels (from the right) forming the public suffix."""
        best_exception = 0
        best_rule = 0
        n = len(labels)
        for start in range(n):
            tail = tuple(labels[start:])
            if tail in self._exception:
                best_exception = max(best_exception, len(tail))
            if tail in self._exact:
                best_rule = max(best_rule, len(tail))
            if len(tail) >= 2 and ("*",) + tail[1:] in self._wildcard:
                best_rule = max(best_rule, len(tail))
        if best_exception:
            return best_exception - 1  # exception rule: suffix drops its left label
        if best_rule:
            return best_rule
        return 1  # implicit "*": the bare TLD

    def public_suffix(self, hostname: str) -> Optional[str]:
        labels = self._normalize(hostname)
        if labels is None:
            return None
        return ".".join(labels[len(labels) - self._suffix_length(labels):])

    def registered_domain(self, hostname: str) -> Optional[str]:
        labels = self._normalize(hostname)
        if labels is None:
            return None
        keep = self._suffix_length(labels) + 1
        if keep > len(labels):
            return None  # the hostname is itself a public suffix
        return ".".join(labels[len(labels) - keep:])


def load_public_suffix_list(path: Optional[str] = None) -> PublicSuffixList:
    if path is None:
        return PublicSuffixList(_data_text("public_suffix_snapshot.dat"))
    with open(path) as fh:
        return PublicSuffixList(fh.read())


@dataclass(frozen=True)
class EndpointInfo:
    remote_ip: str
    hostname: Optional[str]
    resolution_source: str
    registered_domain: Optional[str]
    company: Optional[str]
    is_tracker: bool
    country: Optional[str]
    service_guess: Optional[str]
    confident: bool

    def __post_init__(self):
        if self.resolution_source not in RESOLUTION_SOURCES:
            raise ValueError(f"resolution source {self.resolution_source!r}")
        if self.hostname and self.resolution_source == "none":
            raise ValueError("hostname without a source")
        if self.is_tracker and not self.registered_domain:
            raise ValueError("tracker flag without a registered domain")
        if self.confident != (self.resolution_source in CONFIDENT_SOURCES):
            raise ValueError("confident flag disagrees with source")


@dataclass
class ListDatabases:
    psl: PublicSuffixList
    tracker_domains: frozenset[str] = frozenset()
    domain_owners: Mapping[str, str] = field(default_factory=dict)
    port_services: Mapping[tuple[int, str], str] = field(default_factory=dict)
    country_ranges: tuple = ()  # (IPv4Network, ISO code), longest prefix first
    passive_dns: Mapping[str, str] = field(default_factory=dict)
    reverse_dns: Optional[Callable[[str], Optional[str]]] = None

    def country_for(self, ip: str) -> Optional[str]:
        addr = ipaddress.IPv4Address(ip)
        for network, code in self.country_ranges:
            if addr in network:
                return code
        return None


def _load_tracker_domains(text: str) -> frozenset[str]:
    out = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            out.add(line)
    return frozenset(out)


def _load_domain_owners(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        domain, _, company = line.partition(",")
        out[domain.strip().lower()] = company.strip()
    return out


def _load_port_services(text: str) -> dict[tuple[int, str], str]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        port, transport, service = line.split(",", 2)
        out[(int(port), transport.strip())] = service.strip()
    return out


def _load_country_ranges(text: str):
    ranges = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cidr, _, code = line.partition(",")
        ranges.append((ipaddress.IPv4Network(cidr.strip()), code.strip().upper()))
    ranges.sort(key=lambda item: item[0].prefixlen, reverse=True)
    return tuple(ranges)


def _load_passive_dns(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        ip, _, hostname = line.partition(",")
        out[ip.strip()] = hostname.strip().lower()
    return out


def load_databases(data_dir: Optional[str] = None) -> ListDatabases:
    """Load every bundled list fixture (or the same files from ``data_dir``)."""
    if data_dir is None:
        read = _data_text
    else:
        import os

        def read(name: str) -> str:
            with open(os.path.join(data_dir, name)) as fh:
                return fh.read()

    return ListDatabases(
        psl=PublicSuffixList(read("public_suffix_snapshot.dat")),
        tracker_domains=_load_tracker_domains(read("tracker_domains.txt")),
        domain_owners=_load_domain_owners(read("domain_owners.csv")),
        port_services=_load_port_services(read("port_services.csv")),
        country_ranges=_load_country_ranges(read("geo_countries.csv")),
        passive_dns=_load_passive_dns(read("passive_dns_fixture.csv")),
    )


class _History:
    """ip -> hostname evidence, newest wins, per-device entries over global."""

    def __init__(self):
        self._per_device: dict[tuple[str, str], tuple[float, str]] = {}
        self._global: dict[str, tuple[float, str]] = {}

    def add(self, device_id: str, ip: str, hostname: str, ts: float) -> None:
        hostname = hostname.lower().rstrip(".")
        if not hostname:
            return
        key = (device_id, ip)
        if key not in self._per_device or ts >= self._per_device[key][0]:
            self._per_device[key] = (ts, hostname)
        if ip not in self._global or ts >= self._global[ip][0]:
            self._global[ip] = (ts, hostname)

    def lookup(self, ip: str, device_id: Optional[str] = None) -> Optional[str]:
        if device_id is not None:
            hit = self._per_device.get((device_id, ip))
            if hit:
                return hit[1]
        hit = self._global.get(ip)
        return hit[1] if hit else None


class DnsIndex(_History):
    def observe(self, device_id: str, observation) -> None:
        for ip in observation.answers:
            self.add(device_id, ip, observation.query_name, observation.timestamp)


class SniIndex(_History):
    pass


def resolve_endpoint(ip: str, dns_history: DnsIndex, sni_history: SniIndex,
                     dbs: ListDatabases, *, device_id: Optional[str] = None,
                     port: Optional[int] = None,
                     transport: str = "tcp") -> EndpointInfo:
    """Enrich one remote IP. Pure given its inputs; absence is never an error."""
    hostname = dns_history.lookup(ip, device_id)
    source = "dns-answer" if hostname else "none"
    if not hostname:
        hostname = sni_history.lookup(ip, device_id)
        source = "sni" if hostname else "none"
    if not hostname:
        hostname = dbs.passive_dns.get(ip)
        source = "passive-dns" if hostname else "none"
    if not hostname and dbs.reverse_dns is not None:
        hostname = dbs.reverse_dns(ip)
        source = "reverse-dns" if hostname else "none"

    registered = dbs.psl.registered_domain(hostname) if hostname else None
    service = dbs.port_services.get((port, transport)) if port is not None else None
    return EndpointInfo(
        remote_ip=ip,
        hostname=hostname,
        resolution_source=source,
        registered_domain=registered,
        company=dbs.domain_owners.get(registered) if registered else None,
        is_tracker=bool(registered and registered in dbs.tracker_domains),
        country=dbs.country_for(ip),
        service_guess=service,
        confident=source in CONFIDENT_SOURCES,
    )


def is_tracker(hostname: str, dbs: ListDatabases) -> bool:
    registered = dbs.psl.registered_domain(hostname)
    return bool(registered and registered in dbs.tracker_domains)


def detect_control_platforms(flows: Iterable, device_labels: Mapping[str, tuple[str, str]],
                             dns_history: DnsIndex, sni_history: SniIndex,
                             dbs: ListDatabases,
                             ports: Iterable[int] = CONTROL_PORTS
                             ) -> dict[str, set[tuple[str, str]]]:
    """Group device-control traffic (MQTT/XMPP ports) by platform domain.

    Returns platform -> set of (category, vendor) pairs drawn from the labels
    of devices seen talking to it. Unresolvable platforms group under the IP.
    """
    port_set = set(ports)
    platforms: dict[str, set[tuple[str, str]]] = {}
    for flow in flows:
        if flow.key.remote_port not in port_set:
            continue
        label = device_labels.get(flow.key.device_id)
        if label is None:
            continue
        info = resolve_endpoint(flow.key.remote_ip, dns_history, sni_history, dbs,
                                device_id=flow.key.device_id,
                                port=flow.key.remote_port,
                                transport=flow.key.transport)
        platform = info.registered_domain or flow.key.remote_ip
        platforms.setdefault(platform, set()).add(label)
    return platforms
