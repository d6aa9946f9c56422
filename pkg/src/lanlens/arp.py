"""LAN discovery and interception over ARP.

The engine scans a subnet with who-has requests, then keeps traffic of the
devices the user opted into flowing through this host by telling every
monitored pair (including the gateway) that the other end's IP lives at our
MAC. Two spoof frames per pair per period; with N monitored devices that is
N(N+1) frames every period, i.e. 21(N+1)N bytes/second of overhead at the
standard 42-byte ARP frame and 2-second period.
"""

from __future__ import annotations

import ipaddress
import logging
import struct
import threading
import time
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Optional, Union

from .packets import PacketSource

log = logging.getLogger(__name__)

MAX_MONITORED = 50
SPOOF_PERIOD_SECONDS = 2.0
PACKETS_PER_PAIR = 2
ARP_FRAME_BYTES = 42

ETHERTYPE_ARP = 0x0806
ARP_REQUEST = 1
ARP_REPLY = 2
_BROADCAST = "ff:ff:ff:ff:ff:ff"
_ZERO_MAC = "00:00:00:00:00:00"


class ArpEngineError(Exception):
    pass


class UnboundedScan(ArpEngineError):
    """Subnet too large to sweep with one request per address."""


@dataclass(frozen=True)
class LanHost:
    ip: str
    mac: str
    first_seen: float = 0.0
    last_seen: float = 0.0
    is_gateway: bool = False


@dataclass(frozen=True)
class SpoofSet:
    monitored: tuple[LanHost, ...]
    gateway: LanHost
    period: float = SPOOF_PERIOD_SECONDS
    packets_per_pair: int = PACKETS_PER_PAIR

    def __post_init__(self):
        if len(self.monitored) > MAX_MONITORED:
            raise ArpEngineError(f"{len(self.monitored)} monitored devices exceeds {MAX_MONITORED}")
        if any(h.mac == self.gateway.mac for h in self.monitored):
            raise ArpEngineError("gateway must not be in the monitored set")


def _mac_bytes(mac: str) -> bytes:
    return bytes(int(p, 16) for p in mac.split(":"))


def _mac_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


def build_arp_frame(op: int, sender_mac: str, sender_ip: str, target_mac: str,
                    target_ip: str, eth_dst: Optional[str] = None) -> bytes:
    """Ethernet + ARP, always exactly 42 bytes."""
    if eth_dst is None:
        eth_dst = _BROADCAST if op == ARP_REQUEST else target_mac
    eth = _mac_bytes(eth_dst) + _mac_bytes(sender_mac) + struct.pack("!H", ETHERTYPE_ARP)
    body = struct.pack(
        "!HHBBH6s4s6s4s",
        1, 0x0800, 6, 4, op,
        _mac_bytes(sender_mac), ipaddress.IPv4Address(sender_ip).packed,
        _mac_bytes(target_mac), ipaddress.IPv4Address(target_ip).packed,
    )
    frame = eth + body
    assert len(frame) == ARP_FRAME_BYTES
    return frame


@dataclass(frozen=True)
class ArpMessage:
    op: int
    sender_mac: str
    sender_ip: str
    target_mac: str
    target_ip: str


def parse_arp_frame(frame: bytes) -> Optional[ArpMessage]:
    if len(frame) < ARP_FRAME_BYTES or frame[12:14] != b"\x08\x06":
        return None
    htype, ptype, hlen, plen, op = struct.unpack("!HHBBH", frame[14:22])
    if htype != 1 or ptype != 0x0800 or hlen != 6 or plen != 4:
        return None
    return ArpMessage(
        op=op,
        sender_mac=_mac_str(frame[22:28]),
        sender_ip=str(ipaddress.IPv4Address(frame[28:32])),
        target_mac=_mac_str(frame[32:38]),
        target_ip=str(ipaddress.IPv4Address(frame[38:42])),
    )


def arp_scan(subnet: str, source: PacketSource, *, engine_mac: str, engine_ip: str,
             gateway_ip: Optional[str] = None, timeout: float = 3.0,
             max_hosts: int = MAX_MONITORED) -> list[LanHost]:
    """Sweep the subnet with one who-has per address, collect distinct repliers.

    Hosts are deduplicated by MAC (earliest reply wins) and capped at
    ``max_hosts`` non-gateway entries; the gateway is always kept.
    """
    net = ipaddress.IPv4Network(subnet, strict=False)
    if net.prefixlen < 16:
        raise UnboundedScan(f"refusing to sweep {subnet}: prefix shorter than /16")
    for addr in net.hosts():
        source.inject(build_arp_frame(ARP_REQUEST, engine_mac, engine_ip, _ZERO_MAC, str(addr)))

    by_mac: dict[str, LanHost] = {}
    deadline = time.monotonic() + timeout
    for pkt in source:
        msg = parse_arp_frame(pkt.frame)
        if msg is not None and msg.op == ARP_REPLY and ipaddress.IPv4Address(msg.sender_ip) in net:
            ts = pkt.timestamp
            seen = by_mac.get(msg.sender_mac)
            if seen is None:
                by_mac[msg.sender_mac] = LanHost(
                    ip=msg.sender_ip, mac=msg.sender_mac, first_seen=ts, last_seen=ts,
                    is_gateway=(msg.sender_ip == gateway_ip),
                )
            else:
                by_mac[msg.sender_mac] = replace(seen, last_seen=ts)
        if time.monotonic() > deadline:
            break

    hosts = list(by_mac.values())
    gateway = [h for h in hosts if h.is_gateway]
    others = [h for h in hosts if not h.is_gateway]
    others.sort(key=lambda h: h.first_seen)
    return gateway + others[:max_hosts]


def spoof_schedule(spoof_set: SpoofSet, *, engine_mac: str, engine_ip: str) -> list[bytes]:
    """One period's worth of spoof frames.

    For every unordered pair among gateway plus monitored devices, each side
    is told the other side's IP is at the engine's MAC. Frame count is
    exactly N(N+1) for N monitored devices.
    """
    hosts = (spoof_set.gateway,) + spoof_set.monitored
    for h in hosts:
        if h.ip == engine_ip:
            raise ArpEngineError("refusing to spoof the engine's own address")
    frames: list[bytes] = []
    for i in range(len(hosts)):
        for j in range(i + 1, len(hosts)):
            a, b = hosts[i], hosts[j]
            frames.append(build_arp_frame(ARP_REPLY, engine_mac, b.ip, a.mac, a.ip, eth_dst=a.mac))
            frames.append(build_arp_frame(ARP_REPLY, engine_mac, a.ip, b.mac, b.ip, eth_dst=b.mac))
    return frames


def corrective_schedule(spoof_set: SpoofSet) -> list[bytes]:
    """Truthful replies restoring the real MAC/IP bindings for every spoofed pair."""
    hosts = (spoof_set.gateway,) + spoof_set.monitored
    frames: list[bytes] = []
    for i in range(len(hosts)):
        for j in range(i + 1, len(hosts)):
            a, b = hosts[i], hosts[j]
            frames.append(build_arp_frame(ARP_REPLY, b.mac, b.ip, a.mac, a.ip, eth_dst=a.mac))
            frames.append(build_arp_frame(ARP_REPLY, a.mac, a.ip, b.mac, b.ip, eth_dst=b.mac))
    return frames


SpoofSetProvider = Union[SpoofSet, Callable[[], SpoofSet]]


def run_spoofer(spoof_set: SpoofSetProvider, source: PacketSource, stop: threading.Event, *,
                engine_mac: str, engine_ip: str,
                sleep: Callable[[float], None] = time.sleep) -> None:
    """Inject the spoof schedule every period until ``stop`` is set, then heal.

    The set provider is re-read at each period boundary, never mid-period.
    Injection failures are logged and skipped so one bad send cannot stall
    interception.
    """
    provider = spoof_set if callable(spoof_set) else (lambda: spoof_set)
    current = provider()
    while not stop.is_set():
        current = provider()
        for frame in spoof_schedule(current, engine_mac=engine_mac, engine_ip=engine_ip):
            try:
                source.inject(frame)
            except Exception:
                log.exception("spoof injection failed")
        sleep(current.period)
    for frame in corrective_schedule(current):
        try:
            source.inject(frame)
        except Exception:
            log.exception("corrective injection failed")


class MonitorRegistry:
    """Thread-safe monitored-device set feeding the spoofer.

    Membership changes land atomically; the spoofer picks them up at the next
    period boundary via ``current_set``.
    """

    def __init__(self, gateway: LanHost):
        self._lock = threading.Lock()
        self._gateway = gateway
        self._monitored: dict[str, LanHost] = {}

    def add(self, host: LanHost) -> None:
        with self._lock:
            if host.mac == self._gateway.mac:
                raise ArpEngineError("cannot monitor the gateway")
            if host.mac not in self._monitored and len(self._monitored) >= MAX_MONITORED:
                raise ArpEngineError(f"monitor cap of {MAX_MONITORED} devices reached")
            self._monitored[host.mac] = host

    def remove(self, mac: str) -> None:
        with self._lock:
            self._monitored.pop(mac, None)

    def macs(self) -> set[str]:
        with self._lock:
            return set(self._monitored)

    def current_set(self) -> SpoofSet:
        with self._lock:
            return SpoofSet(monitored=tuple(self._monitored.values()), gateway=self._gateway)


def overhead_bytes_per_second(n: int) -> int:
    """Modeled spoofing bandwidth for n monitored devices: 21(n+1)n bytes/s."""
    if not 0 <= n <= MAX_MONITORED:
        raise ValueError(f"monitored device count {n} outside 0..{MAX_MONITORED}")
    return 21 * (n + 1) * n


def overhead_display(n: int) -> str:
    """Human-readable overhead, e.g. '53.6 KB/s' for 50 devices.

    Half-up decimal rounding: float formatting would show 53.55 as 53.5.
    """
    kb = Decimal(overhead_bytes_per_second(n)) / Decimal(1000)
    return f"{kb.quantize(Decimal('0.1'), rounding=ROUND_HALF_UP)} KB/s"
