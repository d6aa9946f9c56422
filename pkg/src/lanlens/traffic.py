"""Metadata extraction from intercepted frames.

Everything the rest of the system sees comes out of this module, and it is
deliberately narrow: DNS names and answer addresses, remote endpoint byte
counts, discovery-protocol identity hints, and raw TLS ClientHello records.
No other payload bytes survive past parse_packet. Malformed structures are
counted and skipped, never fatal.
"""

from __future__ import annotations

import ipaddress
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .packets import RawPacket

REASSEMBLY_LIMIT = 16 * 1024  # enough for any ClientHello or request header block

HINT_KINDS = ("ssdp", "mdns", "upnp", "http-user-agent", "dhcp-hostname")

_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_VLAN = 0x8100
_PROTO_TCP = 6
_PROTO_UDP = 17
_TCP_SYN = 0x02
_TCP_ACK = 0x10
_BROADCAST_IP = ipaddress.IPv4Address("255.255.255.255")


@dataclass(frozen=True)
class DnsObservation:
    device_mac: str
    query_name: str
    answers: tuple[str, ...]
    resolver_ip: str
    timestamp: float


@dataclass(frozen=True)
class IdentityHint:
    device_mac: str
    kind: str
    value: str
    timestamp: float

    def __post_init__(self):
        if self.kind not in HINT_KINDS:
            raise ValueError(f"unknown hint kind {self.kind!r}")
        if not self.value:
            raise ValueError("empty hint value")


@dataclass(frozen=True)
class RemoteContact:
    device_mac: str
    remote_ip: str
    remote_port: int
    transport: str
    bytes_out: int
    bytes_in: int
    timestamp: float


@dataclass(frozen=True)
class ClientHelloBytes:
    device_mac: str
    remote_ip: str
    remote_port: int
    timestamp: float
    record_bytes: bytes


Observation = Union[DnsObservation, IdentityHint, RemoteContact, ClientHelloBytes]


def reassemble_tcp_prefix(segments: Iterable[tuple[int, bytes]],
                          limit: int = REASSEMBLY_LIMIT) -> bytes:
    """In-order contiguous prefix of a one-direction TCP stream.

    ``segments`` are (byte offset from stream start, payload) pairs in any
    order, overlaps and duplicates allowed. Assembly stops at the first
    missing byte or at ``limit``.
    """
    out = bytearray()
    for off, data in sorted(segments, key=lambda s: s[0]):
        if off > len(out):
            break
        if off + len(data) <= len(out):
            continue
        out += data[len(out) - off:]
        if len(out) >= limit:
            del out[limit:]
            break
    return bytes(out)


# --- DNS wire format ----------------------------------------------------

@dataclass(frozen=True)
class _DnsRecord:
    name: str
    rtype: int
    section: int  # 0=answer 1=authority 2=additional
    rdata_off: int
    rdata_len: int


@dataclass(frozen=True)
class _DnsMessage:
    is_response: bool
    questions: tuple[tuple[str, int], ...]
    records: tuple[_DnsRecord, ...]
    raw: bytes


def _read_name(msg: bytes, off: int) -> tuple[str, int]:
    """Decode a possibly-compressed domain name. Returns (name, next offset)."""
    labels = []
    end = -1
    seen_ptrs = set()
    while True:
        if off >= len(msg):
            raise ValueError("name runs past message end")
        length = msg[off]
        if length == 0:
            if end < 0:
                end = off + 1
            break
        if length & 0xC0 == 0xC0:
            if off + 2 > len(msg):
                raise ValueError("truncated compression pointer")
            ptr = ((length & 0x3F) << 8) | msg[off + 1]
            if ptr in seen_ptrs:
                raise ValueError("compression pointer loop")
            seen_ptrs.add(ptr)
            if end < 0:
                end = off + 2
            off = ptr
            continue
        if length & 0xC0:
            raise ValueError("reserved label type")
        if off + 1 + length > len(msg):
            raise ValueError("truncated label")
        labels.append(msg[off + 1:off + 1 + length].decode("utf-8", "replace"))
        off += 1 + length
    return ".".join(labels).lower(), end


def _parse_dns(msg: bytes) -> _DnsMessage:
    if len(msg) < 12:
        raise ValueError("short DNS header")
    flags, qdcount, ancount, nscount, arcount = struct.unpack("!HHHHH", msg[2:12])
    off = 12
    questions = []
    for _ in range(qdcount):
        name, off = _read_name(msg, off)
        if off + 4 > len(msg):
            raise ValueError("truncated question")
        qtype = struct.unpack("!H", msg[off:off + 2])[0]
        off += 4
        questions.append((name, qtype))
    records = []
    for section, count in enumerate((ancount, nscount, arcount)):
        for _ in range(count):
            name, off = _read_name(msg, off)
            if off + 10 > len(msg):
                raise ValueError("truncated record header")
            rtype, _rclass, _ttl, rdlen = struct.unpack("!HHIH", msg[off:off + 10])
            off += 10
            if off + rdlen > len(msg):
                raise ValueError("truncated rdata")
            records.append(_DnsRecord(name, rtype, section, off, rdlen))
            off += rdlen
    return _DnsMessage(bool(flags & 0x8000), tuple(questions), tuple(records), msg)


def _a_record_ips(msg: _DnsMessage) -> tuple[str, ...]:
    ips = []
    for rec in msg.records:
        if rec.section == 0 and rec.rtype == 1 and rec.rdata_len == 4:
            ips.append(str(ipaddress.IPv4Address(msg.raw[rec.rdata_off:rec.rdata_off + 4])))
    return tuple(ips)


# --- per-flow TCP prefix state ------------------------------------------

_MAX_TRACKED_FLOWS = 4096


class _FlowBuf:
    __slots__ = ("base", "segments", "buffered", "done")

    def __init__(self):
        self.base: Optional[int] = None
        self.segments: list[tuple[int, bytes]] = []
        self.buffered = 0
        self.done = False


def _mac_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


class TrafficParser:
    """Stateful per-packet metadata extractor.

    State is limited to a bounded table of TCP stream prefixes (needed
    because ClientHellos and HTTP headers may span segments). Unrelated
    packets never interact, so results are order-independent across flows.
    """

    def __init__(self, local_subnet: str | ipaddress.IPv4Network):
        self.local_subnet = ipaddress.IPv4Network(str(local_subnet), strict=False)
        self.skipped: Counter[str] = Counter()
        self._flows: dict[tuple, _FlowBuf] = {}

    # A remote endpoint worth counting: off-subnet unicast.
    def _is_remote(self, ip: ipaddress.IPv4Address) -> bool:
        return not (ip in self.local_subnet or ip.is_multicast or ip.is_loopback
                    or ip.is_link_local or ip.is_unspecified or ip == _BROADCAST_IP)

    def parse_packet(self, pkt: RawPacket) -> list[Observation]:
        frame = pkt.frame
        if len(frame) < 14:
            self.skipped["truncated"] += 1
            return []
        ethertype = struct.unpack("!H", frame[12:14])[0]
        l3_off = 14
        if ethertype == _ETHERTYPE_VLAN and len(frame) >= 18:
            ethertype = struct.unpack("!H", frame[16:18])[0]
            l3_off = 18
        if ethertype != _ETHERTYPE_IPV4:
            return []
        ip_hdr = frame[l3_off:]
        if len(ip_hdr) < 20 or ip_hdr[0] >> 4 != 4:
            self.skipped["malformed-ip"] += 1
            return []
        ihl = (ip_hdr[0] & 0x0F) * 4
        if ihl < 20 or len(ip_hdr) < ihl:
            self.skipped["malformed-ip"] += 1
            return []
        total_len = struct.unpack("!H", ip_hdr[2:4])[0]
        frag = struct.unpack("!H", ip_hdr[6:8])[0] & 0x1FFF
        proto = ip_hdr[9]
        src_ip = ipaddress.IPv4Address(ip_hdr[12:16])
        dst_ip = ipaddress.IPv4Address(ip_hdr[16:20])
        if frag:
            self.skipped["fragment"] += 1
            return []
        l4 = ip_hdr[ihl:max(ihl, min(total_len, len(ip_hdr)))]

        src_mac = _mac_str(frame[6:12])
        dst_mac = _mac_str(frame[0:6])
        out: list[Observation] = []

        if proto == _PROTO_UDP and len(l4) >= 8:
            sport, dport, ulen = struct.unpack("!HHH", l4[:6])
            payload = l4[8:max(8, min(ulen, len(l4)))]
            self._contact(out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, dport, "udp")
            self._udp_payload(out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, dport, payload)
        elif proto == _PROTO_TCP and len(l4) >= 20:
            sport, dport, seq = struct.unpack("!HHI", l4[:8])
            doff = (l4[12] >> 4) * 4
            flags = l4[13]
            if doff < 20 or len(l4) < doff:
                self.skipped["malformed-tcp"] += 1
                return out
            payload = l4[doff:]
            self._contact(out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, dport, "tcp")
            key = (str(src_ip), sport, str(dst_ip), dport)
            if sport == 53 and dport != 53 and dst_ip in self.local_subnet:
                # DNS-over-TCP answers flow resolver->device; the resolver may
                # itself be on the local subnet, so check this direction first
                self._tcp_stream(out, pkt, key, dst_mac, str(src_ip), 53,
                                 seq, flags, payload)
            elif src_ip in self.local_subnet:
                self._tcp_stream(out, pkt, key, src_mac, str(dst_ip), dport,
                                 seq, flags, payload)
        return out

    def _contact(self, out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, dport, transport):
        if src_ip in self.local_subnet and self._is_remote(dst_ip):
            out.append(RemoteContact(src_mac, str(dst_ip), dport, transport,
                                     bytes_out=pkt.original_length, bytes_in=0,
                                     timestamp=pkt.timestamp))
        elif dst_ip in self.local_subnet and self._is_remote(src_ip):
            out.append(RemoteContact(dst_mac, str(src_ip), sport, transport,
                                     bytes_out=0, bytes_in=pkt.original_length,
                                     timestamp=pkt.timestamp))

    # --- UDP protocols ---------------------------------------------------

    def _udp_payload(self, out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, dport, payload):
        if dport == 53 or sport == 53:
            self._dns(out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, payload)
        elif dport == 5353 and src_ip in self.local_subnet:
            self._mdns(out, pkt, src_mac, payload)
        elif (dport == 1900 or sport == 1900) and src_ip in self.local_subnet:
            self._ssdp(out, pkt, src_mac, payload)
        elif dport == 67 and sport == 68:
            self._dhcp(out, pkt, payload)

    def _dns(self, out, pkt, src_ip, dst_ip, src_mac, dst_mac, sport, payload):
        try:
            msg = _parse_dns(payload)
        except ValueError:
            self.skipped["malformed-dns"] += 1
            return
        if not msg.questions:
            self.skipped["malformed-dns"] += 1
            return
        qname = msg.questions[0][0]
        if not qname:
            return
        if msg.is_response:
            # answered by the resolver at src; the device is the destination
            if dst_ip not in self.local_subnet:
                return
            out.append(DnsObservation(dst_mac, qname, _a_record_ips(msg),
                                      resolver_ip=str(src_ip), timestamp=pkt.timestamp))
        else:
            if src_ip not in self.local_subnet:
                return
            out.append(DnsObservation(src_mac, qname, (),
                                      resolver_ip=str(dst_ip), timestamp=pkt.timestamp))

    def _mdns(self, out, pkt, src_mac, payload):
        try:
            msg = _parse_dns(payload)
        except ValueError:
            self.skipped["malformed-mdns"] += 1
            return
        if not msg.is_response:
            return
        values = []
        for rec in msg.records:
            if rec.rtype == 12:  # PTR: the advertised instance name is the rdata
                try:
                    rdname, _ = _read_name(msg.raw, rec.rdata_off)
                except ValueError:
                    self.skipped["malformed-mdns"] += 1
                    continue
                values.append(rdname)
            elif rec.rtype in (33, 16, 1):  # SRV/TXT/A owner names
                values.append(rec.name)
        for value in dict.fromkeys(v for v in values if v):
            out.append(IdentityHint(src_mac, "mdns", value, pkt.timestamp))

    def _ssdp(self, out, pkt, src_mac, payload):
        try:
            text = payload.decode("latin-1")
        except Exception:
            self.skipped["malformed-ssdp"] += 1
            return
        lines = text.split("\r\n")
        first = lines[0].upper() if lines else ""
        # announcements and search responses describe the sender; searches do not
        if not (first.startswith("NOTIFY") or first.startswith("HTTP/1.1 200")):
            return
        for line in lines[1:]:
            name, sep, value = line.partition(":")
            if not sep:
                continue
            name = name.strip().upper()
            value = value.strip()
            if not value:
                continue
            if name in ("SERVER", "USN"):
                out.append(IdentityHint(src_mac, "ssdp", value, pkt.timestamp))
            elif name == "LOCATION":
                out.append(IdentityHint(src_mac, "upnp", value, pkt.timestamp))

    def _dhcp(self, out, pkt, payload):
        if len(payload) < 244 or payload[0] != 1 or payload[1] != 1 or payload[2] != 6:
            self.skipped["malformed-dhcp"] += 1
            return
        if payload[236:240] != b"\x63\x82\x53\x63":
            self.skipped["malformed-dhcp"] += 1
            return
        chaddr = _mac_str(payload[28:34])
        options = payload[240:]
        message_type = None
        hostname = None
        i = 0
        while i < len(options):
            opt = options[i]
            if opt == 0:
                i += 1
                continue
            if opt == 255:
                break
            if i + 2 > len(options):
                self.skipped["malformed-dhcp"] += 1
                return
            length = options[i + 1]
            value = options[i + 2:i + 2 + length]
            if len(value) < length:
                self.skipped["malformed-dhcp"] += 1
                return
            if opt == 53 and length == 1:
                message_type = value[0]
            elif opt == 12:
                hostname = value.decode("utf-8", "replace").strip()
            i += 2 + length
        if message_type == 3 and hostname:  # hostnames taken from requests only
            out.append(IdentityHint(chaddr, "dhcp-hostname", hostname, pkt.timestamp))

    # --- TCP stream prefixes ----------------------------------------------

    def _tcp_stream(self, out, pkt, key, device_mac, remote_ip, service_port,
                    seq, flags, payload):
        if flags & _TCP_SYN and not flags & _TCP_ACK:
            buf = _FlowBuf()
            buf.base = (seq + 1) & 0xFFFFFFFF
            self._remember(key, buf)
            return
        if not payload:
            return
        buf = self._flows.get(key)
        if buf is None:
            buf = _FlowBuf()
            buf.base = seq  # mid-stream pickup: treat first data byte as offset 0
            self._remember(key, buf)
        if buf.done:
            return
        offset = (seq - buf.base) & 0xFFFFFFFF
        if offset > REASSEMBLY_LIMIT:
            self._finish(buf)
            return
        buf.segments.append((offset, payload))
        buf.buffered += len(payload)
        prefix = reassemble_tcp_prefix(buf.segments)
        done = self._classify_prefix(out, pkt, device_mac, remote_ip, service_port, prefix)
        if done or buf.buffered > REASSEMBLY_LIMIT:
            self._finish(buf)

    def _remember(self, key, buf):
        if len(self._flows) >= _MAX_TRACKED_FLOWS:
            self._flows.pop(next(iter(self._flows)))
        self._flows[key] = buf

    def _finish(self, buf):
        # keep the entry so later segments of the stream are not re-classified
        buf.done = True
        buf.segments = []

    def _classify_prefix(self, out, pkt, device_mac, remote_ip, service_port, prefix) -> bool:
        """True when this flow needs no further buffering.

        The TLS check runs before the port-specific ones so hellos are found
        on any port, including 80 and 53.
        """
        if not prefix:
            return False
        if prefix[0] == 0x16 and (len(prefix) < 3 or (prefix[1] == 3 and prefix[2] <= 4)):
            if len(prefix) < 9:
                return False
            record_len = struct.unpack("!H", prefix[3:5])[0]
            if 5 + record_len > REASSEMBLY_LIMIT:
                return True
            if len(prefix) < 5 + record_len:
                return False
            if prefix[5] != 0x01:  # handshake but not a ClientHello
                return True
            out.append(ClientHelloBytes(device_mac, remote_ip, service_port, pkt.timestamp,
                                        bytes(prefix[:5 + record_len])))
            return True
        if service_port == 53:
            if len(prefix) < 2:
                return False
            mlen = struct.unpack("!H", prefix[:2])[0]
            if len(prefix) < 2 + mlen:
                return False
            try:
                msg = _parse_dns(prefix[2:2 + mlen])
            except ValueError:
                self.skipped["malformed-dns"] += 1
                return True
            if msg.questions and msg.questions[0][0]:
                qname = msg.questions[0][0]
                answers = _a_record_ips(msg) if msg.is_response else ()
                out.append(DnsObservation(device_mac, qname, answers,
                                          resolver_ip=remote_ip, timestamp=pkt.timestamp))
            return True
        if service_port == 80:
            head, sep, _ = prefix.partition(b"\r\n\r\n")
            if not sep:
                return len(prefix) >= REASSEMBLY_LIMIT
            lines = head.decode("latin-1", "replace").split("\r\n")
            request = lines[0].split(" ")
            if len(request) != 3 or not request[2].startswith("HTTP/1."):
                return True
            for line in lines[1:]:
                name, colon, value = line.partition(":")
                if colon and name.strip().lower() == "user-agent" and value.strip():
                    out.append(IdentityHint(device_mac, "http-user-agent",
                                            value.strip(), pkt.timestamp))
                    break
            return True
        return True  # some other protocol; nothing to extract
