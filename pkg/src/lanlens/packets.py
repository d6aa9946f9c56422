"""Packet sources: live capture and offline pcap replay behind one interface.

Every downstream stage consumes ``RawPacket`` streams, so replaying a pcap
fixture exercises exactly the same code paths as a live interface. Replay
sources additionally keep an injection log so ARP schedules can be asserted
offline instead of hitting a network.

Readers accept classic pcap and pcapng files; the writer emits classic pcap
only (microsecond, little-endian).
"""

from __future__ import annotations

import os
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional

LINKTYPE_ETHERNET = 1

# classic pcap magic numbers, as the first 4 bytes appear on disk
_PCAP_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", 1_000_000),  # little-endian, microseconds
    b"\xa1\xb2\xc3\xd4": (">", 1_000_000),
    b"\x4d\x3c\xb2\xa1": ("<", 1_000_000_000),  # little-endian, nanoseconds
    b"\xa1\xb2\x3c\x4d": (">", 1_000_000_000),
}

_PCAPNG_SHB = 0x0A0D0D0A
_PCAPNG_IDB = 0x00000001
_PCAPNG_SPB = 0x00000003
_PCAPNG_EPB = 0x00000006
_PCAPNG_BYTE_ORDER_MAGIC = 0x1A2B3C4D


class SourceError(Exception):
    """Base class for packet source failures."""


class UnsupportedLinkType(SourceError):
    def __init__(self, link_type: int):
        super().__init__(f"unsupported link type {link_type}; only ethernet is handled")
        self.link_type = link_type


class MalformedCapture(SourceError):
    """The capture file violates its own format."""


class ClosedSourceError(SourceError):
    """Operation on a source that was already closed."""


class MalformedFrame(SourceError):
    """Frame too short to be an ethernet frame."""


class CapturePermissionError(SourceError):
    """Opening a live interface needs raw socket privileges."""


@dataclass(frozen=True)
class RawPacket:
    """One captured frame, timestamp normalized to whole microseconds."""

    ts_us: int
    frame: bytes
    original_length: int

    @property
    def timestamp(self) -> float:
        """Seconds since epoch."""
        return self.ts_us / 1_000_000

    @property
    def capture_length(self) -> int:
        return len(self.frame)


@dataclass(frozen=True)
class SourceDescriptor:
    kind: str  # "live-interface" | "pcap-file"
    identifier: str
    link_type: str = "ethernet"


def _normalize_us(ticks: int, resolution: int) -> int:
    if resolution == 1_000_000:
        return ticks
    if resolution > 1_000_000:
        return ticks * 1_000_000 // resolution
    return ticks * (1_000_000 // resolution)


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise MalformedCapture(f"truncated capture file: wanted {n} bytes, got {len(buf)}")
    return buf


def _iter_pcap(fh, first4: bytes) -> Iterator[RawPacket]:
    endian, resolution = _PCAP_MAGICS[first4]
    header = _read_exact(fh, 20)
    _maj, _min, _zone, _sig, _snaplen, network = struct.unpack(endian + "HHiIII", header)
    if network != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(network)
    rec = struct.Struct(endian + "IIII")
    while True:
        head = fh.read(16)
        if not head:
            return
        if len(head) != 16:
            raise MalformedCapture("truncated pcap record header")
        ts_sec, ts_frac, incl_len, orig_len = rec.unpack(head)
        data = _read_exact(fh, incl_len)
        ts_us = ts_sec * 1_000_000 + _normalize_us(ts_frac, resolution)
        yield RawPacket(ts_us=ts_us, frame=data, original_length=max(orig_len, incl_len))


def _iter_pcapng(fh) -> Iterator[RawPacket]:
    endian = "<"
    # timestamp resolution per interface, microseconds unless if_tsresol says otherwise
    iface_res: list[int] = []
    iface_link: list[int] = []
    while True:
        head = fh.read(8)
        if not head:
            return
        if len(head) != 8:
            raise MalformedCapture("truncated pcapng block header")
        btype, blen = struct.unpack(endian + "II", head)
        if btype == _PCAPNG_SHB:
            # peek byte order magic before trusting blen
            bom_raw = _read_exact(fh, 4)
            bom = struct.unpack(endian + "I", bom_raw)[0]
            if bom != _PCAPNG_BYTE_ORDER_MAGIC:
                endian = ">" if endian == "<" else "<"
                btype, blen = struct.unpack(endian + "II", head)
                bom = struct.unpack(endian + "I", bom_raw)[0]
                if bom != _PCAPNG_BYTE_ORDER_MAGIC:
                    raise MalformedCapture("bad pcapng byte order magic")
            # consume the rest of the block body plus the trailing length copy
            _read_exact(fh, blen - 12)
            iface_res = []
            iface_link = []
            continue
        if blen < 12 or blen % 4 != 0:
            raise MalformedCapture(f"bad pcapng block length {blen}")
        body = _read_exact(fh, blen - 12)
        _read_exact(fh, 4)  # trailing copy of the length
        if btype == _PCAPNG_IDB:
            linktype, _resv, _snap = struct.unpack(endian + "HHI", body[:8])
            iface_link.append(linktype)
            iface_res.append(_parse_tsresol(body[8:], endian))
        elif btype == _PCAPNG_EPB:
            iface, ts_hi, ts_lo, cap_len, orig_len = struct.unpack(endian + "IIIII", body[:20])
            if iface >= len(iface_link):
                raise MalformedCapture("packet references undeclared interface")
            if iface_link[iface] != LINKTYPE_ETHERNET:
                raise UnsupportedLinkType(iface_link[iface])
            data = body[20 : 20 + cap_len]
            if len(data) != cap_len:
                raise MalformedCapture("truncated pcapng packet data")
            ticks = (ts_hi << 32) | ts_lo
            yield RawPacket(
                ts_us=_normalize_ticks(ticks, iface_res[iface]),
                frame=data,
                original_length=max(orig_len, cap_len),
            )
        elif btype == _PCAPNG_SPB:
            if not iface_link:
                raise MalformedCapture("simple packet block before any interface block")
            if iface_link[0] != LINKTYPE_ETHERNET:
                raise UnsupportedLinkType(iface_link[0])
            (orig_len,) = struct.unpack(endian + "I", body[:4])
            data = body[4 : 4 + orig_len]
            yield RawPacket(ts_us=0, frame=data, original_length=max(orig_len, len(data)))
        # other block types (name resolution, statistics, ...) are skipped


def _parse_tsresol(options: bytes, endian: str) -> int:
    """Walk pcapng options for if_tsresol (code 9). Default is 1e-6."""
    off = 0
    while off + 4 <= len(options):
        code, length = struct.unpack(endian + "HH", options[off : off + 4])
        off += 4
        if code == 0:
            break
        val = options[off : off + length]
        off += (length + 3) & ~3
        if code == 9 and length >= 1:
            v = val[0]
            if v & 0x80:
                return 2 ** (v & 0x7F)
            return 10**v
    return 1_000_000


def _normalize_ticks(ticks: int, resolution: int) -> int:
    if resolution == 1_000_000:
        return ticks
    return ticks * 1_000_000 // resolution


def read_pcap(path: str) -> Iterator[RawPacket]:
    """Yield packets from a pcap or pcapng file in stored order.

    Timestamps are clamped to be non-decreasing so downstream windowing can
    rely on stream order.
    """
    with open(path, "rb") as fh:
        first4 = fh.read(4)
        if len(first4) < 4:
            if not first4:
                return  # zero-byte file: empty stream
            raise MalformedCapture("file shorter than any capture header")
        if first4 in _PCAP_MAGICS:
            packets = _iter_pcap(fh, first4)
        elif first4 in (b"\x0a\x0d\x0d\x0a",):
            fh.seek(0)
            packets = _iter_pcapng_from_start(fh)
        else:
            raise MalformedCapture("not a pcap or pcapng file")
        last = None
        for pkt in packets:
            if last is not None and pkt.ts_us < last:
                pkt = RawPacket(ts_us=last, frame=pkt.frame, original_length=pkt.original_length)
            last = pkt.ts_us
            yield pkt


def _iter_pcapng_from_start(fh) -> Iterator[RawPacket]:
    return _iter_pcapng(fh)


def write_pcap(path: str, packets) -> int:
    """Write classic little-endian microsecond pcap. Returns packet count."""
    n = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 0x40000, LINKTYPE_ETHERNET))
        for pkt in packets:
            fh.write(
                struct.pack(
                    "<IIII",
                    pkt.ts_us // 1_000_000,
                    pkt.ts_us % 1_000_000,
                    len(pkt.frame),
                    pkt.original_length,
                )
            )
            fh.write(pkt.frame)
            n += 1
    return n


class PacketSource:
    """Common source behavior: iteration plus synchronized injection."""

    def __init__(self) -> None:
        self._closed = False
        self._inject_lock = threading.Lock()

    def __iter__(self) -> Iterator[RawPacket]:
        raise NotImplementedError

    def inject(self, frame: bytes) -> None:
        if self._closed:
            raise ClosedSourceError("inject on closed source")
        if len(frame) < 14:
            raise MalformedFrame(f"frame of {len(frame)} bytes is shorter than an ethernet header")
        with self._inject_lock:
            self._send(frame)

    def _send(self, frame: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed


class ReplaySource(PacketSource):
    """Replays a pcap file; injected frames go to ``injection_log``."""

    def __init__(self, path: str):
        super().__init__()
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        self.path = path
        self.injection_log: list[bytes] = []
        self._iterating = False

    def __iter__(self) -> Iterator[RawPacket]:
        if self._closed:
            raise ClosedSourceError("iterate on closed source")
        return read_pcap(self.path)

    def _send(self, frame: bytes) -> None:
        self.injection_log.append(bytes(frame))


class LiveSource(PacketSource):
    """AF_PACKET capture on a named interface (Linux, needs CAP_NET_RAW)."""

    SNAPLEN = 65535

    def __init__(self, interface: str):
        super().__init__()
        self.interface = interface
        try:
            self._sock = socket.socket(
                socket.AF_PACKET, socket.SOCK_RAW, socket.htons(0x0003)  # ETH_P_ALL
            )
            self._sock.bind((interface, 0))
        except PermissionError as exc:
            raise CapturePermissionError(
                f"raw capture on {interface} requires elevated privileges"
            ) from exc
        except OSError as exc:
            raise SourceError(f"cannot open interface {interface}: {exc}") from exc

    def __iter__(self) -> Iterator[RawPacket]:
        while not self._closed:
            data = self._sock.recv(self.SNAPLEN)
            yield RawPacket(
                ts_us=int(time.time() * 1_000_000),
                frame=data,
                original_length=len(data),
            )

    def _send(self, frame: bytes) -> None:
        self._sock.send(frame)

    def close(self) -> None:
        super().close()
        self._sock.close()


def open_source(descriptor: SourceDescriptor) -> PacketSource:
    if descriptor.link_type != "ethernet":
        raise UnsupportedLinkType(-1)
    if descriptor.kind == "pcap-file":
        return ReplaySource(descriptor.identifier)
    if descriptor.kind == "live-interface":
        return LiveSource(descriptor.identifier)
    raise SourceError(f"unknown source kind {descriptor.kind!r}")
