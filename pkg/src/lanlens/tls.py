"""ClientHello structure analysis.

Parses raw handshake records captured by the traffic stage into structured
records, classifies advertised cipher suites against a bundled registry
snapshot, and computes a JA3-style digest so results line up with common
fingerprinting tooling.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import struct
from dataclasses import dataclass, field
from typing import Optional

VERSION_NAMES = {
    0x0300: "SSL3.0",
    0x0301: "TLS1.0",
    0x0302: "TLS1.1",
    0x0303: "TLS1.2",
    0x0304: "TLS1.3",
}
_LEGACY_VERSIONS = (0x0300, 0x0301, 0x0302, 0x0303)
TLS13 = 0x0304

WEAK_CLASSES = ("null", "anonymous", "export", "rc4")


class HelloParseError(Exception):
    """Base for ClientHello parse failures; ``code`` names the failure class."""
    code = "parse-error"


class TruncatedRecord(HelloParseError):
    code = "truncated"


class HandshakeTypeMismatch(HelloParseError):
    code = "handshake-type"


class LengthMismatch(HelloParseError):
    code = "length-inconsistency"


class UnknownVersion(HelloParseError):
    code = "unknown-version"


def is_grease(value: int) -> bool:
    # reserved 0x?A?A values (both bytes identical, low nibbles 0xA); noise
    # injected by clients to keep middleboxes honest
    return (value & 0x0F0F) == 0x0A0A and (value >> 8) == (value & 0xFF)


@dataclass(frozen=True)
class ClientHelloRecord:
    device_id: str
    timestamp: float
    legacy_version: str
    effective_version: str
    cipher_suites: tuple[int, ...]
    extensions: tuple[int, ...]
    groups: tuple[int, ...]
    ec_point_formats: tuple[int, ...]
    sni: Optional[str]
    fingerprint: str

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "timestamp": self.timestamp,
            "legacy_version": self.legacy_version,
            "effective_version": self.effective_version,
            "cipher_suites": list(self.cipher_suites),
            "extensions": list(self.extensions),
            "groups": list(self.groups),
            "ec_point_formats": list(self.ec_point_formats),
            "sni": self.sni,
            "fingerprint": self.fingerprint,
        }


def record_from_dict(data: dict) -> ClientHelloRecord:
    return ClientHelloRecord(
        device_id=data["device_id"],
        timestamp=data["timestamp"],
        legacy_version=data["legacy_version"],
        effective_version=data["effective_version"],
        cipher_suites=tuple(data["cipher_suites"]),
        extensions=tuple(data["extensions"]),
        groups=tuple(data["groups"]),
        ec_point_formats=tuple(data["ec_point_formats"]),
        sni=data["sni"],
        fingerprint=data["fingerprint"],
    )


class _Reader:
    """Bounded cursor; running past the end means the capture was cut short."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedRecord(f"needed {n} bytes at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self.take(2))[0]

    def u24(self) -> int:
        high, low = struct.unpack("!BH", self.take(3))
        return (high << 16) | low

    def remaining(self) -> int:
        return len(self.buf) - self.pos


def _parse_sni(data: bytes) -> Optional[str]:
    r = _Reader(data)
    list_len = r.u16()
    if list_len != r.remaining():
        raise LengthMismatch("server_name list length")
    while r.remaining() >= 3:
        name_type = r.u8()
        name_len = r.u16()
        name = r.take(name_len)
        if name_type == 0:
            return name.decode("ascii", "replace")
    return None


def _parse_u16_list(data: bytes) -> tuple[int, ...]:
    r = _Reader(data)
    length = r.u16()
    if length != r.remaining() or length % 2:
        raise LengthMismatch("u16 vector length")
    return tuple(struct.unpack(f"!{length // 2}H", r.take(length)))


def parse_client_hello(record: bytes, *, device_id: str = "",
                       timestamp: float = 0.0) -> ClientHelloRecord:
    """Parse one TLS record holding a ClientHello handshake message.

    Raises TruncatedRecord, HandshakeTypeMismatch, LengthMismatch, or
    UnknownVersion; each carries a distinct ``code``.
    """
    r = _Reader(record)
    content_type = r.u8()
    if content_type != 0x16:
        raise HandshakeTypeMismatch(f"record content type {content_type}")
    r.u16()  # record-layer version; stacks disagree on it, so ignored
    record_len = r.u16()
    if record_len > r.remaining():
        raise TruncatedRecord("record length exceeds captured bytes")
    body = _Reader(r.take(record_len))

    handshake_type = body.u8()
    if handshake_type != 0x01:
        raise HandshakeTypeMismatch(f"handshake type {handshake_type}")
    hs_len = body.u24()
    if hs_len > body.remaining():
        raise LengthMismatch("handshake length exceeds record")
    hello = _Reader(body.take(hs_len))

    legacy = hello.u16()
    if legacy not in _LEGACY_VERSIONS:
        raise UnknownVersion(f"legacy version 0x{legacy:04x}")
    hello.take(32)  # client random; never retained
    hello.take(hello.u8())  # session id
    suites_len = hello.u16()
    if suites_len % 2 or suites_len == 0:
        raise LengthMismatch("cipher suite vector length")
    cipher_suites = tuple(struct.unpack(f"!{suites_len // 2}H", hello.take(suites_len)))
    hello.take(hello.u8())  # compression methods

    extensions: list[int] = []
    groups: tuple[int, ...] = ()
    ec_point_formats: tuple[int, ...] = ()
    supported_versions: tuple[int, ...] = ()
    sni: Optional[str] = None
    if hello.remaining():
        ext_total = hello.u16()
        if ext_total != hello.remaining():
            raise LengthMismatch("extensions block length")
        while hello.remaining():
            if hello.remaining() < 4:
                raise LengthMismatch("dangling extension header")
            ext_type = hello.u16()
            ext_data = hello.take(hello.u16())
            extensions.append(ext_type)
            if ext_type == 0:
                sni = _parse_sni(ext_data)
            elif ext_type == 10:
                groups = _parse_u16_list(ext_data)
            elif ext_type == 11:
                er = _Reader(ext_data)
                ec_point_formats = tuple(er.take(er.u8()))
            elif ext_type == 43:
                vr = _Reader(ext_data)
                vlen = vr.u8()
                if vlen != vr.remaining() or vlen % 2:
                    raise LengthMismatch("supported_versions length")
                supported_versions = tuple(
                    struct.unpack(f"!{vlen // 2}H", vr.take(vlen)))

    effective = TLS13 if TLS13 in supported_versions else legacy
    return ClientHelloRecord(
        device_id=device_id,
        timestamp=timestamp,
        legacy_version=VERSION_NAMES[legacy],
        effective_version=VERSION_NAMES[effective],
        cipher_suites=cipher_suites,
        extensions=tuple(extensions),
        groups=groups,
        ec_point_formats=ec_point_formats,
        sni=sni,
        fingerprint=_ja3(legacy, cipher_suites, extensions, groups, ec_point_formats),
    )


def _ja3(legacy: int, suites, extensions, groups, point_formats) -> str:
    """JA3 canonical string, hashed.

    Uses the legacy handshake version (as common tooling does, so digests are
    comparable) and drops GREASE from suites, extensions, and groups.
    """
    parts = [
        str(legacy),
        "-".join(str(s) for s in suites if not is_grease(s)),
        "-".join(str(e) for e in extensions if not is_grease(e)),
        "-".join(str(g) for g in groups if not is_grease(g)),
        "-".join(str(p) for p in point_formats),
    ]
    return hashlib.md5(",".join(parts).encode("ascii")).hexdigest()


@dataclass(frozen=True)
class WeakCipherFlags:
    has_null: bool = False
    has_anonymous: bool = False
    has_export: bool = False
    has_rc4: bool = False


@dataclass(frozen=True)
class CipherRegistry:
    names: dict[int, str] = field(default_factory=dict)
    classes: dict[int, frozenset[str]] = field(default_factory=dict)

    def __contains__(self, suite_id: int) -> bool:
        return suite_id in self.names


def load_cipher_registry(path: Optional[str] = None) -> CipherRegistry:
    """Registry snapshot: one suite per line, ``0xID NAME class,class``.

    The classes column is omitted for suites in no weak class. Lines starting
    with # are comments.
    """
    if path is None:
        text = importlib.resources.files("lanlens.data").joinpath(
            "cipher_suites.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    names: dict[int, str] = {}
    classes: dict[int, frozenset[str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"cipher registry line {lineno}: {line!r}")
        suite_id = int(parts[0], 16)
        names[suite_id] = parts[1]
        cls = frozenset(parts[2].split(",")) if len(parts) == 3 else frozenset()
        unknown = cls - set(WEAK_CLASSES)
        if unknown:
            raise ValueError(f"cipher registry line {lineno}: classes {sorted(unknown)}")
        classes[suite_id] = cls
    return CipherRegistry(names=names, classes=classes)


def classify_weak_ciphers(suites, registry: CipherRegistry) -> WeakCipherFlags:
    """Flags per weak class; suites missing from the registry contribute nothing."""
    present: set[str] = set()
    for suite in suites:
        present |= registry.classes.get(suite, frozenset())
    return WeakCipherFlags(
        has_null="null" in present,
        has_anonymous="anonymous" in present,
        has_export="export" in present,
        has_rc4="rc4" in present,
    )
