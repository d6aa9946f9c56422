"""Privacy guarantees: salted device identifiers, the general-purpose-device
upload gate, and the deletion policy constants.

The salt never leaves the machine that generated it. Device identifiers are
SHA-256(salt bytes followed by the six raw MAC bytes); that concatenation
order is a wire-compat constant, so changing it orphans every stored row.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import secrets
import time
from dataclasses import dataclass, replace
from typing import Callable, Collection, Mapping

from .uploads import UploadBatch

log = logging.getLogger(__name__)

SALT_BYTES = 32

# What each user-facing deletion scope covers. A request to drop "ssdp" data
# also drops upnp hints: both come from the same announcement messages.
HINT_DELETE_KINDS = {
    "dhcp": ("dhcp-hostname",),
    "ssdp": ("ssdp", "upnp"),
}


@dataclass(frozen=True)
class Salt:
    value: bytes
    created_at: float

    def __post_init__(self):
        if len(self.value) != SALT_BYTES:
            raise ValueError(f"salt must be exactly {SALT_BYTES} bytes")


def generate_salt() -> Salt:
    return Salt(value=secrets.token_bytes(SALT_BYTES), created_at=time.time())


def load_or_create_salt(path: str) -> Salt:
    """Read the salt file, creating it with owner-only permissions on first run."""
    if os.path.exists(path):
        with open(path, "rb") as fh:
            value = fh.read()
        return Salt(value=value, created_at=os.stat(path).st_mtime)
    salt = generate_salt()
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
    try:
        os.write(fd, salt.value)
    finally:
        os.close(fd)
    return salt


def mac_to_bytes(mac: str) -> bytes:
    digits = re.sub(r"[^0-9a-fA-F]", "", mac)
    if len(digits) != 12:
        raise ValueError(f"not a MAC address: {mac!r}")
    return bytes.fromhex(digits)


def device_id(mac: str, salt: Salt) -> str:
    return hashlib.sha256(salt.value + mac_to_bytes(mac)).hexdigest()


def oui_cleartext(mac: str) -> str:
    """First three octets, the only MAC-derived value ever uploaded as-is."""
    raw = mac_to_bytes(mac)[:3]
    return ":".join(f"{b:02x}" for b in raw)


def device_id_mapper(salt: Salt) -> Callable[[str], str]:
    cache: dict[str, str] = {}

    def id_for(mac: str) -> str:
        hashed = cache.get(mac)
        if hashed is None:
            hashed = cache[mac] = device_id(mac, salt)
        return hashed

    return id_for


def filter_upload(batch: UploadBatch, classifications: Mapping[str, str],
                  monitored: Collection[str],
                  overridden: Collection[str] = ()) -> tuple[UploadBatch, dict[str, int]]:
    """Drop every observation for devices that must not be uploaded.

    A device's observations pass only when the device is in the monitored set
    and is not classified general-purpose (a user override lifts that block).
    Unclassified devices pass the classification gate: the gate exists to stop
    uploads from devices that show signs of being general-purpose computers,
    and no evidence is no such sign.

    Inventory rows (hashed id, OUI prefix, badge) are not observations and
    pass through untouched; without them the dashboard could not offer the
    monitor toggle or the override button in the first place.
    """
    monitored = set(monitored)
    overridden = set(overridden)
    dropped: dict[str, int] = {}

    def allowed(dev: str) -> bool:
        if dev not in monitored:
            return False
        if classifications.get(dev) == "general-purpose" and dev not in overridden:
            return False
        return True

    def keep(records, key=lambda r: r.device_id):
        kept = []
        for record in records:
            dev = key(record)
            if allowed(dev):
                kept.append(record)
            else:
                dropped[dev] = dropped.get(dev, 0) + 1
        return tuple(kept)

    filtered = replace(
        batch,
        flow_windows=keep(batch.flow_windows, key=lambda w: w.key.device_id),
        client_hellos=keep(batch.client_hellos),
        dns_observations=keep(batch.dns_observations),
        identity_hints=keep(batch.identity_hints),
        labels=keep(batch.labels),
    )
    for dev, count in sorted(dropped.items()):
        log.info("upload filter dropped %d records for device %s", count, dev)
    return filtered, dropped
