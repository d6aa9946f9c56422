"""Wire schema for capture-to-collector uploads.

Every record here references devices only by their salted hash. The one
deliberate exception is the per-device OUI prefix (first three octets of the
MAC), which is uploaded in cleartext so the collector can show a manufacturer
name without ever learning the full hardware address.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .flows import FlowKey, FlowWindow
from .identity import LabelTriple
from .tls import ClientHelloRecord, record_from_dict
from .traffic import HINT_KINDS, DnsObservation, IdentityHint

CLASSIFICATIONS = ("smart-home", "general-purpose", "unknown")


@dataclass(frozen=True)
class DeviceInventory:
    """One discovered LAN device, stripped to what the dashboard needs.

    Inventory rows are not traffic observations: they exist so the device
    list can offer monitor toggles and override buttons, and they carry only
    the hashed id, the cleartext OUI prefix, and the classification badge.
    """
    device_id: str
    oui: str = ""
    classification: str = "unknown"
    monitored: bool = False

    def __post_init__(self):
        if self.classification not in CLASSIFICATIONS:
            raise ValueError(f"classification {self.classification!r}")


@dataclass(frozen=True)
class HelloUpload:
    """A parsed ClientHello plus the transport endpoint it was sent to."""
    record: ClientHelloRecord
    remote_ip: str = ""
    remote_port: int = 0

    @property
    def device_id(self) -> str:
        return self.record.device_id

    @property
    def timestamp(self) -> float:
        return self.record.timestamp


@dataclass(frozen=True)
class DnsUpload:
    device_id: str
    query_name: str
    answers: tuple[str, ...]
    resolver_ip: str
    timestamp: float


@dataclass(frozen=True)
class HintUpload:
    device_id: str
    kind: str
    value: str
    timestamp: float

    def __post_init__(self):
        if self.kind not in HINT_KINDS:
            raise ValueError(f"hint kind {self.kind!r}")


def anonymize_dns(obs: DnsObservation, id_for: Callable[[str], str]) -> DnsUpload:
    return DnsUpload(device_id=id_for(obs.device_mac), query_name=obs.query_name,
                     answers=obs.answers, resolver_ip=obs.resolver_ip,
                     timestamp=obs.timestamp)


def anonymize_hint(hint: IdentityHint, id_for: Callable[[str], str]) -> HintUpload:
    return HintUpload(device_id=id_for(hint.device_mac), kind=hint.kind,
                      value=hint.value, timestamp=hint.timestamp)


@dataclass(frozen=True)
class UploadBatch:
    client_version: str
    user_id: str
    timezone: str = "UTC"
    devices: tuple[DeviceInventory, ...] = ()
    flow_windows: tuple[FlowWindow, ...] = ()
    client_hellos: tuple[HelloUpload, ...] = ()
    dns_observations: tuple[DnsUpload, ...] = ()
    identity_hints: tuple[HintUpload, ...] = ()
    labels: tuple[LabelTriple, ...] = ()

    def device_ids(self) -> set[str]:
        ids = {w.key.device_id for w in self.flow_windows}
        ids.update(h.device_id for h in self.client_hellos)
        ids.update(o.device_id for o in self.dns_observations)
        ids.update(h.device_id for h in self.identity_hints)
        ids.update(t.device_id for t in self.labels)
        return ids

    def record_count(self) -> int:
        return (len(self.flow_windows) + len(self.client_hellos)
                + len(self.dns_observations) + len(self.identity_hints)
                + len(self.labels))

    def time_span(self) -> Optional[tuple[float, float]]:
        """(earliest, latest) timestamp across all timed records."""
        stamps = [float(w.window_start) for w in self.flow_windows]
        stamps += [w.first_packet_ts for w in self.flow_windows
                   if w.first_packet_ts is not None]
        stamps += [h.timestamp for h in self.client_hellos]
        stamps += [o.timestamp for o in self.dns_observations]
        stamps += [h.timestamp for h in self.identity_hints]
        if not stamps:
            return None
        return (min(stamps), max(stamps))


def _window_to_dict(window: FlowWindow) -> dict:
    return {
        "device_id": window.key.device_id,
        "remote_ip": window.key.remote_ip,
        "remote_port": window.key.remote_port,
        "transport": window.key.transport,
        "window_start": window.window_start,
        "bytes_sent": window.bytes_sent,
        "bytes_received": window.bytes_received,
        "first_packet_ts": window.first_packet_ts,
    }


def _window_from_dict(data: dict) -> FlowWindow:
    key = FlowKey(device_id=data["device_id"], remote_ip=data["remote_ip"],
                  remote_port=int(data["remote_port"]), transport=data["transport"])
    first = data.get("first_packet_ts")
    return FlowWindow(key=key, window_start=int(data["window_start"]),
                      bytes_sent=int(data["bytes_sent"]),
                      bytes_received=int(data["bytes_received"]),
                      first_packet_ts=None if first is None else float(first))


def _label_to_dict(triple: LabelTriple) -> dict:
    return {
        "device_id": triple.device_id,
        "raw_name": triple.raw_name,
        "raw_category": triple.raw_category,
        "raw_vendor": triple.raw_vendor,
        "std_category": triple.std_category,
        "std_vendor": triple.std_vendor,
    }


def _label_from_dict(data: dict) -> LabelTriple:
    return LabelTriple(device_id=data["device_id"],
                       raw_name=data.get("raw_name", ""),
                       raw_category=data.get("raw_category", ""),
                       raw_vendor=data.get("raw_vendor", ""),
                       std_category=data.get("std_category"),
                       std_vendor=data.get("std_vendor"))


def batch_to_dict(batch: UploadBatch) -> dict:
    return {
        "client_version": batch.client_version,
        "user_id": batch.user_id,
        "timezone": batch.timezone,
        "devices": [
            {"device_id": d.device_id, "oui": d.oui,
             "classification": d.classification, "monitored": d.monitored}
            for d in batch.devices],
        "flow_windows": [_window_to_dict(w) for w in batch.flow_windows],
        "client_hellos": [
            {"record": h.record.to_dict(), "remote_ip": h.remote_ip,
             "remote_port": h.remote_port}
            for h in batch.client_hellos],
        "dns_observations": [
            {"device_id": o.device_id, "query_name": o.query_name,
             "answers": list(o.answers), "resolver_ip": o.resolver_ip,
             "timestamp": o.timestamp}
            for o in batch.dns_observations],
        "identity_hints": [
            {"device_id": h.device_id, "kind": h.kind, "value": h.value,
             "timestamp": h.timestamp}
            for h in batch.identity_hints],
        "labels": [_label_to_dict(t) for t in batch.labels],
    }


def batch_from_dict(data: dict) -> UploadBatch:
    return UploadBatch(
        client_version=data["client_version"],
        user_id=data["user_id"],
        timezone=data.get("timezone", "UTC"),
        devices=tuple(
            DeviceInventory(device_id=d["device_id"], oui=d.get("oui", ""),
                            classification=d.get("classification", "unknown"),
                            monitored=bool(d.get("monitored", False)))
            for d in data.get("devices", [])),
        flow_windows=tuple(_window_from_dict(w) for w in data.get("flow_windows", [])),
        client_hellos=tuple(
            HelloUpload(record=record_from_dict(h["record"]),
                        remote_ip=h.get("remote_ip", ""),
                        remote_port=int(h.get("remote_port", 0)))
            for h in data.get("client_hellos", [])),
        dns_observations=tuple(
            DnsUpload(device_id=o["device_id"], query_name=o["query_name"],
                      answers=tuple(o.get("answers", [])),
                      resolver_ip=o.get("resolver_ip", ""),
                      timestamp=float(o["timestamp"]))
            for o in data.get("dns_observations", [])),
        identity_hints=tuple(
            HintUpload(device_id=h["device_id"], kind=h["kind"], value=h["value"],
                       timestamp=float(h["timestamp"]))
            for h in data.get("identity_hints", [])),
        labels=tuple(_label_from_dict(t) for t in data.get("labels", [])),
    )
