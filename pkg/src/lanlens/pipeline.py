"""Capture-side assembly line: raw packets in, anonymized batches out.

Wires the packet source, the traffic parser, the flow aggregator and the
privacy gates into one stream. Replaying the same capture through a
fresh pipeline produces the same batches, which is what makes the whole
client testable offline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import httpx

from .flows import FlowAggregator, FlowWindow
from .identity import EvidenceBundle, LabelRules, infer_general_purpose, load_label_rules
from .packets import RawPacket
from .privacy import Salt, device_id_mapper, filter_upload, oui_cleartext
from .tls import HelloParseError, parse_client_hello
from .traffic import (
    ClientHelloBytes,
    DnsObservation,
    IdentityHint,
    RemoteContact,
    TrafficParser,
)
from .uploads import (
    DeviceInventory,
    DnsUpload,
    HelloUpload,
    HintUpload,
    UploadBatch,
    batch_to_dict,
)

# Half the collector's span cap, so a batch can never be refused for
# stretching too far in time.
DEFAULT_BATCH_SECONDS = 30.0

CLIENT_VERSION = "0.1.0"


@dataclass
class CaptureStats:
    packets: int = 0
    contacts: int = 0
    hellos: int = 0
    hello_parse_errors: int = 0
    dns: int = 0
    hints: int = 0
    batches: int = 0
    dropped: dict = field(default_factory=dict)

    def note_dropped(self, counts: dict) -> None:
        for key, value in counts.items():
            self.dropped[key] = self.dropped.get(key, 0) + value


class CapturePipeline:
    """Accumulates observations and cuts privacy-filtered upload batches.

    ``monitored`` is the set of device MACs the user chose to intercept;
    None means everything seen counts as monitored, which is the right
    default for offline pcap analysis. ``overridden`` lifts the
    general-purpose gate for MACs the owner has vouched for.
    """

    def __init__(self, subnet: str, salt: Salt, user_id: str, *,
                 monitored: Optional[Iterable[str]] = None,
                 overridden: Iterable[str] = (),
                 timezone_name: str = "",
                 batch_seconds: float = DEFAULT_BATCH_SECONDS,
                 rules: Optional[LabelRules] = None):
        if not 0 < batch_seconds <= 60:
            raise ValueError("batch_seconds must be in (0, 60]")
        self._parser = TrafficParser(subnet)
        self._id_of = device_id_mapper(salt)
        self._aggregator = FlowAggregator(self._id_of)
        self._monitored = None if monitored is None else set(monitored)
        self._overridden = set(overridden)
        # timezone is coarse location data: it rides along only when the
        # user opted in, otherwise the field stays blank
        self._timezone = timezone_name
        self._batch_seconds = batch_seconds
        self._rules = rules or load_label_rules()
        self._user_id = user_id

        self._seen_macs: dict[str, None] = {}  # insertion-ordered set
        self._hints_by_mac: dict[str, list[HintUpload]] = {}
        self._pending_windows: list[FlowWindow] = []
        self._pending_hellos: list[HelloUpload] = []
        self._pending_dns: list[DnsUpload] = []
        self._pending_hints: list[HintUpload] = []
        self._span: Optional[tuple[float, float]] = None
        self.stats = CaptureStats()

    # ------------------------------------------------------------ intake

    def register_host(self, mac: str) -> None:
        """Add a device to the inventory before any traffic is seen."""
        self._seen_macs.setdefault(mac.lower(), None)

    def feed(self, pkt: RawPacket) -> list[UploadBatch]:
        """Fold one packet in; returns any batches sealed by it."""
        self.stats.packets += 1
        sealed: list[UploadBatch] = []
        for obs in self._parser.parse_packet(pkt):
            self._seen_macs.setdefault(obs.device_mac, None)
            if isinstance(obs, RemoteContact):
                self.stats.contacts += 1
                for window in self._aggregator.add(obs):
                    sealed.extend(self._admit(window))
            elif isinstance(obs, ClientHelloBytes):
                sealed.extend(self._admit_hello(obs))
            elif isinstance(obs, DnsObservation):
                self.stats.dns += 1
                sealed.extend(self._admit(DnsUpload(
                    self._id_of(obs.device_mac), obs.query_name,
                    obs.answers, obs.resolver_ip, obs.timestamp)))
            elif isinstance(obs, IdentityHint):
                self.stats.hints += 1
                hint = HintUpload(self._id_of(obs.device_mac), obs.kind,
                                  obs.value, obs.timestamp)
                self._hints_by_mac.setdefault(obs.device_mac, []).append(hint)
                sealed.extend(self._admit(hint))
        return sealed

    def finish(self) -> list[UploadBatch]:
        """Seal every pending window and flush the final batch."""
        sealed: list[UploadBatch] = []
        for window in self._aggregator.flush():
            sealed.extend(self._admit(window))
        final = self._cut()
        if final is not None:
            sealed.append(final)
        return sealed

    def run(self, source: Iterable[RawPacket]) -> Iterator[UploadBatch]:
        for pkt in source:
            yield from self.feed(pkt)
        yield from self.finish()

    # ------------------------------------------------------------ batching

    def _admit_hello(self, raw: ClientHelloBytes) -> list[UploadBatch]:
        try:
            record = parse_client_hello(raw.record_bytes,
                                        device_id=self._id_of(raw.device_mac),
                                        timestamp=raw.timestamp)
        except HelloParseError:
            self.stats.hello_parse_errors += 1
            return []
        self.stats.hellos += 1
        return self._admit(HelloUpload(record, raw.remote_ip,
                                       raw.remote_port))

    def _stamps(self, record) -> tuple[float, float]:
        if isinstance(record, FlowWindow):
            low = float(record.window_start)
            high = low if record.first_packet_ts is None \
                else max(low, record.first_packet_ts)
            return low, high
        ts = record.record.timestamp if isinstance(record, HelloUpload) \
            else record.timestamp
        return ts, ts

    def _admit(self, record) -> list[UploadBatch]:
        """Queue one anonymized record, cutting a batch first if adding it
        would stretch the pending span past the batch budget."""
        low, high = self._stamps(record)
        sealed = []
        if self._span is not None:
            merged = (min(self._span[0], low), max(self._span[1], high))
            if merged[1] - merged[0] > self._batch_seconds:
                batch = self._cut()
                if batch is not None:
                    sealed.append(batch)
        self._span = (low, high) if self._span is None else (
            min(self._span[0], low), max(self._span[1], high))
        if isinstance(record, FlowWindow):
            self._pending_windows.append(record)
        elif isinstance(record, HelloUpload):
            self._pending_hellos.append(record)
        elif isinstance(record, DnsUpload):
            self._pending_dns.append(record)
        else:
            self._pending_hints.append(record)
        return sealed

    def _classification(self, mac: str) -> str:
        evidence = EvidenceBundle(
            device_id=self._id_of(mac),
            hints=tuple(self._hints_by_mac.get(mac, ())),
            oui_vendor=None, domains=(), fingerbank_name=None)
        return infer_general_purpose(evidence, self._rules).verdict

    def _inventory(self) -> tuple[DeviceInventory, ...]:
        rows = []
        for mac in self._seen_macs:
            rows.append(DeviceInventory(
                device_id=self._id_of(mac),
                oui=oui_cleartext(mac),
                classification=self._classification(mac),
                monitored=self._monitored is None or mac in self._monitored))
        return tuple(rows)

    def _cut(self) -> Optional[UploadBatch]:
        if not (self._pending_windows or self._pending_hellos
                or self._pending_dns or self._pending_hints):
            return None
        batch = UploadBatch(
            client_version=CLIENT_VERSION,
            user_id=self._user_id,
            timezone=self._timezone,
            devices=self._inventory(),
            flow_windows=tuple(self._pending_windows),
            client_hellos=tuple(self._pending_hellos),
            dns_observations=tuple(self._pending_dns),
            identity_hints=tuple(self._pending_hints),
        )
        self._pending_windows = []
        self._pending_hellos = []
        self._pending_dns = []
        self._pending_hints = []
        self._span = None

        classifications = {row.device_id: row.classification
                           for row in batch.devices}
        monitored_ids = {row.device_id for row in batch.devices
                         if row.monitored}
        overridden_ids = {self._id_of(mac) for mac in self._overridden}
        kept, dropped = filter_upload(batch, classifications, monitored_ids,
                                      overridden_ids)
        self.stats.note_dropped(dropped)
        if kept.record_count() == 0 and not kept.devices:
            return None
        self.stats.batches += 1
        return kept


class Uploader:
    """Delivers batches to the collector, queueing while it is down.

    The original client stopped capturing whenever the collector was
    unreachable. Here delivery degrades instead: batches queue up to
    ``max_buffered`` and the oldest fall off first once the queue is
    full. A 4xx answer raises, because a batch the collector rejects as
    malformed is a client bug that retrying cannot fix.
    """

    def __init__(self, client: httpx.Client, *, base_url: str = "",
                 max_buffered: int = 256):
        if max_buffered < 1:
            raise ValueError("max_buffered must be at least 1")
        self._client = client
        self._url = base_url.rstrip("/") + "/v1/batch"
        self._queue: deque[UploadBatch] = deque()
        self._max = max_buffered
        self.delivered = 0
        self.dropped = 0

    @property
    def pending(self) -> int:
        return len(self._queue)

    def send(self, batch: UploadBatch) -> bool:
        """Queue one batch and try to flush; True when the queue drained."""
        if len(self._queue) >= self._max:
            self._queue.popleft()
            self.dropped += 1
        self._queue.append(batch)
        self.flush()
        return not self._queue

    def flush(self) -> int:
        """Deliver queued batches in order until one fails; returns count."""
        count = 0
        while self._queue:
            batch = self._queue[0]
            try:
                response = self._client.post(self._url,
                                             json=batch_to_dict(batch))
            except httpx.TransportError:
                break
            if response.status_code >= 500:
                break
            if response.status_code >= 400:
                raise RuntimeError(
                    f"collector rejected batch: {response.status_code}"
                    f" {response.text}")
            self._queue.popleft()
            self.delivered += 1
            count += 1
        return count
