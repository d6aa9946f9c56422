"""Aggregation of per-packet remote contacts into 5-second flow windows.

Windows are aligned to epoch multiples of the window size so that windows
for the same flow computed by different runs (or re-uploaded batches) line
up exactly and can be merged by summing. Emission is watermark-driven: a
window leaves the aggregator once the newest timestamp seen is at least
``lateness`` seconds past the window's end. Contacts arriving later than
that open a fresh correction window for the same slot, merged downstream.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Union

from .traffic import RemoteContact

WINDOW_SECONDS = 5
LATENESS_SECONDS = 10


@dataclass(frozen=True)
class FlowKey:
    device_id: str
    remote_ip: str
    remote_port: int
    transport: str

    def __post_init__(self):
        if self.transport not in ("tcp", "udp"):
            raise ValueError(f"transport {self.transport!r}")
        if not 0 <= self.remote_port <= 65535:
            raise ValueError(f"port {self.remote_port}")


@dataclass(frozen=True)
class FlowWindow:
    key: FlowKey
    window_start: int
    bytes_sent: int
    bytes_received: int
    first_packet_ts: Optional[float]

    @classmethod
    def zero(cls, key: FlowKey, window_start: int) -> "FlowWindow":
        return cls(key, window_start, 0, 0, None)


def merge_windows(a: FlowWindow, b: FlowWindow) -> FlowWindow:
    """Combine two windows for the same slot: counters add, first ts wins."""
    if a.key != b.key or a.window_start != b.window_start:
        raise ValueError("cannot merge windows with different keys or starts")
    firsts = [t for t in (a.first_packet_ts, b.first_packet_ts) if t is not None]
    return FlowWindow(
        key=a.key,
        window_start=a.window_start,
        bytes_sent=a.bytes_sent + b.bytes_sent,
        bytes_received=a.bytes_received + b.bytes_received,
        first_packet_ts=min(firsts) if firsts else None,
    )


IdMap = Union[Mapping[str, str], Callable[[str], Optional[str]]]


class FlowAggregator:
    """Windowed accumulator over a timestamp-ordered RemoteContact stream.

    ``id_map`` translates device MACs to anonymized identifiers; contacts
    whose MAC has no mapping are counted in ``quarantined`` and dropped
    (whether they should ever reach an upload is not this module's call).
    """

    def __init__(self, id_map: IdMap, *, window_seconds: int = WINDOW_SECONDS,
                 lateness: float = LATENESS_SECONDS):
        if window_seconds <= 0:
            raise ValueError("window_seconds must be positive")
        self._map = id_map if callable(id_map) else id_map.get
        self.window_seconds = window_seconds
        self.lateness = lateness
        self.quarantined: Counter[str] = Counter()
        self._pending: dict[tuple[FlowKey, int], FlowWindow] = {}
        self._max_ts: Optional[float] = None

    def add(self, contact: RemoteContact) -> list[FlowWindow]:
        """Fold one contact in; returns any windows sealed by the watermark."""
        device_id = self._map(contact.device_mac)
        if device_id is None:
            self.quarantined[contact.device_mac] += 1
            return self._advance(contact.timestamp)
        key = FlowKey(device_id, contact.remote_ip, contact.remote_port, contact.transport)
        start = int(contact.timestamp // self.window_seconds) * self.window_seconds
        slot = (key, start)
        window = self._pending.get(slot)
        if window is None:
            window = FlowWindow.zero(key, start)
        self._pending[slot] = FlowWindow(
            key=key,
            window_start=start,
            bytes_sent=window.bytes_sent + contact.bytes_out,
            bytes_received=window.bytes_received + contact.bytes_in,
            first_packet_ts=contact.timestamp if window.first_packet_ts is None
            else min(window.first_packet_ts, contact.timestamp),
        )
        return self._advance(contact.timestamp)

    def _advance(self, ts: float) -> list[FlowWindow]:
        if self._max_ts is None or ts > self._max_ts:
            self._max_ts = ts
        watermark = self._max_ts - self.lateness
        sealed = [slot for slot in self._pending
                  if slot[1] + self.window_seconds <= watermark]
        sealed.sort(key=lambda slot: (slot[1], slot[0].device_id, slot[0].remote_ip,
                                      slot[0].remote_port, slot[0].transport))
        return [self._pending.pop(slot) for slot in sealed]

    def flush(self) -> list[FlowWindow]:
        """Seal and emit everything still pending, in deterministic order."""
        slots = sorted(self._pending, key=lambda slot: (slot[1], slot[0].device_id,
                                                        slot[0].remote_ip,
                                                        slot[0].remote_port,
                                                        slot[0].transport))
        out = [self._pending.pop(slot) for slot in slots]
        return out


def aggregate(contacts: Iterable[RemoteContact], id_map: IdMap,
              **kwargs) -> Iterable[FlowWindow]:
    """One-shot convenience: stream contacts through an aggregator and flush."""
    agg = FlowAggregator(id_map, **kwargs)
    for contact in contacts:
        yield from agg.add(contact)
    yield from agg.flush()
