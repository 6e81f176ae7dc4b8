"""Message lifecycle events and the summary metrics computed from them."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterable, NamedTuple


class EventKind(Enum):
    CREATED = "C"
    RELAYED = "R"
    DELIVERED = "D"
    ABORTED = "A"
    DROPPED = "X"
    EXPIRED = "E"
    LINK_UP = "U"
    LINK_DOWN = "N"


class Event(NamedTuple):
    kind: EventKind
    time: float
    msg_id: str = ""
    sender: int = -1
    receiver: int = -1
    created_at: float = 0.0
    hops: int = 0

    def to_line(self) -> str:
        return f"{self.time!r} {self.kind.value} {self.msg_id or '-'} {self.sender} {self.receiver}"


@dataclass(frozen=True)
class MessageStats:
    created: int
    delivered: int
    relayed: int
    aborted: int
    dropped: int
    expired: int
    delivery_prob: float
    overhead_ratio: float  # nan when nothing was delivered
    latency_avg: float
    latency_med: float
    hopcount_avg: float


class StatsCollector:
    """Counts lifecycle events; first arrival at the destination is the delivery."""

    def __init__(self):
        self.created = self.delivered = self.relayed = 0
        self.aborted = self.dropped = self.expired = 0
        self._created_at: dict[str, float] = {}
        self._delivered: set[str] = set()
        self.latencies: list[float] = []
        self.hopcounts: list[int] = []
        self._last_time = -math.inf

    def record(self, event: Event) -> None:
        if event.time < self._last_time:
            raise ValueError(f"event at {event.time} arrived after {self._last_time}")
        self._last_time = event.time
        kind = event.kind
        if kind is EventKind.CREATED:
            self.created += 1
            self._created_at[event.msg_id] = event.time
        elif kind is EventKind.RELAYED:
            self.relayed += 1
        elif kind is EventKind.DELIVERED:
            self.relayed += 1
            if event.msg_id not in self._delivered:
                self._delivered.add(event.msg_id)
                self.delivered += 1
                created = self._created_at.get(event.msg_id, event.created_at)
                self.latencies.append(event.time - created)
                self.hopcounts.append(event.hops)
        elif kind is EventKind.ABORTED:
            self.aborted += 1
        elif kind is EventKind.DROPPED:
            self.dropped += 1
        elif kind is EventKind.EXPIRED:
            self.expired += 1

    def finalize(self) -> MessageStats:
        nan = math.nan
        return MessageStats(
            created=self.created,
            delivered=self.delivered,
            relayed=self.relayed,
            aborted=self.aborted,
            dropped=self.dropped,
            expired=self.expired,
            delivery_prob=self.delivered / self.created if self.created else 0.0,
            overhead_ratio=(self.relayed - self.delivered) / self.delivered if self.delivered else nan,
            latency_avg=statistics.fmean(self.latencies) if self.latencies else nan,
            latency_med=statistics.median(self.latencies) if self.latencies else nan,
            hopcount_avg=statistics.fmean(self.hopcounts) if self.hopcounts else nan,
        )


class EventLog:
    """Observer keeping the textual event stream (for determinism checks)."""

    def __init__(self):
        self.lines: list[str] = []

    def record(self, event: Event) -> None:
        self.lines.append(event.to_line())

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def fmt(value) -> str:
    if isinstance(value, float):
        return "NA" if math.isnan(value) else f"{value:.4f}"
    return str(value)


REPORT_KEYS = [f.name for f in fields(MessageStats)]


def format_report(stats: MessageStats, header: dict | None = None) -> str:
    """``key: value`` lines: header items first, then stats in field order."""
    lines = [f"{k}: {fmt(v)}" for k, v in (header or {}).items()]
    lines += [f"{k}: {fmt(getattr(stats, k))}" for k in REPORT_KEYS]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition(":")
            out[key.strip()] = value.strip()
    return out


CSV_HEADER = ["phase", "protocol", "seed", "created", "delivered", "relayed", "delivery_prob", "overhead_ratio", "latency_avg"]


def format_csv(rows: Iterable[tuple[str, str, int, MessageStats]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for phase, protocol, seed, s in rows:
        w.writerow([phase, protocol, seed, s.created, s.delivered, s.relayed,
                    fmt(s.delivery_prob), fmt(s.overhead_ratio), fmt(s.latency_avg)])
    return buf.getvalue()
