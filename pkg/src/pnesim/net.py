"""Radio interfaces, range-based contacts and finite-bitrate transfers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist


class InterfaceKind(Enum):
    BLUETOOTH = "bluetooth"
    HIGHSPEED = "highspeed"


@dataclass(frozen=True)
class InterfaceSpec:
    kind: InterfaceKind
    range: float  # metres
    bitrate: float  # bytes / second

    def __post_init__(self):
        if self.range <= 0 or self.bitrate <= 0:
            raise ValueError(f"range and bitrate must be positive: {self}")


DEFAULT_INTERFACES = {
    InterfaceKind.BLUETOOTH: InterfaceSpec(InterfaceKind.BLUETOOTH, 10.0, 250_000.0),
    InterfaceKind.HIGHSPEED: InterfaceSpec(InterfaceKind.HIGHSPEED, 100.0, 1_250_000.0),
}


class Busy(Exception):
    pass


@dataclass(eq=False, slots=True)
class Transfer:
    msg: object
    sender: int
    receiver: int
    remaining: float
    started_at: float


@dataclass(eq=False)
class Connection:
    a: int  # a < b
    b: int
    kind: InterfaceKind
    bitrate: float
    established_at: float
    transfer: Optional[Transfer] = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("connection endpoints must differ")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a, self.b)

    @property
    def idle(self) -> bool:
        return self.transfer is None

    def start_transfer(self, msg, sender: int, receiver: int, t: float) -> Connection:
        if self.transfer is not None:
            raise Busy(f"connection {self.key} already carries {self.transfer.msg.id}")
        if not ((sender == self.a and receiver == self.b) or (sender == self.b and receiver == self.a)):
            raise ValueError(f"{sender}->{receiver} is not across connection {self.key}")
        self.transfer = Transfer(msg, sender, receiver, float(msg.size), t)
        return self


def transfer_duration(size: float, bitrate: float) -> float:
    return size / bitrate


@dataclass(frozen=True)
class LinkEvent:
    up: bool
    a: int
    b: int
    kind: InterfaceKind
    time: float
    conn: Optional[Connection] = field(default=None, compare=False, repr=False)


class TransferEvent(NamedTuple):
    completed: bool
    transfer: Transfer
    time: float


class ContactTracker:
    """Keeps the set of live links for hosts with fixed interface sets.

    A link of a given kind exists between two hosts iff both carry that
    kind and their distance is within the kind's range.
    """

    def __init__(self, host_kinds: Sequence[Iterable[InterfaceKind]], specs: dict[InterfaceKind, InterfaceSpec]):
        self.specs = specs
        self.connections: dict[tuple[int, int, InterfaceKind], Connection] = {}
        self._kinds = []
        for kind in InterfaceKind:
            members = np.array([h for h, ks in enumerate(host_kinds) if kind in set(ks)], dtype=np.intp)
            if len(members) < 2:
                continue
            ii, jj = np.triu_indices(len(members), k=1)
            # pdist order matches triu_indices
            self._kinds.append((kind, members, members[ii], members[jj], np.zeros(len(ii), dtype=bool)))

    def update(self, positions: np.ndarray, t: float) -> list[LinkEvent]:
        """Diff the link set against ``positions``; downs precede ups, each sorted."""
        downs, ups = [], []
        for kind, members, ia, ib, prev in self._kinds:
            rng = self.specs[kind].range
            now = pdist(positions[members], "sqeuclidean") <= rng * rng
            changed = np.flatnonzero(now != prev)
            if len(changed):
                prev[changed] = now[changed]
                for c in changed.tolist():
                    a, b = int(ia[c]), int(ib[c])
                    if now[c]:
                        ups.append(LinkEvent(True, a, b, kind, t))
                    else:
                        downs.append(LinkEvent(False, a, b, kind, t))
        order = lambda e: (e.a, e.b, e.kind.value)
        downs.sort(key=order)
        ups.sort(key=order)
        out = []
        for e in downs:
            conn = self.connections.pop((e.a, e.b, e.kind))
            out.append(LinkEvent(False, e.a, e.b, e.kind, t, conn))
        for e in ups:
            conn = Connection(e.a, e.b, e.kind, self.specs[e.kind].bitrate, t)
            self.connections[(e.a, e.b, e.kind)] = conn
            out.append(LinkEvent(True, e.a, e.b, e.kind, t, conn))
        return out

    def teardown(self, t: float) -> list[LinkEvent]:
        keys = sorted(self.connections, key=lambda k: (k[0], k[1], k[2].value))
        events = [LinkEvent(False, a, b, kind, t, self.connections[(a, b, kind)]) for a, b, kind in keys]
        self.connections.clear()
        for _, _, _, _, prev in self._kinds:
            prev[:] = False
        return events


def update_connectivity(
    tracker: ContactTracker, positions: Sequence[tuple[float, float]], t: float
) -> list[LinkEvent]:
    return tracker.update(np.asarray(positions, dtype=float).reshape(-1, 2), t)


def tick_transfers(
    connections: Iterable[Connection],
    dt: float,
    t: float,
    on_complete: Optional[Callable[[Connection, Transfer], Optional[tuple]]] = None,
) -> list[TransferEvent]:
    """Spend ``bitrate * dt`` bytes on each connection's transfer queue.

    ``on_complete`` is called after each completion and may return the next
    ``(msg, sender, receiver)`` to start on the same connection, which then
    uses whatever budget is left in this tick.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    events = []
    for conn in connections:
        budget = conn.bitrate * dt
        while conn.transfer is not None and budget > 0:
            tr = conn.transfer
            used = min(budget, tr.remaining)
            tr.remaining -= used
            budget -= used
            if tr.remaining > 0:
                break
            conn.transfer = None
            events.append(TransferEvent(True, tr, t))
            if on_complete is not None:
                nxt = on_complete(conn, tr)
                if nxt is not None:
                    conn.start_transfer(*nxt, t)
    return events


def abort(conn: Connection, t: float) -> Optional[TransferEvent]:
    """Drop the in-flight transfer of a connection going down."""
    tr = conn.transfer
    conn.transfer = None
    return TransferEvent(False, tr, t) if tr is not None else None
