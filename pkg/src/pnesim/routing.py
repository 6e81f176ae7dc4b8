"""Message buffers, Epidemic summary-vector exchange and PRoPHET.

Routing functions operate on host objects exposing ``address``, ``buffer``,
``delivered`` (ids this host received as final destination) and ``table``
(a :class:`DeliveryTable`, PRoPHET only).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

DEFAULT_TTL = 5 * 3600.0


class Protocol(Enum):
    EPIDEMIC = "epidemic"
    PROPHET = "prophet"


@dataclass(frozen=True)
class Message:
    id: str
    source: int
    destination: int
    size: int
    created_at: float
    ttl: float = DEFAULT_TTL
    hops: tuple[int, ...] = ()

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("message size must be positive")
        if self.source == self.destination:
            raise ValueError("message source and destination must differ")
        if not self.hops:
            object.__setattr__(self, "hops", (self.source,))
        elif self.hops[0] != self.source:
            raise ValueError("hop trace must start at the source")

    def expired(self, now: float) -> bool:
        return now - self.created_at > self.ttl

    def relayed_to(self, address: int) -> Message:
        # skips re-validation: this is the hottest allocation in a run
        copy = object.__new__(Message)
        d = self.__dict__.copy()
        d["hops"] = self.hops + (address,)
        object.__setattr__(copy, "__dict__", d)
        return copy


class TooLarge(Exception):
    pass


class MessageIndex:
    """Shared host x message membership matrix for fast buffer differences.

    Columns are handed out in first-insertion order. ``expire`` retires
    leading columns once their message has expired, clearing them from
    every row at once, so the live window stays about as wide as the
    number of live messages. Bulk expiry is exact only while every message
    carries the same TTL, since then column order is expiry order.
    """

    def __init__(self, n_hosts: int, width: int = 1024):
        self.held = np.zeros((n_hosts, width), dtype=bool)
        self.dest = np.zeros(width, dtype=np.intp)
        self.col: dict[str, int] = {}
        self.ids: list[str] = []
        self._msgs: list[Message] = []
        self.base = 0  # absolute column of held[:, 0]
        self.lo = 0  # absolute columns below this are dead everywhere
        # (row, column) of expired messages stored after their column retired
        self.late: list[tuple[int, int]] = []

    def column(self, msg: Message) -> int:
        c = self.col.get(msg.id)
        if c is None:
            c = self.col[msg.id] = len(self.ids)
            self.ids.append(msg.id)
            self._msgs.append(msg)
            if c - self.base >= self.held.shape[1]:
                self._grow()
            self.dest[c - self.base] = msg.destination
        return c

    def _grow(self) -> None:
        live = self.held[:, self.lo - self.base:]
        live_dest = self.dest[self.lo - self.base:]
        width = max(1024, 2 * (len(self.ids) - self.lo))
        self.held = np.zeros((self.held.shape[0], width), dtype=bool)
        self.held[:, :live.shape[1]] = live
        self.dest = np.zeros(width, dtype=np.intp)
        self.dest[:live_dest.shape[0]] = live_dest
        self.base = self.lo

    def mark(self, row: int, msg: Message, present: bool) -> None:
        c = self.column(msg) - self.base
        if c >= 0:
            self.held[row, c] = present

    def missing(self, a: int, b: int, allow: np.ndarray | None = None) -> list[str]:
        """Ids held by row ``a`` but not by row ``b``, optionally only those
        whose destination ``d`` has ``allow[d]`` set."""
        lo, hi = self.lo - self.base, len(self.ids) - self.base
        diff = self.held[a, lo:hi] & ~self.held[b, lo:hi]
        if allow is not None:
            diff &= allow[self.dest[lo:hi]]
        ids, off = self.ids, self.lo
        return [ids[off + i] for i in np.flatnonzero(diff).tolist()]

    def advance(self, now: float) -> None:
        """Retire leading columns whose messages have expired."""
        msgs, lo = self._msgs, self.lo
        while lo < len(msgs) and msgs[lo].expired(now):
            msgs[lo] = None
            lo += 1
        self.lo = lo

    def expire(self, now: float) -> list[tuple[int, str]]:
        """Retire expired columns and return the ``(row, id)`` cells that held
        them, ordered by row then column. The rows' buffers must then
        :meth:`Buffer.forget` those ids."""
        first = self.lo
        msgs = self._msgs
        if not (first < len(msgs) and msgs[first].expired(now)) and not self.late:
            return []
        self.advance(now)
        hits = []
        if self.lo > first:
            block = self.held[:, first - self.base:self.lo - self.base]
            rows, cols = np.nonzero(block)
            hits = list(zip(rows.tolist(), [c + first for c in cols.tolist()]))
            block[:] = False
        if self.late:
            hits += self.late
            hits.sort()
            self.late = []
        ids = self.ids
        return [(r, ids[c]) for r, c in hits]


class Buffer:
    """Byte-bounded message store; overflow evicts the oldest-received first.

    Buffers sharing a :class:`MessageIndex` (each with its own row) compute
    differences against each other through the index, and the index owner
    normally expires them all at once with :meth:`MessageIndex.expire`.
    """

    def __init__(self, capacity: float, index: MessageIndex | None = None, row: int = -1):
        if capacity <= 0:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self.index, self.row = index, row
        self.used = 0
        self._items: dict[str, tuple[Message, float]] = {}
        # (expiry time, id); entries for messages already removed are skipped lazily
        self._deadlines: list[tuple[float, str]] = []
        # lower bound on the earliest deadline; a cheap "nothing to do" test
        # (unused when an index handles expiry)
        self.next_expiry = math.inf

    def __contains__(self, msg_id: str) -> bool:
        return msg_id in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return (m for m, _ in self._items.values())

    def get(self, msg_id: str) -> Message | None:
        item = self._items.get(msg_id)
        return item[0] if item else None

    def received_at(self, msg_id: str) -> float:
        return self._items[msg_id][1]

    def ids(self):
        return self._items.keys()

    def missing_from(self, other: Buffer, exclude: set, allow: np.ndarray | None = None) -> list[Message]:
        """Messages held here but neither in ``other`` nor in ``exclude``.

        ``allow``, a boolean array indexed by destination, restricts the
        result to messages whose destination it marks.
        """
        items = self._items
        if self.index is not None and other.index is self.index:
            ids = self.index.missing(self.row, other.row, allow)
            if exclude:
                ids = [mid for mid in ids if mid not in exclude]
            return [items[mid][0] for mid in ids]
        ids = items.keys() - other._items.keys()
        if exclude:
            ids -= exclude
        msgs = [items[mid][0] for mid in ids]
        if allow is not None:
            msgs = [m for m in msgs if allow[m.destination]]
        return msgs

    def insert(self, msg: Message, t: float) -> list[str]:
        """Store ``msg``; returns the ids evicted to make room."""
        if msg.size > self.capacity:
            raise TooLarge(f"{msg.id}: {msg.size} B exceeds buffer of {self.capacity} B")
        if msg.id in self._items:
            return []
        dropped = []
        while self.used + msg.size > self.capacity:
            oldest = next(iter(self._items))
            dropped.append(oldest)
            self.remove(oldest)
        self._items[msg.id] = (msg, t)
        self.used += msg.size
        idx = self.index
        if idx is not None:
            c = idx.col.get(msg.id)
            if c is None:
                c = idx.column(msg)
            if c < idx.lo:
                idx.late.append((self.row, c))
            else:
                idx.held[self.row, c - idx.base] = True
            return dropped
        deadline = msg.created_at + msg.ttl
        heapq.heappush(self._deadlines, (deadline, msg.id))
        if deadline < self.next_expiry:
            self.next_expiry = deadline
        return dropped

    def remove(self, msg_id: str) -> Message:
        msg, _ = self._items.pop(msg_id)
        self.used -= msg.size
        idx = self.index
        if idx is not None:
            c = idx.col[msg_id] - idx.base
            if c >= 0:
                idx.held[self.row, c] = False
        return msg

    def forget(self, msg_id: str) -> bool:
        """Drop ``msg_id`` without touching the index (it already cleared it)."""
        item = self._items.pop(msg_id, None)
        if item is None:
            return False
        self.used -= item[0].size
        return True

    def expire(self, now: float) -> list[str]:
        """Remove messages older than their TTL (age == TTL survives)."""
        items = self._items
        if self.index is not None:
            gone = sorted((m.created_at + m.ttl, mid) for mid, (m, _) in items.items() if m.expired(now))
            for _, mid in gone:
                self.remove(mid)
            return [mid for _, mid in gone]
        dl, pop = self._deadlines, heapq.heappop
        gone = []
        while dl and now > dl[0][0]:
            mid = dl[0][1]
            item = items.get(mid)
            if item is None:
                pop(dl)
                continue
            msg = item[0]
            if not now - msg.created_at > msg.ttl:
                break  # created + ttl rounded below now; expires next time
            pop(dl)
            gone.append(mid)
            del items[mid]
            self.used -= msg.size
        if len(dl) > 2 * len(items) + 64:
            dl = self._deadlines = [(m.created_at + m.ttl, mid) for mid, (m, _) in items.items()]
            heapq.heapify(dl)
        self.next_expiry = dl[0][0] if dl else math.inf
        return gone


# ------------------------------------------------------------------ PRoPHET


@dataclass(frozen=True)
class ProphetParams:
    p_init: float = 0.75
    beta: float = 0.25
    gamma: float = 0.98
    aging_unit: float = 30.0

    def __post_init__(self):
        if not 0 < self.p_init <= 1:
            raise ValueError("p_init must lie in (0, 1]")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.aging_unit <= 0:
            raise ValueError("aging_unit must be positive")


def prophet_direct_update(p_old: float, params: ProphetParams) -> float:
    return p_old + (1.0 - p_old) * params.p_init


def prophet_transitive_update(p_ac: float, p_ab: float, p_bc: float, params: ProphetParams) -> float:
    return max(p_ac, p_ac + (1.0 - p_ac) * p_ab * p_bc * params.beta)


class DeliveryTable:
    """Delivery predictabilities of ``owner`` towards every address in ``range(size)``."""

    def __init__(self, owner: int, size: int, last_aged: float = 0.0):
        if not 0 <= owner < size:
            raise ValueError(f"owner {owner} outside table of size {size}")
        self.owner = owner
        self.p = np.zeros(size)
        self.last_aged = last_aged

    def __getitem__(self, address: int) -> float:
        return float(self.p[address])

    def __setitem__(self, address: int, value: float) -> None:
        self.p[address] = value

    @property
    def preds(self) -> dict[int, float]:
        return {int(i): float(self.p[i]) for i in np.flatnonzero(self.p)}

    def age(self, now: float, params: ProphetParams) -> DeliveryTable:
        if now < self.last_aged:
            raise ValueError(f"cannot age backwards from {self.last_aged} to {now}")
        if now > self.last_aged:
            k = (now - self.last_aged) / params.aging_unit
            mult = params.gamma**k
            if mult != 1.0:
                self.p *= mult
            self.last_aged = now
        return self


def prophet_age(table: DeliveryTable, now: float, params: ProphetParams) -> DeliveryTable:
    return table.age(now, params)


def prophet_encounter(a, b, now: float, params: ProphetParams) -> None:
    """Age both tables, apply the direct update both ways, then the
    transitive update on each side from the peer's post-direct table."""
    pa, pb = a.table.age(now, params).p, b.table.age(now, params).p
    pa[b.address] = prophet_direct_update(float(pa[b.address]), params)
    pb[a.address] = prophet_direct_update(float(pb[a.address]), params)
    snap_a, snap_b = pa.copy(), pb.copy()
    for mine, me, peer, peer_snap in ((pa, a.address, b.address, snap_b), (pb, b.address, a.address, snap_a)):
        # vectorised prophet_transitive_update, same operation order
        t = (1.0 - mine) * float(mine[peer])
        t *= peer_snap
        t *= params.beta
        t += mine
        t[me] = mine[me]
        np.maximum(mine, t, out=mine)


def forwarding_mask(holder, peer, now: float, params: ProphetParams) -> np.ndarray:
    """``mask[d]`` tells whether ``holder`` should hand a message for ``d`` to ``peer``."""
    better = peer.table.age(now, params).p > holder.table.age(now, params).p
    better[peer.address] = True
    return better


# ---------------------------------------------------------------- exchange


class PlannedTransfer(NamedTuple):
    msg: Message
    sender: int
    receiver: int


def _wanted(holder, peer):
    """Messages ``holder`` has that ``peer`` neither buffers nor already received."""
    return holder.buffer.missing_from(peer.buffer, peer.delivered)


def plan_key(p: PlannedTransfer) -> tuple:
    """Deliveries first, then oldest first; id and sender make it total."""
    return (p.msg.destination != p.receiver, p.msg.created_at, p.msg.id, p.sender)


def _order(plan: list[PlannedTransfer]) -> list[PlannedTransfer]:
    plan.sort(key=plan_key)
    return plan


def epidemic_exchange(a, b) -> list[PlannedTransfer]:
    """Summary-vector difference in both directions, deliveries first."""
    plan = [PlannedTransfer(m, a.address, b.address) for m in _wanted(a, b)]
    plan += [PlannedTransfer(m, b.address, a.address) for m in _wanted(b, a)]
    return _order(plan)


def prophet_plan(a, b, now: float, params: ProphetParams) -> list[PlannedTransfer]:
    """Forward to the peer if it is the destination or strictly more likely to reach it."""
    plan = []
    for holder, peer in ((a, b), (b, a)):
        mask = forwarding_mask(holder, peer, now, params)
        src, dst = holder.address, peer.address
        plan += [PlannedTransfer(m, src, dst) for m in holder.buffer.missing_from(peer.buffer, peer.delivered, mask)]
    return _order(plan)


def prophet_forwards(m: Message, holder, peer, now: float, params: ProphetParams) -> bool:
    d = m.destination
    if d == peer.address:
        return True
    return peer.table.age(now, params)[d] > holder.table.age(now, params)[d]


def prophet_exchange(a, b, now: float, params: ProphetParams) -> list[PlannedTransfer]:
    prophet_encounter(a, b, now, params)
    return prophet_plan(a, b, now, params)


def still_valid(p: PlannedTransfer, sender, receiver) -> bool:
    mid = p.msg.id
    return mid in sender.buffer and mid not in receiver.buffer and mid not in receiver.delivered


class Outcome(Enum):
    DELIVERED = "delivered"
    STORED = "stored"


def on_transfer_complete(receiver, msg: Message, now: float) -> tuple[Outcome, list[str]]:
    """Hand a fully received message to ``receiver``.

    Returns the outcome and any ids the receiver's buffer evicted. The
    sender keeps its own copy either way.
    """
    if receiver.address == msg.destination:
        receiver.delivered.add(msg.id)
        return Outcome.DELIVERED, []
    try:
        dropped = receiver.buffer.insert(msg.relayed_to(receiver.address), now)
    except TooLarge:
        return Outcome.STORED, [msg.id]
    return Outcome.STORED, dropped
