"""Fixed-step simulation loop tying mobility, sensing, contacts and routing together.

Every step runs the same phases in the same order, always visiting hosts by
ascending address and host pairs by ascending ``(low, high)`` address, and
all randomness comes from one seeded generator. The event stream is
therefore a pure function of the scenario and seed.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .config import ScenarioConfig
from .geo import MapLayer, RoadGraph, ZoneModel, load_map
from .mobility import Bounds, MovementState, initial_state, plan_next_leg, step as move
from .net import Connection, ContactTracker, InterfaceSpec, abort, tick_transfers
from .report import Event, EventKind
from .routing import (
    Buffer,
    DeliveryTable,
    Message,
    Outcome,
    PlannedTransfer,
    ProphetParams,
    Protocol,
    MessageIndex,
    TooLarge,
    epidemic_exchange,
    on_transfer_complete,
    plan_key,
    forwarding_mask,
    prophet_encounter,
    prophet_plan,
    still_valid,
)
from .sensing import SensingState, on_position_update


@dataclass(eq=False)
class Host:
    address: int
    buffer: Buffer
    group: int = 0
    movement: MovementState | None = None
    interfaces: tuple[InterfaceSpec, ...] = ()
    sensing: SensingState | None = None
    table: DeliveryTable | None = None
    delivered: set = field(default_factory=set)

    @property
    def position(self) -> tuple[float, float]:
        return self.movement.x, self.movement.y


@dataclass(eq=False)
class World:
    cfg: ScenarioConfig
    protocol: Protocol
    hosts: list[Host]
    graphs: dict[MapLayer, RoadGraph]
    zones: ZoneModel
    bounds: Bounds
    rng: random.Random
    capable: tuple[int, ...]
    tracker: ContactTracker
    positions: np.ndarray
    index: MessageIndex
    clock: float = 0.0
    spaces: list = field(default_factory=list)
    # mobility scheduling
    waiting: list = field(default_factory=list)  # heap of (waiting_until, address)
    moving: set = field(default_factory=set)
    # routing bookkeeping
    pairs: dict = field(default_factory=dict)  # (a, b) -> Pair
    host_pairs: list = field(default_factory=list)
    pending: set = field(default_factory=set)
    busy: dict = field(default_factory=dict)
    plan_seq: int = 0

    @property
    def step(self) -> float:
        return self.cfg.step


@lru_cache(maxsize=8)
def _layers(map_text: str, zones: ZoneModel, snap_epsilon: float) -> dict[MapLayer, RoadGraph]:
    return load_map(map_text, zones, snap_epsilon)


def load_layers(cfg: ScenarioConfig) -> dict[MapLayer, RoadGraph]:
    """Road layers for a scenario; shared read-only between runs in a process."""
    return _layers(cfg.map_text(), cfg.zones, cfg.snap_epsilon)


def build_world(cfg: ScenarioConfig, protocol: Protocol | str = Protocol.EPIDEMIC) -> World:
    protocol = Protocol(protocol)
    graphs = load_layers(cfg)
    bounds = cfg.world_bounds or Bounds.around(graphs[MapLayer.ALL])
    rng = random.Random(cfg.seed)
    zones = cfg.zones
    hosts, spaces = [], []
    index = MessageIndex(cfg.host_count)
    for gi, g in enumerate(cfg.groups):
        space = graphs[g.layer] if g.mobility.map_based else bounds
        ifaces = tuple(cfg.interfaces[k] for k in g.interfaces)
        for _ in range(g.count):
            addr = len(hosts)
            mov = initial_state(g.mobility, space, rng)
            hosts.append(Host(
                address=addr,
                buffer=Buffer(g.buffer, index, addr),
                group=gi,
                movement=mov,
                interfaces=ifaces,
                sensing=SensingState(zones.zone_at(mov.x, mov.y), g.detection_capable),
                table=DeliveryTable(addr, cfg.host_count) if protocol is Protocol.PROPHET else None,
            ))
            spaces.append(space)
    n = len(hosts)
    positions = np.array([h.position for h in hosts], dtype=float).reshape(n, 2)
    world = World(
        cfg=cfg,
        protocol=protocol,
        hosts=hosts,
        graphs=graphs,
        zones=zones,
        bounds=bounds,
        rng=rng,
        capable=tuple(h.address for h in hosts if h.sensing.capable),
        tracker=ContactTracker([[s.kind for s in h.interfaces] for h in hosts], cfg.interfaces),
        positions=positions,
        index=index,
        spaces=spaces,
    )
    world.waiting = [(h.movement.waiting_until, h.address) for h in hosts]
    heapq.heapify(world.waiting)
    world.host_pairs = [set() for _ in hosts]
    return world


@dataclass(eq=False)
class Pair:
    """Two hosts in contact over one or more links.

    ``plan`` is a heap of pending transfers. It is rebuilt from scratch when
    ``stale`` (new contact, or PRoPHET tables changed) and otherwise grows as
    either side gains messages; entries that went out of date are skipped
    when popped.
    """

    a: int
    b: int
    conns: list[Connection]
    plan: list = field(default_factory=list)
    stale: bool = True
    # PRoPHET: sender address -> forwarding mask by destination, valid while not stale
    masks: dict = field(default_factory=dict)

    def connection(self) -> Connection:
        """The busy link if any, else the fastest one."""
        for c in self.conns:
            if c.transfer is not None:
                return c
        return max(self.conns, key=lambda c: (c.bitrate, c.kind.value))


class _Stepper:
    """One run's worth of per-step machinery over a :class:`World`."""

    def __init__(self, world: World, observers: Sequence):
        self.w = world
        self.observers = list(observers)
        self.events: list[Event] = []
        self.params: ProphetParams = world.cfg.prophet
        self.now = world.clock

    def emit(self, kind, msg_id="", sender=-1, receiver=-1, created_at=0.0, hops=0):
        self.events.append(Event(kind, self.now, msg_id, sender, receiver, created_at, hops))

    # -- phases ---------------------------------------------------------

    def mobility(self, dt: float) -> list[int]:
        w, now = self.w, self.now
        hosts, pos, waiting, moving = w.hosts, w.positions, w.waiting, w.moving
        ready = []
        while waiting and waiting[0][0] <= now:
            ready.append(heapq.heappop(waiting)[1])
        active = sorted(moving.union(ready)) if ready else sorted(moving)
        moved = []
        for addr in active:
            st = hosts[addr].movement
            x0, y0 = st.x, st.y
            move(st, dt, now)
            if st.x != x0 or st.y != y0:
                pos[addr, 0] = st.x
                pos[addr, 1] = st.y
                moved.append(addr)
            if st.needs_plan:
                g = w.cfg.groups[hosts[addr].group]
                plan_next_leg(st, g.mobility, w.spaces[addr], w.rng, now)
            if st.waiting_until is not None:
                moving.discard(addr)
                heapq.heappush(waiting, (st.waiting_until, addr))
            else:
                moving.add(addr)
        return moved

    def sensing(self, moved: list[int]) -> None:
        w = self.w
        for addr in moved:
            h = w.hosts[addr]
            if not h.sensing.capable:
                continue
            msg = on_position_update(h, w.zones, w.capable, w.rng, self.now, w.cfg.ttl)
            if msg is None:
                continue
            self.emit(EventKind.CREATED, msg.id, msg.source, msg.destination, msg.created_at)
            self._store(h, msg)

    def _store(self, h: Host, msg: Message) -> None:
        try:
            dropped = h.buffer.insert(msg, self.now)
        except TooLarge:
            dropped = [msg.id]
        for mid in dropped:
            self.emit(EventKind.DROPPED, mid, h.address, h.address)
        if msg.id in h.buffer:
            self._offer(h, msg)
            if dropped:
                self._reclaim(h, dropped)

    def connectivity(self) -> list[tuple[int, int]]:
        w = self.w
        fresh = []
        for ev in w.tracker.update(w.positions, self.now):
            key = (ev.a, ev.b)
            if ev.up:
                self.emit(EventKind.LINK_UP, ev.kind.value, ev.a, ev.b)
                pair = w.pairs.get(key)
                if pair is None:
                    w.pairs[key] = Pair(ev.a, ev.b, [ev.conn])
                    w.host_pairs[ev.a].add(key)
                    w.host_pairs[ev.b].add(key)
                    fresh.append(key)
                else:
                    pair.conns.append(ev.conn)
                w.pending.add(key)
            else:
                self._close(ev.conn)
                self.emit(EventKind.LINK_DOWN, ev.kind.value, ev.a, ev.b)
                pair = w.pairs[key]
                pair.conns.remove(ev.conn)
                if pair.conns:
                    w.pending.add(key)
                else:
                    del w.pairs[key]
                    w.host_pairs[ev.a].discard(key)
                    w.host_pairs[ev.b].discard(key)
                    w.pending.discard(key)
        return fresh

    def _close(self, conn: Connection) -> None:
        ab = abort(conn, self.now)
        self.w.busy.pop((conn.a, conn.b, conn.kind.value), None)
        if ab is not None:
            tr = ab.transfer
            self.emit(EventKind.ABORTED, tr.msg.id, tr.sender, tr.receiver)

    def routing(self, fresh: list[tuple[int, int]]) -> None:
        w = self.w
        hosts, pairs = w.hosts, w.pairs
        if w.protocol is Protocol.PROPHET:
            for a, b in fresh:
                prophet_encounter(hosts[a], hosts[b], self.now, self.params)
                for key in w.host_pairs[a] | w.host_pairs[b]:
                    pairs[key].stale = True
                    w.pending.add(key)
        for key in sorted(w.pending):
            pair = pairs[key]
            conn = pair.connection()
            if conn.transfer is not None:
                continue
            if pair.stale:
                self._replan(pair)
            nxt = self._next_valid(pair)
            w.pending.discard(key)
            if nxt is not None:
                conn.start_transfer(*nxt, self.now)
                w.busy[(conn.a, conn.b, conn.kind.value)] = conn

    def _push(self, pair: Pair, p: PlannedTransfer) -> None:
        self.w.plan_seq += 1
        heapq.heappush(pair.plan, (plan_key(p), self.w.plan_seq, p))

    def _replan(self, pair: Pair) -> None:
        a, b = self.w.hosts[pair.a], self.w.hosts[pair.b]
        if self.w.protocol is Protocol.PROPHET:
            # same result as prophet_plan, keeping the masks for later offers
            mask_ab = forwarding_mask(a, b, self.now, self.params)
            mask_ba = forwarding_mask(b, a, self.now, self.params)
            pair.masks = {a.address: mask_ab.tolist(), b.address: mask_ba.tolist()}
            plan = [PlannedTransfer(m, a.address, b.address)
                    for m in a.buffer.missing_from(b.buffer, b.delivered, mask_ab)]
            plan += [PlannedTransfer(m, b.address, a.address)
                     for m in b.buffer.missing_from(a.buffer, a.delivered, mask_ba)]
        else:
            plan = epidemic_exchange(a, b)
        seq = self.w.plan_seq
        pair.plan = [(plan_key(p), seq + i, p) for i, p in enumerate(plan, 1)]
        heapq.heapify(pair.plan)
        self.w.plan_seq = seq + len(plan)
        pair.stale = False

    def _offer(self, h: Host, msg: Message) -> None:
        """Queue a message ``h`` just gained on each of its live contacts."""
        w = self.w
        prophet = w.protocol is Protocol.PROPHET
        pairs, hosts, me, mid = w.pairs, w.hosts, h.address, msg.id
        for key in w.host_pairs[me]:
            pair = pairs[key]
            if pair.stale:
                continue
            peer = hosts[key[1] if key[0] == me else key[0]]
            if mid in peer.buffer._items or mid in peer.delivered:
                continue
            if prophet and not pair.masks[me][msg.destination]:
                continue
            self._push(pair, PlannedTransfer(msg, me, peer.address))
            w.pending.add(key)

    def _reclaim(self, h: Host, dropped: list[str]) -> None:
        """Neighbours holding messages ``h`` just evicted may send them again."""
        w = self.w
        prophet = w.protocol is Protocol.PROPHET
        for mid in dropped:
            for key in w.host_pairs[h.address]:
                pair = w.pairs[key]
                if pair.stale:
                    continue
                peer = w.hosts[key[1] if key[0] == h.address else key[0]]
                msg = peer.buffer.get(mid)
                if msg is None or (prophet and not pair.masks[peer.address][msg.destination]):
                    continue
                self._push(pair, PlannedTransfer(msg, peer.address, h.address))
                w.pending.add(key)

    def _next_valid(self, pair: Pair) -> PlannedTransfer | None:
        plan, hosts = pair.plan, self.w.hosts
        pop = heapq.heappop
        while plan:
            p = pop(plan)[2]
            mid, receiver = p.msg.id, hosts[p.receiver]
            # inlined still_valid
            if mid in hosts[p.sender].buffer._items and mid not in receiver.buffer._items \
                    and mid not in receiver.delivered:
                return p
        return None

    def _on_complete(self, conn: Connection, tr) -> PlannedTransfer | None:
        receiver = self.w.hosts[tr.receiver]
        msg = tr.msg
        held = receiver.buffer._items
        fresh = msg.id not in held
        outcome, dropped = on_transfer_complete(receiver, msg, self.now)
        kind = EventKind.DELIVERED if outcome is Outcome.DELIVERED else EventKind.RELAYED
        self.events.append(Event(kind, self.now, msg.id, tr.sender, tr.receiver, msg.created_at, len(msg.hops)))
        if kind is EventKind.RELAYED:
            for mid in dropped:
                self.emit(EventKind.DROPPED, mid, tr.receiver, tr.receiver)
            item = held.get(msg.id) if fresh else None
            if item is not None:
                self._offer(receiver, item[0])
                if dropped:
                    self._reclaim(receiver, dropped)
        return self._next_valid(self.w.pairs[(conn.a, conn.b)])

    def transfers(self, dt: float) -> None:
        busy = self.w.busy
        if not busy:
            return
        conns = [busy[k] for k in sorted(busy)]
        tick_transfers(conns, dt, self.now, self._on_complete)
        for k in [k for k, c in busy.items() if c.transfer is None]:
            del busy[k]

    def expiry(self) -> None:
        # every message carries cfg.ttl, so the index expires all buffers in bulk
        hosts = self.w.hosts
        for row, mid in self.w.index.expire(self.now):
            if hosts[row].buffer.forget(mid):
                self.emit(EventKind.EXPIRED, mid, row, row)

    def flush(self) -> None:
        for ev in self.events:
            for obs in self.observers:
                obs.record(ev)
        self.events.clear()

    def teardown(self) -> None:
        w = self.w
        for ev in w.tracker.teardown(self.now):
            self._close(ev.conn)
            self.emit(EventKind.LINK_DOWN, ev.kind.value, ev.a, ev.b)
        w.pairs.clear()
        w.pending.clear()
        for s in w.host_pairs:
            s.clear()
        self.flush()


def run(world: World, duration: float | None = None, observers: Iterable = (), teardown: bool = True) -> World:
    """Advance ``world`` from its current clock to ``duration``.

    Takes ceil(duration / step) steps; a final partial step is clamped so no
    event is stamped past ``duration``.
    """
    duration = world.cfg.duration if duration is None else duration
    if duration <= 0:
        raise ValueError("duration must be positive")
    s = _Stepper(world, observers)
    step_len = world.step
    start = world.clock
    n_steps = math.ceil((duration - start) / step_len - 1e-9)
    for k in range(1, n_steps + 1):
        now = min(start + k * step_len, duration)
        dt = now - world.clock
        world.clock = s.now = now
        moved = s.mobility(dt)
        s.sensing(moved)
        fresh = s.connectivity()
        s.routing(fresh)
        s.transfers(dt)
        s.expiry()
        s.flush()
    if teardown:
        s.teardown()
    return world


def simulate(cfg: ScenarioConfig, protocol: Protocol | str, observers: Iterable = ()) -> World:
    return run(build_world(cfg, protocol), cfg.duration, observers)


# ----------------------------------------------------------- trace replay


def replay_contacts(
    n_hosts: int,
    messages: Iterable[Message],
    contacts: Iterable[tuple[float, int, int]],
    protocol: Protocol | str = Protocol.EPIDEMIC,
    params: ProphetParams = ProphetParams(),
    observers: Iterable = (),
    capacity: float = math.inf,
) -> list[Host]:
    """Drive routing from a scripted contact list instead of mobility.

    Each contact ``(t, a, b)`` is an instantaneous encounter with unlimited
    bandwidth: the full exchange plan executes at ``t``. Messages enter
    their source buffer at ``created_at``, before any contact at that time.
    """
    protocol = Protocol(protocol)
    observers = list(observers)
    hosts = [
        Host(a, Buffer(capacity), table=DeliveryTable(a, n_hosts) if protocol is Protocol.PROPHET else None)
        for a in range(n_hosts)
    ]

    def emit(ev: Event):
        for obs in observers:
            obs.record(ev)

    timeline = [(m.created_at, 0, i, m) for i, m in enumerate(messages)]
    timeline += [(t, 1, i, (a, b)) for i, (t, a, b) in enumerate(contacts)]
    timeline.sort(key=lambda e: e[:3])
    for t, kind, _, item in timeline:
        for h in hosts:
            for mid in h.buffer.expire(t):
                emit(Event(EventKind.EXPIRED, t, mid, h.address, h.address))
        if kind == 0:
            emit(Event(EventKind.CREATED, t, item.id, item.source, item.destination, item.created_at))
            hosts[item.source].buffer.insert(item, t)
            continue
        a, b = sorted(item)
        ha, hb = hosts[a], hosts[b]
        if protocol is Protocol.PROPHET:
            prophet_encounter(ha, hb, t, params)
            plan = prophet_plan(ha, hb, t, params)
        else:
            plan = epidemic_exchange(ha, hb)
        for p in plan:
            sender, receiver = hosts[p.sender], hosts[p.receiver]
            if not still_valid(p, sender, receiver):
                continue
            outcome, dropped = on_transfer_complete(receiver, p.msg, t)
            kind_ = EventKind.DELIVERED if outcome is Outcome.DELIVERED else EventKind.RELAYED
            emit(Event(kind_, t, p.msg.id, p.sender, p.receiver, p.msg.created_at, len(p.msg.hops)))
            for mid in dropped:
                emit(Event(EventKind.DROPPED, t, mid, p.receiver, p.receiver))
    return hosts
