"""Map-constrained shortest-path movement and free-space random waypoint."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .geo import MapLayer, NoPath, Point, RoadGraph, shortest_path

MAX_PATH_RETRIES = 10


class MovementModel(Enum):
    SHORTEST_MAP_BASED = "ShortestMapBasedMovement"
    RANDOM_WAYPOINT = "RandomWaypoint"


class EmptyMap(Exception):
    pass


@dataclass(frozen=True)
class Bounds:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate bounds {self}")

    def contains(self, p: Point) -> bool:
        return self.x0 <= p.x <= self.x1 and self.y0 <= p.y <= self.y1

    @classmethod
    def around(cls, graph: RoadGraph, margin: float = 0.05) -> Bounds:
        """Bounding box of ``graph`` grown by ``margin`` of its extent on each side."""
        x0, y0, x1, y1 = graph.bounds()
        mx, my = (x1 - x0) * margin, (y1 - y0) * margin
        return cls(x0 - mx, y0 - my, x1 + mx, y1 + my)


@dataclass(frozen=True)
class MobilityConfig:
    model: MovementModel
    speed_min: float
    speed_max: float
    wait_min: float
    wait_max: float
    layer: MapLayer = MapLayer.ALL

    def __post_init__(self):
        if not 0 <= self.speed_min <= self.speed_max:
            raise ValueError(f"need 0 <= speed_min <= speed_max, got {self.speed_min}, {self.speed_max}")
        if not 0 <= self.wait_min <= self.wait_max:
            raise ValueError(f"need 0 <= wait_min <= wait_max, got {self.wait_min}, {self.wait_max}")

    @property
    def map_based(self) -> bool:
        return self.model is MovementModel.SHORTEST_MAP_BASED


Space = Union[RoadGraph, Bounds]


@dataclass(eq=False)
class MovementState:
    """Where a host is and what it is doing.

    ``leg`` holds the waypoints still ahead; ``waiting_until`` is the absolute
    time a pause ends, or None while travelling. ``vertex`` is the road vertex
    the host last stood on (map-based only).
    """

    x: float
    y: float
    leg: list[Point] = field(default_factory=list)
    speed: float = 0.0
    waiting_until: float | None = 0.0
    next_wait: float = 0.0
    vertex: int | None = None
    target_vertex: int | None = None

    @property
    def position(self) -> Point:
        return Point(self.x, self.y)

    @property
    def travelling(self) -> bool:
        return self.waiting_until is None and bool(self.leg)

    @property
    def needs_plan(self) -> bool:
        return self.waiting_until is None and not self.leg


def initial_placement(cfg: MobilityConfig, space: Space, rng: random.Random) -> Point:
    if cfg.map_based:
        if not len(space.vertices):
            raise EmptyMap(f"layer {space.layer.value} has no vertices")
        return space.vertices[rng.randrange(len(space.vertices))]
    return Point(rng.uniform(space.x0, space.x1), rng.uniform(space.y0, space.y1))


def initial_state(cfg: MobilityConfig, space: Space, rng: random.Random) -> MovementState:
    p = initial_placement(cfg, space, rng)
    vertex = space.index_of(p) if cfg.map_based else None
    return MovementState(p.x, p.y, vertex=vertex)


def plan_next_leg(
    state: MovementState, cfg: MobilityConfig, space: Space, rng: random.Random, now: float
) -> MovementState:
    """Draw destination, then speed, then the pause that follows arrival."""
    leg: list[Point] = []
    if cfg.map_based:
        target = state.vertex
        for _ in range(MAX_PATH_RETRIES):
            dest = rng.randrange(len(space.vertices))
            try:
                path = shortest_path(space, state.vertex, dest)
            except NoPath:
                continue
            target = dest
            leg = [space.vertices[k] for k in path[1:]]
            break
        state.target_vertex = target
    else:
        leg = [Point(rng.uniform(space.x0, space.x1), rng.uniform(space.y0, space.y1))]
    state.speed = rng.uniform(cfg.speed_min, cfg.speed_max)
    state.next_wait = rng.uniform(cfg.wait_min, cfg.wait_max)
    if state.speed <= 0.0 or not leg:
        # immobile or zero-length leg: pause in place
        state.leg = []
        state.target_vertex = state.vertex
        state.waiting_until = now + state.next_wait
    else:
        state.leg = leg
        state.waiting_until = None
    return state


def step(state: MovementState, dt: float, now: float) -> MovementState:
    """Advance one tick ending at ``now``.

    Arrival clamps to the final waypoint and starts the pause; leftover
    travel distance is dropped.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.waiting_until is not None:
        if now >= state.waiting_until:
            state.waiting_until = None
        return state
    if not state.leg:
        return state
    budget = state.speed * dt
    x, y = state.x, state.y
    leg = state.leg
    while leg:
        tx, ty = leg[0]
        d = math.hypot(tx - x, ty - y)
        if budget < d:
            f = budget / d
            x += (tx - x) * f
            y += (ty - y) * f
            break
        budget -= d
        x, y = tx, ty
        leg.pop(0)
    state.x, state.y = x, y
    if not leg:
        state.vertex = state.target_vertex
        state.waiting_until = now + state.next_wait
    return state
