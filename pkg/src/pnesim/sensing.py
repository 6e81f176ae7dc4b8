"""Radiation sensing: a detector reports every change of zone to a peer detector."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .geo import ZoneModel
from .routing import DEFAULT_TTL, Message

READING_SIZE = 100  # bytes


class NoPeer(Exception):
    pass


@dataclass
class SensingState:
    current_zone: int
    capable: bool
    message_counter: int = 0


def draw_destination(self_address: int, capable: Sequence[int], rng: random.Random) -> int:
    """Uniform draw over the other detection-capable hosts."""
    others = [a for a in capable if a != self_address]
    if not others:
        raise NoPeer(f"host {self_address} has no other detection-capable peer")
    return others[rng.randrange(len(others))]


def on_position_update(
    host,
    zones: ZoneModel,
    capable: Sequence[int],
    rng: random.Random,
    now: float,
    ttl: float = DEFAULT_TTL,
) -> Message | None:
    """New reading if ``host`` just changed zone, else None."""
    state: SensingState = host.sensing
    if not state.capable:
        return None
    x, y = host.position
    zone = zones.zone_at(x, y)
    if zone == state.current_zone:
        return None
    dest = draw_destination(host.address, capable, rng)
    state.message_counter += 1
    state.current_zone = zone
    return Message(f"R{host.address}-{state.message_counter}", host.address, dest, READING_SIZE, now, ttl)
