"""Desk-scale synthetic city: a street grid with concentric ring roads.

Stands in for a real road dataset. The grid is centred on the blast point so
that carving zone rings out of it leaves a connected outer network.
"""

from __future__ import annotations

import math

from .geo import Point, Polyline

SIZE = 1500.0
GRID_SPACING = 75.0
RING_RADII = (150.0, 300.0, 400.0, 520.0)
RING_SPACING = 60.0
CENTER = Point(SIZE / 2, SIZE / 2)
# ring radii used by the bundled scenarios (zone 1 .. zone 6)
ZONE_RADII = (60.0, 120.0, 180.0, 260.0, 340.0, 450.0)


def synthetic_map(
    size: float = SIZE,
    spacing: float = GRID_SPACING,
    ring_radii: tuple[float, ...] = RING_RADII,
    ring_spacing: float = RING_SPACING,
) -> list[Polyline]:
    n = int(round(size / spacing))
    coords = [i * spacing for i in range(n + 1)]
    lines = []
    for c in coords:
        lines.append(Polyline(tuple(Point(c, y) for y in coords)))
        lines.append(Polyline(tuple(Point(x, c) for x in coords)))
    cx, cy = size / 2, size / 2
    for r in ring_radii:
        m = max(8, int(round(2 * math.pi * r / ring_spacing)))
        pts = [Point(round(cx + r * math.cos(2 * math.pi * k / m), 3),
                     round(cy + r * math.sin(2 * math.pi * k / m), 3)) for k in range(m)]
        lines.append(Polyline(tuple(pts + [pts[0]])))
        # spur from each ring vertex to the nearest grid crossing
        for p in pts:
            q = Point(round(p.x / spacing) * spacing, round(p.y / spacing) * spacing)
            if p.distance(q) > 1.0:
                lines.append(Polyline((p, q)))
    return lines
