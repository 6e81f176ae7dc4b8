"""Road maps, zone rings and the WKT subset they are loaded from.

Coordinates are planar metres. Nothing here is projected; WKT input is
assumed to be in a local metric frame already.
"""

from __future__ import annotations

import heapq
import math
import re
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

DEFAULT_SNAP_EPSILON = 0.1
N_ZONES = 6
OUTSIDE = 0


class Point(NamedTuple):
    x: float
    y: float

    def distance(self, other: Point) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Polyline:
    """An ordered run of points.

    A single-point polyline is a marker (a WKT ``POINT``); it never becomes
    part of a road graph.
    """

    points: tuple[Point, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("polyline needs at least one point")
        for p in self.points:
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ValueError(f"non-finite coordinate {p}")
        for a, b in zip(self.points, self.points[1:]):
            if a == b:
                raise ValueError(f"repeated consecutive point {a}")

    @property
    def is_marker(self) -> bool:
        return len(self.points) == 1

    @property
    def length(self) -> float:
        return sum(a.distance(b) for a, b in zip(self.points, self.points[1:]))


# --------------------------------------------------------------------- WKT


class WktSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<word>[A-Za-z_]+)
  | (?P<punct>[(),;])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"LINESTRING", "MULTILINESTRING", "POINT"}


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise WktSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = pos + chunk.rindex("\n") + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str, what: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise WktSyntaxError(f"expected {what}, found {found}", tok.line, tok.col)
        return tok

    def number(self) -> float:
        tok = self.take()
        if tok.kind != "num":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise WktSyntaxError(f"expected numeric coordinate, found {found}", tok.line, tok.col)
        value = float(tok.text)
        if not math.isfinite(value):
            raise WktSyntaxError("coordinate out of range", tok.line, tok.col)
        return value

    def coord(self) -> Point:
        return Point(self.number(), self.number())

    def coord_list(self, opener: _Tok) -> tuple[Point, ...]:
        self.expect("(", "'('")
        pts = [self.coord()]
        while self.peek().text == ",":
            self.take()
            pts.append(self.coord())
        tok = self.peek()
        if tok.text != ")":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise WktSyntaxError(
                f"unbalanced parenthesis: expected ')' or ',', found {found}", tok.line, tok.col
            )
        self.take()
        # near-duplicate vertices are a snapping concern; exact repeats are noise
        out = [pts[0]]
        for p in pts[1:]:
            if p != out[-1]:
                out.append(p)
        if len(out) < 2:
            raise WktSyntaxError("linestring collapses to a single point", opener.line, opener.col)
        return tuple(out)

    def parse(self) -> list[Polyline]:
        out: list[Polyline] = []
        while True:
            tok = self.take()
            if tok.kind == "eof":
                return out
            if tok.text == ";":
                continue
            keyword = tok.text.upper()
            if tok.kind != "word" or keyword not in _KEYWORDS:
                raise WktSyntaxError(f"unsupported geometry {tok.text!r}", tok.line, tok.col)
            if self.peek().kind == "word" and self.peek().text.upper() == "EMPTY":
                self.take()
                continue
            if keyword == "POINT":
                self.expect("(", "'('")
                p = self.coord()
                self.expect(")", "')' (unbalanced parenthesis)")
                out.append(Polyline((p,)))
            elif keyword == "LINESTRING":
                out.append(Polyline(self.coord_list(tok)))
            else:
                self.expect("(", "'('")
                out.append(Polyline(self.coord_list(tok)))
                while self.peek().text == ",":
                    self.take()
                    out.append(Polyline(self.coord_list(tok)))
                self.expect(")", "')' (unbalanced parenthesis)")


def parse_wkt(text: str) -> list[Polyline]:
    """Parse LINESTRING / MULTILINESTRING / POINT geometries, in order."""
    return _Parser(text).parse()


def to_wkt(polylines: Iterable[Polyline]) -> str:
    lines = []
    for pl in polylines:
        coords = ", ".join(f"{p.x!r} {p.y!r}" for p in pl.points)
        kind = "POINT" if pl.is_marker else "LINESTRING"
        lines.append(f"{kind} ({coords})")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- zones


@dataclass(frozen=True)
class ZoneModel:
    """Blast centre plus six ascending ring radii (zone 1 innermost)."""

    center: Point
    radii: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "center", Point(*self.center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if len(self.radii) != N_ZONES:
            raise ValueError(f"need {N_ZONES} radii, got {len(self.radii)}")
        if self.radii[0] <= 0 or any(a >= b for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError(f"radii must be positive and strictly ascending: {self.radii}")

    def zone_at(self, x: float, y: float) -> int:
        i = bisect_left(self.radii, math.hypot(x - self.center.x, y - self.center.y))
        return i + 1 if i < N_ZONES else OUTSIDE


def classify_zone(zones: ZoneModel, p: Point) -> int:
    """Zone 1..6 containing ``p`` (ring boundary belongs to the inner zone), 0 outside."""
    return zones.zone_at(p.x, p.y)


# ------------------------------------------------------------------- graph


class MapLayer(Enum):
    ALL = "all"
    INSIDE = "inside"
    OUTSIDE = "outside"

    @property
    def excluded_zones(self) -> frozenset[int]:
        return _LAYER_EXCLUSIONS[self]


_LAYER_EXCLUSIONS = {
    MapLayer.ALL: frozenset(),
    MapLayer.INSIDE: frozenset({1, 2}),
    MapLayer.OUTSIDE: frozenset(range(1, N_ZONES + 1)),
}


class NoPath(Exception):
    pass


class RoadGraph:
    """Undirected road graph; immutable once built.

    Shortest-path distance tables are memoised per target vertex.
    """

    def __init__(
        self,
        vertices: Sequence[Point],
        edges: Sequence[tuple[int, int, float]],
        layer: MapLayer = MapLayer.ALL,
    ):
        self.vertices = tuple(Point(*v) for v in vertices)
        self.edges = tuple(edges)
        self.layer = layer
        n = len(self.vertices)
        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for i, j, w in self.edges:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"bad edge ({i}, {j})")
            adj[i].append((j, w))
            adj[j].append((i, w))
        for nbrs in adj:
            nbrs.sort()
        self.adjacency = tuple(tuple(a) for a in adj)
        self._index = {v: k for k, v in enumerate(self.vertices)}
        self._dist_to: dict[int, list[float]] = {}

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"RoadGraph({len(self.vertices)} vertices, {len(self.edges)} edges, {self.layer.value})"

    def index_of(self, p: Point) -> int:
        return self._index[p]

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def components(self) -> list[list[int]]:
        seen = [False] * len(self.vertices)
        out = []
        for s in range(len(self.vertices)):
            if seen[s]:
                continue
            seen[s] = True
            comp, stack = [], [s]
            while stack:
                u = stack.pop()
                comp.append(u)
                for v, _ in self.adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            out.append(sorted(comp))
        return out

    def distances_to(self, target: int) -> list[float]:
        dist = self._dist_to.get(target)
        if dist is None:
            dist = [math.inf] * len(self.vertices)
            dist[target] = 0.0
            heap = [(0.0, target)]
            adj = self.adjacency
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                for v, w in adj[u]:
                    nd = d + w
                    if nd < dist[v]:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
            self._dist_to[target] = dist
        return dist


def build_graph(polylines: Iterable[Polyline], snap_epsilon: float = DEFAULT_SNAP_EPSILON) -> RoadGraph:
    """Merge endpoints closer than ``snap_epsilon`` and turn segments into edges."""
    if snap_epsilon < 0:
        raise ValueError("snap_epsilon must be >= 0")
    vertices: list[Point] = []
    cells: dict[tuple[int, int], list[int]] = {}
    cell = snap_epsilon if snap_epsilon > 0 else 1.0

    def vertex_for(p: Point) -> int:
        cx, cy = math.floor(p.x / cell), math.floor(p.y / cell)
        best, best_d = -1, math.inf
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for k in cells.get((cx + dx, cy + dy), ()):
                    d = p.distance(vertices[k])
                    if d <= snap_epsilon and d < best_d:
                        best, best_d = k, d
        if best >= 0:
            return best
        vertices.append(p)
        cells.setdefault((cx, cy), []).append(len(vertices) - 1)
        return len(vertices) - 1

    edges: dict[tuple[int, int], float] = {}
    for pl in polylines:
        if pl.is_marker:
            continue
        ids = [vertex_for(p) for p in pl.points]
        for a, b in zip(ids, ids[1:]):
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            if key not in edges:
                edges[key] = vertices[a].distance(vertices[b])
    return RoadGraph(vertices, [(a, b, w) for (a, b), w in edges.items()])


def shortest_path(graph: RoadGraph, source: int, target: int) -> list[int]:
    """Minimum-length vertex path; equal-length paths resolve to the
    lexicographically smallest index sequence."""
    n = len(graph.vertices)
    if not (0 <= source < n and 0 <= target < n):
        raise IndexError(f"vertex out of range: {source}, {target}")
    if source == target:
        return [source]
    dist = graph.distances_to(target)
    if dist[source] == math.inf:
        raise NoPath(f"no path from {source} to {target}")
    path = [source]
    u = source
    adj = graph.adjacency
    while u != target:
        du = dist[u]
        tol = 1e-9 * max(1.0, du)
        # adjacency is index-sorted, so the first tight neighbour is the smallest
        for v, w in adj[u]:
            if abs(w + dist[v] - du) <= tol and dist[v] < du:
                break
        else:  # pragma: no cover - only reachable with degenerate zero-length edges
            raise NoPath(f"path reconstruction stalled at {u}")
        path.append(v)
        u = v
    return path


def path_length(graph: RoadGraph, path: Sequence[int]) -> float:
    lengths = {}
    for i, j, w in graph.edges:
        lengths[(i, j)] = lengths[(j, i)] = w
    return sum(lengths[(a, b)] for a, b in zip(path, path[1:]))


def carve_layer(graph: RoadGraph, zones: ZoneModel, excluded: Iterable[int]) -> RoadGraph:
    """Drop every vertex lying in an excluded zone, with its incident edges."""
    excluded = frozenset(excluded)
    if not excluded <= set(range(1, N_ZONES + 1)):
        raise ValueError(f"excluded zones must lie in 1..{N_ZONES}: {sorted(excluded)}")
    for layer, ex in _LAYER_EXCLUSIONS.items():
        if ex == excluded:
            break
    else:
        raise ValueError(f"no map layer excludes exactly zones {sorted(excluded)}")
    keep = [k for k, v in enumerate(graph.vertices) if classify_zone(zones, v) not in excluded]
    remap = {old: new for new, old in enumerate(keep)}
    edges = [(remap[i], remap[j], w) for i, j, w in graph.edges if i in remap and j in remap]
    return RoadGraph([graph.vertices[k] for k in keep], edges, layer)


def load_map(text: str, zones: ZoneModel, snap_epsilon: float = DEFAULT_SNAP_EPSILON) -> dict[MapLayer, RoadGraph]:
    """All three movement layers for a WKT road map."""
    full = build_graph(parse_wkt(text), snap_epsilon)
    return {layer: carve_layer(full, zones, layer.excluded_zones) for layer in MapLayer}
