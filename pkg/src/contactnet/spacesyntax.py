"""Axial line maps and desk-to-desk architectural distances.

A line map is a set of straight axial lines (one floor each), desks attached
to points on lines, and stair links joining line endpoints across floors.
Lines are split into segments at every intersection. Routes through the
segment graph are directional: a walker leaves a segment through one of its
ends and can only continue onto segments meeting it there. Four route costs
are supported:

``metric``   walking metres, measured from segment centres (half of the root
             segment, every intermediate segment, half of the final segment,
             plus stair lengths). Desks on the same segment use the straight
             distance between their attachment points.
``topo``     number of segments entered after the root segment.
``axtopo``   number of line changes after the root line.
``angular``  sum of turn angles, 90 degrees = 1.

linemap.json schema::

    {
      "lines":  [{"id": "L1", "floor": 0, "points": [[x0, y0], [x1, y1]]}, ...],
      "desks":  {"A": {"line": "L1", "point": [x, y]}, ...},
      "stairs": [{"from": ["L1", 1], "to": ["L7", 0], "length": 6.0}, ...]
    }

A line may also be given as a bare point pair (id ``L<index>``, floor 0).
Stair ends name a line and its endpoint (0 = first point, 1 = second).
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DeskOffLine, InputError, Unreachable, ZeroLengthLine

TOL = 1e-6


class DistanceKind(str, Enum):
    metric = "metric"
    topo = "topo"
    axtopo = "axtopo"
    angular = "angular"


DISTANCE_KINDS = tuple(k.value for k in DistanceKind)


@dataclass(frozen=True)
class Line:
    id: str
    start: tuple
    end: tuple
    floor: int = 0

    @property
    def length(self):
        return math.dist(self.start, self.end)

    def point_at(self, t):
        return (self.start[0] + t * (self.end[0] - self.start[0]),
                self.start[1] + t * (self.end[1] - self.start[1]))

    def project(self, point):
        """Parameter t in [0, 1] of the nearest point and the offset distance."""
        sx, sy = self.start
        dx, dy = self.end[0] - sx, self.end[1] - sy
        t = ((point[0] - sx) * dx + (point[1] - sy) * dy) / (dx * dx + dy * dy)
        t = min(1.0, max(0.0, t))
        return t, math.dist(point, self.point_at(t))


@dataclass(frozen=True)
class Desk:
    id: str
    line: str
    point: tuple


@dataclass(frozen=True)
class Stair:
    a: tuple  # (line id, endpoint 0/1)
    b: tuple
    length: float


@dataclass(frozen=True)
class LineMap:
    lines: tuple
    desks: dict
    stairs: tuple = ()

    def line(self, line_id):
        for ln in self.lines:
            if ln.id == line_id:
                return ln
        raise KeyError(line_id)


def make_linemap(lines, desks, stairs=()):
    """Validate raw lines/desks/stairs and build a :class:`LineMap`."""
    built = []
    for k, spec in enumerate(lines):
        if isinstance(spec, dict):
            line_id = str(spec.get("id", f"L{k}"))
            pts = spec["points"]
            floor = int(spec.get("floor", 0))
        else:
            line_id, pts, floor = f"L{k}", spec, 0
        if len(pts) != 2:
            raise InputError(f"line {line_id!r} must have exactly two points")
        ln = Line(line_id, tuple(map(float, pts[0])), tuple(map(float, pts[1])), floor)
        if ln.length <= TOL:
            raise ZeroLengthLine(f"line {line_id!r} has zero length")
        built.append(ln)
    by_id = {ln.id: ln for ln in built}
    if len(by_id) != len(built):
        raise InputError("duplicate line id")

    desk_map = {}
    for desk_id, spec in desks.items():
        line_id = str(spec["line"])
        if line_id not in by_id:
            raise InputError(f"desk {desk_id!r} names unknown line {line_id!r}")
        point = tuple(map(float, spec["point"]))
        _, offset = by_id[line_id].project(point)
        if offset > TOL:
            raise DeskOffLine(f"desk {desk_id!r} lies {offset:.6g} m off line {line_id!r}")
        desk_map[str(desk_id)] = Desk(str(desk_id), line_id, point)

    built_stairs = []
    for spec in stairs:
        ends = []
        for key in ("from", "to"):
            line_id, which = spec[key]
            if str(line_id) not in by_id or int(which) not in (0, 1):
                raise InputError(f"stair end {spec[key]!r} is not a line endpoint")
            ends.append((str(line_id), int(which)))
        built_stairs.append(Stair(ends[0], ends[1], float(spec.get("length", 0.0))))
    return LineMap(tuple(built), desk_map, tuple(built_stairs))


def parse_linemap(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return make_linemap(doc.get("lines", []), doc.get("desks", {}), doc.get("stairs", []))


def linemap_to_json(linemap):
    return {
        "lines": [{"id": ln.id, "floor": ln.floor, "points": [list(ln.start), list(ln.end)]}
                  for ln in linemap.lines],
        "desks": {d.id: {"line": d.line, "point": list(d.point)} for d in linemap.desks.values()},
        "stairs": [{"from": list(s.a), "to": list(s.b), "length": s.length} for s in linemap.stairs],
    }


def _intersection_params(a, b):
    """Parameters (ta, tb) where lines a and b meet, or None.

    Parallel lines never intersect here, including collinear overlaps.
    """
    (x1, y1), (x2, y2) = a.start, a.end
    (x3, y3), (x4, y4) = b.start, b.end
    rx, ry = x2 - x1, y2 - y1
    sx, sy = x4 - x3, y4 - y3
    denom = rx * sy - ry * sx
    if abs(denom) <= TOL * a.length * b.length:
        return None
    qx, qy = x3 - x1, y3 - y1
    ta = (qx * sy - qy * sx) / denom
    tb = (qx * ry - qy * rx) / denom
    ea, eb = TOL / a.length, TOL / b.length
    if -ea <= ta <= 1 + ea and -eb <= tb <= 1 + eb:
        return min(1.0, max(0.0, ta)), min(1.0, max(0.0, tb))
    return None


@dataclass(frozen=True)
class Segment:
    id: int
    line: str
    t0: float
    t1: float
    start: tuple
    end: tuple

    @property
    def length(self):
        return math.dist(self.start, self.end)


@dataclass(frozen=True)
class SegmentGraph:
    """Segments plus symmetric adjacency ``{(s, t): edge}`` with s < t.

    Each edge records the turn angle in degrees, any stair length and
    whether the two segments belong to different lines.
    """

    linemap: LineMap
    segments: tuple
    edges: dict

    def neighbours(self):
        """Directed moves between (segment, exit end) states.

        A walker on segment ``s`` heading out through end ``e`` (0 = start,
        1 = end) may step onto any segment joined to ``s`` at that end, and
        then heads for the far end of the new segment. This rules out free
        U-turns through a neighbouring segment.
        """
        adj = {(seg.id, e): [] for seg in self.segments for e in (0, 1)}
        for (s, t), edge in self.edges.items():
            es, et = edge.ends
            adj[(s, es)].append(((t, 1 - et), s, t, edge))
            adj[(t, et)].append(((s, 1 - es), t, s, edge))
        for lst in adj.values():
            lst.sort(key=lambda item: item[0])
        return adj

    def segments_at(self, line_id, t):
        """Segments of ``line_id`` whose parameter range contains ``t``."""
        ln = self.linemap.line(line_id)
        eps = TOL / ln.length
        return [s.id for s in self.segments
                if s.line == line_id and s.t0 - eps <= t <= s.t1 + eps]


@dataclass(frozen=True)
class Edge:
    angle: float
    stair: float = 0.0
    line_change: bool = False
    ends: tuple = (1, 0)  # which end of the lower-id and higher-id segment meet


def _turn_angle(seg_in, seg_out, point):
    """Direction change (degrees) walking along seg_in into ``point`` then out along seg_out."""
    far_in = seg_in.start if math.dist(seg_in.end, point) <= math.dist(seg_in.start, point) else seg_in.end
    far_out = seg_out.end if math.dist(seg_out.start, point) <= math.dist(seg_out.end, point) else seg_out.start
    u = np.subtract(point, far_in)
    v = np.subtract(far_out, point)
    cos = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    angle = math.degrees(math.acos(min(1.0, max(-1.0, cos))))
    # snap float noise so right angles cost exactly 1
    snapped = round(angle, 6)
    return min(snapped, 180.0 - 1e-9)


def build_segment_graph(linemap):
    lines = linemap.lines
    cuts = {ln.id: {0.0, 1.0} for ln in lines}
    crossings = []  # (line a, ta, line b, tb, point)
    for i, a in enumerate(lines):
        for b in lines[i + 1:]:
            if a.floor != b.floor:
                continue
            hit = _intersection_params(a, b)
            if hit is None:
                continue
            ta, tb = hit
            cuts[a.id].add(ta)
            cuts[b.id].add(tb)
            crossings.append((a, ta, b, tb, a.point_at(ta)))

    segments = []
    by_line = {}
    for ln in lines:
        ts = sorted(cuts[ln.id])
        merged = [0.0]
        for t in ts[1:]:
            if (t - merged[-1]) * ln.length > TOL:
                merged.append(t)
        merged[-1] = 1.0
        ids = []
        for t0, t1 in zip(merged, merged[1:]):
            seg = Segment(len(segments), ln.id, t0, t1, ln.point_at(t0), ln.point_at(t1))
            segments.append(seg)
            ids.append(seg.id)
        by_line[ln.id] = ids

    def incident(line_id, t):
        ln = linemap.line(line_id)
        eps = TOL / ln.length
        return [sid for sid in by_line[line_id]
                if abs(segments[sid].t0 - t) <= eps or abs(segments[sid].t1 - t) <= eps]

    edges = {}

    def end_at(sid, point):
        seg = segments[sid]
        return 0 if math.dist(seg.start, point) <= math.dist(seg.end, point) else 1

    def add(s, t, point, **fields):
        if s > t:
            s, t = t, s
        if (s, t) not in edges:
            edges[(s, t)] = Edge(ends=(end_at(s, point), end_at(t, point)), **fields)

    for ids in by_line.values():
        for s, t in zip(ids, ids[1:]):
            add(s, t, segments[s].end, angle=0.0)
    for a, ta, b, tb, point in crossings:
        for s in incident(a.id, ta):
            for t in incident(b.id, tb):
                add(s, t, point, angle=_turn_angle(segments[s], segments[t], point), line_change=True)
    for stair in linemap.stairs:
        (la, wa), (lb, wb) = stair.a, stair.b
        s = by_line[la][0] if wa == 0 else by_line[la][-1]
        t = by_line[lb][0] if wb == 0 else by_line[lb][-1]
        if s != t:
            key = (s, t) if s < t else (t, s)
            ends = (wa, wb) if s < t else (wb, wa)
            if key not in edges:
                edges[key] = Edge(0.0, stair=stair.length,
                                  line_change=segments[s].line != segments[t].line, ends=ends)
    return SegmentGraph(linemap, tuple(segments), edges)


def _edge_cost(kind, graph, s, t, edge):
    if kind == DistanceKind.metric:
        return 0.5 * (graph.segments[s].length + graph.segments[t].length) + edge.stair
    if kind == DistanceKind.topo:
        return 1.0
    if kind == DistanceKind.axtopo:
        return 1.0 if edge.line_change else 0.0
    return edge.angle / 90.0


def _dijkstra(graph, sources, kind, adj=None):
    """Cheapest cost to reach each segment, starting on any of ``sources``
    and free to head out through either end."""
    adj = adj if adj is not None else graph.neighbours()
    done = {}
    heap = [(0.0, (s, e)) for s in sorted(sources) for e in (0, 1)]
    heapq.heapify(heap)
    while heap:
        d, state = heapq.heappop(heap)
        if state in done:
            continue
        done[state] = d
        for nxt, s, t, edge in adj[state]:
            if nxt not in done:
                heapq.heappush(heap, (d + _edge_cost(kind, graph, s, t, edge), nxt))
    dist = {}
    for (s, _), d in done.items():
        if d < dist.get(s, math.inf):
            dist[s] = d
    return dist


def _desk_anchor(graph, desk_id):
    try:
        desk = graph.linemap.desks[desk_id]
    except KeyError:
        raise InputError(f"unknown desk {desk_id!r}") from None
    t, _ = graph.linemap.line(desk.line).project(desk.point)
    return desk, graph.segments_at(desk.line, t)


def _distance_from(graph, desk_id, kind, adj=None):
    """Route cost from one desk to every desk reachable from it."""
    kind = DistanceKind(kind)
    desk, roots = _desk_anchor(graph, desk_id)
    dist = _dijkstra(graph, roots, kind, adj)
    out = {}
    for other_id in graph.linemap.desks:
        if other_id == desk_id:
            out[other_id] = 0.0
            continue
        other, terminals = _desk_anchor(graph, other_id)
        shared = set(roots) & set(terminals)
        if shared:
            out[other_id] = math.dist(desk.point, other.point) if kind == DistanceKind.metric else 0.0
            continue
        reached = [dist[t] for t in terminals if t in dist]
        if reached:
            out[other_id] = min(reached)
    return out


def distance(graph, a, b, kind):
    """Shortest route cost between desks ``a`` and ``b``."""
    result = _distance_from(graph, a, kind)
    if b not in result:
        if b not in graph.linemap.desks:
            raise InputError(f"unknown desk {b!r}")
        raise Unreachable(f"desk {b!r} is not reachable from desk {a!r}")
    return result[b]


def distance_matrix(graph, ids, kind):
    """Symmetric desk distance matrix in the order of ``ids`` (desk id = person id)."""
    ids = list(ids.ids if hasattr(ids, "ids") else ids)
    missing = [i for i in ids if i not in graph.linemap.desks]
    if missing:
        raise InputError(f"no desk mapped for {', '.join(missing)}")
    adj = graph.neighbours()
    n = len(ids)
    out = np.zeros((n, n))
    for i, a in enumerate(ids):
        row = _distance_from(graph, a, kind, adj)
        for j in range(i + 1, n):
            if ids[j] not in row:
                raise Unreachable(f"desk {ids[j]!r} is not reachable from desk {a!r}")
            out[i, j] = out[j, i] = row[ids[j]]
    return out


def write_distance_csv(matrix, ids, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *ids])
        for pid, row in zip(ids, matrix):
            w.writerow([pid, *(repr(float(v)) for v in row)])


def read_distance_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    ids = tuple(rows[0][1:])
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if matrix.shape != (len(ids), len(ids)) or tuple(r[0] for r in rows[1:]) != ids:
        raise InputError("distance matrix must be square with matching row/column ids", path=path)
    return ids, matrix
