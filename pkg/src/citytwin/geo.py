"""Geographic primitives and the small planar-geometry kit shared by the engine.

All coordinates are WGS84 degrees.  Local metric computations use an
equirectangular approximation on the WGS84/Web-Mercator sphere, which is
accurate well below a metre at city-block scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

EARTH_RADIUS_M = 6378137.0
MERCATOR_MAX_LAT = 85.05112877980659
METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0

Ring = Sequence[tuple[float, float]]


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate pair in degrees."""

    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate: ({self.lon}, {self.lat})")


@dataclass(frozen=True)
class GeoBBox:
    """Axis-aligned bounding box in degrees, min <= max componentwise."""

    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self) -> None:
        if self.min_lon > self.max_lon or self.min_lat > self.max_lat:
            raise ValueError(f"inverted bbox: {self}")

    def contains(self, p: GeoPoint) -> bool:
        return (
            self.min_lon <= p.lon <= self.max_lon
            and self.min_lat <= p.lat <= self.max_lat
        )

    def contains_xy(self, lon: float, lat: float) -> bool:
        return (
            self.min_lon <= lon <= self.max_lon
            and self.min_lat <= lat <= self.max_lat
        )

    def intersects(self, other: "GeoBBox") -> bool:
        return not (
            other.max_lon < self.min_lon
            or other.min_lon > self.max_lon
            or other.max_lat < self.min_lat
            or other.min_lat > self.max_lat
        )

    def center(self) -> GeoPoint:
        return GeoPoint(
            (self.min_lon + self.max_lon) / 2.0, (self.min_lat + self.max_lat) / 2.0
        )


def meters_per_degree_lon(lat: float) -> float:
    return METERS_PER_DEG_LAT * math.cos(math.radians(lat))


def equirect_distance_m(a: GeoPoint, b: GeoPoint) -> float:
    """Local flat-earth distance in meters; fine at city scale."""
    mean_lat = (a.lat + b.lat) / 2.0
    dx = (b.lon - a.lon) * meters_per_degree_lon(mean_lat)
    dy = (b.lat - a.lat) * METERS_PER_DEG_LAT
    return math.hypot(dx, dy)


def close_ring(ring: Ring) -> list[tuple[float, float]]:
    """Return the ring without a duplicated closing vertex."""
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return pts


def polygon_area(ring: Ring) -> float:
    """Signed shoelace area (positive for counter-clockwise rings)."""
    pts = close_ring(ring)
    n = len(pts)
    acc = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2.0


def polygon_centroid(ring: Ring) -> tuple[float, float]:
    """Area-weighted centroid; falls back to the vertex mean for zero area."""
    pts = close_ring(ring)
    n = len(pts)
    if n == 0:
        raise ValueError("empty ring")
    area = polygon_area(pts)
    if abs(area) < 1e-16:
        sx = sum(p[0] for p in pts)
        sy = sum(p[1] for p in pts)
        return sx / n, sy / n
    cx = cy = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    return cx / (6.0 * area), cy / (6.0 * area)


def point_in_ring(x: float, y: float, ring: Ring) -> bool:
    """Even-odd ray cast; boundary points count as inside."""
    pts = close_ring(ring)
    n = len(pts)
    inside = False
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if _on_segment(x, y, x0, y0, x1, y1):
            return True
        if (y0 > y) != (y1 > y):
            x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x_cross > x:
                inside = not inside
    return inside


def point_in_polygon(x: float, y: float, outer: Ring, holes: Sequence[Ring] = ()) -> bool:
    if not point_in_ring(x, y, outer):
        return False
    for hole in holes:
        hole_pts = close_ring(hole)
        if _strictly_in_ring(x, y, hole_pts):
            return False
    return True


def _strictly_in_ring(x: float, y: float, pts: Ring) -> bool:
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if _on_segment(x, y, x0, y0, x1, y1):
            return False
    return point_in_ring(x, y, pts)


def _on_segment(px: float, py: float, x0: float, y0: float, x1: float, y1: float) -> bool:
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    if abs(cross) > 1e-12 * max(1.0, abs(x1 - x0) + abs(y1 - y0)):
        return False
    dot = (px - x0) * (x1 - x0) + (py - y0) * (y1 - y0)
    sq_len = (x1 - x0) ** 2 + (y1 - y0) ** 2
    return -1e-18 <= dot <= sq_len + 1e-18


def _orient(ax: float, ay: float, bx: float, by: float, cx: float, cy: float) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(
    p0: tuple[float, float],
    p1: tuple[float, float],
    q0: tuple[float, float],
    q1: tuple[float, float],
) -> bool:
    """Proper or touching intersection of two closed segments."""
    d1 = _orient(*q0, *q1, *p0)
    d2 = _orient(*q0, *q1, *p1)
    d3 = _orient(*p0, *p1, *q0)
    d4 = _orient(*p0, *p1, *q1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    for (a, b, c) in ((q0, q1, p0), (q0, q1, p1), (p0, p1, q0), (p0, p1, q1)):
        if _on_segment(c[0], c[1], a[0], a[1], b[0], b[1]):
            return True
    return False


def segment_crosses_ring(p0: tuple[float, float], p1: tuple[float, float], ring: Ring) -> bool:
    pts = close_ring(ring)
    n = len(pts)
    for i in range(n):
        if segments_intersect(p0, p1, pts[i], pts[(i + 1) % n]):
            return True
    return False


def point_segment_distance(
    px: float, py: float, x0: float, y0: float, x1: float, y1: float
) -> float:
    """Euclidean distance from a point to a segment, in the input units."""
    dx, dy = x1 - x0, y1 - y0
    sq_len = dx * dx + dy * dy
    if sq_len == 0.0:
        return math.hypot(px - x0, py - y0)
    t = max(0.0, min(1.0, ((px - x0) * dx + (py - y0) * dy) / sq_len))
    return math.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def ring_self_intersects(ring: Ring) -> bool:
    """O(n^2) check for non-adjacent edge crossings; rings here are small."""
    pts = close_ring(ring)
    n = len(pts)
    if n < 3:
        return True
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return True
    return False
