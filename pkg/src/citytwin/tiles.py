"""Slippy-map tile arithmetic on the Web Mercator pyramid.

Tiles follow the OSM convention: x grows eastward, y grows southward, and a
tile at zoom z splits into four children at z+1.  Boundary points land in the
tile to the south/east (plain floor semantics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geo import GeoBBox, GeoPoint, MERCATOR_MAX_LAT, polygon_centroid

MAX_ZOOM = 22
BUILDING_ZOOM = 18

# View-footprint tuning for tiles_in_view: the footprint square spans this
# many base-zoom tiles per side, and pitch extends it forward up to
# _MAX_DEPTH_SIDES times that side length.
VIEW_SIDE_TILES = 4.0
_MAX_DEPTH_SIDES = 8.0


class TilePyramidError(ValueError):
    """Raised for out-of-range coordinates or invalid tile navigation."""


@dataclass(frozen=True)
class TileId:
    """A (z, x, y) address in the slippy-map pyramid."""

    z: int
    x: int
    y: int

    def __post_init__(self) -> None:
        if self.z < 0:
            raise TilePyramidError(f"negative zoom: {self.z}")
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise TilePyramidError(f"tile ({self.x},{self.y}) out of range at z={self.z}")

    def __str__(self) -> str:  # handy in logs and error payloads
        return f"{self.z}/{self.x}/{self.y}"


@dataclass(frozen=True)
class ViewFrustum:
    """Camera state driving variable-zoom viewport coverage.

    heading is degrees clockwise from north; pitch is degrees off nadir
    (0 = straight down).  falloff is how many zoom levels the far bands may
    drop below base_zoom.
    """

    camera: GeoPoint
    heading_deg: float = 0.0
    pitch_deg: float = 0.0
    base_zoom: int = 16
    falloff: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.base_zoom <= MAX_ZOOM):
            raise TilePyramidError(f"base zoom out of range: {self.base_zoom}")
        if self.falloff < 0:
            raise TilePyramidError(f"negative falloff: {self.falloff}")
        if not (0.0 <= self.pitch_deg < 90.0):
            raise TilePyramidError(f"pitch must be in [0, 90): {self.pitch_deg}")


def lon_to_merc_x(lon: float) -> float:
    return (lon + 180.0) / 360.0


def lat_to_merc_y(lat: float) -> float:
    phi = math.radians(lat)
    return (1.0 - math.log(math.tan(phi) + 1.0 / math.cos(phi)) / math.pi) / 2.0


def merc_x_to_lon(x: float) -> float:
    return x * 360.0 - 180.0


def merc_y_to_lat(y: float) -> float:
    return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * y))))


# Rounded forms of the Mercator limit (85.05112878) must stay accepted.
_LAT_EPS = 1e-6


def tile_for_point(p: GeoPoint, z: int) -> TileId:
    """Project a point to its containing tile at zoom z."""
    if not (-MERCATOR_MAX_LAT - _LAT_EPS <= p.lat <= MERCATOR_MAX_LAT + _LAT_EPS):
        raise TilePyramidError(f"latitude outside Web Mercator range: {p.lat}")
    if z < 0 or z > MAX_ZOOM:
        raise TilePyramidError(f"zoom out of range: {z}")
    n = 1 << z
    x = int(math.floor(lon_to_merc_x(p.lon) * n))
    y = int(math.floor(lat_to_merc_y(p.lat) * n))
    return TileId(z, max(0, min(n - 1, x)), max(0, min(n - 1, y)))


def parent(t: TileId) -> TileId:
    if t.z == 0:
        raise TilePyramidError("the root tile has no parent")
    return TileId(t.z - 1, t.x // 2, t.y // 2)


def children(t: TileId) -> list[TileId]:
    """The four tiles at z+1 covering t, row-major (NW, NE, SW, SE)."""
    z, x, y = t.z + 1, t.x * 2, t.y * 2
    return [TileId(z, x, y), TileId(z, x + 1, y), TileId(z, x, y + 1), TileId(z, x + 1, y + 1)]


def ancestor_at(t: TileId, z_target: int) -> TileId:
    if z_target > t.z:
        raise TilePyramidError(f"ancestor zoom {z_target} is below tile zoom {t.z}")
    if z_target < 0:
        raise TilePyramidError(f"negative zoom: {z_target}")
    shift = t.z - z_target
    return TileId(z_target, t.x >> shift, t.y >> shift)


def descendants_at(t: TileId, z_target: int) -> list[TileId]:
    """All 4^(z_target - t.z) descendants, sorted by (x, y)."""
    if z_target < t.z:
        raise TilePyramidError(f"descendant zoom {z_target} is above tile zoom {t.z}")
    shift = z_target - t.z
    n = 1 << shift
    x0, y0 = t.x << shift, t.y << shift
    return [TileId(z_target, x0 + dx, y0 + dy) for dx in range(n) for dy in range(n)]


def tile_bounds(t: TileId) -> GeoBBox:
    n = 1 << t.z
    return GeoBBox(
        min_lon=merc_x_to_lon(t.x / n),
        min_lat=merc_y_to_lat((t.y + 1) / n),
        max_lon=merc_x_to_lon((t.x + 1) / n),
        max_lat=merc_y_to_lat(t.y / n),
    )


def assign_to_tile(footprint: Sequence[tuple[float, float]], z: int = BUILDING_ZOOM) -> TileId:
    """Assign a footprint polygon to the single tile holding its area centroid.

    Zero-area polygons fall back to the vertex mean so ingestion stays total.
    """
    cx, cy = polygon_centroid(footprint)
    return tile_for_point(GeoPoint(cx, cy), z)


def tiles_for_bbox(b: GeoBBox, z: int) -> list[TileId]:
    """All tiles at zoom z intersecting the bbox, row-major."""
    lat_lo = max(-MERCATOR_MAX_LAT, min(MERCATOR_MAX_LAT, b.min_lat))
    lat_hi = max(-MERCATOR_MAX_LAT, min(MERCATOR_MAX_LAT, b.max_lat))
    n = 1 << z
    x0 = max(0, min(n - 1, int(math.floor(lon_to_merc_x(b.min_lon) * n))))
    x1 = max(0, min(n - 1, int(math.floor(lon_to_merc_x(b.max_lon) * n))))
    y0 = max(0, min(n - 1, int(math.floor(lat_to_merc_y(lat_hi) * n))))
    y1 = max(0, min(n - 1, int(math.floor(lat_to_merc_y(lat_lo) * n))))
    return [TileId(z, x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]


def bbox_tile_span(b: GeoBBox, z: int) -> int:
    """Tile count of the bbox cover at zoom z, without materializing it."""
    lat_lo = max(-MERCATOR_MAX_LAT, min(MERCATOR_MAX_LAT, b.min_lat))
    lat_hi = max(-MERCATOR_MAX_LAT, min(MERCATOR_MAX_LAT, b.max_lat))
    n = 1 << z
    x0 = max(0, min(n - 1, int(math.floor(lon_to_merc_x(b.min_lon) * n))))
    x1 = max(0, min(n - 1, int(math.floor(lon_to_merc_x(b.max_lon) * n))))
    y0 = max(0, min(n - 1, int(math.floor(lat_to_merc_y(lat_hi) * n))))
    y1 = max(0, min(n - 1, int(math.floor(lat_to_merc_y(lat_lo) * n))))
    return (x1 - x0 + 1) * (y1 - y0 + 1)


# --- viewport coverage -----------------------------------------------------

def _view_polygon(v: ViewFrustum) -> tuple[list[tuple[float, float]], tuple[float, float], tuple[float, float], float]:
    """Ground trapezoid of the view in Mercator unit coordinates.

    Returns (corners, camera_xy, heading_unit, side) where side is the
    footprint square's edge length.  Pitch pushes the far edge forward and
    widens it linearly, approximating the perspective ground trapezoid.
    """
    side = VIEW_SIDE_TILES / float(1 << v.base_zoom)
    h = side / 2.0
    theta = math.radians(v.heading_deg)
    ux, uy = math.sin(theta), -math.cos(theta)  # heading; Mercator y grows south
    vx, vy = -uy, ux  # right of heading
    cam = (lon_to_merc_x(v.camera.lon), lat_to_merc_y(v.camera.lat))
    depth = min(side * math.tan(math.radians(v.pitch_deg)), side * _MAX_DEPTH_SIDES)
    far = h + depth
    w_far = h * (1.0 + depth / side)
    corners = [
        (cam[0] - h * ux - h * vx, cam[1] - h * uy - h * vy),
        (cam[0] - h * ux + h * vx, cam[1] - h * uy + h * vy),
        (cam[0] + far * ux + w_far * vx, cam[1] + far * uy + w_far * vy),
        (cam[0] + far * ux - w_far * vx, cam[1] + far * uy - w_far * vy),
    ]
    return corners, cam, (ux, uy), side


def _clip_halfplane(
    poly: list[tuple[float, float]], nx: float, ny: float, offset: float
) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a convex polygon to nx*x + ny*y <= offset."""
    out: list[tuple[float, float]] = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        d_cur = nx * cur[0] + ny * cur[1] - offset
        d_nxt = nx * nxt[0] + ny * nxt[1] - offset
        if d_cur <= 0:
            out.append(cur)
        if (d_cur < 0 < d_nxt) or (d_nxt < 0 < d_cur):
            t = d_cur / (d_cur - d_nxt)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    return out


def _convex_overlaps_rect(
    poly: list[tuple[float, float]], x0: float, y0: float, x1: float, y1: float
) -> bool:
    """Separating-axis test between a convex polygon and an AABB."""
    if not poly:
        return False
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    if max(xs) < x0 or min(xs) > x1 or max(ys) < y0 or min(ys) > y1:
        return False
    n = len(poly)
    rect = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        nx, ny = ay - by, bx - ax  # outward-ish normal; sign handled via both projections
        poly_proj = [nx * px + ny * py for px, py in poly]
        rect_proj = [nx * px + ny * py for px, py in rect]
        if max(rect_proj) < min(poly_proj) or min(rect_proj) > max(poly_proj):
            return False
    return True


def tiles_in_view(v: ViewFrustum) -> list[tuple[TileId, int]]:
    """Tiles covering the view trapezoid, with their distance band.

    Band 0 is nearest and uses base_zoom; each farther band (one view-side of
    ground distance deep) drops one zoom level down to base_zoom - falloff.
    Tiles are ordered near to far and never duplicated.
    """
    corners, cam, (ux, uy), side = _view_polygon(v)
    near_anchor = (cam[0] - (side / 2.0) * ux, cam[1] - (side / 2.0) * uy)

    def along(p: tuple[float, float]) -> float:
        return (p[0] - near_anchor[0]) * ux + (p[1] - near_anchor[1]) * uy

    max_along = max(along(p) for p in corners)
    n_bands = max(1, int(math.ceil(max_along / side - 1e-12)))

    seen: set[TileId] = set()
    out: list[tuple[TileId, int, float]] = []
    for band in range(n_bands):
        zoom = max(0, v.base_zoom - min(band, v.falloff))
        lo, hi = band * side, (band + 1) * side
        slab = _clip_halfplane(corners, -ux, -uy, -(lo + ux * near_anchor[0] + uy * near_anchor[1]))
        slab = _clip_halfplane(slab, ux, uy, hi + ux * near_anchor[0] + uy * near_anchor[1])
        if len(slab) < 3:
            continue
        xs = [p[0] for p in slab]
        ys = [p[1] for p in slab]
        n = 1 << zoom
        tx0 = max(0, min(n - 1, int(math.floor(min(xs) * n))))
        tx1 = max(0, min(n - 1, int(math.floor(max(xs) * n))))
        ty0 = max(0, min(n - 1, int(math.floor(min(ys) * n))))
        ty1 = max(0, min(n - 1, int(math.floor(max(ys) * n))))
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                if not _convex_overlaps_rect(slab, tx / n, ty / n, (tx + 1) / n, (ty + 1) / n):
                    continue
                tile = TileId(zoom, tx, ty)
                if tile in seen:
                    continue
                seen.add(tile)
                center_along = along(((tx + 0.5) / n, (ty + 0.5) / n))
                out.append((tile, band, center_along))
    out.sort(key=lambda item: (item[1], item[2], item[0].x, item[0].y))
    return [(tile, band) for tile, band, _ in out]


def view_polygon_lonlat(v: ViewFrustum) -> list[tuple[float, float]]:
    """The view trapezoid corners in lon/lat, for tests and debugging."""
    corners, _, _, _ = _view_polygon(v)
    return [(merc_x_to_lon(x), merc_y_to_lat(y)) for x, y in corners]


def cover_bbox(tiles: Iterable[TileId]) -> GeoBBox:
    boxes = [tile_bounds(t) for t in tiles]
    if not boxes:
        raise TilePyramidError("empty tile set")
    return GeoBBox(
        min(b.min_lon for b in boxes),
        min(b.min_lat for b in boxes),
        max(b.max_lon for b in boxes),
        max(b.max_lat for b in boxes),
    )
