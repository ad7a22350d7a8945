"""Generative computing for 3D structures.

Flat-roof buildings are extruded prisms: the footprint is triangulated by
ear clipping (holes bridged into the outer ring first), walls are quads
along every ring, and the mesh is watertight so signed volume checks work.
Heights come from an explicit override when present, otherwise from the
difference of mean DSM and mean DTM samples inside the footprint.  Roof
slopes are recovered by greedy random-sampling consensus: repeatedly take
the plane with the largest inlier set, refine it by least squares, remove
its inliers, and stop when support runs out.

Prisms are based at the highest sampled terrain under the footprint outline
so no vertex ever sits below the terrain at its own position.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geo import (
    GeoPoint,
    METERS_PER_DEG_LAT,
    close_ring,
    meters_per_degree_lon,
    point_in_polygon,
    polygon_area,
    polygon_centroid,
    ring_self_intersects,
)
from .terrain import ElevationGrid, TerrainStack
from .tiles import BUILDING_ZOOM, TileId, assign_to_tile

logger = logging.getLogger(__name__)


class BuildingError(ValueError):
    pass


class InsufficientDataError(BuildingError):
    """Not enough raster samples inside a footprint."""


@dataclass(frozen=True)
class Footprint:
    id: str
    outer: tuple[tuple[float, float], ...]
    holes: tuple[tuple[tuple[float, float], ...], ...] = ()
    name: str = ""
    height_override: float | None = None
    attributes: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(eq=False)
class BuildingModel:
    """One building variant; mesh coordinates are meters east/north/up
    relative to (anchor, ground_elevation)."""

    building_id: str
    variant_id: str
    lod: str
    vertices: np.ndarray
    triangles: np.ndarray
    anchor: GeoPoint
    ground_elevation: float
    height: float
    attributes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RoofPlane:
    """Unit-normal plane n . p + offset = 0 with its inlier support."""

    normal: tuple[float, float, float]
    offset: float
    inliers: int

    def __post_init__(self) -> None:
        if abs(sum(c * c for c in self.normal) - 1.0) > 1e-6:
            raise BuildingError("plane normal must have unit length")


@dataclass(frozen=True)
class EntityInstance:
    """One placed decorative model (tree, streetlamp, ...)."""

    model_id: str
    position: GeoPoint
    scale: float = 1.0
    rotation_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise BuildingError(f"scale must be positive, got {self.scale}")


# --- footprint validation ----------------------------------------------------

def validate_footprint(f: Footprint) -> Footprint:
    """Normalize rings; drop self-intersecting holes; reject bad outers."""
    outer = close_ring(f.outer)
    if len(outer) < 3:
        raise BuildingError(f"footprint {f.id}: outer ring has < 3 vertices")
    if abs(polygon_area(outer)) < 1e-18:
        raise BuildingError(f"footprint {f.id}: zero-area outer ring")
    if ring_self_intersects(outer):
        raise BuildingError(f"footprint {f.id}: self-intersecting outer ring")
    holes = []
    for hole in f.holes:
        pts = close_ring(hole)
        if len(pts) < 3 or abs(polygon_area(pts)) < 1e-18 or ring_self_intersects(pts):
            logger.warning("footprint %s: dropping invalid hole", f.id)
            continue
        holes.append(tuple(pts))
    return Footprint(
        id=f.id,
        outer=tuple(outer),
        holes=tuple(holes),
        name=f.name,
        height_override=f.height_override,
        attributes=f.attributes,
    )


# --- triangulation -------------------------------------------------------------

def _ensure_orientation(pts: list[tuple[float, float]], ccw: bool) -> list[tuple[float, float]]:
    if (polygon_area(pts) > 0) != ccw:
        return pts[::-1]
    return pts


def _bridge_holes(
    outer: list[tuple[float, float]], holes: list[list[tuple[float, float]]]
) -> list[tuple[float, float]]:
    """Merge holes into the outer ring via visible-vertex bridges.

    Rightmost-first hole processing; from each hole's max-x vertex M a +x ray
    finds the nearest outer edge, and the bridge target is that edge's best
    visible endpoint (or the reflex vertex inside the candidate triangle that
    minimizes the angle to the ray, per the classic approach).
    """
    loop = _ensure_orientation(list(outer), ccw=True)
    remaining = sorted(
        (_ensure_orientation(list(h), ccw=False) for h in holes),
        key=lambda h: -max(p[0] for p in h),
    )
    for hole in remaining:
        mi = max(range(len(hole)), key=lambda i: hole[i])
        mx, my = hole[mi]
        best_t = math.inf
        hit_edge = -1
        hit_point: tuple[float, float] | None = None
        n = len(loop)
        for i in range(n):
            (x0, y0), (x1, y1) = loop[i], loop[(i + 1) % n]
            if (y0 > my) == (y1 > my):
                continue
            t = x0 + (my - y0) * (x1 - x0) / (y1 - y0)
            if t >= mx - 1e-12 and t < best_t:
                best_t = t
                hit_edge = i
                hit_point = (t, my)
        if hit_edge < 0:
            raise BuildingError("hole lies outside the outer ring")
        (x0, y0), (x1, y1) = loop[hit_edge], loop[(hit_edge + 1) % n]
        target = hit_edge if x0 > x1 else (hit_edge + 1) % n
        # reflex vertices inside triangle (M, I, P) pre-empt the edge endpoint
        ix, iy = hit_point
        px, py = loop[target]
        best_angle = math.inf
        for j in range(n):
            jx, jy = loop[j]
            if (jx, jy) in ((mx, my), (px, py)):
                continue
            prev = loop[j - 1]
            nxt = loop[(j + 1) % n]
            reflex = (
                (jx - prev[0]) * (nxt[1] - jy) - (jy - prev[1]) * (nxt[0] - jx)
            ) < 0
            if not reflex:
                continue
            if _point_in_triangle(jx, jy, mx, my, ix, iy, px, py):
                angle = abs(math.atan2(jy - my, jx - mx))
                if angle < best_angle or (
                    angle == best_angle and jx < loop[target][0]
                ):
                    best_angle = angle
                    target = j
        # splice: outer[..target] + [hole from M around] + [M, target] + rest
        hole_rot = hole[mi:] + hole[:mi]
        loop = (
            loop[: target + 1]
            + hole_rot
            + [hole_rot[0], loop[target]]
            + loop[target + 1 :]
        )
    return loop


def _point_in_triangle(px, py, ax, ay, bx, by, cx, cy) -> bool:
    d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d2 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    d3 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    return (d1 >= 0 and d2 >= 0 and d3 >= 0) or (d1 <= 0 and d2 <= 0 and d3 <= 0)


def triangulate(
    outer: Sequence[tuple[float, float]],
    holes: Sequence[Sequence[tuple[float, float]]] = (),
) -> tuple[list[tuple[float, float]], list[tuple[int, int, int]]]:
    """Ear-clip a polygon (holes supported); returns (vertices, triangles).

    Triangles are counter-clockwise.  Bridged holes duplicate two vertices,
    which is fine for rendering and extrusion.
    """
    loop = _bridge_holes(
        [(float(x), float(y)) for x, y in close_ring(outer)],
        [[(float(x), float(y)) for x, y in close_ring(h)] for h in holes],
    )
    verts = list(loop)
    idx = list(range(len(loop)))
    tris: list[tuple[int, int, int]] = []

    def is_ear(k: int) -> bool:
        a, b, c = (
            verts[idx[k - 1]],
            verts[idx[k]],
            verts[idx[(k + 1) % len(idx)]],
        )
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if cross <= 1e-18:
            return False
        for j in idx:
            p = verts[j]
            if p in (a, b, c):
                continue
            if _point_in_triangle(p[0], p[1], *a, *b, *c):
                return False
        return True

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(verts) ** 2:
            raise BuildingError("triangulation failed to converge")
        clipped = False
        for k in range(len(idx)):
            if is_ear(k):
                tris.append((idx[k - 1], idx[k], idx[(k + 1) % len(idx)]))
                del idx[k]
                clipped = True
                break
        if not clipped:
            # numerical fallback: clip the most convex vertex to make progress
            def cross_at(k: int) -> float:
                a, b, c = (
                    verts[idx[k - 1]],
                    verts[idx[k]],
                    verts[idx[(k + 1) % len(idx)]],
                )
                return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

            k = max(range(len(idx)), key=cross_at)
            tris.append((idx[k - 1], idx[k], idx[(k + 1) % len(idx)]))
            del idx[k]
    tris.append((idx[0], idx[1], idx[2]))
    # drop degenerate slivers introduced by bridge duplicates
    out = []
    for a, b, c in tris:
        area2 = (verts[b][0] - verts[a][0]) * (verts[c][1] - verts[a][1]) - (
            verts[b][1] - verts[a][1]
        ) * (verts[c][0] - verts[a][0])
        if abs(area2) > 1e-18:
            out.append((a, b, c) if area2 > 0 else (a, c, b))
    return verts, out


# --- heights -------------------------------------------------------------------

def _grid_samples_in_polygon(
    grid: ElevationGrid, outer: Sequence[tuple[float, float]], holes=()
) -> np.ndarray:
    lons = [p[0] for p in outer]
    lats = [p[1] for p in outer]
    col0 = max(0, math.floor((min(lons) - grid.origin.lon) / grid.dlon))
    col1 = min(grid.width - 1, math.ceil((max(lons) - grid.origin.lon) / grid.dlon))
    row0 = max(0, math.floor((grid.origin.lat - max(lats)) / grid.dlat))
    row1 = min(grid.height - 1, math.ceil((grid.origin.lat - min(lats)) / grid.dlat))
    vals = []
    for r in range(row0, row1 + 1):
        lat = grid.origin.lat - r * grid.dlat
        for c in range(col0, col1 + 1):
            lon = grid.origin.lon + c * grid.dlon
            if point_in_polygon(lon, lat, outer, holes):
                vals.append(grid.values[r, c])
    arr = np.array(vals, dtype=np.float64)
    return arr[np.isfinite(arr)]


def _primary_grid(source: ElevationGrid | TerrainStack, f: Footprint) -> ElevationGrid | None:
    if isinstance(source, ElevationGrid):
        return source
    lons = [p[0] for p in f.outer]
    lats = [p[1] for p in f.outer]
    for g in source.grids:
        b = g.bbox()
        if (
            b.min_lon <= max(lons)
            and b.max_lon >= min(lons)
            and b.min_lat <= max(lats)
            and b.max_lat >= min(lats)
        ):
            return g
    return None


def height_from_dsm(
    f: Footprint,
    dsm: ElevationGrid | TerrainStack,
    dtm: ElevationGrid | TerrainStack,
) -> float:
    """Building height = mean DSM inside the footprint minus mean DTM inside.

    An explicit height override on the footprint wins.  When the DTM has no
    own sample inside the footprint, its bilinear value at the centroid is
    used so small footprints stay ingestible.
    """
    if f.height_override is not None:
        return float(f.height_override)
    dsm_grid = _primary_grid(dsm, f)
    if dsm_grid is None:
        raise InsufficientDataError(f"footprint {f.id}: outside DSM coverage")
    dsm_vals = _grid_samples_in_polygon(dsm_grid, f.outer, f.holes)
    if dsm_vals.size == 0:
        raise InsufficientDataError(f"footprint {f.id}: no DSM samples inside")
    dtm_grid = _primary_grid(dtm, f)
    dtm_vals = (
        _grid_samples_in_polygon(dtm_grid, f.outer, f.holes)
        if dtm_grid is not None
        else np.array([])
    )
    if dtm_vals.size == 0:
        cx, cy = polygon_centroid(f.outer)
        stack = dtm if isinstance(dtm, TerrainStack) else TerrainStack([dtm])
        center_val = stack.sample(GeoPoint(cx, cy))
        if math.isnan(center_val):
            raise InsufficientDataError(f"footprint {f.id}: outside DTM coverage")
        dtm_vals = np.array([center_val])
    return float(dsm_vals.mean() - dtm_vals.mean())


# --- extrusion -------------------------------------------------------------------

def _to_local_meters(
    ring: Sequence[tuple[float, float]], anchor: GeoPoint
) -> list[tuple[float, float]]:
    mlon = meters_per_degree_lon(anchor.lat)
    return [
        ((lon - anchor.lon) * mlon, (lat - anchor.lat) * METERS_PER_DEG_LAT)
        for lon, lat in ring
    ]


def extrude_flat(
    f: Footprint, height: float, ground_elev: float, *, variant_id: str = "lod1"
) -> BuildingModel:
    """Extrude a footprint into a watertight LoD1 prism."""
    if height <= 0:
        raise BuildingError(f"footprint {f.id}: non-positive height {height}")
    f = validate_footprint(f)
    cx, cy = polygon_centroid(f.outer)
    anchor = GeoPoint(cx, cy)
    outer_m = _to_local_meters(f.outer, anchor)
    holes_m = [_to_local_meters(h, anchor) for h in f.holes]
    cap_verts, cap_tris = triangulate(outer_m, holes_m)

    nv = len(cap_verts)
    bottom = np.array([(x, y, 0.0) for x, y in cap_verts])
    top = np.array([(x, y, height) for x, y in cap_verts])
    vertices = np.vstack([bottom, top])

    tris: list[tuple[int, int, int]] = []
    for a, b, c in cap_tris:
        tris.append((a, c, b))  # bottom cap faces down
        tris.append((nv + a, nv + b, nv + c))  # top cap faces up

    def wall(ring_m: list[tuple[float, float]], ccw: bool) -> None:
        ring = _ensure_orientation(list(ring_m), ccw=ccw)
        index_of = {v: i for i, v in enumerate(cap_verts)}
        ids = [index_of[v] for v in ring]
        n = len(ids)
        for i in range(n):
            b0, b1 = ids[i], ids[(i + 1) % n]
            tris.append((b0, b1, nv + b1))
            tris.append((b0, nv + b1, nv + b0))

    wall(outer_m, ccw=True)
    for h in holes_m:
        wall(h, ccw=False)

    return BuildingModel(
        building_id=f.id,
        variant_id=variant_id,
        lod="LoD1",
        vertices=vertices,
        triangles=np.array(tris, dtype=np.int64),
        anchor=anchor,
        ground_elevation=ground_elev,
        height=height,
        attributes={"name": f.name, **f.attributes},
    )


def mesh_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    """Signed volume via the divergence theorem (positive for outward normals)."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles)
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return float(np.einsum("ij,ij->i", p0, np.cross(p1, p2)).sum() / 6.0)


# --- roof planes -----------------------------------------------------------------

def _lsq_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    normal = vt[-1]
    if normal[2] < 0:
        normal = -normal
    return normal, float(-normal @ centroid)


def fit_roof_planes(
    points: np.ndarray,
    inlier_tol: float,
    min_support: int,
    *,
    max_planes: int = 8,
    iterations: int = 256,
    seed: int = 0,
) -> list[RoofPlane]:
    """Greedy sequential plane extraction from roof samples (N x 3 meters).

    Falls back to a single horizontal plane at the mean height when there
    are not enough samples for consensus.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise BuildingError("expected (N, 3) roof samples")
    if min_support < 3:
        raise BuildingError("min_support must be >= 3")
    if len(pts) < min_support:
        if len(pts) == 0:
            raise InsufficientDataError("no roof samples at all")
        return [RoofPlane((0.0, 0.0, 1.0), float(-pts[:, 2].mean()), len(pts))]

    rng = np.random.default_rng(seed)
    planes: list[RoofPlane] = []
    remaining = pts
    while len(remaining) >= min_support and len(planes) < max_planes:
        best_count = 0
        best_mask: np.ndarray | None = None
        for _ in range(iterations):
            idx = rng.choice(len(remaining), size=3, replace=False)
            p0, p1, p2 = remaining[idx]
            normal = np.cross(p1 - p0, p2 - p0)
            norm = np.linalg.norm(normal)
            if norm < 1e-12:
                continue
            normal = normal / norm
            dist = np.abs((remaining - p0) @ normal)
            mask = dist <= inlier_tol
            count = int(mask.sum())
            if count > best_count:
                best_count, best_mask = count, mask
        if best_mask is None or best_count < min_support:
            break
        # two least-squares refinement rounds on the inlier set
        for _ in range(2):
            normal, offset = _lsq_plane(remaining[best_mask])
            dist = np.abs(remaining @ normal + offset)
            best_mask = dist <= inlier_tol
        if int(best_mask.sum()) < min_support:
            break
        normal, offset = _lsq_plane(remaining[best_mask])
        planes.append(
            RoofPlane(tuple(float(c) for c in normal), offset, int(best_mask.sum()))
        )
        remaining = remaining[~best_mask]
    if not planes:
        return [RoofPlane((0.0, 0.0, 1.0), float(-pts[:, 2].mean()), len(pts))]
    return planes


# --- tileset assembly --------------------------------------------------------------

def build_tileset(
    footprints: Sequence[Footprint],
    dtm: TerrainStack,
    dsm: TerrainStack | None = None,
    *,
    zoom: int = BUILDING_ZOOM,
) -> tuple[dict[TileId, list[BuildingModel]], list[tuple[str, str]]]:
    """Extrude every footprint and group the models into zoom-18 tiles.

    Returns (tile -> models sorted by id, skip report).  Per-footprint
    failures are reported and skipped, never aborting the batch.
    """
    tiles: dict[TileId, list[BuildingModel]] = {}
    skipped: list[tuple[str, str]] = []
    for fp in footprints:
        try:
            valid = validate_footprint(fp)
            if valid.height_override is not None:
                height = float(valid.height_override)
            elif dsm is not None:
                height = height_from_dsm(valid, dsm, dtm)
            else:
                raise InsufficientDataError(
                    f"footprint {valid.id}: no height override and no DSM"
                )
            if height <= 0:
                raise BuildingError(f"footprint {valid.id}: non-positive height {height}")
            cx, cy = polygon_centroid(valid.outer)
            probes = [GeoPoint(cx, cy)] + [GeoPoint(x, y) for x, y in valid.outer]
            elevations = [dtm.sample(p) for p in probes]
            finite = [e for e in elevations if not math.isnan(e)]
            if not finite:
                raise InsufficientDataError(f"footprint {valid.id}: outside DTM coverage")
            ground = max(finite)
            model = extrude_flat(valid, height, ground)
            tile = assign_to_tile(valid.outer, zoom)
            tiles.setdefault(tile, []).append(model)
        except Exception as exc:  # noqa: BLE001 - per-record isolation is the contract
            logger.warning("skipping footprint %s: %s", fp.id, exc)
            skipped.append((fp.id, str(exc)))
    for models in tiles.values():
        models.sort(key=lambda m: m.building_id)
    return tiles, skipped


class ModelRegistry:
    """Building model variants addressable by (building id, variant id)."""

    DEFAULT_VARIANT = "lod1"

    def __init__(self) -> None:
        self._buildings: set[str] = set()
        self._variants: dict[str, dict[str, bytes]] = {}

    def add_building(self, building_id: str) -> None:
        self._buildings.add(building_id)

    def known(self, building_id: str) -> bool:
        return building_id in self._buildings

    def register_variant(self, building_id: str, variant_id: str, blob: bytes) -> None:
        if building_id not in self._buildings:
            raise KeyError(f"unknown building {building_id!r}")
        self._variants.setdefault(building_id, {})[variant_id] = blob

    def list_variants(self, building_id: str) -> list[str]:
        if building_id not in self._buildings:
            raise KeyError(f"unknown building {building_id!r}")
        extra = sorted(v for v in self._variants.get(building_id, {}) if v != self.DEFAULT_VARIANT)
        return [self.DEFAULT_VARIANT] + extra

    def get_blob(self, building_id: str, variant_id: str) -> bytes | None:
        return self._variants.get(building_id, {}).get(variant_id)
