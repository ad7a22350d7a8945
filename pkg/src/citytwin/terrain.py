"""Elevation handling: RGB elevation codec, multi-grid priority merging,
tile rasterization, point sampling, and RTIN mesh generation.

The codec packs floor(100000 + 10*v) into three 8-bit channels, giving a
0.1 m quantum over [-10000.0, +1667721.5] m.  (0, 0, 0) doubles as the
nodata sentinel; no real terrain sits at -10000 m.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .geo import GeoBBox, GeoPoint, METERS_PER_DEG_LAT, meters_per_degree_lon
from .tiles import TileId, merc_x_to_lon, merc_y_to_lat, tile_bounds

ELEV_MIN = -10000.0
ELEV_MAX = 1667721.5
NODATA_RGB = (0, 0, 0)
TILE_SIZE = 256


class TerrainError(ValueError):
    pass


class EmptyTileError(TerrainError):
    """Requested tile does not overlap any registered grid."""


# --- codec ------------------------------------------------------------------

def encode_elevation(v: float) -> tuple[int, int, int]:
    """Pack one elevation in meters into (R, G, B)."""
    if not (ELEV_MIN <= v <= ELEV_MAX):
        raise TerrainError(f"elevation {v} outside encodable range")
    t = math.floor(100000.0 + 10.0 * v)
    r = t // (256 * 256)
    g = (t // 256) - 256 * r
    b = t - 256 * 256 * r - 256 * g
    return r, g, b


def decode_elevation(r: int, g: int, b: int) -> float:
    return (r * 256 * 256 + g * 256 + b - 100000) / 10.0


def encode_array(values: np.ndarray) -> np.ndarray:
    """Vectorized codec: (h, w) float meters -> (h, w, 3) uint8.

    NaN samples become the (0, 0, 0) nodata sentinel.
    """
    v = np.asarray(values, dtype=np.float64)
    nodata = ~np.isfinite(v)
    clipped = np.where(nodata, ELEV_MIN, v)
    if clipped.min() < ELEV_MIN or clipped.max() > ELEV_MAX:
        raise TerrainError("elevation outside encodable range")
    t = np.floor(100000.0 + 10.0 * clipped).astype(np.int64)
    t[nodata] = 0
    out = np.empty(v.shape + (3,), dtype=np.uint8)
    out[..., 0] = t >> 16
    out[..., 1] = (t >> 8) & 0xFF
    out[..., 2] = t & 0xFF
    return out


def decode_array(rgb: np.ndarray, *, nan_for_sentinel: bool = False) -> np.ndarray:
    """(h, w, 3) uint8 -> (h, w) float meters.

    With nan_for_sentinel, (0, 0, 0) reads as NaN (tile semantics); the raw
    codec decodes it to -10000.0.
    """
    px = np.asarray(rgb).astype(np.int64)
    t = (px[..., 0] << 16) + (px[..., 1] << 8) + px[..., 2]
    v = (t - 100000) / 10.0
    if nan_for_sentinel:
        return np.where(t == 0, np.nan, v)
    return v


# --- grids -------------------------------------------------------------------

@dataclass(eq=False)
class ElevationGrid:
    """A georeferenced single-band raster; row 0 is the northernmost row.

    ``origin`` is the center of the north-west sample; ``resolution_m`` is
    the sample spacing in meters, converted to degrees at the origin
    latitude.  Values use NaN for nodata.
    """

    values: np.ndarray
    origin: GeoPoint
    resolution_m: float
    priority: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise TerrainError("grid values must be 2-D")
        if self.resolution_m <= 0:
            raise TerrainError("resolution must be positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def dlat(self) -> float:
        return self.resolution_m / METERS_PER_DEG_LAT

    @property
    def dlon(self) -> float:
        return self.resolution_m / meters_per_degree_lon(self.origin.lat)

    def sample_lonlat(self, row: int, col: int) -> GeoPoint:
        return GeoPoint(self.origin.lon + col * self.dlon, self.origin.lat - row * self.dlat)

    def bbox(self) -> GeoBBox:
        return GeoBBox(
            min_lon=self.origin.lon,
            min_lat=self.origin.lat - (self.height - 1) * self.dlat,
            max_lon=self.origin.lon + (self.width - 1) * self.dlon,
            max_lat=self.origin.lat,
        )

    def sample_many(self, lons: np.ndarray, lats: np.ndarray) -> np.ndarray:
        """Bilinear interpolation; NaN outside coverage or next to nodata."""
        fx = (np.asarray(lons, dtype=np.float64) - self.origin.lon) / self.dlon
        fy = (self.origin.lat - np.asarray(lats, dtype=np.float64)) / self.dlat
        out = np.full(np.broadcast(fx, fy).shape, np.nan)
        inside = (fx >= 0) & (fx <= self.width - 1) & (fy >= 0) & (fy <= self.height - 1)
        if not inside.any():
            return out
        fxi = np.clip(fx[inside], 0, self.width - 1)
        fyi = np.clip(fy[inside], 0, self.height - 1)
        x0 = np.clip(np.floor(fxi).astype(int), 0, self.width - 2) if self.width > 1 else np.zeros_like(fxi, int)
        y0 = np.clip(np.floor(fyi).astype(int), 0, self.height - 2) if self.height > 1 else np.zeros_like(fyi, int)
        x1 = np.minimum(x0 + 1, self.width - 1)
        y1 = np.minimum(y0 + 1, self.height - 1)
        tx = fxi - x0
        ty = fyi - y0
        v = self.values
        val = (
            v[y0, x0] * (1 - tx) * (1 - ty)
            + v[y0, x1] * tx * (1 - ty)
            + v[y1, x0] * (1 - tx) * ty
            + v[y1, x1] * tx * ty
        )
        out[inside] = val
        return out

    def sample(self, p: GeoPoint) -> float:
        return float(self.sample_many(np.array([p.lon]), np.array([p.lat]))[0])


class TerrainStack:
    """Priority-merged view over several grids.

    At any point the highest-priority grid with a valid sample wins; ties go
    to the grid registered first.
    """

    def __init__(self, grids: list[ElevationGrid] | None = None):
        self._grids: list[ElevationGrid] = []
        for g in grids or []:
            self.add(g)

    def add(self, grid: ElevationGrid) -> None:
        self._grids.append(grid)

    @property
    def grids(self) -> list[ElevationGrid]:
        """Grids in lookup order (priority desc, then registration order)."""
        order = sorted(enumerate(self._grids), key=lambda t: (-t[1].priority, t[0]))
        return [g for _, g in order]

    def __len__(self) -> int:
        return len(self._grids)

    def bbox(self) -> GeoBBox | None:
        boxes = [g.bbox() for g in self._grids]
        if not boxes:
            return None
        return GeoBBox(
            min(b.min_lon for b in boxes),
            min(b.min_lat for b in boxes),
            max(b.max_lon for b in boxes),
            max(b.max_lat for b in boxes),
        )

    def sample_many(self, lons: np.ndarray, lats: np.ndarray) -> np.ndarray:
        lons = np.asarray(lons, dtype=np.float64)
        lats = np.asarray(lats, dtype=np.float64)
        out = np.full(np.broadcast(lons, lats).shape, np.nan)
        for g in self.grids:
            missing = np.isnan(out)
            if not missing.any():
                break
            vals = g.sample_many(
                np.broadcast_to(lons, out.shape)[missing],
                np.broadcast_to(lats, out.shape)[missing],
            )
            out[missing] = vals
        return out

    def sample(self, p: GeoPoint) -> float:
        return float(self.sample_many(np.array([p.lon]), np.array([p.lat]))[0])


def merge_grids(grids: list[ElevationGrid]) -> TerrainStack:
    if not grids:
        raise TerrainError("at least one grid required")
    return TerrainStack(grids)


def encode_tile(stack: TerrainStack, tile: TileId, size: int = TILE_SIZE) -> np.ndarray:
    """Rasterize a tile to the RGB codec; (size, size, 3) uint8.

    Pixel centers are spaced uniformly in Mercator space over the tile.
    Raises EmptyTileError when the tile misses every grid.
    """
    cover = stack.bbox()
    bounds = tile_bounds(tile)
    if cover is None or not bounds.intersects(cover):
        raise EmptyTileError(f"tile {tile} outside terrain coverage")
    n = 1 << tile.z
    mx = (tile.x + (np.arange(size) + 0.5) / size) / n
    my = (tile.y + (np.arange(size) + 0.5) / size) / n
    lons = np.array([merc_x_to_lon(x) for x in mx])
    lats = np.array([merc_y_to_lat(y) for y in my])
    lon_grid, lat_grid = np.meshgrid(lons, lats)
    return encode_array(stack.sample_many(lon_grid, lat_grid))


# --- grid file formats --------------------------------------------------------

_BIN_MAGIC = b"EGR1"


def read_ascii_grid(text: str, priority: int = 0, name: str = "") -> ElevationGrid:
    """Parse the documented ASCII grid format (see README: data formats)."""
    header: dict[str, float] = {}
    lines = [ln for ln in text.splitlines() if ln.strip()]
    idx = 0
    while idx < len(lines):
        parts = lines[idx].split()
        if len(parts) == 2 and parts[0].lower() in {
            "ncols", "nrows", "xllcenter", "yllcenter", "cellsize_m", "nodata_value",
        }:
            header[parts[0].lower()] = float(parts[1])
            idx += 1
        else:
            break
    for key in ("ncols", "nrows", "xllcenter", "yllcenter", "cellsize_m"):
        if key not in header:
            raise TerrainError(f"ASCII grid missing header field {key}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    nodata = header.get("nodata_value", -9999.0)
    data = np.array(" ".join(lines[idx:]).split(), dtype=np.float64)
    if data.size != ncols * nrows:
        raise TerrainError(f"ASCII grid expects {ncols * nrows} samples, got {data.size}")
    values = data.reshape(nrows, ncols)
    values = np.where(values == nodata, np.nan, values)
    res = header["cellsize_m"]
    origin = GeoPoint(
        header["xllcenter"],
        header["yllcenter"] + (nrows - 1) * res / METERS_PER_DEG_LAT,
    )
    return ElevationGrid(values, origin, res, priority=priority, name=name)


def write_ascii_grid(grid: ElevationGrid, nodata: float = -9999.0) -> str:
    values = np.where(np.isnan(grid.values), nodata, grid.values)
    yll = grid.origin.lat - (grid.height - 1) * grid.dlat
    head = (
        f"ncols {grid.width}\n"
        f"nrows {grid.height}\n"
        f"xllcenter {grid.origin.lon!r}\n"
        f"yllcenter {yll!r}\n"
        f"cellsize_m {grid.resolution_m!r}\n"
        f"nodata_value {nodata!r}\n"
    )
    body = "\n".join(" ".join(repr(v) for v in row) for row in values.tolist())
    return head + body + "\n"


def read_binary_grid(blob: bytes, priority: int = 0, name: str = "") -> ElevationGrid:
    """Parse the little-endian float32 binary grid format."""
    if blob[:4] != _BIN_MAGIC:
        raise TerrainError("bad magic for binary elevation grid")
    ncols, nrows = struct.unpack_from("<II", blob, 4)
    lon_ll, lat_ll, res = struct.unpack_from("<ddd", blob, 12)
    (nodata,) = struct.unpack_from("<f", blob, 36)
    payload = np.frombuffer(blob, dtype="<f4", offset=40, count=ncols * nrows)
    values = payload.reshape(nrows, ncols).astype(np.float64)
    values = np.where(values == np.float64(np.float32(nodata)), np.nan, values)
    origin = GeoPoint(lon_ll, lat_ll + (nrows - 1) * res / METERS_PER_DEG_LAT)
    return ElevationGrid(values, origin, res, priority=priority, name=name)


def write_binary_grid(grid: ElevationGrid, nodata: float = -9999.0) -> bytes:
    buf = io.BytesIO()
    buf.write(_BIN_MAGIC)
    yll = grid.origin.lat - (grid.height - 1) * grid.dlat
    buf.write(struct.pack("<II", grid.width, grid.height))
    buf.write(struct.pack("<ddd", grid.origin.lon, yll, grid.resolution_m))
    buf.write(struct.pack("<f", nodata))
    values = np.where(np.isnan(grid.values), nodata, grid.values).astype("<f4")
    buf.write(values.tobytes())
    return buf.getvalue()


# --- RTIN tessellation ---------------------------------------------------------

@dataclass
class TerrainMesh:
    """Triangulated terrain: vertices are (lon, lat, elevation) rows."""

    vertices: np.ndarray
    triangles: np.ndarray
    max_error: float


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class _Rtin:
    """Right-triangulated irregular network over a (2^k + 1)^2 grid.

    The hierarchy starts from the two halves of the square and splits each
    right triangle at its hypotenuse midpoint.  Every splittable triangle
    carries an error keyed on that midpoint:

      error[m] = max over the two triangles sharing m of the true maximum
                 deviation of all grid samples inside the triangle from the
                 triangle's plane, saturated with the errors of the child
                 midpoints.

    Saturation (parent >= children) makes split decisions monotone down the
    hierarchy, which keeps the extracted mesh free of T-junctions; the true
    per-sample deviation (not just the midpoint interpolation error) makes
    the vertical error bound hold exhaustively at every grid sample.
    """

    z: np.ndarray
    errors: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        size = self.z.shape[0]
        if self.z.shape[0] != self.z.shape[1] or not _is_pow2(size - 1):
            raise TerrainError(f"RTIN grid must be square (2^k + 1) wide, got {self.z.shape}")
        if not np.isfinite(self.z).all():
            raise TerrainError("RTIN grid must not contain nodata")
        self.errors = np.zeros_like(self.z)
        self._compute_errors()

    def _compute_errors(self) -> None:
        size = self.z.shape[0]
        last = size - 1
        # Triangles live in the hierarchy iff their hypotenuse midpoint is a
        # lattice point; children of (a, b, c) are (c, a, m) and (b, c, m)
        # and both have lattice midpoints iff (a + c) is componentwise even.
        levels: list[list[tuple[int, int, int, int, int, int]]] = [
            [(0, last, last, 0, 0, 0), (last, 0, 0, last, last, last)]
        ]
        while True:
            nxt = []
            for ax, ay, bx, by, cx, cy in levels[-1]:
                if (ax + cx) % 2 == 0 and (ay + cy) % 2 == 0:
                    mx, my = (ax + bx) // 2, (ay + by) // 2
                    nxt.append((cx, cy, ax, ay, mx, my))
                    nxt.append((bx, by, cx, cy, mx, my))
            if not nxt:
                break
            levels.append(nxt)
        for level in reversed(levels):
            for ax, ay, bx, by, cx, cy in level:
                mx, my = (ax + bx) // 2, (ay + by) // 2
                err = self._triangle_deviation(ax, ay, bx, by, cx, cy)
                if (ax + cx) % 2 == 0 and (ay + cy) % 2 == 0:  # children exist
                    lmx, lmy = (ax + cx) // 2, (ay + cy) // 2
                    rmx, rmy = (bx + cx) // 2, (by + cy) // 2
                    err = max(err, self.errors[lmy, lmx], self.errors[rmy, rmx])
                if err > self.errors[my, mx]:
                    self.errors[my, mx] = err

    def _triangle_deviation(self, ax, ay, bx, by, cx, cy) -> float:
        """Max |z - plane| over grid samples inside the triangle."""
        x0, x1 = min(ax, bx, cx), max(ax, bx, cx)
        y0, y1 = min(ay, by, cy), max(ay, by, cy)
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        gx, gy = np.meshgrid(xs, ys)
        d1 = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        d2 = (cx - bx) * (gy - by) - (cy - by) * (gx - bx)
        d3 = (ax - cx) * (gy - cy) - (ay - cy) * (gx - cx)
        inside = ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))
        if not inside.any():
            return 0.0
        za, zb, zc = self.z[ay, ax], self.z[by, bx], self.z[cy, cx]
        # plane through the three corners, solved in barycentric form
        det = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        l1 = ((by - cy) * (gx - cx) + (cx - bx) * (gy - cy)) / det
        l2 = ((cy - ay) * (gx - cx) + (ax - cx) * (gy - cy)) / det
        plane = l1 * za + l2 * zb + (1.0 - l1 - l2) * zc
        dev = np.abs(self.z[y0 : y1 + 1, x0 : x1 + 1] - plane)
        return float(dev[inside].max())

    def triangles(self, max_error: float) -> np.ndarray:
        """Extract the conforming mesh for the given vertical error bound."""
        size = self.z.shape[0]
        last = size - 1
        out: list[tuple[int, int, int]] = []

        def emit(ax, ay, bx, by, cx, cy):
            mx, my = (ax + bx) // 2, (ay + by) // 2
            has_midpoint = (ax + bx) % 2 == 0 and (ay + by) % 2 == 0
            if has_midpoint and self.errors[my, mx] > max_error:
                emit(cx, cy, ax, ay, mx, my)
                emit(bx, by, cx, cy, mx, my)
            else:
                i0 = ay * size + ax
                i1 = by * size + bx
                i2 = cy * size + cx
                # normalize winding to CCW in grid coordinates
                if (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) < 0:
                    i0, i1 = i1, i0
                out.append((i0, i1, i2))

        emit(0, last, last, 0, 0, 0)
        emit(last, 0, 0, last, last, last)
        return np.array(out, dtype=np.int64)


def tessellate(grid: ElevationGrid, max_error: float) -> TerrainMesh:
    """RTIN mesh of a (2^k + 1)^2 grid with a per-sample vertical error bound."""
    rtin = _Rtin(grid.values)
    tri_grid = rtin.triangles(max_error)
    size = grid.values.shape[0]
    used = np.unique(tri_grid)
    remap = np.full(size * size, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    rows, cols = used // size, used % size
    verts = np.column_stack(
        [
            grid.origin.lon + cols * grid.dlon,
            grid.origin.lat - rows * grid.dlat,
            grid.values[rows, cols],
        ]
    )
    return TerrainMesh(vertices=verts, triangles=remap[tri_grid], max_error=max_error)


def pad_to_rtin_size(grid: ElevationGrid) -> ElevationGrid:
    """Edge-replicate a grid up to the next (2^k + 1) square."""
    side = max(grid.height, grid.width)
    k = max(1, math.ceil(math.log2(max(2, side - 1))))
    target = (1 << k) + 1
    if grid.height == target and grid.width == target:
        return grid
    v = np.pad(
        grid.values,
        ((0, target - grid.height), (0, target - grid.width)),
        mode="edge",
    )
    return ElevationGrid(v, grid.origin, grid.resolution_m, grid.priority, grid.name)
