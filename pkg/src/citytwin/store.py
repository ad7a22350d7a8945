"""In-memory knowledge base with an append-only journal.

Holds geolocated features (two-level category taxonomy), IoT observations
(shadow-stored time series), the road graph, latest traffic densities, and
heatmap descriptors.  Everything is queryable by bounding box; spatial
lookups go through zoom-18 tile buckets so storage shares the serving
tiling's vocabulary, with a linear-scan fallback for huge boxes (results are
always exact either way).

Journal format (documented, versioned): NDJSON, first line
``{"journal": "citytwin", "version": 1}``, then one ``{"op": ..., ...}``
record per mutation.  Replaying the journal rebuilds the store.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .geo import GeoBBox, GeoPoint, polygon_centroid
from .tiles import BUILDING_ZOOM, TileId, bbox_tile_span, tile_for_point, tiles_for_bbox

logger = logging.getLogger(__name__)

JOURNAL_VERSION = 1
_INDEX_ZOOM = BUILDING_ZOOM
_MAX_BUCKET_SPAN = 4096


class StoreError(ValueError):
    pass


class NotFoundError(StoreError):
    pass


def parse_rfc3339(text: str) -> datetime:
    """RFC3339 parser tolerant of the trailing Z (py3.10 fromisoformat isn't)."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        # keep all six digits: stdlib fromisoformat only accepts 3 or 6
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Feature:
    """A geolocated service/POI/device/entity."""

    id: str
    category: str  # two-level path like "TransferService/BusStop"
    geometry: dict  # GeoJSON geometry (Point | LineString | Polygon)
    attributes: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self) -> None:
        if not self.category:
            raise StoreError(f"feature {self.id}: empty category")
        _validate_geometry(self.geometry)

    def anchor(self) -> GeoPoint:
        g = self.geometry
        if g["type"] == "Point":
            return GeoPoint(*g["coordinates"][:2])
        if g["type"] == "LineString":
            xs = [c[0] for c in g["coordinates"]]
            ys = [c[1] for c in g["coordinates"]]
            return GeoPoint(sum(xs) / len(xs), sum(ys) / len(ys))
        cx, cy = polygon_centroid([(c[0], c[1]) for c in g["coordinates"][0]])
        return GeoPoint(cx, cy)

    def vertices(self) -> list[tuple[float, float]]:
        g = self.geometry
        if g["type"] == "Point":
            return [tuple(g["coordinates"][:2])]
        if g["type"] == "LineString":
            return [tuple(c[:2]) for c in g["coordinates"]]
        return [tuple(c[:2]) for ring in g["coordinates"] for c in ring]


def _validate_geometry(g: dict) -> None:
    if not isinstance(g, dict) or "type" not in g or "coordinates" not in g:
        raise StoreError(f"malformed geometry: {g!r}")
    kind = g["type"]
    coords = g["coordinates"]
    try:
        if kind == "Point":
            lon, lat = float(coords[0]), float(coords[1])
            pts = [(lon, lat)]
        elif kind == "LineString":
            pts = [(float(c[0]), float(c[1])) for c in coords]
            if len(pts) < 2:
                raise StoreError("LineString needs >= 2 vertices")
        elif kind == "Polygon":
            pts = [(float(c[0]), float(c[1])) for ring in coords for c in ring]
            if len(pts) < 3:
                raise StoreError("Polygon needs >= 3 vertices")
        else:
            raise StoreError(f"unsupported geometry type {kind!r}")
    except (TypeError, ValueError, IndexError) as exc:
        raise StoreError(f"malformed {kind} coordinates") from exc
    for lon, lat in pts:
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise StoreError("non-finite coordinate")


@dataclass(frozen=True)
class Observation:
    device_id: str
    metric: str
    value: float
    unit: str
    timestamp: datetime

    def to_json(self) -> dict:
        return {
            "device": self.device_id,
            "metric": self.metric,
            "value": self.value,
            "unit": self.unit,
            "timestamp": format_rfc3339(self.timestamp),
        }


@dataclass(frozen=True)
class RoadElement:
    id: str
    from_node: str
    to_node: str
    geometry: tuple[tuple[float, float], ...]
    length_m: float
    maxspeed_kmh: float
    name: str = ""
    lanes: int = 1
    attributes: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self) -> None:
        if self.length_m <= 0:
            raise StoreError(f"road element {self.id}: non-positive length")
        if self.maxspeed_kmh <= 0:
            raise StoreError(f"road element {self.id}: non-positive maxspeed")
        if len(self.geometry) < 2:
            raise StoreError(f"road element {self.id}: needs >= 2 polyline points")


@dataclass(frozen=True)
class Restriction:
    element_ids: tuple[str, ...]
    kind: str = "no_transit"
    active: bool = True
    attributes: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass
class RoadGraph:
    nodes: dict[str, GeoPoint] = field(default_factory=dict)
    elements: dict[str, RoadElement] = field(default_factory=dict)
    restrictions: list[Restriction] = field(default_factory=list)

    def add_node(self, node_id: str, p: GeoPoint) -> None:
        self.nodes[node_id] = p

    def add_element(self, el: RoadElement) -> None:
        if el.from_node not in self.nodes or el.to_node not in self.nodes:
            raise StoreError(f"road element {el.id}: dangling node reference")
        self.elements[el.id] = el

    def out_edges(self) -> dict[str, list[RoadElement]]:
        out: dict[str, list[RoadElement]] = {}
        for el in self.elements.values():
            out.setdefault(el.from_node, []).append(el)
        for lst in out.values():
            lst.sort(key=lambda e: e.id)
        return out


@dataclass(frozen=True)
class TrafficSegment:
    element_id: str
    density: float
    timestamp: datetime

    def __post_init__(self) -> None:
        if not (0.0 <= self.density <= 1.0):
            raise StoreError(f"traffic density out of [0,1]: {self.density}")


@dataclass(frozen=True)
class HeatmapDescriptor:
    name: str
    colormap: dict  # serialized stops/mode, see compositing.Colormap
    animated: bool = False
    frame_count: int = 1
    frame_delay_cs: int = 50
    bbox: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise StoreError(f"heatmap {self.name}: frame_count must be >= 1")
        if self.animated and self.frame_count < 2:
            raise StoreError(f"heatmap {self.name}: animated needs >= 2 frames")


DEFAULT_ARROW_PERIOD = (1.0, 10.0)


def arrow_period(
    density: float, p_min: float = DEFAULT_ARROW_PERIOD[0], p_max: float = DEFAULT_ARROW_PERIOD[1]
) -> float:
    """Seconds per segment traversal for the animated traffic arrows.

    Free flow (density 0) animates fastest; congestion slows the arrows
    linearly up to p_max.  Out-of-range densities are clamped with a warning.
    """
    if not (0.0 <= density <= 1.0):
        logger.warning("arrow_period: clamping out-of-range density %s", density)
        density = min(1.0, max(0.0, density))
    return p_min + density * (p_max - p_min)


class FeatureStore:
    """Concurrent-read store; one logical writer; journal-backed."""

    def __init__(self, journal_path: str | Path | None = None):
        self._lock = threading.RLock()
        self._features: dict[str, Feature] = {}
        self._buckets: dict[TileId, set[str]] = {}
        self._series: dict[tuple[str, str], dict[str, Observation]] = {}
        self.roads = RoadGraph()
        self._traffic: dict[str, TrafficSegment] = {}
        self._heatmaps: dict[str, HeatmapDescriptor] = {}
        self._journal_path = Path(journal_path) if journal_path else None
        self._journal_file = None
        if self._journal_path is not None:
            if self._journal_path.exists():
                self._replay()
            self._journal_file = open(self._journal_path, "a", encoding="utf-8")
            if self._journal_path.stat().st_size == 0:
                self._write_journal({"journal": "citytwin", "version": JOURNAL_VERSION})

    # -- journal -----------------------------------------------------------

    def _write_journal(self, record: dict) -> None:
        if self._journal_file is not None:
            self._journal_file.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
            self._journal_file.flush()

    def _replay(self) -> None:
        with open(self._journal_path, encoding="utf-8") as fh:
            header = fh.readline()
            if header.strip():
                head = json.loads(header)
                if head.get("journal") != "citytwin" or head.get("version") != JOURNAL_VERSION:
                    raise StoreError(f"unsupported journal header: {header.strip()}")
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._apply(rec, journal=False)

    def close(self) -> None:
        if self._journal_file is not None:
            self._journal_file.close()
            self._journal_file = None

    def _apply(self, rec: dict, journal: bool = True) -> None:
        op = rec["op"]
        if op == "feature":
            self.upsert_feature(
                Feature(
                    id=rec["id"],
                    category=rec["category"],
                    geometry=rec["geometry"],
                    attributes=rec.get("attributes", {}),
                ),
                _journal=journal,
            )
        elif op == "observation":
            self.ingest_observation(
                Observation(
                    device_id=rec["device"],
                    metric=rec["metric"],
                    value=float(rec["value"]),
                    unit=rec.get("unit", ""),
                    timestamp=parse_rfc3339(rec["timestamp"]),
                ),
                _journal=journal,
            )
        elif op == "road_node":
            self.add_road_node(rec["id"], GeoPoint(rec["lon"], rec["lat"]), _journal=journal)
        elif op == "road_element":
            self.add_road_element(
                RoadElement(
                    id=rec["id"],
                    from_node=rec["from"],
                    to_node=rec["to"],
                    geometry=tuple((c[0], c[1]) for c in rec["geometry"]),
                    length_m=float(rec["length_m"]),
                    maxspeed_kmh=float(rec["maxspeed_kmh"]),
                    name=rec.get("name", ""),
                    lanes=int(rec.get("lanes", 1)),
                    attributes=rec.get("attributes", {}),
                ),
                _journal=journal,
            )
        elif op == "restriction":
            self.add_restriction(
                Restriction(
                    element_ids=tuple(rec["elements"]),
                    kind=rec.get("kind", "no_transit"),
                    active=bool(rec.get("active", True)),
                    attributes=rec.get("attributes", {}),
                ),
                _journal=journal,
            )
        elif op == "traffic":
            self.ingest_traffic(
                TrafficSegment(
                    element_id=rec["element"],
                    density=float(rec["density"]),
                    timestamp=parse_rfc3339(rec["timestamp"]),
                ),
                _journal=journal,
            )
        elif op == "heatmap":
            self.register_heatmap(
                HeatmapDescriptor(
                    name=rec["name"],
                    colormap=rec["colormap"],
                    animated=bool(rec.get("animated", False)),
                    frame_count=int(rec.get("frame_count", 1)),
                    frame_delay_cs=int(rec.get("frame_delay_cs", 50)),
                    bbox=tuple(rec.get("bbox", (0, 0, 0, 0))),
                ),
                _journal=journal,
            )
        else:
            raise StoreError(f"unknown journal op {op!r}")

    # -- features ------------------------------------------------------------

    def upsert_feature(self, f: Feature, _journal: bool = True) -> None:
        with self._lock:
            old = self._features.get(f.id)
            if old is not None:
                for t in self._tiles_of(old):
                    self._buckets.get(t, set()).discard(f.id)
            self._features[f.id] = f
            for t in self._tiles_of(f):
                self._buckets.setdefault(t, set()).add(f.id)
            if _journal:
                self._write_journal(
                    {
                        "op": "feature",
                        "id": f.id,
                        "category": f.category,
                        "geometry": f.geometry,
                        "attributes": f.attributes,
                    }
                )

    @staticmethod
    def _tiles_of(f: Feature) -> set[TileId]:
        return {tile_for_point(GeoPoint(x, y), _INDEX_ZOOM) for x, y in f.vertices()}

    def get_feature(self, feature_id: str) -> Feature:
        with self._lock:
            f = self._features.get(feature_id)
        if f is None:
            raise NotFoundError(f"feature {feature_id!r} not found")
        return f

    def all_features(self) -> list[Feature]:
        with self._lock:
            return sorted(self._features.values(), key=lambda f: f.id)

    def query_bbox(
        self,
        bbox: GeoBBox,
        categories: Sequence[str] | None = None,
        limit: int | None = None,
    ) -> list[Feature]:
        """Exactly the features with a vertex (or point anchor) inside bbox."""
        with self._lock:
            if bbox_tile_span(bbox, _INDEX_ZOOM) > _MAX_BUCKET_SPAN:
                candidates = list(self._features.values())
            else:
                ids: set[str] = set()
                for t in tiles_for_bbox(bbox, _INDEX_ZOOM):
                    ids |= self._buckets.get(t, set())
                candidates = [self._features[i] for i in ids]
            out = []
            for f in candidates:
                if categories and not any(
                    f.category == c or f.category.startswith(c + "/") for c in categories
                ):
                    continue
                if any(bbox.contains_xy(x, y) for x, y in f.vertices()):
                    out.append(f)
            out.sort(key=lambda f: f.id)
            if limit is not None:
                out = out[: max(0, limit)]
            return out

    # -- observations -----------------------------------------------------------

    def ingest_observation(self, o: Observation, _journal: bool = True) -> None:
        with self._lock:
            if o.device_id not in self._features:
                raise NotFoundError(f"unknown device {o.device_id!r}")
            key = (o.device_id, o.metric)
            ts = format_rfc3339(o.timestamp)
            self._series.setdefault(key, {})[ts] = o
            if _journal:
                self._write_journal({"op": "observation", **o.to_json()})

    def time_series(
        self,
        device_id: str,
        metric: str,
        t_from: datetime | None = None,
        t_to: datetime | None = None,
    ) -> list[Observation]:
        with self._lock:
            if device_id not in self._features:
                raise NotFoundError(f"unknown device {device_id!r}")
            series = list(self._series.get((device_id, metric), {}).values())
        series.sort(key=lambda o: o.timestamp)
        if t_from is not None:
            series = [o for o in series if o.timestamp >= t_from]
        if t_to is not None:
            series = [o for o in series if o.timestamp <= t_to]
        return series

    def last_value(self, device_id: str, metric: str) -> Observation:
        series = self.time_series(device_id, metric)
        if not series:
            raise NotFoundError(f"no observations for {device_id!r}/{metric!r}")
        return series[-1]

    # -- roads --------------------------------------------------------------------

    def add_road_node(self, node_id: str, p: GeoPoint, _journal: bool = True) -> None:
        with self._lock:
            self.roads.add_node(node_id, p)
            if _journal:
                self._write_journal({"op": "road_node", "id": node_id, "lon": p.lon, "lat": p.lat})

    def add_road_element(self, el: RoadElement, _journal: bool = True) -> None:
        with self._lock:
            self.roads.add_element(el)
            if _journal:
                self._write_journal(
                    {
                        "op": "road_element",
                        "id": el.id,
                        "from": el.from_node,
                        "to": el.to_node,
                        "geometry": [list(c) for c in el.geometry],
                        "length_m": el.length_m,
                        "maxspeed_kmh": el.maxspeed_kmh,
                        "name": el.name,
                        "lanes": el.lanes,
                        "attributes": el.attributes,
                    }
                )

    def add_restriction(self, r: Restriction, _journal: bool = True) -> None:
        with self._lock:
            self.roads.restrictions.append(r)
            if _journal:
                self._write_journal(
                    {
                        "op": "restriction",
                        "elements": list(r.element_ids),
                        "kind": r.kind,
                        "active": r.active,
                        "attributes": r.attributes,
                    }
                )

    # -- traffic ---------------------------------------------------------------------

    def ingest_traffic(self, seg: TrafficSegment, _journal: bool = True) -> None:
        with self._lock:
            if seg.element_id not in self.roads.elements:
                raise NotFoundError(f"unknown road element {seg.element_id!r}")
            cur = self._traffic.get(seg.element_id)
            if cur is None or seg.timestamp >= cur.timestamp:
                self._traffic[seg.element_id] = seg
            if _journal:
                self._write_journal(
                    {
                        "op": "traffic",
                        "element": seg.element_id,
                        "density": seg.density,
                        "timestamp": format_rfc3339(seg.timestamp),
                    }
                )

    def traffic_in_bbox(self, bbox: GeoBBox) -> list[tuple[TrafficSegment, RoadElement]]:
        """Latest density per road element intersecting the bbox."""
        with self._lock:
            out = []
            for seg in self._traffic.values():
                el = self.roads.elements[seg.element_id]
                if any(bbox.contains_xy(x, y) for x, y in el.geometry):
                    out.append((seg, el))
            out.sort(key=lambda pair: pair[0].element_id)
            return out

    # -- heatmaps ---------------------------------------------------------------------

    def register_heatmap(self, desc: HeatmapDescriptor, _journal: bool = True) -> None:
        with self._lock:
            self._heatmaps[desc.name] = desc
            if _journal:
                self._write_journal(
                    {
                        "op": "heatmap",
                        "name": desc.name,
                        "colormap": desc.colormap,
                        "animated": desc.animated,
                        "frame_count": desc.frame_count,
                        "frame_delay_cs": desc.frame_delay_cs,
                        "bbox": list(desc.bbox),
                    }
                )

    def get_heatmap(self, name: str) -> HeatmapDescriptor:
        with self._lock:
            desc = self._heatmaps.get(name)
        if desc is None:
            raise NotFoundError(f"heatmap {name!r} not found")
        return desc

    def heatmaps(self) -> list[HeatmapDescriptor]:
        with self._lock:
            return sorted(self._heatmaps.values(), key=lambda d: d.name)


def parse_observation_line(line: str) -> Observation:
    """One NDJSON observation: {device, metric, value, unit, timestamp}."""
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StoreError(f"bad JSON: {exc}") from exc
    try:
        return Observation(
            device_id=str(rec["device"]),
            metric=str(rec["metric"]),
            value=float(rec["value"]),
            unit=str(rec.get("unit", "")),
            timestamp=parse_rfc3339(str(rec["timestamp"])),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise StoreError(f"bad observation record: {exc}") from exc
