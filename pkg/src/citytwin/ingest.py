"""File-based ingestion and tileset building (the operator pipeline).

A YAML manifest lists dataset entries; each is validated, converted
(EPSG:3003 vector sources are reprojected to WGS84 at this boundary, and
nowhere else), and journaled into the store or copied into the data
directory as a binary grid.  ``build`` then extrudes the ingested footprints
and lays the models out in the zoom-18 Z/X/Y folder tree.

Per-record failures are skipped with a machine-readable reason and never
abort the batch; unreadable files abort their own file only.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .buildings import Footprint, build_tileset
from .crs import epsg3003_to_wgs84
from .engine import META_VERSION, colormap_from_json
from .geo import GeoPoint, equirect_distance_m
from .gltf import mesh_to_glb
from .store import (
    Feature,
    FeatureStore,
    HeatmapDescriptor,
    RoadElement,
    StoreError,
    TrafficSegment,
    parse_rfc3339,
)
from .terrain import (
    ElevationGrid,
    TerrainStack,
    read_ascii_grid,
    read_binary_grid,
    write_binary_grid,
)
from .tiles import BUILDING_ZOOM

logger = logging.getLogger(__name__)

KNOWN_KINDS = {
    "footprints",
    "dtm",
    "dsm",
    "features",
    "roads",
    "heatmap",
    "traffic",
    "entity-catalog",
    "entity-instances",
}

FOOTPRINT_CATEGORY = "Building/Footprint"
ENTITY_CATEGORY = "Entity"


class IngestError(RuntimeError):
    pass


@dataclass
class FileReport:
    kind: str
    path: str
    accepted: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)
    error: str | None = None


@dataclass
class IngestReport:
    files: list[FileReport] = field(default_factory=list)

    @property
    def total_accepted(self) -> int:
        return sum(f.accepted for f in self.files)

    @property
    def total_skipped(self) -> int:
        return sum(len(f.skipped) for f in self.files)

    @property
    def fatal(self) -> bool:
        return any(f.error for f in self.files)

    def exit_code(self) -> int:
        if self.fatal:
            return 2
        return 1 if self.total_skipped else 0

    def summary(self) -> str:
        lines = []
        for f in self.files:
            if f.error:
                lines.append(f"[fatal] {f.kind} {f.path}: {f.error}")
                continue
            lines.append(f"[ok] {f.kind} {f.path}: {f.accepted} accepted, {len(f.skipped)} skipped")
            for rec_id, reason in f.skipped:
                lines.append(f"    skipped {rec_id}: {reason}")
        return "\n".join(lines)


def load_manifest(path: str | Path) -> list[dict]:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or "datasets" not in doc:
        raise IngestError("manifest must be a mapping with a 'datasets' list")
    datasets = doc["datasets"]
    if not isinstance(datasets, list):
        raise IngestError("'datasets' must be a list")
    for entry in datasets:
        kind = entry.get("kind")
        if kind not in KNOWN_KINDS:
            raise IngestError(f"unknown dataset kind {kind!r} (allowed: {sorted(KNOWN_KINDS)})")
    return datasets


def _convert_coords(coords, crs: str):
    """Recursively convert [x, y] pairs from the source CRS to WGS84."""
    if crs in ("EPSG:4326", "", None):
        return coords
    if crs != "EPSG:3003":
        raise IngestError(f"unsupported source crs {crs!r}")
    if isinstance(coords[0], (int, float)):
        lon, lat = epsg3003_to_wgs84(float(coords[0]), float(coords[1]))
        return [lon, lat]
    return [_convert_coords(c, crs) for c in coords]


def _load_geojson(path: Path, crs: str) -> list[dict]:
    doc = json.loads(path.read_text())
    if doc.get("type") != "FeatureCollection":
        raise IngestError(f"{path}: expected a GeoJSON FeatureCollection")
    feats = doc.get("features", [])
    if crs not in ("EPSG:4326", "", None):
        for f in feats:
            geom = f.get("geometry") or {}
            if "coordinates" in geom:
                geom["coordinates"] = _convert_coords(geom["coordinates"], crs)
    return feats


class Ingestor:
    """Runs one manifest against a data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "grids").mkdir(exist_ok=True)
        (self.data_dir / "entities").mkdir(exist_ok=True)
        self.store = FeatureStore(self.data_dir / "journal.ndjson")
        meta_path = self.data_dir / "meta.json"
        if meta_path.exists():
            self.meta = json.loads(meta_path.read_text())
        else:
            self.meta = {"version": META_VERSION, "grids": []}
        self._dtm_cache: TerrainStack | None = None

    def close(self) -> None:
        self._write_meta()
        self.store.close()

    def _write_meta(self) -> None:
        (self.data_dir / "meta.json").write_text(
            json.dumps(self.meta, sort_keys=True, separators=(",", ":")) + "\n"
        )

    def _register_grid(self, name: str, kind: str, grid: ElevationGrid, heatmap: str | None = None) -> None:
        rel = f"grids/{name}.e32"
        (self.data_dir / rel).write_bytes(write_binary_grid(grid))
        entry = {"path": rel, "kind": kind, "priority": grid.priority, "name": name}
        if heatmap:
            entry["heatmap"] = heatmap
        self.meta["grids"] = [e for e in self.meta["grids"] if e["path"] != rel] + [entry]
        self.meta["grids"].sort(key=lambda e: e["path"])

    def _dtm_stack(self) -> TerrainStack:
        stack = TerrainStack()
        for entry in self.meta["grids"]:
            if entry["kind"] == "dtm":
                grid = read_binary_grid(
                    (self.data_dir / entry["path"]).read_bytes(),
                    priority=entry.get("priority", 0),
                    name=entry.get("name", ""),
                )
                stack.add(grid)
        return stack

    # -- dataset handlers -----------------------------------------------------

    def ingest(self, manifest_path: str | Path) -> IngestReport:
        datasets = load_manifest(manifest_path)
        base = Path(manifest_path).parent
        report = IngestReport()
        for entry in datasets:
            kind = entry["kind"]
            handler = getattr(self, "_ingest_" + kind.replace("-", "_"))
            path = entry.get("path", entry.get("frames", ""))
            file_report = FileReport(kind=kind, path=str(path))
            try:
                handler(entry, base, file_report)
            except Exception as exc:  # noqa: BLE001 - per-file isolation is the contract
                logger.error("ingest %s %s failed: %s", kind, path, exc)
                file_report.error = str(exc)
            report.files.append(file_report)
        self._write_meta()
        return report

    def _ingest_footprints(self, entry: dict, base: Path, rep: FileReport) -> None:
        crs = entry.get("crs", "EPSG:4326")
        for feat in _load_geojson(base / entry["path"], crs):
            props = feat.get("properties") or {}
            fid = str(props.get("id") or feat.get("id") or "")
            geom = feat.get("geometry") or {}
            if not fid:
                rep.skipped.append(("<missing id>", "footprint without id"))
                continue
            polys: list[list] = []
            if geom.get("type") == "Polygon":
                polys = [geom["coordinates"]]
            elif geom.get("type") == "MultiPolygon":
                polys = list(geom["coordinates"])
            else:
                rep.skipped.append((fid, f"unsupported geometry {geom.get('type')!r}"))
                continue
            for part_idx, rings in enumerate(polys):
                part_id = fid if len(polys) == 1 else f"{fid}#{part_idx}"
                try:
                    height = props.get("height")
                    attrs = {
                        k: v for k, v in props.items() if k not in ("id", "height", "name")
                    }
                    if height is not None:
                        attrs["height"] = float(height)
                    if props.get("name"):
                        attrs["name"] = props["name"]
                    attrs["rings"] = rings  # outer + holes, WGS84
                    self.store.upsert_feature(
                        Feature(
                            id=part_id,
                            category=FOOTPRINT_CATEGORY,
                            geometry={"type": "Polygon", "coordinates": rings},
                            attributes=attrs,
                        )
                    )
                    rep.accepted += 1
                except StoreError as exc:
                    rep.skipped.append((part_id, str(exc)))

    def _ingest_features(self, entry: dict, base: Path, rep: FileReport) -> None:
        crs = entry.get("crs", "EPSG:4326")
        default_category = entry.get("taxonomy", "Service/Generic")
        for feat in _load_geojson(base / entry["path"], crs):
            props = dict(feat.get("properties") or {})
            fid = str(props.pop("id", None) or feat.get("id") or "")
            if not fid:
                rep.skipped.append(("<missing id>", "feature without id"))
                continue
            category = str(props.pop("category", default_category))
            try:
                self.store.upsert_feature(
                    Feature(
                        id=fid,
                        category=category,
                        geometry=feat.get("geometry") or {},
                        attributes=props,
                    )
                )
                rep.accepted += 1
            except StoreError as exc:
                rep.skipped.append((fid, str(exc)))

    def _ingest_roads(self, entry: dict, base: Path, rep: FileReport) -> None:
        crs = entry.get("crs", "EPSG:4326")

        def node_key(c) -> str:
            return f"n{c[0]:.7f},{c[1]:.7f}"

        for feat in _load_geojson(base / entry["path"], crs):
            props = feat.get("properties") or {}
            fid = str(props.get("id") or feat.get("id") or "")
            geom = feat.get("geometry") or {}
            if geom.get("type") != "LineString" or not fid:
                rep.skipped.append((fid or "<missing id>", "roads need LineString + id"))
                continue
            coords = [(float(c[0]), float(c[1])) for c in geom["coordinates"]]
            if len(coords) < 2:
                rep.skipped.append((fid, "degenerate polyline"))
                continue
            frm = str(props.get("from") or node_key(coords[0]))
            to = str(props.get("to") or node_key(coords[-1]))
            length = float(props.get("length_m") or 0.0)
            if length <= 0:
                length = sum(
                    equirect_distance_m(GeoPoint(*coords[i]), GeoPoint(*coords[i + 1]))
                    for i in range(len(coords) - 1)
                )
            maxspeed = float(props.get("maxspeed", 50.0))
            lanes = int(props.get("lanes", 1))
            name = str(props.get("name", ""))
            oneway = bool(props.get("oneway", False))
            attrs = {
                k: v
                for k, v in props.items()
                if k not in ("id", "from", "to", "maxspeed", "lanes", "name", "oneway", "length_m")
            }
            try:
                self.store.add_road_node(frm, GeoPoint(*coords[0]))
                self.store.add_road_node(to, GeoPoint(*coords[-1]))
                self.store.add_road_element(
                    RoadElement(
                        id=fid,
                        from_node=frm,
                        to_node=to,
                        geometry=tuple(coords),
                        length_m=length,
                        maxspeed_kmh=maxspeed,
                        name=name,
                        lanes=lanes,
                        attributes=attrs,
                    )
                )
                rep.accepted += 1
                if not oneway:
                    self.store.add_road_element(
                        RoadElement(
                            id=fid + ":r",
                            from_node=to,
                            to_node=frm,
                            geometry=tuple(reversed(coords)),
                            length_m=length,
                            maxspeed_kmh=maxspeed,
                            name=name,
                            lanes=lanes,
                            attributes=attrs,
                        )
                    )
                    rep.accepted += 1
            except StoreError as exc:
                rep.skipped.append((fid, str(exc)))

    def _read_grid_file(self, path: Path, priority: int, name: str) -> ElevationGrid:
        if path.suffix == ".e32":
            return read_binary_grid(path.read_bytes(), priority=priority, name=name)
        return read_ascii_grid(path.read_text(), priority=priority, name=name)

    def _ingest_dtm(self, entry: dict, base: Path, rep: FileReport) -> None:
        name = entry.get("name") or Path(entry["path"]).stem
        grid = self._read_grid_file(base / entry["path"], int(entry.get("priority", 0)), name)
        self._register_grid(name, "dtm", grid)
        rep.accepted += 1

    def _ingest_dsm(self, entry: dict, base: Path, rep: FileReport) -> None:
        name = entry.get("name") or Path(entry["path"]).stem
        grid = self._read_grid_file(base / entry["path"], int(entry.get("priority", 0)), name)
        self._register_grid(name, "dsm", grid)
        rep.accepted += 1

    def _ingest_heatmap(self, entry: dict, base: Path, rep: FileReport) -> None:
        name = entry.get("name")
        if not name:
            raise IngestError("heatmap entry needs a name")
        frames = entry.get("frames") or [entry["path"]]
        colormap_doc = entry.get("colormap")
        if not colormap_doc:
            raise IngestError(f"heatmap {name}: colormap required")
        colormap_from_json(colormap_doc)  # validate
        grids = []
        for i, frame_path in enumerate(frames):
            grid = self._read_grid_file(base / frame_path, 0, f"{name}[{i}]")
            grids.append(grid)
            self._register_grid(f"heatmap_{name}_{i}", "heatmap", grid, heatmap=name)
        bbox = grids[0].bbox()
        self.store.register_heatmap(
            HeatmapDescriptor(
                name=name,
                colormap=colormap_doc,
                animated=bool(entry.get("animated", len(grids) > 1)),
                frame_count=len(grids),
                frame_delay_cs=int(entry.get("frame_delay_cs", 50)),
                bbox=(bbox.min_lon, bbox.min_lat, bbox.max_lon, bbox.max_lat),
            )
        )
        rep.accepted += len(grids)

    def _ingest_traffic(self, entry: dict, base: Path, rep: FileReport) -> None:
        path = base / entry["path"]
        for i, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                self.store.ingest_traffic(
                    TrafficSegment(
                        element_id=str(rec["element"]),
                        density=float(rec["density"]),
                        timestamp=parse_rfc3339(str(rec["timestamp"])),
                    )
                )
                rep.accepted += 1
            except (StoreError, ValueError, KeyError) as exc:
                rep.skipped.append((f"line {i}", str(exc)))

    def _ingest_entity_catalog(self, entry: dict, base: Path, rep: FileReport) -> None:
        src = base / entry["path"]
        paths = sorted(src.glob("*.glb")) if src.is_dir() else [src]
        for p in paths:
            model_id = p.stem
            (self.data_dir / "entities" / f"{model_id}.glb").write_bytes(p.read_bytes())
            rep.accepted += 1

    def _ingest_entity_instances(self, entry: dict, base: Path, rep: FileReport) -> None:
        crs = entry.get("crs", "EPSG:4326")
        dtm = self._dtm_stack()
        for i, feat in enumerate(_load_geojson(base / entry["path"], crs)):
            props = dict(feat.get("properties") or {})
            fid = str(props.pop("id", None) or feat.get("id") or f"entity-{i}")
            geom = feat.get("geometry") or {}
            model = str(props.pop("model", ""))
            if geom.get("type") != "Point" or not model:
                rep.skipped.append((fid, "entity instances need Point geometry and a model"))
                continue
            scale = float(props.pop("scale", 1.0))
            rotation = float(props.pop("rotation", 0.0))
            if scale <= 0:
                rep.skipped.append((fid, f"non-positive scale {scale}"))
                continue
            lon, lat = float(geom["coordinates"][0]), float(geom["coordinates"][1])
            ground = dtm.sample(GeoPoint(lon, lat)) if len(dtm) else float("nan")
            attrs = {
                "model": model,
                "scale": scale,
                "rotation": rotation,
                **props,
            }
            if not math.isnan(ground):
                attrs["ground_elevation"] = round(ground, 3)
            try:
                self.store.upsert_feature(
                    Feature(
                        id=fid,
                        category=f"{ENTITY_CATEGORY}/{model}",
                        geometry=geom,
                        attributes=attrs,
                    )
                )
                rep.accepted += 1
            except StoreError as exc:
                rep.skipped.append((fid, str(exc)))


def build_tiles(data_dir: str | Path) -> tuple[int, list[tuple[str, str]]]:
    """Extrude ingested footprints into the on-disk zoom-18 tile tree.

    Returns (buildings written, skip report).  Rebuilding from unchanged
    inputs produces a byte-identical tree.
    """
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise IngestError(f"data directory {data_dir} does not exist; run `citytwin ingest` first")
    meta_path = data_dir / "meta.json"
    if not meta_path.exists():
        raise IngestError(f"{meta_path} missing; run `citytwin ingest` first")
    store = FeatureStore(data_dir / "journal.ndjson")
    try:
        meta = json.loads(meta_path.read_text())
        dtm = TerrainStack()
        dsm = TerrainStack()
        for entry in meta.get("grids", []):
            grid = read_binary_grid(
                (data_dir / entry["path"]).read_bytes(),
                priority=entry.get("priority", 0),
                name=entry.get("name", ""),
            )
            if entry["kind"] == "dtm":
                dtm.add(grid)
            elif entry["kind"] == "dsm":
                dsm.add(grid)
        footprints = []
        for f in store.all_features():
            if f.category != FOOTPRINT_CATEGORY:
                continue
            rings = f.attributes.get("rings") or f.geometry["coordinates"]
            holes = tuple(tuple((c[0], c[1]) for c in ring) for ring in rings[1:])
            footprints.append(
                Footprint(
                    id=f.id,
                    outer=tuple((c[0], c[1]) for c in rings[0]),
                    holes=holes,
                    name=str(f.attributes.get("name", "")),
                    height_override=(
                        float(f.attributes["height"]) if "height" in f.attributes else None
                    ),
                    attributes={
                        k: v for k, v in f.attributes.items() if k not in ("rings", "height", "name")
                    },
                )
            )
        root = data_dir / "buildings" / str(BUILDING_ZOOM)
        root.mkdir(parents=True, exist_ok=True)
        if not footprints:
            return 0, []
        if len(dtm) == 0:
            raise IngestError("cannot build tiles without an ingested DTM")
        tiles, skipped = build_tileset(footprints, dtm, dsm if len(dsm) else None)

        count = 0
        for tile in sorted(tiles, key=lambda t: (t.x, t.y)):
            tile_dir = root / str(tile.x) / str(tile.y)
            tile_dir.mkdir(parents=True, exist_ok=True)
            for model in tiles[tile]:
                entry_doc = {
                    "id": model.building_id,
                    "anchor": [model.anchor.lon, model.anchor.lat],
                    "ground_elevation": round(model.ground_elevation, 4),
                    "height": round(model.height, 4),
                    "variants": ["lod1"],
                    "attributes": {
                        k: v for k, v in model.attributes.items() if v not in ("", None)
                    },
                }
                (tile_dir / f"{model.building_id}.json").write_text(
                    json.dumps(entry_doc, sort_keys=True, separators=(",", ":")) + "\n"
                )
                (tile_dir / f"{model.building_id}.lod1.glb").write_bytes(
                    mesh_to_glb(model.vertices, model.triangles, name=model.building_id)
                )
                count += 1
        return count, skipped
    finally:
        store.close()
