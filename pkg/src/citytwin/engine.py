"""Runtime engine over a built data directory.

Layout produced by ``citytwin ingest`` + ``citytwin build``:

    data/
      journal.ndjson                  feature-store journal (features,
                                      observations, roads, traffic, heatmaps)
      meta.json                       raster registry and dataset options
      grids/<name>.e32                terrain / heatmap rasters
      buildings/18/{x}/{y}/<id>.json  per-building entry in its tile folder
      buildings/18/{x}/{y}/<id>.<variant>.glb   mesh blobs

The engine loads all of it into memory and exposes the store, the terrain
stack, heatmap frames, the building tileset, the model registry, and the
what-if router.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .buildings import ModelRegistry
from .compositing import Colormap
from .store import FeatureStore, HeatmapDescriptor
from .terrain import ElevationGrid, TerrainStack, read_binary_grid
from .tiles import BUILDING_ZOOM, TileId
from .whatif import WhatIfRouter

META_VERSION = 1
_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


class EngineError(RuntimeError):
    pass


def safe_id(value: str) -> str:
    if not _SAFE_ID.match(value):
        raise EngineError(f"unsafe identifier {value!r}")
    return value


@dataclass
class BuildingEntry:
    """One building as stored in its tile folder."""

    id: str
    anchor: tuple[float, float]
    ground_elevation: float
    height: float
    variants: list[str]
    attributes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "anchor": list(self.anchor),
            "ground_elevation": self.ground_elevation,
            "height": self.height,
            "variants": self.variants,
            "attributes": self.attributes,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "BuildingEntry":
        return cls(
            id=doc["id"],
            anchor=(doc["anchor"][0], doc["anchor"][1]),
            ground_elevation=doc["ground_elevation"],
            height=doc["height"],
            variants=list(doc["variants"]),
            attributes=doc.get("attributes", {}),
        )


def colormap_from_json(doc: dict) -> Colormap:
    stops = tuple((float(v), tuple(float(c) for c in rgba)) for v, rgba in doc["stops"])
    return Colormap(stops=stops, mode=doc.get("mode", "linear"))


def colormap_to_json(cm: Colormap) -> dict:
    return {"stops": [[v, list(rgba)] for v, rgba in cm.stops], "mode": cm.mode}


class TwinEngine:
    """Everything the HTTP surface serves, loaded from one data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        if not self.data_dir.is_dir():
            raise EngineError(f"data directory {self.data_dir} does not exist")
        meta_path = self.data_dir / "meta.json"
        if not meta_path.exists():
            raise EngineError(f"{meta_path} missing; run `citytwin ingest` first")
        self.meta = json.loads(meta_path.read_text())
        if self.meta.get("version") != META_VERSION:
            raise EngineError(f"unsupported data directory version {self.meta.get('version')}")

        self.store = FeatureStore(self.data_dir / "journal.ndjson")

        self.dtm = TerrainStack()
        self.dsm = TerrainStack()
        self.heatmap_frames: dict[str, list[ElevationGrid]] = {}
        for entry in self.meta.get("grids", []):
            grid = read_binary_grid(
                (self.data_dir / entry["path"]).read_bytes(),
                priority=int(entry.get("priority", 0)),
                name=entry.get("name", ""),
            )
            kind = entry["kind"]
            if kind == "dtm":
                self.dtm.add(grid)
            elif kind == "dsm":
                self.dsm.add(grid)
            elif kind == "heatmap":
                self.heatmap_frames.setdefault(entry["heatmap"], []).append(grid)
            else:
                raise EngineError(f"unknown grid kind {kind!r}")

        self.tiles: dict[TileId, list[BuildingEntry]] = {}
        self.registry = ModelRegistry()
        self.blobs: dict[str, Path] = {}
        self._load_buildings()

        self.router = WhatIfRouter(self.store.roads)

    # -- buildings ----------------------------------------------------------

    def _load_buildings(self) -> None:
        root = self.data_dir / "buildings" / str(BUILDING_ZOOM)
        if not root.is_dir():
            return
        for tile_dir in sorted(root.glob("*/*")):
            if not tile_dir.is_dir():
                continue
            x, y = int(tile_dir.parent.name), int(tile_dir.name)
            tile = TileId(BUILDING_ZOOM, x, y)
            entries = []
            for doc_path in sorted(tile_dir.glob("*.json")):
                entry = BuildingEntry.from_json(json.loads(doc_path.read_text()))
                entries.append(entry)
                self.registry.add_building(entry.id)
                for blob_path in sorted(tile_dir.glob(f"{entry.id}.*.glb")):
                    variant = blob_path.name[len(entry.id) + 1 : -4]
                    self.blobs[f"{entry.id}.{variant}"] = blob_path
                    if variant != ModelRegistry.DEFAULT_VARIANT:
                        self.registry.register_variant(entry.id, variant, b"")
            entries.sort(key=lambda e: e.id)
            if entries:
                self.tiles[tile] = entries

    def buildings_for_tile(self, tile: TileId) -> list[BuildingEntry]:
        """Canonical zoom answers directly; other zooms are derived views."""
        if tile.z == BUILDING_ZOOM:
            return self.tiles.get(tile, [])
        if tile.z < BUILDING_ZOOM:
            if BUILDING_ZOOM - tile.z > 6:
                raise EngineError("zoom gap too large for server-side aggregation")
            shift = BUILDING_ZOOM - tile.z
            out: list[BuildingEntry] = []
            for cached_tile, entries in self.tiles.items():
                if (cached_tile.x >> shift, cached_tile.y >> shift) == (tile.x, tile.y):
                    out.extend(entries)
            return sorted(out, key=lambda e: e.id)
        from .geo import GeoPoint
        from .tiles import tile_for_point

        shift = tile.z - BUILDING_ZOOM
        parent_tile = TileId(BUILDING_ZOOM, tile.x >> shift, tile.y >> shift)
        return [
            e
            for e in self.tiles.get(parent_tile, [])
            if tile_for_point(GeoPoint(*e.anchor), tile.z) == tile
        ]

    def blob_path(self, blob_id: str) -> Path:
        p = self.blobs.get(blob_id)
        if p is None:
            raise KeyError(blob_id)
        return p

    def register_variant_blob(self, building_id: str, variant_id: str, blob: bytes) -> str:
        """Store an uploaded variant next to the building's tile entry."""
        safe_id(building_id)
        safe_id(variant_id)
        self.registry.register_variant(building_id, variant_id, blob)
        for tile, entries in self.tiles.items():
            for e in entries:
                if e.id == building_id:
                    tile_dir = (
                        self.data_dir / "buildings" / str(BUILDING_ZOOM) / str(tile.x) / str(tile.y)
                    )
                    path = tile_dir / f"{building_id}.{variant_id}.glb"
                    path.write_bytes(blob)
                    blob_id = f"{building_id}.{variant_id}"
                    self.blobs[blob_id] = path
                    if variant_id not in e.variants:
                        e.variants.append(variant_id)
                        e.variants.sort()
                        (tile_dir / f"{building_id}.json").write_text(
                            json.dumps(e.to_json(), sort_keys=True, separators=(",", ":")) + "\n"
                        )
                    return blob_id
        raise KeyError(building_id)

    # -- heatmaps ------------------------------------------------------------

    def heatmap_colormap(self, name: str) -> Colormap:
        desc: HeatmapDescriptor = self.store.get_heatmap(name)
        return colormap_from_json(desc.colormap)

    def heatmap_frame(self, name: str, index: int) -> ElevationGrid:
        frames = self.heatmap_frames.get(name)
        if not frames:
            raise KeyError(name)
        if not (0 <= index < len(frames)):
            raise IndexError(index)
        return frames[index]

    def close(self) -> None:
        self.store.close()
