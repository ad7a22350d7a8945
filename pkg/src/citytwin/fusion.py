"""Client-side tile cache with cross-zoom element reuse.

Already-fetched elements are reused when the view zooms in (top-down fusion:
filter a cached ancestor's elements into each child tile), zooms out
(bottom-up fusion: concatenate cached descendants into the parent), or jumps
several levels at once.  Datasets pinned to a fixed data zoom are served at
other zooms by the deep loader, which splits a view tile into its data-zoom
sub-tiles, resolves as many as possible from cache, and fetches only the
misses concurrently.  Out-of-view tiles are dropped lazily after a delay.
"""

from __future__ import annotations

import concurrent.futures
import json
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .geo import GeoPoint
from .tiles import (
    TileId,
    ViewFrustum,
    ancestor_at,
    descendants_at,
    tile_for_point,
    tiles_in_view,
)

Fetcher = Callable[[str, TileId], list["ElementRecord"]]


class FusionError(Exception):
    pass


class DeepLoadError(FusionError):
    """One or more sub-tile fetches failed; successful tiles stay cached."""

    def __init__(self, failed: list[TileId]):
        super().__init__(f"failed to fetch {len(failed)} sub-tiles: "
                         + ", ".join(str(t) for t in failed))
        self.failed = failed


@dataclass(frozen=True)
class ElementRecord:
    """One geolocated element of a dataset tile."""

    id: str
    anchor: GeoPoint
    payload: str = ""
    kind: str = ""

    def canonical(self) -> bytes:
        return json.dumps(
            {
                "id": self.id,
                "lon": self.anchor.lon,
                "lat": self.anchor.lat,
                "payload": self.payload,
                "kind": self.kind,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode()


def canonical_features(features: Iterable[ElementRecord]) -> bytes:
    """Byte form used by the oracle-equivalence tests."""
    return b"[" + b",".join(f.canonical() for f in features) + b"]"


@dataclass
class CachedTile:
    tile: TileId
    features: list[ElementRecord]
    fetched_at: float
    complete: bool = True
    source: str = "fetched"  # "fetched" | "fused"


@dataclass(frozen=True)
class FusionConfig:
    data_zoom: int = 18
    eviction_delay: float = 30.0
    max_concurrent_fetches: int = 4

    def __post_init__(self) -> None:
        if self.eviction_delay < 0:
            raise FusionError("eviction_delay must be >= 0")
        if self.max_concurrent_fetches < 1:
            raise FusionError("max_concurrent_fetches must be >= 1")


@dataclass
class ViewResult:
    """Per-view-tile features plus the number of origin calls it cost."""

    features_by_tile: dict[TileId, list[ElementRecord]] = field(default_factory=dict)
    fetch_count: int = 0
    failures: dict[TileId, list[TileId]] = field(default_factory=dict)

    def all_features(self) -> list[ElementRecord]:
        out: list[ElementRecord] = []
        for tile in sorted(self.features_by_tile, key=lambda t: (t.z, t.x, t.y)):
            out.extend(self.features_by_tile[tile])
        return out


def _contains(tile: TileId, p: GeoPoint) -> bool:
    return tile_for_point(p, tile.z) == tile


class FusionCache:
    """One dataset's element cache for one client session.

    The cache maps TileId -> CachedTile.  In managed mode (request_view /
    deep_load) entries live only at the dataset's data zoom; the standalone
    fusion operations work on whatever zoom levels the caller cached.
    """

    def __init__(self, dataset: str, fetcher: Fetcher, config: FusionConfig | None = None):
        self.dataset = dataset
        self.fetcher = fetcher
        self.config = config or FusionConfig()
        self.tiles: dict[TileId, CachedTile] = {}
        self.fetch_count = 0
        self._last_seen: dict[TileId, float] = {}
        self._visible: set[TileId] = set()
        self._lock = threading.Lock()

    # -- standalone fusion operations ------------------------------------

    def put(self, tile: TileId, features: Sequence[ElementRecord], now: float = 0.0,
            source: str = "fetched") -> None:
        self.tiles[tile] = CachedTile(tile, list(features), now, True, source)
        self._last_seen[tile] = now

    def top_down_fusion(self, child: TileId, *, cache_result: bool = True) -> list[ElementRecord] | None:
        """Resolve a tile from a cached complete ancestor; None on miss.

        Works across non-contiguous zoom gaps (jump-zoom).  The fused child
        is cached as complete: its ancestor was.
        """
        hit = self.tiles.get(child)
        if hit is not None and hit.complete:
            return list(hit.features)
        for z in range(child.z - 1, -1, -1):
            anc = ancestor_at(child, z)
            cached = self.tiles.get(anc)
            if cached is not None and cached.complete:
                feats = [f for f in cached.features if _contains(child, f.anchor)]
                if cache_result:
                    self.put(child, feats, cached.fetched_at, source="fused")
                return feats
        return None

    def bottom_up_fusion(
        self, parent: TileId, child_zoom: int | None = None, *, cache_result: bool = True
    ) -> tuple[list[ElementRecord] | None, list[TileId]]:
        """Aggregate cached descendants into a parent tile.

        Returns (features, []) when every descendant at child_zoom is cached,
        else (None, missing) so the caller fetches only the misses.  Features
        are concatenated in (x, y) sub-tile order and deduplicated by id.
        """
        z = self.config.data_zoom if child_zoom is None else child_zoom
        if z < parent.z:
            raise FusionError(f"child zoom {z} above parent zoom {parent.z}")
        subs = descendants_at(parent, z)
        missing = [s for s in subs if s not in self.tiles or not self.tiles[s].complete]
        if missing:
            return None, missing
        feats: list[ElementRecord] = []
        seen: set[str] = set()
        oldest = min(self.tiles[s].fetched_at for s in subs) if subs else 0.0
        for s in subs:
            for f in self.tiles[s].features:
                if f.id in seen:
                    continue
                seen.add(f.id)
                feats.append(f)
        if cache_result:
            self.put(parent, feats, oldest, source="fused")
        return feats, []

    # -- managed loading ---------------------------------------------------

    def _resolve_subtile(self, sub: TileId) -> list[ElementRecord] | None:
        cached = self.tiles.get(sub)
        if cached is not None and cached.complete:
            return list(cached.features)
        for z in range(sub.z - 1, -1, -1):
            anc = ancestor_at(sub, z)
            hit = self.tiles.get(anc)
            if hit is not None and hit.complete:
                return [f for f in hit.features if _contains(sub, f.anchor)]
        return None

    def _fetch_many(self, tiles: list[TileId], now: float) -> list[TileId]:
        """Fetch tiles concurrently; cache successes; return failures."""
        failed: list[TileId] = []
        if not tiles:
            return failed

        def fetch_one(tile: TileId) -> tuple[TileId, list[ElementRecord]]:
            with self._lock:
                self.fetch_count += 1
            return tile, self.fetcher(self.dataset, tile)

        with concurrent.futures.ThreadPoolExecutor(
            max_workers=self.config.max_concurrent_fetches
        ) as pool:
            futures = {pool.submit(fetch_one, t): t for t in tiles}
            for fut in concurrent.futures.as_completed(futures):
                tile = futures[fut]
                try:
                    _, feats = fut.result()
                except Exception:
                    failed.append(tile)
                    continue
                with self._lock:
                    self.put(tile, feats, now)
        failed.sort(key=lambda t: (t.x, t.y))
        return failed

    def deep_load(self, view_tile: TileId, now: float = 0.0) -> list[ElementRecord]:
        """Aggregate a view tile from its data-zoom sub-tiles.

        Fetches only the sub-tiles that neither the cache nor the fusions can
        answer; the aggregate is assembled only once all sub-tiles resolved.
        """
        z_j = self.config.data_zoom
        if view_tile.z > z_j:
            raise FusionError(f"deep_load requires view zoom <= data zoom {z_j}")
        subs = descendants_at(view_tile, z_j)
        to_fetch = [s for s in subs if self._resolve_subtile(s) is None]
        failed = self._fetch_many(to_fetch, now)
        if failed:
            raise DeepLoadError(failed)
        feats: list[ElementRecord] = []
        seen: set[str] = set()
        for s in subs:
            resolved = self._resolve_subtile(s)
            assert resolved is not None
            if self.tiles.get(s) is None:
                self.put(s, resolved, now, source="fused")
            for f in resolved:
                if f.id not in seen:
                    seen.add(f.id)
                    feats.append(f)
        return feats

    def load_view_tile(self, view_tile: TileId, now: float = 0.0) -> list[ElementRecord]:
        """Resolve one view tile at any zoom relative to the data zoom."""
        z_j = self.config.data_zoom
        if view_tile.z <= z_j:
            return self.deep_load(view_tile, now)
        data_tile = ancestor_at(view_tile, z_j)
        feats = self._resolve_subtile(data_tile)
        if feats is None:
            failed = self._fetch_many([data_tile], now)
            if failed:
                raise DeepLoadError(failed)
            feats = list(self.tiles[data_tile].features)
        elif data_tile not in self.tiles:
            self.put(data_tile, feats, now, source="fused")
        return [f for f in feats if _contains(view_tile, f.anchor)]

    def request_view(self, view: ViewFrustum, now: float = 0.0) -> ViewResult:
        """Load every tile of a view, nearest first; report origin calls made."""
        result = ViewResult()
        before = self.fetch_count
        view_tiles = tiles_in_view(view)
        for tile, _band in view_tiles:
            try:
                result.features_by_tile[tile] = self.load_view_tile(tile, now)
            except DeepLoadError as exc:
                result.failures[tile] = exc.failed
        result.fetch_count = self.fetch_count - before
        self.note_view([t for t, _ in view_tiles], now)
        return result

    # -- eviction ----------------------------------------------------------

    def _covering_data_tiles(self, view_tile: TileId) -> list[TileId]:
        z_j = self.config.data_zoom
        if view_tile.z >= z_j:
            return [ancestor_at(view_tile, z_j)]
        return descendants_at(view_tile, z_j)

    def note_view(self, visible: Iterable[TileId], now: float) -> None:
        """Mark the data tiles backing the visible view tiles as seen now."""
        expanded: set[TileId] = set()
        for t in visible:
            expanded.update(self._covering_data_tiles(t))
        self._visible = expanded
        for t in expanded:
            if t in self.tiles:
                self._last_seen[t] = now

    def evict(self, now: float) -> list[TileId]:
        """Drop tiles out of view for at least the configured delay."""
        doomed = [
            t
            for t in self.tiles
            if t not in self._visible
            and now - self._last_seen.get(t, now) >= self.config.eviction_delay
        ]
        for t in doomed:
            del self.tiles[t]
            self._last_seen.pop(t, None)
        return sorted(doomed, key=lambda t: (t.z, t.x, t.y))


class SimulatedOrigin:
    """Deterministic in-memory tile origin for tests and benchmarks.

    Elements registered per dataset are served from the tile containing their
    anchor at whatever zoom is requested.  Tiles listed in ``fail`` raise.
    """

    def __init__(self) -> None:
        self._elements: dict[str, list[ElementRecord]] = {}
        self.calls: list[tuple[str, TileId]] = []
        self.fail: set[tuple[str, TileId]] = set()

    def add(self, dataset: str, elements: Iterable[ElementRecord]) -> None:
        self._elements.setdefault(dataset, []).extend(elements)

    def fetch(self, dataset: str, tile: TileId) -> list[ElementRecord]:
        self.calls.append((dataset, tile))
        if (dataset, tile) in self.fail:
            raise FusionError(f"simulated failure for {dataset} {tile}")
        return [
            e
            for e in self._elements.get(dataset, [])
            if _contains(tile, e.anchor)
        ]

    def direct_view(self, dataset: str, view_tile: TileId, data_zoom: int) -> list[ElementRecord]:
        """Uncached reference load of a view tile, for oracle comparisons."""
        if view_tile.z <= data_zoom:
            feats: list[ElementRecord] = []
            seen: set[str] = set()
            for sub in descendants_at(view_tile, data_zoom):
                for f in self.fetch(dataset, sub):
                    if f.id not in seen:
                        seen.add(f.id)
                        feats.append(f)
            return feats
        data_tile = ancestor_at(view_tile, data_zoom)
        return [f for f in self.fetch(dataset, data_tile) if _contains(view_tile, f.anchor)]
