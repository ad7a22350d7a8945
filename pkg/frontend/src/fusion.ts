// Client-side port of the cross-zoom element cache.
//
// Elements fetched once are reused when the view zooms in (top-down: filter
// a cached ancestor into each child tile), zooms out (bottom-up: concatenate
// cached descendants), or jumps levels.  Datasets pinned to a data zoom are
// answered at other zooms by the deep loader, which fetches only the
// sub-tiles the cache cannot provide.  Out-of-view tiles are dropped after a
// delay.  The reference implementation of this contract lives server-side;
// the property tests mirror its suite.

import { TileId, LonLat, ancestorAt, contains, descendantsAt, tileKey } from "./tiles";

export interface ElementRecord {
  id: string;
  anchor: LonLat;
  payload?: unknown;
}

export interface CachedTile {
  tile: TileId;
  features: ElementRecord[];
  fetchedAt: number;
  complete: boolean;
  source: "fetched" | "fused";
}

export interface FusionConfig {
  dataZoom: number;
  evictionDelayMs: number;
  maxConcurrentFetches: number;
}

export type Fetcher = (tile: TileId) => Promise<ElementRecord[]>;

export class DeepLoadError extends Error {
  constructor(public readonly failed: TileId[]) {
    super(`failed to fetch ${failed.length} sub-tiles`);
  }
}

export class FusionCache {
  readonly tiles = new Map<string, CachedTile>();
  fetchCount = 0;
  private lastSeen = new Map<string, number>();
  private visible = new Set<string>();

  constructor(
    private readonly fetcher: Fetcher,
    readonly config: FusionConfig,
  ) {
    if (config.maxConcurrentFetches < 1) throw new Error("maxConcurrentFetches must be >= 1");
    if (config.evictionDelayMs < 0) throw new Error("evictionDelayMs must be >= 0");
  }

  put(tile: TileId, features: ElementRecord[], now: number, source: "fetched" | "fused" = "fetched"): void {
    this.tiles.set(tileKey(tile), { tile, features: [...features], fetchedAt: now, complete: true, source });
    this.lastSeen.set(tileKey(tile), now);
  }

  /** Resolve a tile from a cached complete ancestor; null on miss. */
  topDownFusion(child: TileId, cacheResult = true): ElementRecord[] | null {
    const own = this.tiles.get(tileKey(child));
    if (own?.complete) return [...own.features];
    for (let z = child.z - 1; z >= 0; z--) {
      const cached = this.tiles.get(tileKey(ancestorAt(child, z)));
      if (cached?.complete) {
        const filtered = cached.features.filter((f) => contains(child, f.anchor));
        if (cacheResult) this.put(child, filtered, cached.fetchedAt, "fused");
        return filtered;
      }
    }
    return null;
  }

  /** Aggregate cached descendants; returns the missing tiles otherwise. */
  bottomUpFusion(
    parentTile: TileId,
    childZoom?: number,
    cacheResult = true,
  ): { features: ElementRecord[] | null; missing: TileId[] } {
    const z = childZoom ?? this.config.dataZoom;
    if (z < parentTile.z) throw new Error(`child zoom ${z} above parent zoom ${parentTile.z}`);
    const subs = descendantsAt(parentTile, z);
    const missing = subs.filter((s) => !this.tiles.get(tileKey(s))?.complete);
    if (missing.length > 0) return { features: null, missing };
    const seen = new Set<string>();
    const features: ElementRecord[] = [];
    let oldest = Infinity;
    for (const s of subs) {
      const cached = this.tiles.get(tileKey(s))!;
      oldest = Math.min(oldest, cached.fetchedAt);
      for (const f of cached.features) {
        if (!seen.has(f.id)) {
          seen.add(f.id);
          features.push(f);
        }
      }
    }
    if (cacheResult) this.put(parentTile, features, oldest, "fused");
    return { features, missing: [] };
  }

  private resolveSubtile(sub: TileId): ElementRecord[] | null {
    const own = this.tiles.get(tileKey(sub));
    if (own?.complete) return [...own.features];
    for (let z = sub.z - 1; z >= 0; z--) {
      const cached = this.tiles.get(tileKey(ancestorAt(sub, z)));
      if (cached?.complete) return cached.features.filter((f) => contains(sub, f.anchor));
    }
    return null;
  }

  private async fetchMany(tiles: TileId[], now: number): Promise<TileId[]> {
    const failed: TileId[] = [];
    const queue = [...tiles];
    const workers = Array.from(
      { length: Math.min(this.config.maxConcurrentFetches, queue.length) },
      async () => {
        for (;;) {
          const tile = queue.shift();
          if (!tile) return;
          this.fetchCount += 1;
          try {
            const features = await this.fetcher(tile);
            this.put(tile, features, now);
          } catch {
            failed.push(tile);
          }
        }
      },
    );
    await Promise.all(workers);
    failed.sort((a, b) => a.x - b.x || a.y - b.y);
    return failed;
  }

  /** Aggregate a view tile from its data-zoom sub-tiles, fetching only misses. */
  async deepLoad(viewTile: TileId, now: number): Promise<ElementRecord[]> {
    const zj = this.config.dataZoom;
    if (viewTile.z > zj) throw new Error(`deepLoad requires view zoom <= data zoom ${zj}`);
    const subs = descendantsAt(viewTile, zj);
    const toFetch = subs.filter((s) => this.resolveSubtile(s) === null);
    const failed = await this.fetchMany(toFetch, now);
    if (failed.length > 0) throw new DeepLoadError(failed);
    const seen = new Set<string>();
    const out: ElementRecord[] = [];
    for (const s of subs) {
      const resolved = this.resolveSubtile(s)!;
      if (!this.tiles.has(tileKey(s))) this.put(s, resolved, now, "fused");
      for (const f of resolved) {
        if (!seen.has(f.id)) {
          seen.add(f.id);
          out.push(f);
        }
      }
    }
    return out;
  }

  /** Resolve one view tile at any zoom relative to the data zoom. */
  async loadViewTile(viewTile: TileId, now: number): Promise<ElementRecord[]> {
    const zj = this.config.dataZoom;
    if (viewTile.z <= zj) return this.deepLoad(viewTile, now);
    const dataTile = ancestorAt(viewTile, zj);
    let features = this.resolveSubtile(dataTile);
    if (features === null) {
      const failed = await this.fetchMany([dataTile], now);
      if (failed.length > 0) throw new DeepLoadError(failed);
      features = [...this.tiles.get(tileKey(dataTile))!.features];
    } else if (!this.tiles.has(tileKey(dataTile))) {
      this.put(dataTile, features, now, "fused");
    }
    return features.filter((f) => contains(viewTile, f.anchor));
  }

  private coveringDataTiles(viewTile: TileId): TileId[] {
    const zj = this.config.dataZoom;
    return viewTile.z >= zj ? [ancestorAt(viewTile, zj)] : descendantsAt(viewTile, zj);
  }

  noteView(visibleViewTiles: TileId[], now: number): void {
    this.visible = new Set<string>();
    for (const t of visibleViewTiles) {
      for (const d of this.coveringDataTiles(t)) {
        const key = tileKey(d);
        this.visible.add(key);
        if (this.tiles.has(key)) this.lastSeen.set(key, now);
      }
    }
  }

  /** Drop tiles out of view for at least the configured delay. */
  evict(now: number): TileId[] {
    const doomed: TileId[] = [];
    for (const [key, cached] of this.tiles) {
      const seen = this.lastSeen.get(key) ?? now;
      if (!this.visible.has(key) && now - seen >= this.config.evictionDelayMs) {
        doomed.push(cached.tile);
      }
    }
    for (const t of doomed) {
      this.tiles.delete(tileKey(t));
      this.lastSeen.delete(tileKey(t));
    }
    return doomed.sort((a, b) => a.z - b.z || a.x - b.x || a.y - b.y);
  }
}
