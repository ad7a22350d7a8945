// Orchestration between view state, layer toggles, the fusion caches, and
// the renderer.  Every dataset loads independently: a toggle or opacity
// change never triggers fetches for unrelated layers, and camera moves only
// fetch what the caches cannot already answer.

import { ApiClient, BuildingEntry, ComparedRoutes, GeoJsonFeature, TrafficSegment } from "./api";
import { ElementRecord, FusionCache } from "./fusion";
import { LayerToggles, ScenarioDraft, ViewState, defaultToggles } from "./state";
import { Bounds, TileId, tileBounds, tileForPoint, tileKey, tilesForBounds } from "./tiles";

export const BUILDING_ZOOM = 18;
const PIN_ZOOM = 16;
const VIEW_SIDE_TILES = 4;
const EVICTION_DELAY_MS = 30_000;

export interface RenderSink {
  setBuildingTile(key: string, entries: BuildingEntry[]): void;
  dropBuildingTile(key: string): void;
  setPinTile(key: string, pins: ElementRecord[]): void;
  dropPinTile(key: string): void;
  setTerrainTile(tile: TileId, png: Blob): void;
  dropTerrainTile(key: string): void;
  setGroundTexture(heatmap: string | null, opacity: number, frame: number): void;
  setTraffic(segments: TrafficSegment[]): void;
  setEntities(features: GeoJsonFeature[]): void;
  showRoutes(routes: ComparedRoutes, blockedRing: [number, number][]): void;
  clearRoutes(): void;
  setSun(azimuthDeg: number, elevationDeg: number): void;
  swapBuildingModel(buildingId: string, blobId: string, mesh: ArrayBuffer | null): void;
  layerBadge(layer: string, message: string | null): void;
}

export function viewBounds(view: ViewState, sideTiles: number = VIEW_SIDE_TILES): Bounds {
  const side = sideTiles / Math.pow(2, view.zoom);
  const half = side / 2;
  const cx = (view.lon + 180) / 360;
  const phi = (view.lat * Math.PI) / 180;
  const cy = (1 - Math.log(Math.tan(phi) + 1 / Math.cos(phi)) / Math.PI) / 2;
  const lat0 = (Math.atan(Math.sinh(Math.PI * (1 - 2 * (cy + half)))) * 180) / Math.PI;
  const lat1 = (Math.atan(Math.sinh(Math.PI * (1 - 2 * (cy - half)))) * 180) / Math.PI;
  return {
    minLon: (cx - half) * 360 - 180,
    maxLon: (cx + half) * 360 - 180,
    minLat: lat0,
    maxLat: lat1,
  };
}

export class ViewModel {
  readonly toggles: LayerToggles = defaultToggles();
  readonly draft = new ScenarioDraft();
  readonly buildings: FusionCache;
  readonly pins: FusionCache;
  private view: ViewState | null = null;
  private shownBuildingTiles = new Set<string>();
  private shownPinTiles = new Set<string>();
  private terrainTiles = new Set<string>();
  private frame = 0;
  private animationTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    readonly api: ApiClient,
    readonly sink: RenderSink,
    private readonly now: () => number = () => Date.now(),
  ) {
    this.buildings = new FusionCache(api.buildingElements(), {
      dataZoom: BUILDING_ZOOM,
      evictionDelayMs: EVICTION_DELAY_MS,
      maxConcurrentFetches: 6,
    });
    this.pins = new FusionCache(
      async (tile) => {
        const b = tileBounds(tile);
        const bbox = `${b.minLon},${b.minLat},${b.maxLon},${b.maxLat}`;
        const features = await this.api.features(bbox);
        return features
          .filter((f) => f.geometry.type === "Point" && !String(f.properties.category ?? "").startsWith("Building/"))
          .map((f) => {
            const [lon, lat] = f.geometry.coordinates as [number, number];
            return { id: String(f.id), anchor: { lon, lat }, payload: f };
          })
          .filter((e) => tileKey(tileForPoint(e.anchor, tile.z)) === tileKey(tile));
      },
      { dataZoom: PIN_ZOOM, evictionDelayMs: EVICTION_DELAY_MS, maxConcurrentFetches: 6 },
    );
  }

  private viewTiles(view: ViewState, zoom: number): TileId[] {
    return tilesForBounds(viewBounds({ ...view, zoom }), zoom);
  }

  /** Camera moved or zoomed: (re)load exactly the visible, toggled-on layers. */
  async setView(view: ViewState): Promise<void> {
    this.view = view;
    const zoom = Math.round(view.zoom);
    const work: Promise<unknown>[] = [];
    if (this.toggles.buildings) work.push(this.refreshBuildings(zoom));
    if (this.toggles.pins) work.push(this.refreshPins(zoom));
    if (this.toggles.terrain) work.push(this.refreshTerrain(zoom));
    await Promise.all(work);
    const stamp = this.now();
    this.buildings.noteView(this.viewTiles(view, Math.min(zoom, BUILDING_ZOOM)), stamp);
    this.buildings.evict(stamp);
    this.pins.noteView(this.viewTiles(view, Math.min(zoom, PIN_ZOOM)), stamp);
    this.pins.evict(stamp);
  }

  private async refreshBuildings(zoom: number): Promise<void> {
    if (!this.view) return;
    const wanted = this.viewTiles(this.view, Math.min(zoom, BUILDING_ZOOM));
    const keep = new Set(wanted.map(tileKey));
    for (const key of [...this.shownBuildingTiles]) {
      if (!keep.has(key)) {
        this.sink.dropBuildingTile(key);
        this.shownBuildingTiles.delete(key);
      }
    }
    await Promise.all(
      wanted.map(async (tile) => {
        try {
          const elements = await this.buildings.loadViewTile(tile, this.now());
          this.sink.setBuildingTile(
            tileKey(tile),
            elements.map((e) => e.payload as BuildingEntry),
          );
          this.shownBuildingTiles.add(tileKey(tile));
          this.sink.layerBadge("buildings", null);
        } catch (err) {
          this.sink.layerBadge("buildings", String(err));
        }
      }),
    );
  }

  private async refreshPins(zoom: number): Promise<void> {
    if (!this.view) return;
    const wanted = this.viewTiles(this.view, Math.min(zoom, PIN_ZOOM));
    const keep = new Set(wanted.map(tileKey));
    for (const key of [...this.shownPinTiles]) {
      if (!keep.has(key)) {
        this.sink.dropPinTile(key);
        this.shownPinTiles.delete(key);
      }
    }
    await Promise.all(
      wanted.map(async (tile) => {
        try {
          const pins = await this.pins.loadViewTile(tile, this.now());
          this.sink.setPinTile(tileKey(tile), pins);
          this.shownPinTiles.add(tileKey(tile));
          this.sink.layerBadge("pins", null);
        } catch (err) {
          this.sink.layerBadge("pins", String(err));
        }
      }),
    );
  }

  private async refreshTerrain(zoom: number): Promise<void> {
    if (!this.view) return;
    // terrain tiles are resolution-specific: no cross-zoom fusion, plain cache
    const terrainZoom = Math.max(10, Math.min(15, zoom - 1));
    const wanted = this.viewTiles(this.view, terrainZoom);
    const keep = new Set(wanted.map(tileKey));
    for (const key of [...this.terrainTiles]) {
      if (!keep.has(key)) {
        this.sink.dropTerrainTile(key);
        this.terrainTiles.delete(key);
      }
    }
    await Promise.all(
      wanted
        .filter((t) => !this.terrainTiles.has(tileKey(t)))
        .map(async (tile) => {
          try {
            const png = await this.api.dtmTileBlob(tile);
            this.terrainTiles.add(tileKey(tile));
            this.sink.setTerrainTile(tile, png);
            this.sink.layerBadge("terrain", null);
          } catch (err) {
            this.sink.layerBadge("terrain", String(err));
          }
        }),
    );
  }

  /** Toggle/opacity changes touch only their own layer; no unrelated fetches. */
  async setToggles(patch: Partial<LayerToggles>): Promise<void> {
    const before = { ...this.toggles };
    Object.assign(this.toggles, patch);
    const zoom = this.view ? Math.round(this.view.zoom) : 0;
    const work: Promise<unknown>[] = [];
    if (!before.buildings && this.toggles.buildings) work.push(this.refreshBuildings(zoom));
    if (before.buildings && !this.toggles.buildings) {
      for (const key of this.shownBuildingTiles) this.sink.dropBuildingTile(key);
      this.shownBuildingTiles.clear();
    }
    if (!before.pins && this.toggles.pins) work.push(this.refreshPins(zoom));
    if (before.pins && !this.toggles.pins) {
      for (const key of this.shownPinTiles) this.sink.dropPinTile(key);
      this.shownPinTiles.clear();
    }
    if (!before.terrain && this.toggles.terrain) work.push(this.refreshTerrain(zoom));
    if (before.traffic !== this.toggles.traffic) work.push(this.refreshTraffic());
    if (
      before.heatmap !== this.toggles.heatmap ||
      before.heatmapOpacity !== this.toggles.heatmapOpacity ||
      before.animation !== this.toggles.animation
    ) {
      this.sink.setGroundTexture(this.toggles.heatmap, this.toggles.heatmapOpacity, this.frame);
      this.configureAnimation();
    }
    await Promise.all(work);
  }

  private configureAnimation(): void {
    if (this.animationTimer !== null) {
      clearInterval(this.animationTimer);
      this.animationTimer = null;
    }
    if (this.toggles.animation && this.toggles.heatmap) {
      this.animationTimer = setInterval(() => {
        this.frame += 1;
        this.sink.setGroundTexture(this.toggles.heatmap, this.toggles.heatmapOpacity, this.frame);
      }, 400);
    }
  }

  async refreshTraffic(): Promise<void> {
    if (!this.toggles.traffic) {
      this.sink.setTraffic([]);
      return;
    }
    if (!this.view) return;
    const b = viewBounds(this.view);
    try {
      const segments = await this.api.traffic(`${b.minLon},${b.minLat},${b.maxLon},${b.maxLat}`);
      this.sink.setTraffic(segments);
      this.sink.layerBadge("traffic", null);
    } catch (err) {
      this.sink.layerBadge("traffic", String(err));
    }
  }

  /** Swap one building's model in place; revert (null mesh) on fetch failure. */
  async swapBuildingModel(buildingId: string, variantId: string): Promise<void> {
    const blobId = `${buildingId}.${variantId}`;
    try {
      const mesh = await this.api.modelBlob(blobId);
      this.sink.swapBuildingModel(buildingId, blobId, mesh);
    } catch (err) {
      this.sink.swapBuildingModel(buildingId, `${buildingId}.lod1`, null);
      this.sink.layerBadge("buildings", `model ${blobId}: ${String(err)}`);
    }
  }

  /** Commit the drawn polygon as a scenario and display both routes. */
  async commitScenarioAndRoute(from: [number, number], to: [number, number]): Promise<ComparedRoutes> {
    const ring = this.draft.polygon()[0];
    const created = await this.api.createScenario([{ type: "Polygon", coordinates: [ring] }]);
    this.draft.commit(created.id);
    const routes = await this.api.compare(from, to, created.id);
    this.sink.showRoutes(routes, ring);
    return routes;
  }

  clearScenario(): void {
    this.draft.clear();
    this.sink.clearRoutes();
  }

  /** Drive the directional light from the sun endpoint for a given time. */
  async setTime(iso: string): Promise<void> {
    if (!this.view) return;
    const sun = await this.api.sun(this.view.lat, this.view.lon, iso);
    this.sink.setSun(sun.azimuth_deg, sun.elevation_deg);
  }

  dispose(): void {
    if (this.animationTimer !== null) clearInterval(this.animationTimer);
  }
}
