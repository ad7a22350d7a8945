// Typed client over the engine's HTTP API with a pluggable transport so
// tests can stub responses and assert on the request log.

import { ElementRecord } from "./fusion";
import { TileId } from "./tiles";

export interface BuildingEntry {
  id: string;
  anchor: [number, number];
  ground_elevation: number;
  height: number;
  variants: string[];
  model: string;
  models: string[];
  attributes: Record<string, unknown>;
}

export interface BuildingTile {
  tile: string;
  buildings: BuildingEntry[];
}

export interface GeoJsonFeature {
  type: "Feature";
  id?: string;
  geometry: { type: string; coordinates: unknown };
  properties: Record<string, unknown>;
}

export interface RouteFeature extends GeoJsonFeature {
  geometry: { type: "LineString"; coordinates: [number, number][] };
  properties: { elements: string[]; cost_s: number; length_m: number };
}

export interface ComparedRoutes {
  baseline: RouteFeature;
  scenario: RouteFeature;
}

export interface TrafficSegment {
  element: string;
  density: number;
  period_s: number;
  geometry: { type: "LineString"; coordinates: [number, number][] };
  name: string;
}

export interface SunState {
  azimuth_deg: number;
  elevation_deg: number;
}

export type Transport = (path: string, init?: RequestInit) => Promise<Response>;

export interface RequestLogEntry {
  path: string;
  family: string;
}

const familyOf = (path: string): string => {
  if (path.startsWith("/tiles/buildings/")) return "building-tile";
  if (path.startsWith("/tiles/dtm/")) return "dtm-tile";
  if (path.startsWith("/tiles/heatmap/")) return "heatmap-tile";
  if (path.startsWith("/features")) return "features";
  if (path.startsWith("/whatif")) return "whatif";
  if (path.startsWith("/models/")) return "model";
  if (path.startsWith("/traffic")) return "traffic";
  if (path.startsWith("/sun")) return "sun";
  return "other";
};

export class ApiClient {
  readonly log: RequestLogEntry[] = [];

  constructor(
    private readonly base: string = "",
    private readonly transport: Transport = (path, init) => fetch(base + path, init),
  ) {}

  countBy(family: string): number {
    return this.log.filter((e) => e.family === family).length;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    this.log.push({ path, family: familyOf(path) });
    const response = await this.transport(path, init);
    if (!response.ok) throw new Error(`${path} -> ${response.status}`);
    return response;
  }

  async buildingTile(tile: TileId): Promise<BuildingTile> {
    const r = await this.request(`/tiles/buildings/${tile.z}/${tile.x}/${tile.y}`);
    return (await r.json()) as BuildingTile;
  }

  /** Building tiles as fusion elements (anchor-keyed, payload = full entry). */
  buildingElements(): (tile: TileId) => Promise<ElementRecord[]> {
    return async (tile: TileId) => {
      const doc = await this.buildingTile(tile);
      return doc.buildings.map((b) => ({
        id: b.id,
        anchor: { lon: b.anchor[0], lat: b.anchor[1] },
        payload: b,
      }));
    };
  }

  async dtmTileBlob(tile: TileId): Promise<Blob> {
    const r = await this.request(`/tiles/dtm/${tile.z}/${tile.x}/${tile.y}.png`);
    return r.blob();
  }

  heatmapTileUrl(name: string, tile: TileId, frame?: number): string {
    const suffix = frame === undefined ? "" : `?frame=${frame}`;
    return `${this.base}/tiles/heatmap/${name}/${tile.z}/${tile.x}/${tile.y}.png${suffix}`;
  }

  async heatmapTileBlob(name: string, tile: TileId, frame?: number): Promise<Blob> {
    const suffix = frame === undefined ? "" : `?frame=${frame}`;
    const r = await this.request(`/tiles/heatmap/${name}/${tile.z}/${tile.x}/${tile.y}.png${suffix}`);
    return r.blob();
  }

  async features(bbox: string, categories?: string): Promise<GeoJsonFeature[]> {
    const q = categories ? `&categories=${encodeURIComponent(categories)}` : "";
    const r = await this.request(`/features?bbox=${bbox}${q}`);
    const doc = (await r.json()) as { features: GeoJsonFeature[] };
    return doc.features;
  }

  async lastValue(id: string, metric: string): Promise<{ value: number; timestamp: string }> {
    const r = await this.request(`/features/${id}/last?metric=${encodeURIComponent(metric)}`);
    return (await r.json()) as { value: number; timestamp: string };
  }

  async traffic(bbox: string): Promise<TrafficSegment[]> {
    const r = await this.request(`/traffic?bbox=${bbox}`);
    return ((await r.json()) as { segments: TrafficSegment[] }).segments;
  }

  async sun(lat: number, lon: number, atIso: string): Promise<SunState> {
    const r = await this.request(`/sun?lat=${lat}&lon=${lon}&at=${encodeURIComponent(atIso)}`);
    return (await r.json()) as SunState;
  }

  async createScenario(areas: unknown[]): Promise<{ id: string; blocked_elements: string[] }> {
    const r = await this.request("/whatif/scenarios", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ areas }),
    });
    return (await r.json()) as { id: string; blocked_elements: string[] };
  }

  async compare(from: [number, number], to: [number, number], scenario: string): Promise<ComparedRoutes> {
    const q = `from=${from[0]},${from[1]}&to=${to[0]},${to[1]}&scenario=${scenario}`;
    const r = await this.request(`/whatif/compare?${q}`);
    return (await r.json()) as ComparedRoutes;
  }

  async buildingModels(id: string): Promise<{ variants: string[]; models: string[] }> {
    const r = await this.request(`/buildings/${id}/models`);
    return (await r.json()) as { variants: string[]; models: string[] };
  }

  async modelBlob(blobId: string): Promise<ArrayBuffer> {
    const r = await this.request(`/models/${blobId}`);
    return r.arrayBuffer();
  }
}
