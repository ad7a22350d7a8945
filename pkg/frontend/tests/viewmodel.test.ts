// Network-log properties of the view orchestration: zooming over a loaded
// region refetches nothing, layer toggles never touch unrelated datasets,
// and the golden what-if scenario displays divergent routes.

import { beforeEach, describe, expect, it } from "vitest";

import fixture from "./fixtures/whatif_golden.json";
import { ApiClient, BuildingEntry, ComparedRoutes, TrafficSegment, Transport } from "../src/api";
import { ElementRecord } from "../src/fusion";
import { TileId, contains, tileForPoint } from "../src/tiles";
import { RenderSink, ViewModel } from "../src/viewmodel";

const CENTER = { lon: 11.2558, lat: 43.7696 };

interface World {
  buildings: { id: string; anchor: [number, number] }[];
  pins: { id: string; lon: number; lat: number }[];
}

function makeWorld(): World {
  const buildings = [];
  const pins = [];
  for (let i = 0; i < 40; i++) {
    buildings.push({
      id: `b${String(i).padStart(4, "0")}`,
      anchor: [CENTER.lon + ((i % 8) - 4) * 0.0015, CENTER.lat + (Math.floor(i / 8) - 2) * 0.001] as [
        number,
        number,
      ],
    });
  }
  for (let i = 0; i < 12; i++) {
    pins.push({ id: `poi-${i}`, lon: CENTER.lon + (i - 6) * 0.002, lat: CENTER.lat + (i % 3) * 0.0012 });
  }
  return { buildings, pins };
}

function stubTransport(world: World): Transport {
  const json = (doc: unknown) =>
    new Response(JSON.stringify(doc), { status: 200, headers: { "Content-Type": "application/json" } });
  return async (path: string) => {
    let m = path.match(/^\/tiles\/buildings\/(\d+)\/(\d+)\/(\d+)$/);
    if (m) {
      const tile: TileId = { z: +m[1], x: +m[2], y: +m[3] };
      const entries: BuildingEntry[] = world.buildings
        .filter((b) => contains(tile, { lon: b.anchor[0], lat: b.anchor[1] }))
        .map((b) => ({
          id: b.id,
          anchor: b.anchor,
          ground_elevation: 50,
          height: 10,
          variants: ["lod1", "skeleton"],
          model: `${b.id}.lod1`,
          models: [`${b.id}.lod1`, `${b.id}.skeleton`],
          attributes: {},
        }));
      return json({ tile: `${tile.z}/${tile.x}/${tile.y}`, buildings: entries });
    }
    m = path.match(/^\/features\?bbox=([-\d.,]+)/);
    if (m) {
      const [minLon, minLat, maxLon, maxLat] = m[1].split(",").map(Number);
      const features = world.pins
        .filter((p) => p.lon >= minLon && p.lon <= maxLon && p.lat >= minLat && p.lat <= maxLat)
        .map((p) => ({
          type: "Feature",
          id: p.id,
          geometry: { type: "Point", coordinates: [p.lon, p.lat] },
          properties: { category: "Service/Generic" },
        }));
      return json({ type: "FeatureCollection", features });
    }
    if (path.startsWith("/tiles/dtm/")) {
      return new Response(new Blob([new Uint8Array([137, 80, 78, 71])]), { status: 200 });
    }
    if (path.startsWith("/traffic")) {
      const segments: TrafficSegment[] = [
        {
          element: "e000",
          density: 0.5,
          period_s: 5.5,
          geometry: { type: "LineString", coordinates: [[CENTER.lon, CENTER.lat], [CENTER.lon + 0.001, CENTER.lat]] },
          name: "Corso",
        },
      ];
      return json({ segments });
    }
    if (path.startsWith("/sun")) {
      const at = new URLSearchParams(path.split("?")[1]).get("at") ?? "";
      const hour = Number(at.slice(11, 13));
      const elevation = hour >= 6 && hour <= 18 ? 55 : -35;
      return json({ azimuth_deg: 180, elevation_deg: elevation, at });
    }
    if (path === "/whatif/scenarios") {
      return json({ id: fixture.scenario_id, blocked_elements: [] });
    }
    if (path.startsWith("/whatif/compare")) {
      return json(fixture.compare);
    }
    m = path.match(/^\/models\/(.+)$/);
    if (m) {
      if (m[1].endsWith(".missing")) return new Response("nope", { status: 404 });
      return new Response(new Uint8Array([103, 108, 84, 70]).buffer, { status: 200 });
    }
    if (path.startsWith("/buildings/")) {
      return json({ variants: ["lod1", "skeleton"], models: [] });
    }
    return new Response("not found", { status: 404 });
  };
}

class RecorderSink implements RenderSink {
  buildingTiles = new Map<string, BuildingEntry[]>();
  pinTiles = new Map<string, ElementRecord[]>();
  terrainTiles: string[] = [];
  groundTextures: { heatmap: string | null; opacity: number; frame: number }[] = [];
  traffic: TrafficSegment[][] = [];
  routes: { routes: ComparedRoutes; ring: [number, number][] }[] = [];
  cleared = 0;
  sun: { az: number; el: number }[] = [];
  swaps: { id: string; blob: string; mesh: ArrayBuffer | null }[] = [];
  badges: { layer: string; message: string | null }[] = [];

  setBuildingTile(key: string, entries: BuildingEntry[]): void {
    this.buildingTiles.set(key, entries);
  }
  dropBuildingTile(key: string): void {
    this.buildingTiles.delete(key);
  }
  setPinTile(key: string, pins: ElementRecord[]): void {
    this.pinTiles.set(key, pins);
  }
  dropPinTile(key: string): void {
    this.pinTiles.delete(key);
  }
  setTerrainTile(tile: TileId): void {
    this.terrainTiles.push(`${tile.z}/${tile.x}/${tile.y}`);
  }
  dropTerrainTile(): void {}
  setGroundTexture(heatmap: string | null, opacity: number, frame: number): void {
    this.groundTextures.push({ heatmap, opacity, frame });
  }
  setTraffic(segments: TrafficSegment[]): void {
    this.traffic.push(segments);
  }
  setEntities(): void {}
  showRoutes(routes: ComparedRoutes, ring: [number, number][]): void {
    this.routes.push({ routes, ring });
  }
  clearRoutes(): void {
    this.cleared += 1;
  }
  setSun(az: number, el: number): void {
    this.sun.push({ az, el });
  }
  swapBuildingModel(id: string, blob: string, mesh: ArrayBuffer | null): void {
    this.swaps.push({ id, blob, mesh });
  }
  layerBadge(layer: string, message: string | null): void {
    this.badges.push({ layer, message });
  }
}

describe("viewmodel network-log properties", () => {
  let api: ApiClient;
  let sink: RecorderSink;
  let vm: ViewModel;
  const view = (zoom: number) => ({ ...CENTER, zoom, headingDeg: 0, pitchDeg: 45 });

  beforeEach(() => {
    api = new ApiClient("", stubTransport(makeWorld()));
    sink = new RecorderSink();
    vm = new ViewModel(api, sink, () => 0);
  });

  it("zoom-in over a loaded region issues zero building-tile requests", async () => {
    await vm.setView(view(16));
    const after16 = api.countBy("building-tile");
    expect(after16).toBeGreaterThan(0);
    expect(sink.buildingTiles.size).toBeGreaterThan(0);
    await vm.setView(view(17));
    expect(api.countBy("building-tile")).toBe(after16);
    await vm.setView(view(18));
    expect(api.countBy("building-tile")).toBe(after16);
  });

  it("toggling a heatmap issues zero building or feature requests", async () => {
    await vm.setView(view(16));
    const buildings = api.countBy("building-tile");
    const features = api.countBy("features");
    await vm.setToggles({ heatmap: "pm10" });
    await vm.setToggles({ heatmapOpacity: 0.3 });
    await vm.setToggles({ heatmap: "temperature" });
    expect(api.countBy("building-tile")).toBe(buildings);
    expect(api.countBy("features")).toBe(features);
    expect(sink.groundTextures.length).toBeGreaterThanOrEqual(3);
    vm.dispose();
  });

  it("opacity changes alone hit the network zero times", async () => {
    await vm.setView(view(16));
    const total = api.log.length;
    await vm.setToggles({ heatmapOpacity: 0.9 });
    await vm.setToggles({ heatmapOpacity: 0.1 });
    expect(api.log.length).toBe(total);
  });

  it("traffic toggle fetches only the traffic dataset", async () => {
    await vm.setView(view(16));
    const buildings = api.countBy("building-tile");
    const features = api.countBy("features");
    await vm.setToggles({ traffic: true });
    expect(api.countBy("traffic")).toBe(1);
    expect(api.countBy("building-tile")).toBe(buildings);
    expect(api.countBy("features")).toBe(features);
    expect(sink.traffic.at(-1)).toHaveLength(1);
  });

  it("disabling and re-enabling buildings stays cache-served", async () => {
    await vm.setView(view(16));
    const calls = api.countBy("building-tile");
    await vm.setToggles({ buildings: false });
    expect(sink.buildingTiles.size).toBe(0);
    await vm.setToggles({ buildings: true });
    expect(sink.buildingTiles.size).toBeGreaterThan(0);
    expect(api.countBy("building-tile")).toBe(calls);
  });

  it("golden what-if scenario renders divergent baseline and scenario routes", async () => {
    await vm.setView(view(16));
    const ring = fixture.golden.areas[0].coordinates[0] as [number, number][];
    for (const [lon, lat] of ring.slice(0, 4)) vm.draft.add(lon, lat);
    expect(vm.draft.canCommit).toBe(true);
    const routes = await vm.commitScenarioAndRoute(
      fixture.golden.route_from as [number, number],
      fixture.golden.route_to as [number, number],
    );
    expect(vm.draft.committedId).toBe(fixture.scenario_id);
    expect(sink.routes).toHaveLength(1);
    const base = routes.baseline.geometry.coordinates;
    const scen = routes.scenario.geometry.coordinates;
    expect(JSON.stringify(base)).not.toBe(JSON.stringify(scen));
    expect(routes.scenario.properties.cost_s).toBeGreaterThan(routes.baseline.properties.cost_s);
    expect(sink.routes[0].ring.length).toBeGreaterThanOrEqual(4);
    vm.clearScenario();
    expect(sink.cleared).toBe(1);
    expect(vm.draft.committedId).toBeNull();
  });

  it("swaps one building model and reverts on fetch failure", async () => {
    await vm.setView(view(16));
    await vm.swapBuildingModel("b0001", "skeleton");
    expect(sink.swaps.at(-1)).toMatchObject({ id: "b0001", blob: "b0001.skeleton" });
    expect(sink.swaps.at(-1)!.mesh).not.toBeNull();
    await vm.swapBuildingModel("b0001", "missing");
    expect(sink.swaps.at(-1)).toMatchObject({ id: "b0001", blob: "b0001.lod1", mesh: null });
  });

  it("sun elevation sign flips between noon and midnight", async () => {
    await vm.setView(view(16));
    await vm.setTime("2026-06-21T12:00:00Z");
    await vm.setTime("2026-06-21T00:00:00Z");
    expect(sink.sun).toHaveLength(2);
    expect(Math.sign(sink.sun[0].el)).toBe(1);
    expect(Math.sign(sink.sun[1].el)).toBe(-1);
  });

  it("panning to a fresh region pays the cold fetch price once", async () => {
    await vm.setView(view(16));
    const warm = api.countBy("building-tile");
    await vm.setView({ lon: CENTER.lon + 0.5, lat: CENTER.lat, zoom: 16, headingDeg: 0, pitchDeg: 45 });
    const afterPan = api.countBy("building-tile");
    expect(afterPan).toBeGreaterThan(warm);
    await vm.setView({ lon: CENTER.lon + 0.5, lat: CENTER.lat, zoom: 16, headingDeg: 0, pitchDeg: 45 });
    expect(api.countBy("building-tile")).toBe(afterPan);
  });
});

describe("scenario draft state machine", () => {
  it("refuses to commit with fewer than 3 vertices", () => {
    const api = new ApiClient("", stubTransport(makeWorld()));
    const vm = new ViewModel(api, new RecorderSink(), () => 0);
    vm.draft.add(11.0, 43.0);
    vm.draft.add(11.1, 43.0);
    expect(vm.draft.canCommit).toBe(false);
    expect(() => vm.draft.polygon()).toThrow();
    vm.draft.add(11.1, 43.1);
    expect(vm.draft.canCommit).toBe(true);
    const ring = vm.draft.polygon()[0];
    expect(ring[0]).toEqual(ring.at(-1));
  });
});
