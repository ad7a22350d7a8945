// three.js rendering of the twin: terrain meshes with a composited ground
// texture, per-building extrusions with picking, pins, traffic arrows,
// routes as elevated lines, and a sun-driven directional light.
//
// All geo positics are in a local meter frame centered on the scene origin
// so float32 vertex precision holds at city scale.

import * as THREE from "three";
import { GLTFLoader } from "three/examples/jsm/loaders/GLTFLoader.js";

import { BuildingEntry, ComparedRoutes, TrafficSegment } from "./api";
import { decodeElevationTile, toRtinGrid } from "./codec";
import { ElementRecord } from "./fusion";
import { Rtin } from "./rtin";
import { RenderSink } from "./viewmodel";
import { TileId, tileBounds } from "./tiles";

const METERS_PER_DEG_LAT = 111319.49079327358;

export interface SceneOptions {
  canvas: HTMLCanvasElement;
  originLon: number;
  originLat: number;
  apiBase: string;
  onPick?: (buildingId: string | null) => void;
}

export class TwinScene implements RenderSink {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  readonly renderer: THREE.WebGLRenderer;
  private readonly sunLight = new THREE.DirectionalLight(0xffffff, 2.2);
  private readonly mLon: number;
  private readonly loader = new GLTFLoader();
  private readonly buildingGroups = new Map<string, THREE.Group>();
  private readonly buildingMeshes = new Map<string, THREE.Object3D>();
  private readonly buildingEntries = new Map<string, BuildingEntry>();
  private readonly pinGroups = new Map<string, THREE.Group>();
  private readonly terrainMeshes = new Map<string, THREE.Mesh>();
  private readonly trafficGroup = new THREE.Group();
  private readonly routeGroup = new THREE.Group();
  private readonly entityGroup = new THREE.Group();
  private groundTexture: { heatmap: string | null; opacity: number; frame: number } = {
    heatmap: null,
    opacity: 0.6,
    frame: 0,
  };
  private badges = new Map<string, string>();

  constructor(private readonly opts: SceneOptions) {
    this.mLon = METERS_PER_DEG_LAT * Math.cos((opts.originLat * Math.PI) / 180);
    this.renderer = new THREE.WebGLRenderer({ canvas: opts.canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.camera = new THREE.PerspectiveCamera(55, 1, 1, 100_000);
    this.camera.up.set(0, 0, 1);
    this.scene.background = new THREE.Color(0xbfd7ea);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    this.sunLight.position.set(2000, 2000, 4000);
    this.scene.add(this.sunLight);
    this.scene.add(this.trafficGroup);
    this.scene.add(this.routeGroup);
    this.scene.add(this.entityGroup);
    opts.canvas.addEventListener("pointerdown", (ev) => this.pick(ev));
  }

  toLocal(lon: number, lat: number, elevation = 0): THREE.Vector3 {
    return new THREE.Vector3(
      (lon - this.opts.originLon) * this.mLon,
      (lat - this.opts.originLat) * METERS_PER_DEG_LAT,
      elevation,
    );
  }

  // -- RenderSink -----------------------------------------------------------

  setBuildingTile(key: string, entries: BuildingEntry[]): void {
    this.dropBuildingTile(key);
    const group = new THREE.Group();
    group.name = `buildings:${key}`;
    for (const entry of entries) {
      this.buildingEntries.set(entry.id, entry);
      const url = `${this.opts.apiBase}/models/${entry.model}`;
      this.loader.load(url, (gltf) => {
        const obj = gltf.scene;
        obj.userData.buildingId = entry.id;
        obj.traverse((child) => {
          child.userData.buildingId = entry.id;
          if (child instanceof THREE.Mesh) {
            child.material = new THREE.MeshLambertMaterial({ color: 0xd9cfc3 });
          }
        });
        const pos = this.toLocal(entry.anchor[0], entry.anchor[1], entry.ground_elevation);
        obj.position.copy(pos);
        obj.rotation.x = Math.PI / 2; // glTF is y-up; the scene is z-up
        group.add(obj);
        this.buildingMeshes.set(entry.id, obj);
      });
    }
    this.buildingGroups.set(key, group);
    this.scene.add(group);
  }

  dropBuildingTile(key: string): void {
    const group = this.buildingGroups.get(key);
    if (!group) return;
    group.traverse((child) => {
      const id = child.userData.buildingId as string | undefined;
      if (id) this.buildingMeshes.delete(id);
    });
    this.scene.remove(group);
    this.buildingGroups.delete(key);
  }

  setPinTile(key: string, pins: ElementRecord[]): void {
    this.dropPinTile(key);
    const group = new THREE.Group();
    const geometry = new THREE.ConeGeometry(6, 18, 8);
    for (const pin of pins) {
      const material = new THREE.MeshLambertMaterial({ color: 0x2266cc });
      const cone = new THREE.Mesh(geometry, material);
      const pos = this.toLocal(pin.anchor.lon, pin.anchor.lat, this.groundAt(pin.anchor.lon, pin.anchor.lat) + 12);
      cone.position.copy(pos);
      cone.rotation.x = Math.PI;
      cone.userData.pinId = pin.id;
      group.add(cone);
    }
    this.pinGroups.set(key, group);
    this.scene.add(group);
  }

  dropPinTile(key: string): void {
    const group = this.pinGroups.get(key);
    if (!group) return;
    this.scene.remove(group);
    this.pinGroups.delete(key);
  }

  setTerrainTile(tile: TileId, png: Blob): void {
    void this.buildTerrainTile(tile, png);
  }

  private async buildTerrainTile(tile: TileId, png: Blob): Promise<void> {
    const bitmap = await createImageBitmap(png);
    const canvas = document.createElement("canvas");
    canvas.width = bitmap.width;
    canvas.height = bitmap.height;
    const ctx = canvas.getContext("2d")!;
    ctx.drawImage(bitmap, 0, 0);
    const pixels = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
    const decoded = decodeElevationTile(pixels, bitmap.width);
    const grid = toRtinGrid(decoded);
    const mesh = new Rtin(grid.values, grid.size).mesh(1.5);

    const b = tileBounds(tile);
    const sw = this.toLocal(b.minLon, b.maxLat); // grid row 0 = north edge
    const positions = new Float32Array(mesh.positions.length);
    const uvs = new Float32Array((mesh.positions.length / 3) * 2);
    const n = grid.size - 1;
    const width = (b.maxLon - b.minLon) * this.mLon;
    const height = (b.maxLat - b.minLat) * METERS_PER_DEG_LAT;
    for (let i = 0; i < mesh.positions.length / 3; i++) {
      const gx = mesh.positions[i * 3];
      const gy = mesh.positions[i * 3 + 1];
      const gz = mesh.positions[i * 3 + 2];
      positions[i * 3] = sw.x + (gx / n) * width;
      positions[i * 3 + 1] = sw.y - (gy / n) * height;
      positions[i * 3 + 2] = gz;
      uvs[i * 2] = gx / n;
      uvs[i * 2 + 1] = 1 - gy / n;
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    geometry.setAttribute("uv", new THREE.BufferAttribute(uvs, 2));
    geometry.setIndex(new THREE.BufferAttribute(mesh.indices, 1));
    geometry.computeVertexNormals();
    const material = new THREE.MeshLambertMaterial({ color: 0x9aa06b });
    const obj = new THREE.Mesh(geometry, material);
    obj.name = `terrain:${tile.z}/${tile.x}/${tile.y}`;
    const key = `${tile.z}/${tile.x}/${tile.y}`;
    this.dropTerrainTile(key);
    this.terrainMeshes.set(key, obj);
    this.scene.add(obj);
    this.applyGroundTexture(key, obj, tile);
  }

  dropTerrainTile(key: string): void {
    const existing = this.terrainMeshes.get(key);
    if (!existing) return;
    this.scene.remove(existing);
    this.terrainMeshes.delete(key);
  }

  setGroundTexture(heatmap: string | null, opacity: number, frame: number): void {
    this.groundTexture = { heatmap, opacity, frame };
    for (const [key, mesh] of this.terrainMeshes) {
      const [z, x, y] = key.split("/").map(Number);
      this.applyGroundTexture(key, mesh, { z, x, y });
    }
  }

  private applyGroundTexture(_key: string, mesh: THREE.Mesh, tile: TileId): void {
    const { heatmap, opacity, frame } = this.groundTexture;
    const material = mesh.material as THREE.MeshLambertMaterial;
    if (!heatmap || opacity === 0) {
      material.map = null;
      material.transparent = false;
      material.opacity = 1;
      material.needsUpdate = true;
      return;
    }
    const frameQuery = Number.isFinite(frame) ? `?frame=${frame % 3}` : "";
    const url = `${this.opts.apiBase}/tiles/heatmap/${heatmap}/${tile.z}/${tile.x}/${tile.y}.png${frameQuery}`;
    new THREE.TextureLoader().load(url, (texture) => {
      texture.colorSpace = THREE.SRGBColorSpace;
      material.map = texture;
      material.transparent = true;
      material.opacity = Math.max(0.15, opacity);
      material.needsUpdate = true;
    });
  }

  setTraffic(segments: TrafficSegment[]): void {
    this.trafficGroup.clear();
    for (const seg of segments) {
      const coords = seg.geometry.coordinates;
      const points = coords.map(([lon, lat]) => this.toLocal(lon, lat, this.groundAt(lon, lat) + 6));
      const geometry = new THREE.BufferGeometry().setFromPoints(points);
      const hue = (1 - seg.density) * 0.33; // green free flow, red congested
      const material = new THREE.LineBasicMaterial({ color: new THREE.Color().setHSL(hue, 0.9, 0.5) });
      const line = new THREE.Line(geometry, material);
      line.userData.periodS = seg.period_s;
      line.userData.element = seg.element;
      this.trafficGroup.add(line);
      const arrow = new THREE.Mesh(
        new THREE.ConeGeometry(4, 12, 6),
        new THREE.MeshLambertMaterial({ color: material.color }),
      );
      arrow.userData.path = points;
      arrow.userData.periodS = seg.period_s;
      this.trafficGroup.add(arrow);
    }
  }

  /** Advance animated traffic arrows; period comes from the server. */
  tickTraffic(nowMs: number): void {
    for (const obj of this.trafficGroup.children) {
      const path = obj.userData.path as THREE.Vector3[] | undefined;
      if (!path || path.length < 2) continue;
      const period = (obj.userData.periodS as number) * 1000;
      const t = (nowMs % period) / period;
      const idx = Math.min(path.length - 2, Math.floor(t * (path.length - 1)));
      const frac = t * (path.length - 1) - idx;
      obj.position.lerpVectors(path[idx], path[idx + 1], frac);
    }
  }

  setEntities(): void {
    // entity instances render as simple billboards; omitted from the demo scene
  }

  showRoutes(routes: ComparedRoutes, blockedRing: [number, number][]): void {
    this.clearRoutes();
    const elevated = (coords: [number, number][], lift: number) =>
      coords.map(([lon, lat]) => this.toLocal(lon, lat, this.groundAt(lon, lat) + lift));
    const baseLine = new THREE.Line(
      new THREE.BufferGeometry().setFromPoints(elevated(routes.baseline.geometry.coordinates, 14)),
      new THREE.LineBasicMaterial({ color: 0x7b2ff2 }),
    );
    baseLine.name = "route:baseline";
    const scenarioLine = new THREE.Line(
      new THREE.BufferGeometry().setFromPoints(elevated(routes.scenario.geometry.coordinates, 20)),
      new THREE.LineBasicMaterial({ color: 0xff8800 }),
    );
    scenarioLine.name = "route:scenario";
    const ringPoints = blockedRing.map(([lon, lat]) => this.toLocal(lon, lat, this.groundAt(lon, lat) + 4));
    const shape = new THREE.LineLoop(
      new THREE.BufferGeometry().setFromPoints(ringPoints),
      new THREE.LineBasicMaterial({ color: 0x1c64d8 }),
    );
    shape.name = "route:blocked-area";
    this.routeGroup.add(baseLine, scenarioLine, shape);
  }

  clearRoutes(): void {
    this.routeGroup.clear();
  }

  setSun(azimuthDeg: number, elevationDeg: number): void {
    const az = (azimuthDeg * Math.PI) / 180;
    const el = (elevationDeg * Math.PI) / 180;
    const r = 10_000;
    this.sunLight.position.set(
      r * Math.cos(el) * Math.sin(az),
      r * Math.cos(el) * Math.cos(az),
      r * Math.sin(el),
    );
    this.sunLight.intensity = Math.max(0.05, Math.sin(el)) * 2.5;
  }

  swapBuildingModel(buildingId: string, blobId: string, mesh: ArrayBuffer | null): void {
    const existing = this.buildingMeshes.get(buildingId);
    const entry = this.buildingEntries.get(buildingId);
    if (!existing || !entry || mesh === null) return;
    this.loader.parse(mesh, "", (gltf) => {
      const obj = gltf.scene;
      obj.userData.buildingId = buildingId;
      obj.traverse((child) => {
        child.userData.buildingId = buildingId;
        if (child instanceof THREE.Mesh) {
          child.material = new THREE.MeshLambertMaterial({ color: 0xc9b458 });
        }
      });
      obj.position.copy(existing.position);
      obj.rotation.copy(existing.rotation);
      existing.parent?.add(obj);
      existing.parent?.remove(existing);
      this.buildingMeshes.set(buildingId, obj);
    });
  }

  layerBadge(layer: string, message: string | null): void {
    if (message === null) this.badges.delete(layer);
    else this.badges.set(layer, message);
    const el = document.getElementById("badges");
    if (el) el.textContent = [...this.badges.entries()].map(([k, v]) => `${k}: ${v}`).join(" | ");
  }

  // -- helpers ----------------------------------------------------------------

  private groundAt(lon: number, lat: number): number {
    // cheap vertical raycast against loaded terrain tiles
    const origin = this.toLocal(lon, lat, 10_000);
    const ray = new THREE.Raycaster(origin, new THREE.Vector3(0, 0, -1));
    const hits = ray.intersectObjects([...this.terrainMeshes.values()], false);
    return hits.length > 0 ? hits[0].point.z : 0;
  }

  private pick(ev: PointerEvent): void {
    const rect = this.opts.canvas.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -((ev.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const ray = new THREE.Raycaster();
    ray.setFromCamera(ndc, this.camera);
    const groups = [...this.buildingGroups.values()];
    const hits = ray.intersectObjects(groups, true);
    const id = (hits.find((h) => h.object.userData.buildingId)?.object.userData.buildingId as string) ?? null;
    this.opts.onPick?.(id);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
