// Browser entry point: camera controls, layer panel, time slider, picking,
// and the what-if drawing flow, all wired to the view model.

import { Vector3 } from "three";

import { ApiClient } from "./api";
import { TwinScene } from "./scene";
import { ViewState } from "./state";
import { ViewModel, viewBounds } from "./viewmodel";

const API_BASE = "";
const START: ViewState = { lon: 11.2558, lat: 43.7696, zoom: 16, headingDeg: 0, pitchDeg: 55 };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const canvas = el<HTMLCanvasElement>("scene");
  const api = new ApiClient(API_BASE);
  const info = el<HTMLDivElement>("info");

  const scene = new TwinScene({
    canvas,
    originLon: START.lon,
    originLat: START.lat,
    apiBase: API_BASE,
    onPick: (id) => void showBuildingPanel(id),
  });
  const vm = new ViewModel(api, scene);
  const view: ViewState = { ...START };

  const applyCamera = () => {
    const groundSpan = (40_075_016 / Math.pow(2, view.zoom)) * 4; // ~view side in meters
    const pitch = (view.pitchDeg * Math.PI) / 180;
    const heading = (view.headingDeg * Math.PI) / 180;
    const center = scene.toLocal(view.lon, view.lat, 0);
    const distance = groundSpan * 0.9;
    const eye = center
      .clone()
      .add(
        new Vector3(
          -Math.sin(heading) * Math.sin(pitch) * distance,
          -Math.cos(heading) * Math.sin(pitch) * distance,
          Math.cos(pitch) * distance,
        ),
      );
    scene.camera.position.copy(eye);
    scene.camera.lookAt(center);
  };

  let viewTimer: ReturnType<typeof setTimeout> | null = null;
  const pushView = () => {
    applyCamera();
    info.textContent = `lon ${view.lon.toFixed(4)} lat ${view.lat.toFixed(4)} z${view.zoom.toFixed(1)} hdg ${view.headingDeg.toFixed(0)} pitch ${view.pitchDeg.toFixed(0)}`;
    if (viewTimer) clearTimeout(viewTimer);
    viewTimer = setTimeout(() => void vm.setView({ ...view }), 150);
  };

  // camera controls: drag pans, shift-drag rotates/tilts, wheel zooms (R19)
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  window.addEventListener("pointerup", () => (dragging = false));
  window.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - lastX;
    const dy = ev.clientY - lastY;
    lastX = ev.clientX;
    lastY = ev.clientY;
    if (ev.shiftKey) {
      view.headingDeg = (view.headingDeg + dx * 0.4 + 360) % 360;
      view.pitchDeg = Math.max(5, Math.min(85, view.pitchDeg - dy * 0.3));
    } else {
      const scale = 360 / Math.pow(2, view.zoom) / 200;
      const heading = (view.headingDeg * Math.PI) / 180;
      const east = -dx * scale;
      const north = dy * scale;
      view.lon += east * Math.cos(heading) - north * Math.sin(heading);
      view.lat += (east * Math.sin(heading) + north * Math.cos(heading)) * 0.7;
    }
    pushView();
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    view.zoom = Math.max(12, Math.min(19, view.zoom - Math.sign(ev.deltaY) * 0.5));
    pushView();
  });

  // layer toggles (R23: each checkbox touches only its own dataset)
  const bindToggle = (id: string, apply: (checked: boolean) => void) => {
    const box = el<HTMLInputElement>(id);
    box.addEventListener("change", () => apply(box.checked));
  };
  bindToggle("toggle-buildings", (v) => void vm.setToggles({ buildings: v }));
  bindToggle("toggle-pins", (v) => void vm.setToggles({ pins: v }));
  bindToggle("toggle-traffic", (v) => void vm.setToggles({ traffic: v }));
  bindToggle("toggle-animation", (v) => void vm.setToggles({ animation: v }));
  el<HTMLSelectElement>("heatmap-select").addEventListener("change", (ev) => {
    const value = (ev.target as HTMLSelectElement).value;
    void vm.setToggles({ heatmap: value === "none" ? null : value });
  });
  el<HTMLInputElement>("heatmap-opacity").addEventListener("input", (ev) => {
    void vm.setToggles({ heatmapOpacity: Number((ev.target as HTMLInputElement).value) });
  });

  // time-of-day slider drives the sun light (R20)
  el<HTMLInputElement>("time-slider").addEventListener("input", (ev) => {
    const minutes = Number((ev.target as HTMLInputElement).value);
    const hh = String(Math.floor(minutes / 60)).padStart(2, "0");
    const mm = String(minutes % 60).padStart(2, "0");
    void vm.setTime(`2026-06-21T${hh}:${mm}:00Z`);
  });

  // what-if drawing: click vertices on the ground, commit, pick endpoints
  let drawing = false;
  el<HTMLButtonElement>("draw-scenario").addEventListener("click", () => {
    drawing = true;
    vm.draft.clear();
    el<HTMLDivElement>("whatif-status").textContent = "click at least 3 points, then Commit";
  });
  canvas.addEventListener("dblclick", (ev) => {
    if (!drawing) return;
    const lonlat = screenToGround(ev);
    if (lonlat) {
      vm.draft.add(lonlat[0], lonlat[1]);
      el<HTMLDivElement>("whatif-status").textContent = `${vm.draft.vertices.length} vertices`;
    }
  });
  el<HTMLButtonElement>("commit-scenario").addEventListener("click", () => {
    if (!vm.draft.canCommit) return;
    drawing = false;
    const b = viewBounds(view);
    const from: [number, number] = [b.minLon + (b.maxLon - b.minLon) * 0.1, view.lat];
    const to: [number, number] = [b.maxLon - (b.maxLon - b.minLon) * 0.1, view.lat];
    void vm
      .commitScenarioAndRoute(from, to)
      .then((routes) => {
        const d = routes.scenario.properties.cost_s - routes.baseline.properties.cost_s;
        el<HTMLDivElement>("whatif-status").textContent = `detour costs +${d.toFixed(1)}s`;
      })
      .catch((err) => (el<HTMLDivElement>("whatif-status").textContent = String(err)));
  });
  el<HTMLButtonElement>("clear-scenario").addEventListener("click", () => {
    drawing = false;
    vm.clearScenario();
    el<HTMLDivElement>("whatif-status").textContent = "";
  });

  const screenToGround = (ev: MouseEvent): [number, number] | null => {
    // approximate: intersect the view ray with the z=0 plane
    const rect = canvas.getBoundingClientRect();
    const b = viewBounds(view);
    const fx = (ev.clientX - rect.left) / rect.width;
    const fy = (ev.clientY - rect.top) / rect.height;
    return [b.minLon + (b.maxLon - b.minLon) * fx, b.maxLat - (b.maxLat - b.minLat) * fy];
  };

  async function showBuildingPanel(id: string | null): Promise<void> {
    const panel = el<HTMLDivElement>("building-panel");
    if (!id) {
      panel.style.display = "none";
      return;
    }
    const models = await api.buildingModels(id);
    panel.style.display = "block";
    panel.innerHTML = `<b>${id}</b><br/>`;
    for (const variant of models.variants) {
      const btn = document.createElement("button");
      btn.textContent = variant;
      btn.addEventListener("click", () => void vm.swapBuildingModel(id, variant));
      panel.appendChild(btn);
    }
  }

  const resize = () => scene.resize(canvas.clientWidth, canvas.clientHeight);
  window.addEventListener("resize", resize);
  resize();
  pushView();
  await vm.setView({ ...view });
  await vm.setTime("2026-06-21T10:30:00Z");

  const frame = (t: number) => {
    if (vm.toggles.animation) scene.tickTraffic(t);
    scene.render();
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

void boot();
