// Shared view-state types and the what-if drawing state machine.

export interface LayerToggles {
  buildings: boolean;
  terrain: boolean;
  pins: boolean;
  traffic: boolean;
  entities: boolean;
  heatmap: string | null; // active heatmap name
  heatmapOpacity: number;
  animation: boolean;
}

export const defaultToggles = (): LayerToggles => ({
  buildings: true,
  terrain: true,
  pins: true,
  traffic: false,
  entities: true,
  heatmap: null,
  heatmapOpacity: 0.6,
  animation: true,
});

export interface ViewState {
  lon: number;
  lat: number;
  zoom: number;
  headingDeg: number;
  pitchDeg: number;
}

/** Polygon drawing for what-if scenarios; commits only with >= 3 vertices. */
export class ScenarioDraft {
  vertices: [number, number][] = [];
  committedId: string | null = null;

  add(lon: number, lat: number): void {
    this.vertices.push([lon, lat]);
  }

  get canCommit(): boolean {
    return this.vertices.length >= 3;
  }

  polygon(): [number, number][][] {
    if (!this.canCommit) throw new Error("scenario polygon needs at least 3 vertices");
    const ring = [...this.vertices, this.vertices[0]];
    return [ring];
  }

  commit(id: string): void {
    if (!this.canCommit) throw new Error("scenario polygon needs at least 3 vertices");
    this.committedId = id;
  }

  clear(): void {
    this.vertices = [];
    this.committedId = null;
  }
}
