// Right-triangulated irregular network over a (2^k + 1)^2 grid, the same
// contract as the engine's tessellator: per-triangle errors are the true
// maximum sample deviation from the triangle's plane, saturated so parents
// dominate children, which keeps extracted meshes conforming.

export interface RtinMesh {
  positions: Float32Array; // x (col), y (row), z triplets
  indices: Uint32Array;
}

interface Tri {
  ax: number;
  ay: number;
  bx: number;
  by: number;
  cx: number;
  cy: number;
}

export class Rtin {
  private readonly errors: Float64Array;

  constructor(
    private readonly values: Float64Array,
    readonly size: number,
  ) {
    const n = size - 1;
    if (size * size !== values.length) throw new Error("grid length must be size^2");
    if ((n & (n - 1)) !== 0 || n < 1) throw new Error(`grid side must be 2^k + 1, got ${size}`);
    this.errors = new Float64Array(size * size);
    this.computeErrors();
  }

  private z(x: number, y: number): number {
    return this.values[y * this.size + x];
  }

  private computeErrors(): void {
    const last = this.size - 1;
    let level: Tri[] = [
      { ax: 0, ay: last, bx: last, by: 0, cx: 0, cy: 0 },
      { ax: last, ay: 0, bx: 0, by: last, cx: last, cy: last },
    ];
    const levels: Tri[][] = [level];
    for (;;) {
      const next: Tri[] = [];
      for (const t of level) {
        if ((t.ax + t.cx) % 2 === 0 && (t.ay + t.cy) % 2 === 0) {
          const mx = (t.ax + t.bx) >> 1;
          const my = (t.ay + t.by) >> 1;
          next.push({ ax: t.cx, ay: t.cy, bx: t.ax, by: t.ay, cx: mx, cy: my });
          next.push({ ax: t.bx, ay: t.by, bx: t.cx, by: t.cy, cx: mx, cy: my });
        }
      }
      if (next.length === 0) break;
      levels.push(next);
      level = next;
    }
    for (let li = levels.length - 1; li >= 0; li--) {
      for (const t of levels[li]) {
        const mx = (t.ax + t.bx) >> 1;
        const my = (t.ay + t.by) >> 1;
        let err = this.triangleDeviation(t);
        if ((t.ax + t.cx) % 2 === 0 && (t.ay + t.cy) % 2 === 0) {
          const lm = ((t.ay + t.cy) >> 1) * this.size + ((t.ax + t.cx) >> 1);
          const rm = ((t.by + t.cy) >> 1) * this.size + ((t.bx + t.cx) >> 1);
          err = Math.max(err, this.errors[lm], this.errors[rm]);
        }
        const mi = my * this.size + mx;
        if (err > this.errors[mi]) this.errors[mi] = err;
      }
    }
  }

  private triangleDeviation(t: Tri): number {
    const x0 = Math.min(t.ax, t.bx, t.cx);
    const x1 = Math.max(t.ax, t.bx, t.cx);
    const y0 = Math.min(t.ay, t.by, t.cy);
    const y1 = Math.max(t.ay, t.by, t.cy);
    const za = this.z(t.ax, t.ay);
    const zb = this.z(t.bx, t.by);
    const zc = this.z(t.cx, t.cy);
    const det = (t.by - t.cy) * (t.ax - t.cx) + (t.cx - t.bx) * (t.ay - t.cy);
    let worst = 0;
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const l1 = ((t.by - t.cy) * (x - t.cx) + (t.cx - t.bx) * (y - t.cy)) / det;
        const l2 = ((t.cy - t.ay) * (x - t.cx) + (t.ax - t.cx) * (y - t.cy)) / det;
        const l3 = 1 - l1 - l2;
        if (l1 < 0 || l2 < 0 || l3 < 0) continue;
        const dev = Math.abs(this.z(x, y) - (l1 * za + l2 * zb + l3 * zc));
        if (dev > worst) worst = dev;
      }
    }
    return worst;
  }

  mesh(maxError: number): RtinMesh {
    const last = this.size - 1;
    const indexOf = new Int32Array(this.size * this.size).fill(-1);
    const positions: number[] = [];
    const indices: number[] = [];

    const vertex = (x: number, y: number): number => {
      const key = y * this.size + x;
      if (indexOf[key] < 0) {
        indexOf[key] = positions.length / 3;
        positions.push(x, y, this.z(x, y));
      }
      return indexOf[key];
    };

    const emit = (ax: number, ay: number, bx: number, by: number, cx: number, cy: number): void => {
      const hasMid = (ax + bx) % 2 === 0 && (ay + by) % 2 === 0;
      if (hasMid) {
        const mx = (ax + bx) >> 1;
        const my = (ay + by) >> 1;
        if (this.errors[my * this.size + mx] > maxError) {
          emit(cx, cy, ax, ay, mx, my);
          emit(bx, by, cx, cy, mx, my);
          return;
        }
      }
      indices.push(vertex(ax, ay), vertex(bx, by), vertex(cx, cy));
    };

    emit(0, last, last, 0, 0, 0);
    emit(last, 0, 0, last, last, last);
    return { positions: new Float32Array(positions), indices: new Uint32Array(indices) };
  }
}
