// Terrain tile decoding: the RGB channels pack floor(100000 + 10v), so one
// channel step is 0.1 m.  (0, 0, 0) is the nodata sentinel.

export interface ElevationTile {
  size: number;
  values: Float32Array; // row-major, NaN where nodata
}

export function decodeElevation(r: number, g: number, b: number): number {
  return (r * 65536 + g * 256 + b - 100000) / 10;
}

/** Decode RGBA pixel data (canvas ImageData layout) into elevations. */
export function decodeElevationTile(pixels: Uint8ClampedArray | Uint8Array, size: number): ElevationTile {
  const values = new Float32Array(size * size);
  for (let i = 0; i < size * size; i++) {
    const r = pixels[i * 4];
    const g = pixels[i * 4 + 1];
    const b = pixels[i * 4 + 2];
    values[i] = r === 0 && g === 0 && b === 0 ? NaN : decodeElevation(r, g, b);
  }
  return { size, values };
}

/**
 * Resample a decoded tile onto the (2^k + 1)-sided lattice the tessellator
 * wants; edge samples are duplicated from the last pixel row/column and
 * nodata holes are filled with the tile's minimum so meshing stays total.
 */
export function toRtinGrid(tile: ElevationTile): { size: number; values: Float64Array } {
  const n = tile.size;
  const size = n + 1;
  const values = new Float64Array(size * size);
  let min = Infinity;
  for (const v of tile.values) if (!Number.isNaN(v) && v < min) min = v;
  if (min === Infinity) min = 0;
  for (let y = 0; y < size; y++) {
    const sy = Math.min(y, n - 1);
    for (let x = 0; x < size; x++) {
      const sx = Math.min(x, n - 1);
      const v = tile.values[sy * n + sx];
      values[y * size + x] = Number.isNaN(v) ? min : v;
    }
  }
  return { size, values };
}
