// Slippy-map tile arithmetic (OSM convention, y grows southward).

export interface TileId {
  z: number;
  x: number;
  y: number;
}

export interface LonLat {
  lon: number;
  lat: number;
}

export interface Bounds {
  minLon: number;
  minLat: number;
  maxLon: number;
  maxLat: number;
}

export const MERCATOR_MAX_LAT = 85.05112877980659;

export const tileKey = (t: TileId): string => `${t.z}/${t.x}/${t.y}`;

export function lonToMercX(lon: number): number {
  return (lon + 180) / 360;
}

export function latToMercY(lat: number): number {
  const phi = (lat * Math.PI) / 180;
  return (1 - Math.log(Math.tan(phi) + 1 / Math.cos(phi)) / Math.PI) / 2;
}

export function mercXToLon(x: number): number {
  return x * 360 - 180;
}

export function mercYToLat(y: number): number {
  return (Math.atan(Math.sinh(Math.PI * (1 - 2 * y))) * 180) / Math.PI;
}

export function tileForPoint(p: LonLat, z: number): TileId {
  const n = 1 << z;
  const clamp = (v: number) => Math.max(0, Math.min(n - 1, v));
  return {
    z,
    x: clamp(Math.floor(lonToMercX(p.lon) * n)),
    y: clamp(Math.floor(latToMercY(p.lat) * n)),
  };
}

export function parent(t: TileId): TileId {
  if (t.z === 0) throw new Error("the root tile has no parent");
  return { z: t.z - 1, x: t.x >> 1, y: t.y >> 1 };
}

export function children(t: TileId): TileId[] {
  const z = t.z + 1;
  const x = t.x * 2;
  const y = t.y * 2;
  return [
    { z, x, y },
    { z, x: x + 1, y },
    { z, x, y: y + 1 },
    { z, x: x + 1, y: y + 1 },
  ];
}

export function ancestorAt(t: TileId, zTarget: number): TileId {
  if (zTarget > t.z) throw new Error(`ancestor zoom ${zTarget} below tile zoom ${t.z}`);
  const shift = t.z - zTarget;
  return { z: zTarget, x: t.x >> shift, y: t.y >> shift };
}

export function descendantsAt(t: TileId, zTarget: number): TileId[] {
  if (zTarget < t.z) throw new Error(`descendant zoom ${zTarget} above tile zoom ${t.z}`);
  const shift = zTarget - t.z;
  const n = 1 << shift;
  const out: TileId[] = [];
  for (let dx = 0; dx < n; dx++) {
    for (let dy = 0; dy < n; dy++) {
      out.push({ z: zTarget, x: (t.x << shift) + dx, y: (t.y << shift) + dy });
    }
  }
  return out;
}

export function tileBounds(t: TileId): Bounds {
  const n = 1 << t.z;
  return {
    minLon: mercXToLon(t.x / n),
    maxLon: mercXToLon((t.x + 1) / n),
    minLat: mercYToLat((t.y + 1) / n),
    maxLat: mercYToLat(t.y / n),
  };
}

export function contains(t: TileId, p: LonLat): boolean {
  const own = tileForPoint(p, t.z);
  return own.x === t.x && own.y === t.y;
}

/** Tiles of the axis-aligned cover of a ground rectangle at one zoom. */
export function tilesForBounds(b: Bounds, z: number): TileId[] {
  const n = 1 << z;
  const clamp = (v: number) => Math.max(0, Math.min(n - 1, v));
  const x0 = clamp(Math.floor(lonToMercX(b.minLon) * n));
  const x1 = clamp(Math.floor(lonToMercX(b.maxLon) * n));
  const y0 = clamp(Math.floor(latToMercY(Math.min(b.maxLat, MERCATOR_MAX_LAT)) * n));
  const y1 = clamp(Math.floor(latToMercY(Math.max(b.minLat, -MERCATOR_MAX_LAT)) * n));
  const out: TileId[] = [];
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) out.push({ z, x, y });
  }
  return out;
}
