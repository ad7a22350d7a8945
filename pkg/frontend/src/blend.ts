// Ground-texture compositing: the orthomap is the base layer and each
// visible heatmap folds over it with the source-over mix.  The same
// equations run per-fragment on the GPU (shader chunk below) and on the CPU
// for tests and canvas fallbacks.

export type Rgba = [number, number, number, number];

export function blendPixel(bg: Rgba, top: Rgba): Rgba {
  const a1 = bg[3];
  const a2 = top[3];
  const mixA = a2 + a1 * (1 - a2);
  if (mixA <= 0) return [0, 0, 0, 0];
  if (a2 === 0) return [...bg];
  const mix = (c1: number, c2: number) => (c2 * a2 + c1 * a1 * (1 - a2)) / mixA;
  return [mix(bg[0], top[0]), mix(bg[1], top[1]), mix(bg[2], top[2]), mixA];
}

/** Left fold from the bottom layer upward; opacity scales each layer's alpha. */
export function compositeStack(layers: { pixel: Rgba; opacity: number }[]): Rgba {
  if (layers.length === 0) throw new Error("empty layer stack");
  const withOpacity = ({ pixel, opacity }: { pixel: Rgba; opacity: number }): Rgba => [
    pixel[0],
    pixel[1],
    pixel[2],
    pixel[3] * opacity,
  ];
  let acc = withOpacity(layers[0]);
  for (const layer of layers.slice(1)) acc = blendPixel(acc, withOpacity(layer));
  return acc;
}

/** GLSL implementation of the same merge, used by the terrain material. */
export const BLEND_SHADER_CHUNK = /* glsl */ `
vec4 mixOver(vec4 bg, vec4 top) {
  float mixA = top.a + bg.a * (1.0 - top.a);
  if (mixA <= 0.0) return vec4(0.0);
  vec3 rgb = (top.rgb * top.a + bg.rgb * bg.a * (1.0 - top.a)) / mixA;
  return vec4(rgb, mixA);
}
`;
