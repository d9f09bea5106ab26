/**
 * Client-side lighting math, kept texel-for-texel compatible with the server.
 *
 * A lighting condition is a row-major (latitude, longitude, RGB) grid of
 * 16x16x3 non-negative floats. Texel (r, c) is centered at
 * theta = pi*(r+0.5)/16, phi = 2*pi*(c+0.5)/16 with direction
 * (sin(theta)cos(phi), sin(theta)sin(phi), cos(theta)). The studio composes
 * blend * rotated_preset + (1 - blend) * point_light_map and ships the raw
 * 768-float vector, so the server never needs to re-derive slider state.
 */

import { LIGHT_LENGTH, MAP_COLS, MAP_ROWS, PointLightSpec } from "./wire.js";

export interface StudioLightState {
  /** Preset vector as fetched from GET /presets (length 768). */
  presetValues: number[] | Float64Array;
  /** Cyclic longitude shift, 0..15. */
  rotationColumns: number;
  pointLights: PointLightSpec[];
  /** Mixing weight beta in [0, 1]: 1 = preset only, 0 = point lights only. */
  blend: number;
}

export interface ComposedLight {
  values: Float64Array;
  sendable: boolean;
  hint?: string;
}

const TEXEL_DIRECTIONS: Float64Array = (() => {
  const dirs = new Float64Array(MAP_ROWS * MAP_COLS * 3);
  for (let r = 0; r < MAP_ROWS; r++) {
    const theta = (Math.PI * (r + 0.5)) / MAP_ROWS;
    for (let c = 0; c < MAP_COLS; c++) {
      const phi = (2 * Math.PI * (c + 0.5)) / MAP_COLS;
      const base = (r * MAP_COLS + c) * 3;
      dirs[base] = Math.sin(theta) * Math.cos(phi);
      dirs[base + 1] = Math.sin(theta) * Math.sin(phi);
      dirs[base + 2] = Math.cos(theta);
    }
  }
  return dirs;
})();

export function texelDirection(row: number, col: number): [number, number, number] {
  const base = (row * MAP_COLS + col) * 3;
  return [TEXEL_DIRECTIONS[base], TEXEL_DIRECTIONS[base + 1], TEXEL_DIRECTIONS[base + 2]];
}

/** Cyclic longitude shift by `columns mod 16`; latitude rows untouched. */
export function rotateLight(values: ArrayLike<number>, columns: number): Float64Array {
  if (values.length !== LIGHT_LENGTH) {
    throw new Error(`light vector must hold ${LIGHT_LENGTH} floats, got ${values.length}`);
  }
  const shift = ((columns % MAP_COLS) + MAP_COLS) % MAP_COLS;
  const out = new Float64Array(LIGHT_LENGTH);
  for (let r = 0; r < MAP_ROWS; r++) {
    for (let c = 0; c < MAP_COLS; c++) {
      const src = (r * MAP_COLS + ((c - shift + MAP_COLS) % MAP_COLS)) * 3;
      const dst = (r * MAP_COLS + c) * 3;
      out[dst] = values[src];
      out[dst + 1] = values[src + 1];
      out[dst + 2] = values[src + 2];
    }
  }
  return out;
}

/**
 * Clamped-cosine projection of point sources onto the texel grid with
 * inverse-square falloff, mirroring the server's map synthesis.
 */
export function projectPointLights(lights: PointLightSpec[]): Float64Array {
  const out = new Float64Array(LIGHT_LENGTH);
  for (const light of lights) {
    const [dx, dy, dz] = light.direction;
    const norm = Math.hypot(dx, dy, dz);
    if (norm === 0) {
      throw new Error("point light direction must be non-zero");
    }
    const falloff = 1.0 / ((1.0 + light.distance) * (1.0 + light.distance));
    for (let t = 0; t < MAP_ROWS * MAP_COLS; t++) {
      const lobe = Math.max(
        0,
        (TEXEL_DIRECTIONS[t * 3] * dx +
          TEXEL_DIRECTIONS[t * 3 + 1] * dy +
          TEXEL_DIRECTIONS[t * 3 + 2] * dz) / norm,
      );
      if (lobe === 0) continue;
      out[t * 3] += lobe * light.color[0] * falloff;
      out[t * 3 + 1] += lobe * light.color[1] * falloff;
      out[t * 3 + 2] += lobe * light.color[2] * falloff;
    }
  }
  return out;
}

/**
 * blend * rotated_preset + (1 - blend) * point_light_map.
 *
 * Always returns a length-768 non-negative vector; `sendable` is false when
 * the composition is identically zero (nothing to relight with).
 */
export function composeClientLight(state: StudioLightState): ComposedLight {
  if (state.blend < 0 || state.blend > 1) {
    throw new Error(`blend must lie in [0, 1], got ${state.blend}`);
  }
  const preset = rotateLight(state.presetValues, state.rotationColumns);
  const points = projectPointLights(state.pointLights);
  const values = new Float64Array(LIGHT_LENGTH);
  let maxValue = 0;
  for (let i = 0; i < LIGHT_LENGTH; i++) {
    const v = state.blend * preset[i] + (1 - state.blend) * points[i];
    values[i] = v < 0 ? 0 : v;
    if (values[i] > maxValue) maxValue = values[i];
  }
  if (maxValue === 0) {
    return {
      values,
      sendable: false,
      hint: "composed light is all zero: raise the blend toward the preset or add a point light",
    };
  }
  return { values, sendable: true };
}
