import { describe, expect, it } from "vitest";

import {
  composeClientLight, projectPointLights, rotateLight, StudioLightState,
} from "../lightComposer.js";
import { LIGHT_LENGTH, PointLightSpec } from "../wire.js";
import goldenCases from "./fixtures/pointlight_golden.json";
import goldenPresets from "./fixtures/presets_golden.json";

const frontKey: number[] = (goldenPresets as Record<string, number[]>)["front-key"];

function baseState(overrides: Partial<StudioLightState> = {}): StudioLightState {
  return {
    presetValues: frontKey,
    rotationColumns: 0,
    pointLights: [],
    blend: 1.0,
    ...overrides,
  };
}

describe("rotateLight", () => {
  it("is identity at rotation 0 and at a full period", () => {
    for (const columns of [0, 16, 32, -16]) {
      const rotated = rotateLight(frontKey, columns);
      expect(Array.from(rotated)).toEqual(frontKey);
    }
  });

  it("moves one lit texel by the expected number of columns", () => {
    const values = new Array(LIGHT_LENGTH).fill(0);
    const row = 5, col = 14, channel = 2;
    values[(row * 16 + col) * 3 + channel] = 3.0;
    const rotated = rotateLight(values, 3);
    const hot: number[] = [];
    rotated.forEach((v, i) => { if (v !== 0) hot.push(i); });
    expect(hot).toEqual([(row * 16 + ((col + 3) % 16)) * 3 + channel]);
  });

  it("roundtrips with its inverse shift", () => {
    const rng = Array.from({ length: LIGHT_LENGTH }, (_, i) => (i * 37 % 101) / 101);
    for (const shift of [1, 5, 11, 15]) {
      expect(Array.from(rotateLight(rotateLight(rng, shift), -shift))).toEqual(rng);
    }
  });

  it("rejects malformed vectors", () => {
    expect(() => rotateLight(new Array(767).fill(0), 1)).toThrow("768");
  });
});

describe("projectPointLights", () => {
  it("matches the server projection on golden cases to 1e-4", () => {
    for (const c of goldenCases as Array<{ lights: PointLightSpec[]; values: number[] }>) {
      const got = projectPointLights(c.lights);
      expect(got.length).toBe(LIGHT_LENGTH);
      for (let i = 0; i < LIGHT_LENGTH; i++) {
        expect(Math.abs(got[i] - c.values[i])).toBeLessThan(1e-4);
      }
    }
  });

  it("superposition doubles a duplicated light", () => {
    const light: PointLightSpec = {
      direction: [0, 1, 0], distance: 0.7, color: [0.9, 0.5, 0.2],
    };
    const one = projectPointLights([light]);
    const two = projectPointLights([light, light]);
    for (let i = 0; i < LIGHT_LENGTH; i++) {
      expect(two[i]).toBeCloseTo(2 * one[i], 10);
    }
  });
});

describe("composeClientLight", () => {
  it("returns the fetched preset at blend 1 rotation 0", () => {
    const composed = composeClientLight(baseState());
    expect(composed.sendable).toBe(true);
    expect(Array.from(composed.values)).toEqual(frontKey);
  });

  it("is a zero vector with send disabled at blend 0 without point lights", () => {
    const composed = composeClientLight(baseState({ blend: 0 }));
    expect(composed.sendable).toBe(false);
    expect(composed.hint).toBeTruthy();
    expect(composed.values.every((v) => v === 0)).toBe(true);
  });

  it("always emits exactly 768 non-negative entries", () => {
    const states = [
      baseState(),
      baseState({ rotationColumns: 7, blend: 0.3 }),
      baseState({
        blend: 0.5,
        pointLights: [{ direction: [0, 0, 1], distance: 0.4, color: [1, 0.2, 0.1] }],
      }),
    ];
    for (const s of states) {
      const composed = composeClientLight(s);
      expect(composed.values.length).toBe(LIGHT_LENGTH);
      expect(composed.values.every((v) => v >= 0)).toBe(true);
    }
  });

  it("mixes preset and point lights by the blend weight", () => {
    const light: PointLightSpec = { direction: [0, 0, 1], distance: 0.5, color: [1, 1, 1] };
    const points = projectPointLights([light]);
    const composed = composeClientLight(baseState({ blend: 0.25, pointLights: [light] }));
    for (let i = 0; i < LIGHT_LENGTH; i++) {
      expect(composed.values[i]).toBeCloseTo(0.25 * frontKey[i] + 0.75 * points[i], 10);
    }
  });

  it("a full rotation sweep returns to the initial vector", () => {
    const initial = composeClientLight(baseState({ rotationColumns: 0 }));
    const wrapped = composeClientLight(baseState({ rotationColumns: 16 }));
    expect(Array.from(wrapped.values)).toEqual(Array.from(initial.values));
  });

  it("rejects a blend outside [0, 1]", () => {
    expect(() => composeClientLight(baseState({ blend: 1.2 }))).toThrow("blend");
  });
});
