import { describe, expect, it } from "vitest";

import { isStable, sparklineGeometry } from "../stability.js";

describe("sparklineGeometry", () => {
  it("flat-zero series draws along the baseline", () => {
    const geom = sparklineGeometry([0, 0, 0], 100, 40);
    expect(geom.maxValue).toBe(0);
    for (const [, y] of geom.points) {
      expect(y).toBe(38); // height - pad
    }
  });

  it("scales the peak to the top of the box", () => {
    const geom = sparklineGeometry([0, 0.5, 1.0], 100, 40);
    const ys = geom.points.map(([, y]) => y);
    expect(Math.min(...ys)).toBe(2); // pad
    expect(geom.maxValue).toBe(1.0);
  });

  it("handles empty series", () => {
    expect(sparklineGeometry([], 100, 40).points).toEqual([]);
  });
});

describe("isStable", () => {
  it("is true exactly for all-zero series", () => {
    expect(isStable([0, 0, 0])).toBe(true);
    expect(isStable([0, 1e-9, 0])).toBe(false);
    expect(isStable([0, 1e-9, 0], 1e-6)).toBe(true);
  });
});
