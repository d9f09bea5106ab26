/** Helpers for the adjacent-frame-RMSE stability sparkline. */

export interface SparklineGeometry {
  /** Polyline points in pixel space, left to right. */
  points: Array<[number, number]>;
  maxValue: number;
}

/**
 * Lay a series out in a width x height box. A flat-zero series maps to the
 * baseline, so a frozen-lighting sequence draws as a flat line at 0.
 */
export function sparklineGeometry(
  series: number[], width: number, height: number, pad = 2,
): SparklineGeometry {
  if (series.length === 0) {
    return { points: [], maxValue: 0 };
  }
  const maxValue = Math.max(...series, 0);
  const scale = maxValue > 0 ? (height - 2 * pad) / maxValue : 0;
  const step = series.length > 1 ? (width - 2 * pad) / (series.length - 1) : 0;
  const points = series.map(
    (v, i) => [pad + i * step, height - pad - v * scale] as [number, number],
  );
  return { points, maxValue };
}

export function isStable(series: number[], tolerance = 0): boolean {
  return series.every((v) => v <= tolerance);
}
