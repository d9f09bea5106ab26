/**
 * Math for the orthographic sphere direction picker.
 *
 * The widget shows the lighting sphere under an orthographic camera. A
 * click at normalized canvas coordinates picks the front-hemisphere
 * direction in view space; dragging with the rotate modifier spins the
 * view (yaw around +y, pitch around +x), so every world direction is
 * reachable. Distance is a separate slider: a 2D drag has no third
 * degree of freedom.
 */

export type Vec3 = [number, number, number];

export interface ViewOrientation {
  yaw: number;
  pitch: number;
}

export function rotateY(v: Vec3, angle: number): Vec3 {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  return [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]];
}

export function rotateX(v: Vec3, angle: number): Vec3 {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  return [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]];
}

/**
 * Normalized canvas coords (x right, y up, both in [-1, 1]) to a unit
 * direction on the visible hemisphere, or null outside the disc.
 */
export function pickViewDirection(x: number, y: number): Vec3 | null {
  const rr = x * x + y * y;
  if (rr > 1) {
    return null;
  }
  return [x, y, Math.sqrt(1 - rr)];
}

/** View-space direction to world space under the current orientation. */
export function viewToWorld(dir: Vec3, view: ViewOrientation): Vec3 {
  return rotateY(rotateX(dir, view.pitch), view.yaw);
}

/** World-space direction to view space (inverse of viewToWorld). */
export function worldToView(dir: Vec3, view: ViewOrientation): Vec3 {
  return rotateX(rotateY(dir, -view.yaw), -view.pitch);
}

export function dragRotation(view: ViewOrientation, dxPixels: number,
                             dyPixels: number, radiusPixels: number): ViewOrientation {
  const k = Math.PI / (2 * radiusPixels);
  const pitch = Math.max(-Math.PI / 2, Math.min(Math.PI / 2, view.pitch + dyPixels * k));
  return { yaw: view.yaw + dxPixels * k, pitch };
}

export function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (n === 0) {
    throw new Error("cannot normalize the zero vector");
  }
  return [v[0] / n, v[1] / n, v[2] / n];
}
