/** Wire types for the relighting service (JSON + base64 PNG transport). */

export const LIGHT_LENGTH = 768;
export const MAP_ROWS = 16;
export const MAP_COLS = 16;

export interface PointLightSpec {
  /** Unit vector from the sphere center. */
  direction: [number, number, number];
  /** Distance beyond the unit sphere, in (0, 1.5]. */
  distance: number;
  /** RGB in [0, 1]. */
  color: [number, number, number];
}

export interface PresetInfo {
  name: string;
  values: number[];
  thumbnail_png_b64: string;
}

export interface RelightResponse {
  relit_png_b64: string;
  predicted_source_light: number[];
  parsing_png_b64?: string;
  timing_ms: number;
}

export interface RelightSequenceResponse {
  frames_png_b64: string[];
  adjacent_rmse: number[];
  timing_ms: number;
}

export interface HealthResponse {
  status: string;
  checkpoint_id: string;
  version: string;
  config: { image_size: number };
}
