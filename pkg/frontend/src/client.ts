/**
 * Debounced service client with stale-response discarding.
 *
 * Every edit schedules a POST /relight after the debounce interval;
 * responses are dropped unless they answer the newest request, so the
 * displayed frame always corresponds to the latest edit.
 */

import { ResponseGate } from "./requestGate.js";
import {
  HealthResponse, PresetInfo, RelightResponse, RelightSequenceResponse,
} from "./wire.js";

export const DEBOUNCE_MS = 80;

export interface RelightOptions {
  return_parsing?: boolean;
  allow_resize?: boolean;
}

export class StudioClient {
  private gate = new ResponseGate();
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly debounceMs: number = DEBOUNCE_MS,
  ) {}

  async health(): Promise<HealthResponse> {
    return this.getJson("/health");
  }

  async presets(): Promise<PresetInfo[]> {
    const body = await this.getJson("/presets");
    return body.presets as PresetInfo[];
  }

  /**
   * Debounced relight: collapses rapid edits into one request and invokes
   * `onResult` only for the newest response.
   */
  scheduleRelight(
    imageB64: string,
    light: Float64Array | number[],
    options: RelightOptions,
    onResult: (response: RelightResponse) => void,
    onError: (message: string) => void,
  ): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      const seq = this.gate.next();
      this.relight(imageB64, light, options)
        .then((response) => {
          if (this.gate.accept(seq)) {
            onResult(response);
          }
        })
        .catch((err) => onError(String(err)));
    }, this.debounceMs);
  }

  async relight(
    imageB64: string,
    light: Float64Array | number[],
    options: RelightOptions = {},
  ): Promise<RelightResponse> {
    return this.postJson("/relight", {
      image_b64: imageB64,
      target_light: Array.from(light),
      options,
    });
  }

  async relightSequence(
    framesB64: string[],
    light: Float64Array | number[],
    options: RelightOptions = {},
  ): Promise<RelightSequenceResponse> {
    return this.postJson("/relight-sequence", {
      frames_b64: framesB64,
      lights: Array.from(light),
      options,
    });
  }

  private async getJson(path: string): Promise<any> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) {
      throw new Error(`${path} failed: ${response.status} ${await response.text()}`);
    }
    return response.json();
  }

  private async postJson(path: string, payload: unknown): Promise<any> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        if (body && body.error) detail += `: ${body.error}`;
      } catch {
        /* non-JSON error body */
      }
      throw new Error(`${path} failed (${detail})`);
    }
    return response.json();
  }
}
