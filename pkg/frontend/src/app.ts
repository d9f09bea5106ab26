/**
 * Lighting studio: load a frame (or a short sequence), steer the lighting
 * live, and watch the relit result plus a stability sparkline.
 *
 * All lighting math happens client-side in lightComposer; the service only
 * ever receives the raw 768-float vector, so what you see is exactly what
 * the CLI would produce for the same vector.
 */

import { StudioClient } from "./client.js";
import { composeClientLight, StudioLightState } from "./lightComposer.js";
import { ResponseGate } from "./requestGate.js";
import { dragRotation, normalize, pickViewDirection, viewToWorld, ViewOrientation, worldToView } from "./sphereWidget.js";
import { sparklineGeometry } from "./stability.js";
import { PresetInfo } from "./wire.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

interface AppState extends StudioLightState {
  presetName: string;
  frames: string[]; // base64 PNGs; [0] drives single-frame mode
  selectedLight: number;
  view: ViewOrientation;
  showParsing: boolean;
  stability: number[];
}

const state: AppState = {
  presetName: "",
  presetValues: new Float64Array(768),
  rotationColumns: 0,
  pointLights: [],
  blend: 1.0,
  frames: [],
  selectedLight: -1,
  view: { yaw: 0, pitch: 0 },
  showParsing: false,
  stability: [],
};

let presets: PresetInfo[] = [];
const client = new StudioClient("");
const sequenceGate = new ResponseGate();

function setHint(text: string): void {
  $("hint").textContent = text;
}

function drawLightGrid(canvas: HTMLCanvasElement, values: ArrayLike<number>): void {
  const ctx = canvas.getContext("2d")!;
  const cell = canvas.width / 16;
  let max = 0;
  for (let i = 0; i < values.length; i++) max = Math.max(max, values[i]);
  const scale = max > 0 ? 255 / max : 0;
  for (let r = 0; r < 16; r++) {
    for (let c = 0; c < 16; c++) {
      const base = (r * 16 + c) * 3;
      ctx.fillStyle = `rgb(${values[base] * scale | 0},${values[base + 1] * scale | 0},${values[base + 2] * scale | 0})`;
      ctx.fillRect(c * cell, r * cell, cell, cell);
    }
  }
}

function drawSphere(): void {
  const canvas = $<HTMLCanvasElement>("sphere");
  const ctx = canvas.getContext("2d")!;
  const half = canvas.width / 2;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#668";
  ctx.beginPath();
  ctx.arc(half, half, half - 2, 0, 2 * Math.PI);
  ctx.stroke();
  state.pointLights.forEach((light, i) => {
    const v = worldToView(light.direction, state.view);
    const x = half + v[0] * (half - 6);
    const y = half - v[1] * (half - 6);
    ctx.fillStyle = v[2] >= 0 ? `rgb(${light.color[0] * 255},${light.color[1] * 255},${light.color[2] * 255})` : "#444";
    ctx.beginPath();
    ctx.arc(x, y, i === state.selectedLight ? 7 : 5, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function refreshRelight(): void {
  drawSphere();
  const composed = composeClientLight(state);
  drawLightGrid($<HTMLCanvasElement>("target-grid"), composed.values);
  const send = $<HTMLButtonElement>("send");
  send.disabled = !composed.sendable || state.frames.length === 0;
  if (!composed.sendable) {
    setHint(composed.hint ?? "");
    return;
  }
  if (state.frames.length === 0) {
    setHint("load a frame first");
    return;
  }
  setHint("");
  if (state.frames.length === 1) {
    client.scheduleRelight(
      state.frames[0], composed.values,
      { return_parsing: state.showParsing, allow_resize: true },
      (response) => {
        $<HTMLImageElement>("relit").src = `data:image/png;base64,${response.relit_png_b64}`;
        drawLightGrid($<HTMLCanvasElement>("predicted-grid"), response.predicted_source_light);
        const parsing = $<HTMLImageElement>("parsing");
        if (response.parsing_png_b64) {
          parsing.src = `data:image/png;base64,${response.parsing_png_b64}`;
          parsing.style.display = "inline";
        } else {
          parsing.style.display = "none";
        }
        $("timing").textContent = `${response.timing_ms.toFixed(1)} ms`;
      },
      setHint,
    );
  } else {
    const seq = sequenceGate.next();
    client
      .relightSequence(state.frames, composed.values, { allow_resize: true })
      .then((response) => {
        if (!sequenceGate.accept(seq)) return;
        $<HTMLImageElement>("relit").src = `data:image/png;base64,${response.frames_png_b64[0]}`;
        state.stability = response.adjacent_rmse;
        drawSparkline();
      })
      .catch((err) => setHint(String(err)));
  }
}

function drawSparkline(): void {
  const canvas = $<HTMLCanvasElement>("sparkline");
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const geom = sparklineGeometry(state.stability, canvas.width, canvas.height);
  ctx.strokeStyle = "#3a6";
  ctx.beginPath();
  geom.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
  ctx.stroke();
  $("stability-max").textContent =
    state.stability.length > 0 ? `max ${geom.maxValue.toExponential(2)}` : "";
}

async function loadFrames(files: FileList): Promise<void> {
  const encoded: string[] = [];
  for (const file of Array.from(files)) {
    const buffer = await file.arrayBuffer();
    let binary = "";
    new Uint8Array(buffer).forEach((b) => (binary += String.fromCharCode(b)));
    encoded.push(btoa(binary));
  }
  state.frames = encoded;
  state.stability = [];
  drawSparkline();
  refreshRelight();
}

function selectPreset(name: string): void {
  const preset = presets.find((p) => p.name === name);
  if (!preset) return;
  state.presetName = name;
  state.presetValues = Float64Array.from(preset.values);
  refreshRelight();
}

function bindControls(): void {
  $<HTMLSelectElement>("preset").addEventListener("change", (e) =>
    selectPreset((e.target as HTMLSelectElement).value));

  const rotation = $<HTMLInputElement>("rotation");
  rotation.addEventListener("input", () => {
    state.rotationColumns = Number(rotation.value) % 16;
    $("rotation-label").textContent = `${state.rotationColumns}/16`;
    refreshRelight();
  });

  const blend = $<HTMLInputElement>("blend");
  blend.addEventListener("input", () => {
    state.blend = Number(blend.value);
    $("blend-label").textContent = state.blend.toFixed(2);
    refreshRelight();
  });

  const distance = $<HTMLInputElement>("distance");
  distance.addEventListener("input", () => {
    if (state.selectedLight >= 0) {
      state.pointLights[state.selectedLight].distance = Number(distance.value);
      refreshRelight();
    }
  });

  const color = $<HTMLInputElement>("color");
  color.addEventListener("input", () => {
    if (state.selectedLight >= 0) {
      const hex = color.value;
      state.pointLights[state.selectedLight].color = [
        parseInt(hex.slice(1, 3), 16) / 255,
        parseInt(hex.slice(3, 5), 16) / 255,
        parseInt(hex.slice(5, 7), 16) / 255,
      ];
      refreshRelight();
    }
  });

  $("add-light").addEventListener("click", () => {
    const dir = viewToWorld([0, 0, 1], state.view);
    state.pointLights.push({
      direction: normalize(dir) as [number, number, number],
      distance: Number(distance.value) || 0.75,
      color: [1, 1, 1],
    });
    state.selectedLight = state.pointLights.length - 1;
    refreshRelight();
  });

  $("remove-light").addEventListener("click", () => {
    if (state.selectedLight >= 0) {
      state.pointLights.splice(state.selectedLight, 1);
      state.selectedLight = state.pointLights.length - 1;
      refreshRelight();
    }
  });

  $<HTMLInputElement>("show-parsing").addEventListener("change", (e) => {
    state.showParsing = (e.target as HTMLInputElement).checked;
    refreshRelight();
  });

  $<HTMLInputElement>("frame-input").addEventListener("change", (e) => {
    const files = (e.target as HTMLInputElement).files;
    if (files && files.length > 0) void loadFrames(files);
  });

  $("send").addEventListener("click", refreshRelight);

  const sphere = $<HTMLCanvasElement>("sphere");
  let dragging: "light" | "view" | null = null;
  let last: [number, number] = [0, 0];
  const toNorm = (e: MouseEvent): [number, number] => {
    const rect = sphere.getBoundingClientRect();
    return [
      ((e.clientX - rect.left) / rect.width) * 2 - 1,
      -(((e.clientY - rect.top) / rect.height) * 2 - 1),
    ];
  };
  sphere.addEventListener("mousedown", (e) => {
    dragging = e.shiftKey || state.selectedLight < 0 ? "view" : "light";
    last = [e.clientX, e.clientY];
    const [nx, ny] = toNorm(e);
    if (dragging === "light") {
      const picked = pickViewDirection(nx, ny);
      if (picked) {
        state.pointLights[state.selectedLight].direction =
          normalize(viewToWorld(picked, state.view)) as [number, number, number];
        refreshRelight();
      }
    }
  });
  sphere.addEventListener("mousemove", (e) => {
    if (!dragging) return;
    if (dragging === "view") {
      state.view = dragRotation(state.view, e.clientX - last[0], e.clientY - last[1],
                                sphere.width / 2);
      last = [e.clientX, e.clientY];
      drawSphere();
    } else {
      const [nx, ny] = toNorm(e);
      const picked = pickViewDirection(nx, ny);
      if (picked && state.selectedLight >= 0) {
        state.pointLights[state.selectedLight].direction =
          normalize(viewToWorld(picked, state.view)) as [number, number, number];
        refreshRelight();
      }
    }
  });
  window.addEventListener("mouseup", () => (dragging = null));
}

async function boot(): Promise<void> {
  bindControls();
  try {
    const health = await client.health();
    $("status").textContent =
      `service ok - checkpoint ${health.checkpoint_id} - ${health.config.image_size}px`;
    presets = await client.presets();
    const select = $<HTMLSelectElement>("preset");
    presets.forEach((p) => {
      const option = document.createElement("option");
      option.value = p.name;
      option.textContent = p.name;
      select.appendChild(option);
    });
    if (presets.length > 0) selectPreset(presets[0].name);
  } catch (err) {
    $("status").textContent = `service unreachable: ${err}`;
  }
  drawSphere();
}

void boot();

export { state, refreshRelight }; // exposed for debugging in the console
