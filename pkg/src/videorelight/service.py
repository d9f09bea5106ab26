"""HTTP inference service consumed by the lighting-studio UI.

Endpoints:

* ``POST /relight``          one frame -> relit frame (+ predicted light, parsing)
* ``POST /relight-sequence`` frame list -> relit frames + adjacent-frame RMSE
* ``GET  /presets``          named light maps with thumbnails
* ``GET  /health``           checkpoint id, model config, version
* ``POST /debug/pointlight-map``  server-side point-light projection (UI parity)

Payloads are JSON with base64 PNGs (``POST /relight`` also accepts
multipart with an ``image`` file and a ``light`` JSON field). Light maps
travel as raw row-major 768-float vectors, the same order as the .f32
file format. Status codes: 400 malformed payload, 413 oversize image,
422 wrong light-vector length. The loaded model is immutable, so
identical requests yield identical responses and concurrent requests
are safe.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .errors import RelightError
from .inference import decode_image_bytes, encode_image_png, relight_arrays, resize_image
from .lighting import (LightMap, PointLight, build_preset_library,
                       project_point_lights, rotate_light)
from .model import load_checkpoint

MAX_BODY_BYTES = 32 * 1024 * 1024
MAX_IMAGE_SIDE = 2048
LIGHT_LENGTH = 768


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _bad(message: str) -> ApiError:
    return ApiError(400, message)


def _decode_b64(field: str, text) -> bytes:
    if not isinstance(text, str):
        raise _bad(f"field {field!r} must be a base64 string")
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _bad(f"field {field!r} is not valid base64: {exc}")


def _parse_image(field: str, data: bytes, size: int, allow_resize: bool) -> np.ndarray:
    if len(data) > MAX_BODY_BYTES:
        raise ApiError(413, f"{field}: encoded image exceeds {MAX_BODY_BYTES} bytes")
    try:
        image = decode_image_bytes(data)
    except Exception as exc:
        raise _bad(f"{field}: cannot decode image: {exc}")
    h, w = image.shape[:2]
    if max(h, w) > MAX_IMAGE_SIDE:
        raise ApiError(413, f"{field}: image {w}x{h} exceeds {MAX_IMAGE_SIDE} px")
    if (h, w) != (size, size):
        if not allow_resize:
            raise _bad(f"{field}: image is {w}x{h}, model expects {size}x{size} "
                       f"(set options.allow_resize to resize server-side)")
        image = resize_image(image, size)
    return image


def _parse_point_lights(items) -> list:
    lights = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise _bad(f"point_lights[{i}] must be an object")
        try:
            direction = np.asarray(item["direction"], dtype=np.float64)
            norm = np.linalg.norm(direction)
            if norm == 0:
                raise ValueError("zero direction")
            lights.append(PointLight(direction / norm,
                                     float(item["distance"]),
                                     np.asarray(item["color"], dtype=np.float64)))
        except RelightError as exc:
            raise _bad(f"point_lights[{i}]: {exc}")
        except (KeyError, TypeError, ValueError) as exc:
            raise _bad(f"point_lights[{i}]: {exc}")
    return lights


def _parse_light(payload, presets: dict) -> LightMap:
    if payload is None:
        raise _bad("missing target_light")
    if isinstance(payload, list):
        if len(payload) != LIGHT_LENGTH:
            raise ApiError(422, f"light vector must hold exactly {LIGHT_LENGTH} "
                                f"floats, got {len(payload)}")
        try:
            values = np.asarray(payload, dtype=np.float32).reshape(16, 16, 3)
            return LightMap(values)
        except (TypeError, ValueError, RelightError) as exc:
            raise _bad(f"bad light vector: {exc}")
    if isinstance(payload, dict):
        blend = payload.get("blend")
        base = None
        if "preset" in payload:
            name = payload["preset"]
            if name not in presets:
                raise _bad(f"unknown preset {name!r}")
            base = rotate_light(presets[name], int(payload.get("rotation", 0)))
        points = _parse_point_lights(payload.get("point_lights", []))
        point_map = project_point_lights(points) if points else None
        if base is None and point_map is None:
            raise _bad("target_light object needs a preset and/or point_lights")
        if base is None:
            return point_map
        if point_map is None:
            return base
        if blend is None:
            raise _bad("provide blend in [0, 1] when mixing a preset with point_lights")
        blend = float(blend)
        if not (0.0 <= blend <= 1.0):
            raise _bad("blend must lie in [0, 1]")
        return LightMap(blend * base.values.astype(np.float64)
                        + (1.0 - blend) * point_map.values.astype(np.float64))
    raise _bad("target_light must be a 768-float list or a composition object")


def _light_thumbnail(light: LightMap, upscale: int = 8) -> str:
    u8 = np.clip(light.values * 255.0 + 0.5, 0, 255).astype(np.uint8)
    big = np.repeat(np.repeat(u8, upscale, axis=0), upscale, axis=1)
    return base64.b64encode(encode_image_png(big)).decode()


async def _read_request(request: Request, size: int):
    """Returns (image_array or list, light payload, options) for both
    JSON+base64 and multipart requests."""
    content_type = request.headers.get("content-type", "")
    if content_type.startswith("multipart/"):
        form = await request.form()
        upload = form.get("image")
        if upload is None:
            raise _bad("multipart request needs an 'image' file field")
        data = await upload.read()
        try:
            light_payload = json.loads(form.get("light", "null"))
        except json.JSONDecodeError as exc:
            raise _bad(f"light field is not valid JSON: {exc}")
        try:
            options = json.loads(form.get("options", "{}"))
        except json.JSONDecodeError as exc:
            raise _bad(f"options field is not valid JSON: {exc}")
        allow = bool(options.get("allow_resize", False))
        return _parse_image("image", data, size, allow), light_payload, options
    body = await request.body()
    if len(body) > MAX_BODY_BYTES:
        raise ApiError(413, "request body too large")
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise _bad(f"request body is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise _bad("request body must be a JSON object")
    options = payload.get("options", {}) or {}
    allow = bool(options.get("allow_resize", False))
    if "image_b64" not in payload:
        raise _bad("missing field 'image_b64'")
    image = _parse_image("image_b64", _decode_b64("image_b64", payload["image_b64"]),
                         size, allow)
    return image, payload.get("target_light"), options


def create_app(model, presets: dict | None = None) -> FastAPI:
    model = model.eval_mode()
    presets = presets if presets is not None else build_preset_library()
    size = model.config.image_size
    app = FastAPI(title="portrait relighting service")

    @app.exception_handler(ApiError)
    async def _api_error(_, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "checkpoint_id": model.meta.get("checkpoint_id", model.checkpoint_id),
            "version": __version__,
            "config": {
                "image_size": size,
                "depth": model.config.depth,
                "base_channels": model.config.base_channels,
                "structure_dim": model.config.structure_dim,
                "sem_channels": model.config.sem_channels,
            },
            "meta": {k: v for k, v in model.meta.items() if k != "checkpoint_id"},
        }

    @app.get("/presets")
    def list_presets():
        return {"presets": [
            {"name": name,
             "values": [float(v) for v in light.flat()],
             "thumbnail_png_b64": _light_thumbnail(light)}
            for name, light in presets.items()]}

    @app.post("/relight")
    async def relight(request: Request):
        started = time.perf_counter()
        image, light_payload, options = await _read_request(request, size)
        light = _parse_light(light_payload, presets)
        relit_u8, pred_light, parsing_u8 = relight_arrays(model, image, light)
        response = {
            "relit_png_b64": base64.b64encode(encode_image_png(relit_u8)).decode(),
            "predicted_source_light": [float(v) for v in pred_light.reshape(-1)],
            "timing_ms": (time.perf_counter() - started) * 1000.0,
        }
        if options.get("return_parsing"):
            response["parsing_png_b64"] = base64.b64encode(
                encode_image_png(parsing_u8)).decode()
        return response

    @app.post("/relight-sequence")
    async def relight_sequence(request: Request):
        started = time.perf_counter()
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            raise ApiError(413, "request body too large")
        try:
            payload = json.loads(body)
        except json.JSONDecodeError as exc:
            raise _bad(f"request body is not valid JSON: {exc}")
        frames_b64 = payload.get("frames_b64")
        if not isinstance(frames_b64, list) or not frames_b64:
            raise _bad("frames_b64 must be a non-empty list")
        options = payload.get("options", {}) or {}
        allow = bool(options.get("allow_resize", False))
        frames = [_parse_image(f"frames_b64[{i}]", _decode_b64(f"frames_b64[{i}]", fb),
                               size, allow)
                  for i, fb in enumerate(frames_b64)]
        lights_payload = payload.get("lights")
        if isinstance(lights_payload, list) and lights_payload \
                and isinstance(lights_payload[0], list):
            if len(lights_payload) != len(frames):
                raise _bad(f"got {len(lights_payload)} lights for {len(frames)} frames")
            lights = [_parse_light(lp, presets) for lp in lights_payload]
        else:
            lights = [_parse_light(lights_payload, presets)] * len(frames)

        outputs = []
        floats = []
        for image, light in zip(frames, lights):
            relit_u8, _, _ = relight_arrays(model, image, light)
            outputs.append(base64.b64encode(encode_image_png(relit_u8)).decode())
            floats.append(relit_u8.astype(np.float64) / 255.0)
        rmse = [float(np.sqrt(np.mean((floats[i + 1] - floats[i]) ** 2)))
                for i in range(len(floats) - 1)]
        return {"frames_png_b64": outputs, "adjacent_rmse": rmse,
                "timing_ms": (time.perf_counter() - started) * 1000.0}

    @app.post("/debug/pointlight-map")
    async def pointlight_map(request: Request):
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise _bad(f"request body is not valid JSON: {exc}")
        lights = _parse_point_lights(payload.get("point_lights", []))
        if not lights:
            raise _bad("point_lights must be non-empty")
        return {"values": [float(v) for v in project_point_lights(lights).flat()]}

    return app


def app_from_env() -> FastAPI:
    """Build the app from the RELIGHT_CHECKPOINT environment variable."""
    path = os.environ.get("RELIGHT_CHECKPOINT")
    if not path:
        raise RelightError("set RELIGHT_CHECKPOINT to a checkpoint path")
    return create_app(load_checkpoint(path, with_critic=False))
