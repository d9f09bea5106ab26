"""Shared single-image inference path for the CLI and the HTTP service.

Keeping PNG decode, relight, and PNG encode in one place guarantees the
two front ends produce pixel-identical results for identical inputs.
"""

from __future__ import annotations

import io

import numpy as np
import torch
from PIL import Image

from .errors import ShapeError
from .lighting import LightMap
from .model import RelightModel, image_to_tensor, light_to_tensor


def decode_image_bytes(data: bytes) -> np.ndarray:
    """PNG/JPEG bytes -> (H, W, 3) float32 in [0, 1]."""
    with Image.open(io.BytesIO(data)) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image_bytes(fh.read())


def encode_image_png(image: np.ndarray) -> bytes:
    """(H, W, C) float in [0, 1] or uint8 -> PNG bytes."""
    if image.dtype != np.uint8:
        image = np.clip(np.asarray(image, dtype=np.float64) * 255.0 + 0.5,
                        0, 255).astype(np.uint8)
    mode = "L" if image.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(image, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    u8 = np.clip(image * 255.0 + 0.5, 0, 255).astype(np.uint8)
    with Image.fromarray(u8, mode="RGB") as img:
        small = img.resize((size, size), Image.BILINEAR)
        return np.asarray(small, dtype=np.float32) / 255.0


def relight_arrays(model: RelightModel, image: np.ndarray, light: LightMap):
    """Run one relighting pass.

    Returns (relit uint8 HWC, predicted source light as float32 (16,16,3),
    parsing uint8 HWC). The uint8 quantization here is the single place
    where display pixels are produced.
    """
    size = model.config.image_size
    if image.shape != (size, size, 3):
        raise ShapeError(
            f"model expects {size}x{size}x3 input, got {image.shape}")
    with torch.no_grad():
        relit, light_pred, parsing = model.relight(
            image_to_tensor(image), light_to_tensor(light.values))
    relit_u8 = np.clip(relit[0].permute(1, 2, 0).numpy() * 255.0 + 0.5,
                       0, 255).astype(np.uint8)
    parsing_u8 = np.clip(parsing[0].permute(1, 2, 0).numpy() * 255.0 + 0.5,
                         0, 255).astype(np.uint8)
    pred = light_pred[0].numpy().astype(np.float32)
    return relit_u8, pred, parsing_u8
