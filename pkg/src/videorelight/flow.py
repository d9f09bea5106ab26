"""Optical-flow warping for the temporal-consistency supervision.

Warping is gather-style: ``out(p) = image(p + flow(p))`` with bilinear
interpolation, and a validity mask that zeroes pixels whose sample point
falls outside the frame. ``warp`` runs on numpy arrays through the
kernel backends; ``warp_torch`` is the differentiable twin used inside
the training losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import torch

from . import kernels
from .errors import ShapeError


@dataclass
class FlowField:
    """Pixel displacement field plus the warp direction it implements.

    ``forward`` fields produce the next frame's alignment from the current
    frame; ``backward`` fields pull the next frame onto the current one.
    """

    vectors: np.ndarray  # (H, W, 2) float32, x then y displacement
    direction: Literal["forward", "backward"] = "forward"

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 3 or self.vectors.shape[-1] != 2:
            raise ShapeError(f"flow must be (H, W, 2), got {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ShapeError("flow contains non-finite entries")


def _vectors(flow) -> np.ndarray:
    return flow.vectors if isinstance(flow, FlowField) else np.asarray(flow)


def warp(image: np.ndarray, flow) -> tuple[np.ndarray, np.ndarray]:
    """Warp ``image`` (H, W[, C]) by ``flow``; returns (warped, validity)."""
    vec = _vectors(flow)
    if vec.shape[:2] != image.shape[:2]:
        raise ShapeError(
            f"flow grid {vec.shape[:2]} does not match image {image.shape[:2]}")
    return kernels.bilinear_warp(image, vec)


def warp_torch(image: torch.Tensor, flow: torch.Tensor):
    """Differentiable gather warp.

    image: (B, C, H, W); flow: (B, H, W, 2) in pixels. Returns
    (warped (B, C, H, W), validity (B, 1, H, W)). Exactly linear in the
    image; invalid samples are zeroed.
    """
    if image.ndim != 4 or flow.ndim != 4 or flow.shape[-1] != 2:
        raise ShapeError("warp_torch expects image (B,C,H,W) and flow (B,H,W,2)")
    b, c, h, w = image.shape
    if flow.shape[:3] != (b, h, w):
        raise ShapeError(f"flow {tuple(flow.shape)} does not match image {tuple(image.shape)}")

    device, dtype = image.device, image.dtype
    cols = torch.arange(w, device=device, dtype=dtype).view(1, 1, w)
    rows = torch.arange(h, device=device, dtype=dtype).view(1, h, 1)
    sx = cols + flow[..., 0]
    sy = rows + flow[..., 1]
    valid = ((sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)).to(dtype)

    sxc = sx.clamp(0, w - 1)
    syc = sy.clamp(0, h - 1)
    x0 = sxc.floor().long()
    y0 = syc.floor().long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)
    fx = (sxc - x0.to(dtype)).unsqueeze(1)
    fy = (syc - y0.to(dtype)).unsqueeze(1)

    flat = image.reshape(b, c, h * w)

    def gather(yy, xx):
        idx = (yy * w + xx).reshape(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).reshape(b, c, h, w)

    top = gather(y0, x0) * (1 - fx) + gather(y0, x1) * fx
    bot = gather(y1, x0) * (1 - fx) + gather(y1, x1) * fx
    out = top * (1 - fy) + bot * fy
    valid = valid.unsqueeze(1)
    return out * valid, valid


def cycle_inconsistency(flow_fwd, flow_bwd) -> float:
    """Mean norm of fwd(p) + bwd(p + fwd(p)) over pixels whose round trip
    stays inside the frame; 0 for exactly inverse fields."""
    fwd = _vectors(flow_fwd).astype(np.float64)
    bwd = _vectors(flow_bwd).astype(np.float64)
    if fwd.shape != bwd.shape:
        raise ShapeError(f"flow shapes differ: {fwd.shape} vs {bwd.shape}")
    bwd_at_dest, valid = kernels.bilinear_warp(bwd, fwd)
    residual = np.linalg.norm(fwd + bwd_at_dest, axis=-1)
    n_valid = float(valid.sum())
    if n_valid == 0:
        return 0.0
    return float((residual * valid).sum() / n_valid)
