"""Training objectives: photometric/light, latent, parsing, critic, temporal.

All functions operate on torch tensors and stay differentiable. Images
are (B, 3, H, W) in [0, 1], masks (B, 1, H, W), light maps (B, 16, 16, 3),
flows (B, H, W, 2). Masked photometric terms use the mean over masked
pixels, so magnitudes are resolution-independent and the default unit
weights stay balanced.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch

from .errors import ConfigurationError, ShapeError
from .flow import warp_torch

BCE_EPS = 1e-7


@dataclass
class LossWeights:
    """Multipliers for the five objectives; all default to 1."""

    basic: float = 1.0
    latent: float = 1.0
    parsing: float = 1.0
    temporal: float = 1.0
    adversarial: float = 1.0

    def __post_init__(self):
        for name in ("basic", "latent", "parsing", "temporal", "adversarial"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"loss weight {name} must be >= 0")


@dataclass
class LossBreakdown:
    basic: float = 0.0
    latent: float = 0.0
    parsing: float = 0.0
    temporal: float = 0.0
    adv_d: float = 0.0
    adv_g: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def light_log_distance(light_gt: torch.Tensor, light_pred: torch.Tensor) -> torch.Tensor:
    """0.5 * ||log(1+L) - log(1+L_pred)||^2 per sample, averaged over the batch."""
    if light_gt.shape != light_pred.shape:
        raise ShapeError("light map shapes differ")
    diff = torch.log1p(light_gt) - torch.log1p(light_pred)
    per_sample = 0.5 * diff.flatten(1).pow(2).sum(dim=1)
    return per_sample.mean()


def masked_l1(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over masked pixels (all channels pooled)."""
    if pred.shape != target.shape:
        raise ShapeError("image shapes differ")
    denom = mask.sum() * pred.shape[1]
    if denom.item() == 0:
        warnings.warn("masked_l1 received an all-zero mask; term contributes 0")
        return pred.sum() * 0.0
    return ((pred - target).abs() * mask).sum() / denom


def basic_loss(light_gt, light_pred, target_gt, target_relit,
               self_gt, self_relit, mask) -> torch.Tensor:
    """Light-map distance plus masked photometric error on the target-relit
    and self-relit images."""
    return (light_log_distance(light_gt, light_pred)
            + masked_l1(target_relit, target_gt, mask)
            + masked_l1(self_relit, self_gt, mask))


def latent_loss(code_a: torch.Tensor, code_b: torch.Tensor) -> torch.Tensor:
    """Squared Euclidean distance between structure codes (batch mean)."""
    if code_a.shape != code_b.shape:
        raise ShapeError("structure code dimensions differ")
    if code_a.ndim == 1:
        return (code_a - code_b).pow(2).sum()
    return (code_a - code_b).pow(2).sum(dim=1).mean()


def parsing_loss(parsing_gt: torch.Tensor, parsing_pred: torch.Tensor) -> torch.Tensor:
    """Per-pixel, per-channel binary cross-entropy, clamped away from log(0)."""
    if parsing_gt.shape != parsing_pred.shape:
        raise ShapeError("parsing shapes differ")
    p = parsing_pred.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(parsing_gt * torch.log(p) + (1.0 - parsing_gt) * torch.log(1.0 - p)).mean()


def adversarial_losses(discriminate, source, relit_fake, real, light):
    """Critic and generator objectives for Wasserstein training.

    adv_d = -D(source, real, light) + D(source, fake, light) and
    adv_g = -D(source, fake, light), both batch means. Gradient routing
    (which networks each term updates) is the trainer's responsibility.
    """
    score_real = discriminate(source, real, light)
    score_fake = discriminate(source, relit_fake, light)
    adv_d = (-score_real + score_fake).mean()
    adv_g = -score_fake.mean()
    return adv_d, adv_g


def _warp_term(src: torch.Tensor, dst: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    warped, valid = warp_torch(src, flow)
    return masked_l1(warped, dst, valid)


def temporal_loss(relit_target_t, relit_target_next,
                  relit_first_t, relit_first_next,
                  relit_second_t, relit_second_next,
                  flow_forward, flow_backward) -> torch.Tensor:
    """Cross-warped consistency over adjacent frames.

    Six masked-mean L1 terms: for the target-light output and for each of
    the two predicted-light outputs, the frame-t image warped forward is
    compared against frame t+1 and vice versa. Pixels whose warp samples
    leave the frame are excluded from each mean.
    """
    total = None
    for img_t, img_next in ((relit_target_t, relit_target_next),
                            (relit_first_t, relit_first_next),
                            (relit_second_t, relit_second_next)):
        fwd = _warp_term(img_t, img_next, flow_forward)
        bwd = _warp_term(img_next, img_t, flow_backward)
        total = fwd + bwd if total is None else total + fwd + bwd
    return total


def total_loss(weights: LossWeights, phase: str, basic=0.0, latent=0.0,
               parsing=0.0, temporal=0.0, adv_d=0.0, adv_g=0.0):
    """Weighted objective for the given phase.

    The generator phase sums the four reconstruction terms plus the
    generator-side critic score; the discriminator phase optimizes only
    the critic term. Returns (total_tensor, LossBreakdown of floats).
    """
    if phase not in ("generator", "discriminator"):
        raise ConfigurationError(f"unknown phase {phase!r}")
    w = weights
    if phase == "generator":
        total = (w.basic * basic + w.latent * latent + w.parsing * parsing
                 + w.temporal * temporal + w.adversarial * adv_g)
    else:
        total = w.adversarial * adv_d

    def scalar(x):
        return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)

    breakdown = LossBreakdown(
        basic=scalar(basic), latent=scalar(latent), parsing=scalar(parsing),
        temporal=scalar(temporal), adv_d=scalar(adv_d), adv_g=scalar(adv_g),
        total=scalar(total))
    return total, breakdown
