"""Relighting network: disentangling encoder-decoder plus a critic.

The encoder maps a portrait image to (a) a predicted environment light
map, (b) per-resolution skip features, and (c) a global structure code.
The decoder consumes a light map (predicted or replaced), the skips, and
the structure code, and emits a relit image together with a semantic
parsing prediction. The critic scores (source, relit, light) triples
with a DCGAN-style strided trunk and no final activation, so its output
is an unbounded real score suitable for Wasserstein training.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, ConfigurationError, ShapeError

LIGHT_SHAPE = (16, 16, 3)
LIGHT_SIZE = 768
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    image_size: int = 64
    depth: int = 5
    base_channels: int = 16
    channel_cap: int = 128
    structure_dim: int = 128
    sem_channels: int = 3

    def __post_init__(self):
        if self.image_size % (2 ** self.depth) != 0 or self.image_size // (2 ** self.depth) < 2:
            raise ConfigurationError(
                f"image_size {self.image_size} incompatible with depth {self.depth}")

    @property
    def widths(self) -> list:
        return [min(self.base_channels * 2 ** i, self.channel_cap)
                for i in range(self.depth)]

    @property
    def bottleneck_hw(self) -> int:
        return self.image_size // (2 ** self.depth)


@dataclass
class EncoderOutput:
    light_pred: torch.Tensor      # (B, 16, 16, 3), non-negative
    skips: list                   # depth tensors, level l at size / 2**l
    structure: torch.Tensor       # (B, structure_dim)


@dataclass
class DecoderOutput:
    image: torch.Tensor           # (B, 3, H, W) in [0, 1]
    parsing: torch.Tensor         # (B, sem, H, W) in (0, 1)


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


def _conv_block(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    k = 4 if stride == 2 else 3
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, stride=stride, padding=1),
        _gn(cout),
        nn.LeakyReLU(0.2, inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        _gn(cout),
        nn.LeakyReLU(0.2, inplace=True),
    )


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.widths
        self.cfg = cfg
        self.stem = _conv_block(3, w[0])
        self.downs = nn.ModuleList(
            [_conv_block(w[i - 1], w[i], stride=2) for i in range(1, cfg.depth)])
        self.to_bottleneck = nn.Sequential(
            nn.Conv2d(w[-1], w[-1], 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True))
        flat = w[-1] * cfg.bottleneck_hw ** 2
        self.light_head = nn.Linear(flat, LIGHT_SIZE)
        self.structure_head = nn.Linear(w[-1], cfg.structure_dim)

    def forward(self, x: torch.Tensor) -> EncoderOutput:
        skips = []
        h = self.stem(x)
        skips.append(h)
        for down in self.downs:
            h = down(h)
            skips.append(h)
        bottom = self.to_bottleneck(h)
        light = F.softplus(self.light_head(bottom.flatten(1)))
        light = light.view(-1, *LIGHT_SHAPE)
        structure = self.structure_head(bottom.mean(dim=(2, 3)))
        return EncoderOutput(light_pred=light, skips=skips, structure=structure)


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.widths
        self.cfg = cfg
        self.light_proj = nn.Linear(LIGHT_SIZE, cfg.structure_dim)
        self.fuse = nn.Linear(2 * cfg.structure_dim, w[-1] * cfg.bottleneck_hw ** 2)
        ups = []
        cur = w[-1]
        for level in reversed(range(cfg.depth)):
            ups.append(nn.Sequential(
                nn.Conv2d(cur + w[level], w[level], 3, padding=1),
                _gn(w[level]),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(w[level], w[level], 3, padding=1),
                _gn(w[level]),
                nn.LeakyReLU(0.2, inplace=True),
            ))
            cur = w[level]
        self.ups = nn.ModuleList(ups)
        self.image_head = nn.Conv2d(w[0], 3, 3, padding=1)
        self.parsing_head = nn.Conv2d(w[0], cfg.sem_channels, 3, padding=1)

    def forward(self, light: torch.Tensor, skips: list,
                structure: torch.Tensor) -> DecoderOutput:
        act = F.leaky_relu
        lp = act(self.light_proj(light.flatten(1)), 0.2)
        h = act(self.fuse(torch.cat([lp, structure], dim=1)), 0.2)
        hw = self.cfg.bottleneck_hw
        h = h.view(-1, self.cfg.widths[-1], hw, hw)
        for i, up in enumerate(self.ups):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            skip = skips[self.cfg.depth - 1 - i]
            h = up(torch.cat([h, skip], dim=1))
        return DecoderOutput(image=torch.sigmoid(self.image_head(h)),
                             parsing=torch.sigmoid(self.parsing_head(h)))


class Critic(nn.Module):
    """Strided-convolution score network over (source, relit, light) triples.

    The 16x16 light map is bilinearly resized to the image size and
    stacked as three extra channels. No activation after the last layer.
    """

    def __init__(self, cfg: ModelConfig, base: int = 32):
        super().__init__()
        self.cfg = cfg
        layers = []
        cin = 9
        size = cfg.image_size
        cout = base
        while size > 4:
            layers += [nn.Conv2d(cin, cout, 4, stride=2, padding=1),
                       nn.LeakyReLU(0.2, inplace=True)]
            cin, cout, size = cout, min(cout * 2, 256), size // 2
        layers.append(nn.Conv2d(cin, 1, 4, stride=1, padding=0))
        self.net = nn.Sequential(*layers)

    def forward(self, source: torch.Tensor, relit: torch.Tensor,
                light: torch.Tensor) -> torch.Tensor:
        if source.shape != relit.shape:
            raise ShapeError("source and relit images must share a shape")
        light_img = F.interpolate(light.permute(0, 3, 1, 2),
                                  size=source.shape[-2:], mode="bilinear",
                                  align_corners=False)
        score = self.net(torch.cat([source, relit, light_img], dim=1))
        return score.flatten(1).squeeze(1)


@dataclass
class RelightModel:
    """Bundles the three networks with their shared configuration."""

    config: ModelConfig
    encoder: Encoder
    decoder: Decoder
    critic: Critic | None = None
    meta: dict = field(default_factory=dict)

    def _check_images(self, images: torch.Tensor) -> None:
        s = self.config.image_size
        if images.ndim != 4 or images.shape[1] != 3 or images.shape[2:] != (s, s):
            raise ShapeError(
                f"expected images of shape (B, 3, {s}, {s}), got {tuple(images.shape)}")

    def _check_light(self, light: torch.Tensor) -> None:
        if light.ndim != 4 or light.shape[1:] != LIGHT_SHAPE:
            raise ShapeError(f"expected light of shape (B, 16, 16, 3), got {tuple(light.shape)}")

    def encode(self, images: torch.Tensor) -> EncoderOutput:
        self._check_images(images)
        return self.encoder(images)

    def decode(self, light: torch.Tensor, skips: list,
               structure: torch.Tensor) -> DecoderOutput:
        self._check_light(light)
        if len(skips) != self.config.depth:
            raise ShapeError(f"expected {self.config.depth} skip levels, got {len(skips)}")
        if structure.shape[-1] != self.config.structure_dim:
            raise ShapeError("structure code dimension mismatch")
        return self.decoder(light, skips, structure)

    def relight(self, images: torch.Tensor, target_light: torch.Tensor):
        """Encode, swap the light, decode: (relit, predicted source light, parsing)."""
        enc = self.encode(images)
        dec = self.decode(target_light, enc.skips, enc.structure)
        return dec.image, enc.light_pred, dec.parsing

    def discriminate(self, source: torch.Tensor, relit: torch.Tensor,
                     light: torch.Tensor) -> torch.Tensor:
        if self.critic is None:
            raise ConfigurationError("model was loaded without its critic")
        self._check_images(source)
        self._check_light(light)
        return self.critic(source, relit, light)

    def generator_parameters(self):
        yield from self.encoder.parameters()
        yield from self.decoder.parameters()

    def eval_mode(self) -> "RelightModel":
        self.encoder.eval()
        self.decoder.eval()
        if self.critic is not None:
            self.critic.eval()
        return self

    def train_mode(self) -> "RelightModel":
        self.encoder.train()
        self.decoder.train()
        if self.critic is not None:
            self.critic.train()
        return self

    def to_double(self) -> "RelightModel":
        self.encoder.double()
        self.decoder.double()
        if self.critic is not None:
            self.critic.double()
        return self

    @property
    def checkpoint_id(self) -> str:
        digest = hashlib.sha256()
        for module in (self.encoder, self.decoder):
            for name, p in sorted(module.state_dict().items()):
                digest.update(name.encode())
                digest.update(p.detach().cpu().numpy().tobytes())
        return digest.hexdigest()[:12]


def build_model(config: ModelConfig | None = None, seed: int = 0,
                with_critic: bool = True) -> RelightModel:
    """Construct a freshly initialized model; same seed, same weights."""
    config = config or ModelConfig()
    torch.manual_seed(seed)
    model = RelightModel(config=config,
                         encoder=Encoder(config),
                         decoder=Decoder(config),
                         critic=Critic(config) if with_critic else None)
    return model


def describe(model: RelightModel) -> dict:
    """Layer/width table used to audit the architecture against its config."""
    def table(module: nn.Module) -> list:
        rows = []
        for name, sub in module.named_modules():
            if isinstance(sub, (nn.Conv2d, nn.Linear, nn.GroupNorm)):
                rows.append({
                    "name": name,
                    "type": type(sub).__name__,
                    "shape": list(sub.weight.shape),
                    "params": sum(p.numel() for p in sub.parameters()),
                })
        return rows

    parts = {"encoder": model.encoder, "decoder": model.decoder}
    if model.critic is not None:
        parts["critic"] = model.critic
    out = {
        "config": asdict(model.config),
        "widths": model.config.widths,
        "bottleneck_hw": model.config.bottleneck_hw,
        "layers": {k: table(v) for k, v in parts.items()},
    }
    out["param_counts"] = {
        k: sum(p.numel() for p in v.parameters()) for k, v in parts.items()}
    out["total_params"] = sum(out["param_counts"].values())
    return out


def save_checkpoint(path, model: RelightModel, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta.setdefault("checkpoint_id", model.checkpoint_id)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": json.dumps(asdict(model.config)),
        "encoder": model.encoder.state_dict(),
        "decoder": model.decoder.state_dict(),
        "critic": model.critic.state_dict() if model.critic is not None else None,
        "meta": meta,
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    with open(path, "wb") as fh:
        fh.write(buffer.getvalue())


def load_checkpoint(path, with_critic: bool = True) -> RelightModel:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} does not exist")
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has unsupported version {payload.get('version')!r}")
    try:
        config = ModelConfig(**json.loads(payload["config"]))
        model = RelightModel(config=config, encoder=Encoder(config), decoder=Decoder(config),
                             critic=Critic(config) if with_critic else None,
                             meta=dict(payload.get("meta", {})))
        model.encoder.load_state_dict(payload["encoder"])
        model.decoder.load_state_dict(payload["decoder"])
        if with_critic:
            if payload.get("critic") is None:
                model.critic = None
            else:
                model.critic.load_state_dict(payload["critic"])
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"checkpoint {path} is incompatible: {exc}") from exc
    return model


# numpy <-> torch helpers shared by the service, CLI, and evaluation


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) float array in [0, 1] -> (1, 3, H, W) float32 tensor."""
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got {image.shape}")
    return torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)[None]


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) tensor -> (H, W, C) float32 array."""
    return t.detach()[0].permute(1, 2, 0).cpu().numpy()


def light_to_tensor(values: np.ndarray) -> torch.Tensor:
    if values.shape != LIGHT_SHAPE:
        raise ShapeError(f"expected light of shape {LIGHT_SHAPE}, got {values.shape}")
    return torch.from_numpy(np.ascontiguousarray(values, dtype=np.float32))[None]
