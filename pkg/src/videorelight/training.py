"""Optimization loop: paired-frame batches, critic clipping, progressive weights.

Each training sample is a pair of adjacent frames. Their input lights
come from the triplet sampler, ground-truth targets are produced by the
basis compositor, and each batch carries the exact forward/backward warp
fields for the temporal objective. Both networks are optimized with
RMSprop; after every critic update all critic parameters are clamped to
the configured box, per Wasserstein training with weight clipping.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from . import kernels, olat
from .errors import ConfigurationError, DataFormatError, TrainingDivergence
from .lighting import LightTriplet, default_library, sample_triplet
from .losses import (LossBreakdown, LossWeights, adversarial_losses, basic_loss,
                     latent_loss, parsing_loss, temporal_loss, total_loss)
from .model import ModelConfig, RelightModel, build_model, save_checkpoint


@dataclass
class TrainConfig:
    data_root: str = ""
    out_dir: str = "runs/default"
    steps: int = 5000
    batch_size: int = 4
    learning_rate: float = 5e-5
    clip_value: float = 0.01
    warmup_steps: int = 1000
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    crop_min_scale: float = 0.6
    crop_max_scale: float = 1.0
    image_size: int = 64
    depth: int = 5
    base_channels: int = 16
    structure_dim: int = 128
    critic_steps: int = 1
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8
    log_every: int = 1
    checkpoint_every: int = 1000
    held_out_identities: int = 1

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.clip_value <= 0:
            raise ConfigurationError("clip range must be symmetric and positive")
        if not (0.0 < self.crop_min_scale <= self.crop_max_scale <= 1.0):
            raise ConfigurationError("crop scales must satisfy 0 < min <= max <= 1")
        if self.steps < 1 or self.batch_size < 1 or self.warmup_steps < 0:
            raise ConfigurationError("steps/batch_size/warmup_steps out of range")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"bad training config: {exc}") from exc
        return cls(**payload)

    def model_config(self) -> ModelConfig:
        return ModelConfig(image_size=self.image_size, depth=self.depth,
                           base_channels=self.base_channels,
                           structure_dim=self.structure_dim)


@dataclass
class TrainingTriplet:
    """One paired-frame sample with composited ground truth.

    Targets are, by construction, compositor outputs of the named frame
    under the named light. ``flow_forward`` aligns frame t to t+1 (it is
    frame t+1's motion field toward its predecessor); ``flow_backward``
    aligns frame t+1 to t (frame t's field toward its successor).
    """

    input_first: np.ndarray        # frame t under the first light
    input_second: np.ndarray       # frame t+1 under the second light
    target_first: np.ndarray       # frame t under the target light
    target_second: np.ndarray      # frame t+1 under the target light
    cross_first: np.ndarray        # frame t under the second light
    cross_second: np.ndarray       # frame t+1 under the first light
    mask_first: np.ndarray
    mask_second: np.ndarray
    parsing_first: np.ndarray
    parsing_second: np.ndarray
    flow_forward: np.ndarray
    flow_backward: np.ndarray
    lights: LightTriplet


def build_triplet(seq: olat.OlatSequence, t: int, rng: np.random.Generator,
                  library: list, lights: LightTriplet | None = None) -> TrainingTriplet:
    """Sample a light triplet and composite all ground truth for frames t, t+1.

    Pass ``lights`` to pin the triplet (tests, tooling); the rng is then
    untouched.
    """
    if not (0 <= t < len(seq.frames) - 1):
        raise IndexError(f"frame index {t} has no successor in a "
                         f"{len(seq.frames)}-frame sequence")
    if lights is None:
        lights = sample_triplet(rng, library)
    first, second = seq.frames[t], seq.frames[t + 1]
    dirs = seq.light_directions

    def shot(frame, light):
        return olat.composite_relit(frame, dirs, light).astype(np.float32)

    if second.flow_to_prev is None or first.flow_to_next is None:
        raise DataFormatError("sequence lacks the adjacent-frame flow fields")
    return TrainingTriplet(
        input_first=shot(first, lights.light_first),
        input_second=shot(second, lights.light_second),
        target_first=shot(first, lights.light_target),
        target_second=shot(second, lights.light_target),
        cross_first=shot(first, lights.light_second),
        cross_second=shot(second, lights.light_first),
        mask_first=first.foreground.astype(np.float32),
        mask_second=second.foreground.astype(np.float32),
        parsing_first=first.parsing.copy(),
        parsing_second=second.parsing.copy(),
        flow_forward=second.flow_to_prev.copy(),
        flow_backward=first.flow_to_next.copy(),
        lights=lights)


def augment(triplet: TrainingTriplet, rng: np.random.Generator, out_size: int,
            min_scale: float = 0.6, max_scale: float = 1.0) -> TrainingTriplet:
    """One shared crop window and resize applied to every array of the pair.

    Flow vectors are cropped with the same window and rescaled by the
    resize ratio, keeping the warp supervision geometrically consistent.
    """
    h, w = triplet.mask_first.shape
    scale = float(rng.uniform(min_scale, max_scale))
    side = max(8, int(round(min(h, w) * scale)))
    oy = int(rng.integers(0, h - side + 1))
    ox = int(rng.integers(0, w - side + 1))
    ratio = out_size / side

    def crop_resize(arr):
        patch = arr[oy:oy + side, ox:ox + side]
        return kernels.bilinear_resize(patch, out_size, out_size)

    def image(arr):
        return crop_resize(arr.astype(np.float64)).astype(np.float32)

    def mask(arr):
        return (crop_resize(arr.astype(np.float64)) > 0.5).astype(np.float32)

    def flow_field(arr):
        return (crop_resize(arr.astype(np.float64)) * ratio).astype(np.float32)

    return TrainingTriplet(
        input_first=image(triplet.input_first),
        input_second=image(triplet.input_second),
        target_first=image(triplet.target_first),
        target_second=image(triplet.target_second),
        cross_first=image(triplet.cross_first),
        cross_second=image(triplet.cross_second),
        mask_first=mask(triplet.mask_first),
        mask_second=mask(triplet.mask_second),
        parsing_first=image(triplet.parsing_first),
        parsing_second=image(triplet.parsing_second),
        flow_forward=flow_field(triplet.flow_forward),
        flow_backward=flow_field(triplet.flow_backward),
        lights=triplet.lights)


def progressive_schedule(step: int, config: TrainConfig) -> LossWeights:
    """Warmup phase trains reconstruction and parsing only; afterwards all
    weights take their configured values. No weight ever decreases."""
    w = config.weights
    if step < config.warmup_steps:
        return LossWeights(basic=w.basic, latent=0.0, parsing=w.parsing,
                           temporal=0.0, adversarial=0.0)
    return w


def _stack_images(arrays) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrays)).permute(0, 3, 1, 2).contiguous()


def batch_to_tensors(triplets: list) -> dict:
    out = {
        "input_first": _stack_images([t.input_first for t in triplets]),
        "input_second": _stack_images([t.input_second for t in triplets]),
        "target_first": _stack_images([t.target_first for t in triplets]),
        "target_second": _stack_images([t.target_second for t in triplets]),
        "parsing_first": _stack_images([t.parsing_first for t in triplets]),
        "parsing_second": _stack_images([t.parsing_second for t in triplets]),
        "mask_first": torch.from_numpy(
            np.stack([t.mask_first for t in triplets]))[:, None],
        "mask_second": torch.from_numpy(
            np.stack([t.mask_second for t in triplets]))[:, None],
        "flow_forward": torch.from_numpy(
            np.stack([t.flow_forward for t in triplets])),
        "flow_backward": torch.from_numpy(
            np.stack([t.flow_backward for t in triplets])),
        "light_first": torch.from_numpy(
            np.stack([t.lights.light_first.values for t in triplets])),
        "light_second": torch.from_numpy(
            np.stack([t.lights.light_second.values for t in triplets])),
        "light_target": torch.from_numpy(
            np.stack([t.lights.light_target.values for t in triplets])),
    }
    return out


class Trainer:
    """Owns the model, the two optimizers, and the per-step update logic."""

    def __init__(self, model: RelightModel, config: TrainConfig,
                 out_dir: Path | None = None):
        self.model = model
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.step_index = 0
        opt = torch.optim.RMSprop
        self.opt_generator = opt(list(model.generator_parameters()),
                                 lr=config.learning_rate,
                                 alpha=config.rmsprop_alpha, eps=config.rmsprop_eps)
        self.opt_critic = None
        if model.critic is not None:
            self.opt_critic = opt(model.critic.parameters(), lr=config.learning_rate,
                                  alpha=config.rmsprop_alpha, eps=config.rmsprop_eps)

    def clamp_critic(self) -> None:
        c = self.config.clip_value
        with torch.no_grad():
            for p in self.model.critic.parameters():
                p.clamp_(-c, c)

    def _critic_phase(self, batch, weights) -> float:
        model = self.model
        with torch.no_grad():
            enc_t = model.encode(batch["input_first"])
            enc_n = model.encode(batch["input_second"])
            fake_t = model.decode(batch["light_target"], enc_t.skips, enc_t.structure).image
            fake_n = model.decode(batch["light_target"], enc_n.skips, enc_n.structure).image
        value = 0.0
        for _ in range(self.config.critic_steps):
            adv_t, _ = adversarial_losses(model.discriminate, batch["input_first"],
                                          fake_t, batch["target_first"],
                                          batch["light_target"])
            adv_n, _ = adversarial_losses(model.discriminate, batch["input_second"],
                                          fake_n, batch["target_second"],
                                          batch["light_target"])
            adv_d = 0.5 * (adv_t + adv_n)
            self.opt_critic.zero_grad()
            (weights.adversarial * adv_d).backward()
            self.opt_critic.step()
            self.clamp_critic()
            value = float(adv_d.detach())
        return value

    def train_step(self, batch: dict) -> LossBreakdown:
        config = self.config
        weights = progressive_schedule(self.step_index, config)
        model = self.model

        adv_d_value = 0.0
        use_critic = weights.adversarial > 0 and model.critic is not None
        if use_critic:
            adv_d_value = self._critic_phase(batch, weights)
            for p in model.critic.parameters():
                p.requires_grad_(False)

        try:
            enc_t = model.encode(batch["input_first"])
            enc_n = model.encode(batch["input_second"])
            dec_t_target = model.decode(batch["light_target"], enc_t.skips, enc_t.structure)
            dec_n_target = model.decode(batch["light_target"], enc_n.skips, enc_n.structure)
            dec_t_self = model.decode(enc_t.light_pred, enc_t.skips, enc_t.structure)
            dec_n_self = model.decode(enc_n.light_pred, enc_n.skips, enc_n.structure)

            basic = 0.5 * (
                basic_loss(batch["light_first"], enc_t.light_pred,
                           batch["target_first"], dec_t_target.image,
                           batch["input_first"], dec_t_self.image, batch["mask_first"])
                + basic_loss(batch["light_second"], enc_n.light_pred,
                             batch["target_second"], dec_n_target.image,
                             batch["input_second"], dec_n_self.image,
                             batch["mask_second"]))

            parsing = 0.5 * (parsing_loss(batch["parsing_first"], dec_t_target.parsing)
                             + parsing_loss(batch["parsing_second"], dec_n_target.parsing))

            latent = torch.zeros((), dtype=basic.dtype)
            if weights.latent > 0:
                re_t = model.encode(dec_t_target.image)
                re_n = model.encode(dec_n_target.image)
                latent = 0.5 * (latent_loss(enc_t.structure, re_t.structure)
                                + latent_loss(enc_n.structure, re_n.structure))

            temporal = torch.zeros((), dtype=basic.dtype)
            if weights.temporal > 0:
                dec_t_cross = model.decode(enc_n.light_pred, enc_t.skips, enc_t.structure)
                dec_n_cross = model.decode(enc_t.light_pred, enc_n.skips, enc_n.structure)
                temporal = temporal_loss(
                    dec_t_target.image, dec_n_target.image,
                    dec_t_self.image, dec_n_cross.image,
                    dec_t_cross.image, dec_n_self.image,
                    batch["flow_forward"], batch["flow_backward"])

            adv_g = torch.zeros((), dtype=basic.dtype)
            if use_critic:
                score_t = model.discriminate(batch["input_first"], dec_t_target.image,
                                             batch["light_target"])
                score_n = model.discriminate(batch["input_second"], dec_n_target.image,
                                             batch["light_target"])
                adv_g = -0.5 * (score_t.mean() + score_n.mean())

            total, breakdown = total_loss(weights, "generator", basic=basic,
                                          latent=latent, parsing=parsing,
                                          temporal=temporal, adv_d=adv_d_value,
                                          adv_g=adv_g)
            if not torch.isfinite(total):
                self._divergence_snapshot(breakdown)
                raise TrainingDivergence(
                    f"non-finite loss at step {self.step_index}: {breakdown.as_dict()}")

            self.opt_generator.zero_grad()
            total.backward()
            self.opt_generator.step()
        finally:
            if use_critic:
                for p in model.critic.parameters():
                    p.requires_grad_(True)

        self.step_index += 1
        return breakdown

    def _divergence_snapshot(self, breakdown: LossBreakdown) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "divergence.json").write_text(json.dumps(
            {"step": self.step_index, "losses": breakdown.as_dict()}, indent=1))
        save_checkpoint(self.out_dir / "divergence.ckpt", self.model,
                        meta={"step": self.step_index, "diverged": True})


def split_sequences(sequences: list, held_out: int):
    """Identity-disjoint train/held-out split (last identities held out)."""
    identities = sorted({s.identity_id for s in sequences})
    if held_out >= len(identities):
        raise ConfigurationError(
            f"cannot hold out {held_out} of {len(identities)} identities")
    held = set(identities[len(identities) - held_out:]) if held_out else set()
    train = [s for s in sequences if s.identity_id not in held]
    test = [s for s in sequences if s.identity_id in held]
    return train, test


def atomic_save(path: Path, model: RelightModel, meta: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    save_checkpoint(tmp, model, meta=meta)
    os.replace(tmp, path)


def run_training(config: TrainConfig, sequences: list | None = None,
                 library: list | None = None, log_hook=None) -> dict:
    """Full training run; returns paths of the final checkpoint and log."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config.to_json())

    if sequences is None:
        sequences = olat.read_all_sequences(config.data_root)
    if not sequences:
        raise DataFormatError(f"no training sequences under {config.data_root}")
    train_seqs, _ = split_sequences(sequences, config.held_out_identities)

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    model = build_model(config.model_config(), seed=config.seed).train_mode()
    trainer = Trainer(model, config, out_dir=out_dir)
    library = library if library is not None else default_library()

    log_path = out_dir / "train_log.jsonl"
    ckpt_path = out_dir / "model.ckpt"
    started = time.time()
    with open(log_path, "w") as log:
        for step in range(config.steps):
            triplets = []
            for _ in range(config.batch_size):
                seq = train_seqs[int(rng.integers(len(train_seqs)))]
                t = int(rng.integers(len(seq.frames) - 1))
                trip = build_triplet(seq, t, rng, library)
                triplets.append(augment(trip, rng, config.image_size,
                                        config.crop_min_scale, config.crop_max_scale))
            breakdown = trainer.train_step(batch_to_tensors(triplets))
            if step % config.log_every == 0:
                record = {"step": step, **breakdown.as_dict()}
                log.write(json.dumps(record) + "\n")
                if log_hook is not None:
                    log_hook(record)
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                atomic_save(ckpt_path, model, meta={"step": step + 1, "seed": config.seed})
    atomic_save(ckpt_path, model,
                meta={"step": config.steps, "seed": config.seed,
                      "train_seconds": round(time.time() - started, 3)})
    return {"checkpoint": str(ckpt_path), "log": str(log_path),
            "steps": config.steps}


def read_log(path) -> list:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line]
