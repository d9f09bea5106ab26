import json

import numpy as np
import pytest
import torch

from videorelight import olat
from videorelight.errors import ConfigurationError, TrainingDivergence
from videorelight.lighting import LightMap, LightTriplet
from videorelight.losses import LossWeights, adversarial_losses
from videorelight.model import build_model
from videorelight.training import (
    TrainConfig, Trainer, augment, batch_to_tensors, build_triplet,
    progressive_schedule, read_log, run_training, split_sequences,
)


@pytest.fixture(scope="module")
def sequences():
    return [olat.render_sequence(olat.make_scene_spec(i, 0, seed=5, n_frames=3))
            for i in range(2)]


def _uniform_map(value=0.4):
    return LightMap(np.full((16, 16, 3), value, dtype=np.float32))


class TestTrainConfig:
    def test_defaults_valid(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 5e-5
        assert cfg.clip_value == 0.01

    def test_bad_learning_rate(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(learning_rate=0.0)

    def test_bad_clip(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(clip_value=-0.01)

    def test_bad_crop_scales(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(crop_min_scale=0.9, crop_max_scale=0.6)

    def test_json_round_trip(self):
        cfg = TrainConfig(steps=123, weights=LossWeights(temporal=0.0))
        again = TrainConfig.from_json(cfg.to_json())
        assert again.steps == 123
        assert again.weights.temporal == 0.0
        assert again.weights.basic == 1.0


class TestBuildTriplet:
    def test_out_of_range_index(self, sequences, library):
        rng = np.random.default_rng(0)
        with pytest.raises(IndexError):
            build_triplet(sequences[0], len(sequences[0].frames) - 1, rng, library)

    def test_targets_match_independent_compositor_calls(self, sequences, library):
        rng = np.random.default_rng(1)
        seq = sequences[0]
        trip = build_triplet(seq, 0, rng, library)
        dirs = seq.light_directions
        expected = olat.composite_relit(seq.frames[0], dirs,
                                        trip.lights.light_target).astype(np.float32)
        np.testing.assert_array_equal(trip.target_first, expected)
        expected_cross = olat.composite_relit(seq.frames[1], dirs,
                                              trip.lights.light_first).astype(np.float32)
        np.testing.assert_array_equal(trip.cross_second, expected_cross)

    def test_collapsed_triplet_makes_inputs_equal_targets(self, sequences, library):
        light = _uniform_map()
        lights = LightTriplet(light, light, light, 1.0, 1.0)
        trip = build_triplet(sequences[0], 0, np.random.default_rng(2), library,
                             lights=lights)
        np.testing.assert_array_equal(trip.input_first, trip.target_first)
        np.testing.assert_array_equal(trip.input_second, trip.target_second)

    def test_bit_reproducible_given_seed(self, sequences, library):
        a = build_triplet(sequences[0], 1, np.random.default_rng(3), library)
        b = build_triplet(sequences[0], 1, np.random.default_rng(3), library)
        np.testing.assert_array_equal(a.target_first, b.target_first)
        np.testing.assert_array_equal(a.flow_forward, b.flow_forward)
        assert a.lights.beta1 == b.lights.beta1

    def test_flow_fields_wired_from_adjacent_frames(self, sequences, library):
        seq = sequences[0]
        trip = build_triplet(seq, 1, np.random.default_rng(4), library)
        np.testing.assert_array_equal(trip.flow_backward, seq.frames[1].flow_to_next)
        np.testing.assert_array_equal(trip.flow_forward, seq.frames[2].flow_to_prev)


class _FixedRng:
    """Deterministic stand-in driving augment's crop draws."""

    def __init__(self, scale, ox=0, oy=0):
        self.scale = scale
        self.offsets = [oy, ox]

    def uniform(self, lo, hi):
        return self.scale

    def integers(self, lo, hi=None):
        return self.offsets.pop(0) if self.offsets else 0


class TestAugment:
    def test_full_frame_crop_same_size_is_identity(self, sequences, library):
        trip = build_triplet(sequences[0], 0, np.random.default_rng(5), library)
        out = augment(trip, _FixedRng(1.0), out_size=64)
        np.testing.assert_allclose(out.input_first, trip.input_first, atol=1e-6)
        np.testing.assert_array_equal(out.mask_first, trip.mask_first)
        np.testing.assert_allclose(out.flow_backward, trip.flow_backward, atol=1e-6)

    def test_two_times_downscale_halves_flow(self, sequences, library):
        import dataclasses
        trip = build_triplet(sequences[0], 0, np.random.default_rng(6), library)
        constant = np.broadcast_to(np.array([2.0, -1.0], dtype=np.float32),
                                   (64, 64, 2)).copy()
        trip = dataclasses.replace(trip, flow_backward=constant,
                                   flow_forward=constant.copy())
        out = augment(trip, _FixedRng(1.0), out_size=32)
        assert out.flow_backward.shape == (32, 32, 2)
        expected = np.broadcast_to(np.array([1.0, -0.5], dtype=np.float32),
                                   (32, 32, 2))
        np.testing.assert_allclose(out.flow_backward, expected, atol=1e-6)

    def test_masks_stay_binary(self, sequences, library):
        trip = build_triplet(sequences[0], 0, np.random.default_rng(7), library)
        out = augment(trip, np.random.default_rng(8), out_size=64)
        assert set(np.unique(out.mask_first)) <= {0.0, 1.0}

    def test_window_shared_between_images_and_masks(self, sequences, library):
        # background pixels (mask 0) keep zero radiance after cropping, so the
        # same window must have been applied to both
        trip = build_triplet(sequences[0], 0, np.random.default_rng(9), library)
        out = augment(trip, np.random.default_rng(10), out_size=64,
                      min_scale=0.6, max_scale=0.8)
        bg = out.mask_first == 0.0
        interior = bg & (out.parsing_first[..., 2] > 0.99)  # away from soft edges
        assert np.abs(out.input_first[interior]).max() < 0.05


class TestProgressiveSchedule:
    def test_warmup_disables_latent_temporal_adversarial(self):
        cfg = TrainConfig(warmup_steps=100)
        w = progressive_schedule(0, cfg)
        assert w.adversarial == 0.0 and w.latent == 0.0 and w.temporal == 0.0
        assert w.basic == 1.0 and w.parsing == 1.0

    def test_boundary_step_restores_full_weights(self):
        cfg = TrainConfig(warmup_steps=100)
        assert progressive_schedule(100, cfg) == cfg.weights

    def test_monotone_weights(self):
        cfg = TrainConfig(warmup_steps=10)
        previous = None
        for step in range(0, 30, 3):
            w = progressive_schedule(step, cfg)
            values = [w.basic, w.latent, w.parsing, w.temporal, w.adversarial]
            if previous is not None:
                assert all(v >= p for v, p in zip(values, previous))
            previous = values


def _make_batch(sequences, library, batch_size=2, seed=11):
    rng = np.random.default_rng(seed)
    triplets = []
    for _ in range(batch_size):
        trip = build_triplet(sequences[0], 0, rng, library)
        triplets.append(augment(trip, rng, 64))
    return batch_to_tensors(triplets)


class TestTrainStep:
    def test_critic_clipped_after_step(self, sequences, library):
        cfg = TrainConfig(warmup_steps=0, steps=1)
        model = build_model(cfg.model_config(), seed=0).train_mode()
        # inflate critic weights so clipping is observable
        with torch.no_grad():
            for p in model.critic.parameters():
                p.add_(1.0)
        trainer = Trainer(model, cfg)
        trainer.train_step(_make_batch(sequences, library))
        for p in model.critic.parameters():
            assert p.abs().max() <= cfg.clip_value + 1e-12

    def test_zero_extra_weights_match_pure_basic_training(self, sequences, library):
        batch = _make_batch(sequences, library)
        weights = LossWeights(latent=0, parsing=0, temporal=0, adversarial=0)
        cfg_a = TrainConfig(warmup_steps=0, weights=weights)
        model_a = build_model(cfg_a.model_config(), seed=1).train_mode()
        br_a = Trainer(model_a, cfg_a).train_step(batch)
        assert br_a.total == pytest.approx(br_a.basic)

    def test_gradient_routing_disjoint(self, sequences, library):
        cfg = TrainConfig(warmup_steps=0)
        model = build_model(cfg.model_config(), seed=2).train_mode()
        batch = _make_batch(sequences, library)

        enc = model.encode(batch["input_first"])
        fake = model.decode(batch["light_target"], enc.skips, enc.structure).image
        adv_d, _ = adversarial_losses(model.discriminate, batch["input_first"],
                                      fake.detach(), batch["target_first"],
                                      batch["light_target"])
        adv_d.backward()
        d_touched = {n for n, p in model.critic.named_parameters()
                     if p.grad is not None and p.grad.abs().max() > 0}
        g_touched_by_d = [n for n, p in list(model.encoder.named_parameters())
                          + list(model.decoder.named_parameters())
                          if p.grad is not None and p.grad.abs().max() > 0]
        assert d_touched and not g_touched_by_d

        model.encoder.zero_grad()
        model.decoder.zero_grad()
        model.critic.zero_grad()
        for p in model.critic.parameters():
            p.requires_grad_(False)
        enc = model.encode(batch["input_first"])
        fake = model.decode(batch["light_target"], enc.skips, enc.structure).image
        adv_g = -model.discriminate(batch["input_first"], fake,
                                    batch["light_target"]).mean()
        adv_g.backward()
        d_touched_by_g = {n for n, p in model.critic.named_parameters()
                          if p.grad is not None and p.grad.abs().max() > 0}
        g_touched = [n for n, p in list(model.encoder.named_parameters())
                     + list(model.decoder.named_parameters())
                     if p.grad is not None and p.grad.abs().max() > 0]
        assert not d_touched_by_g and g_touched
        for p in model.critic.parameters():
            p.requires_grad_(True)

    def test_nan_loss_raises_divergence(self, sequences, library, tmp_path):
        cfg = TrainConfig(warmup_steps=0)
        model = build_model(cfg.model_config(), seed=3).train_mode()
        with torch.no_grad():
            model.encoder.light_head.weight[0, 0] = float("nan")
        trainer = Trainer(model, cfg, out_dir=tmp_path)
        with pytest.raises(TrainingDivergence):
            trainer.train_step(_make_batch(sequences, library))
        assert (tmp_path / "divergence.json").exists()
        assert (tmp_path / "divergence.ckpt").exists()


class TestSplit:
    def test_identity_disjoint(self, sequences):
        train, held = split_sequences(sequences, 1)
        train_ids = {s.identity_id for s in train}
        held_ids = {s.identity_id for s in held}
        assert train_ids and held_ids and not (train_ids & held_ids)

    def test_cannot_hold_out_everything(self, sequences):
        with pytest.raises(ConfigurationError):
            split_sequences(sequences, 2)


class TestRunTraining:
    def test_two_runs_bitwise_identical(self, sequences, tmp_path):
        logs = []
        ckpts = []
        for name in ("a", "b"):
            cfg = TrainConfig(out_dir=str(tmp_path / name), steps=3, batch_size=2,
                              warmup_steps=1, seed=21, checkpoint_every=0,
                              held_out_identities=1)
            out = run_training(cfg, sequences=sequences)
            logs.append((tmp_path / name / "train_log.jsonl").read_bytes())
            from videorelight.model import load_checkpoint
            ckpts.append(load_checkpoint(out["checkpoint"]).checkpoint_id)
        assert logs[0] == logs[1]
        assert ckpts[0] == ckpts[1]

    def test_log_and_checkpoint_written(self, sequences, tmp_path):
        cfg = TrainConfig(out_dir=str(tmp_path / "run"), steps=2, batch_size=1,
                          warmup_steps=0, seed=3, checkpoint_every=1)
        out = run_training(cfg, sequences=sequences)
        log = read_log(out["log"])
        assert [r["step"] for r in log] == [0, 1]
        assert set(log[0]) >= {"basic", "latent", "parsing", "temporal",
                               "adv_d", "adv_g", "total"}
        assert (tmp_path / "run" / "model.ckpt").exists()
        assert (tmp_path / "run" / "config.json").exists()
        loaded = json.loads((tmp_path / "run" / "config.json").read_text())
        assert loaded["steps"] == 2
