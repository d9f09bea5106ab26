import json

import numpy as np
import pytest

from videorelight import flow, olat
from videorelight.errors import ConfigurationError, DataFormatError, ShapeError
from videorelight.lighting import LightMap, sample_map_at_directions


PX = 1.6 / 64


def _uniform(value=0.5):
    return LightMap(np.full((16, 16, 3), value, dtype=np.float32))


class TestSceneSpecValidation:
    def test_zero_radius_rejected(self):
        with pytest.raises(ConfigurationError):
            olat.SceneSpec(radii=(0.0, 0.4, 0.3))

    def test_too_few_lights_rejected(self):
        with pytest.raises(ConfigurationError):
            olat.SceneSpec(n_lights=3)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ConfigurationError):
            olat.SceneSpec(height=48, width=48)

    def test_small_sizes_rejected(self):
        with pytest.raises(ConfigurationError):
            olat.SceneSpec(height=16, width=16)


class TestRenderSequence:
    def test_static_script_zero_flow(self):
        seq = olat.render_sequence(olat.SceneSpec(n_frames=3))
        for frame in seq.frames[:-1]:
            np.testing.assert_allclose(frame.flow_to_next, 0.0, atol=1e-5)

    def test_pure_translation_flow_is_one_pixel(self):
        spec = olat.SceneSpec(
            n_frames=3, translations=tuple((i * PX, 0.0, 0.0) for i in range(3)))
        seq = olat.render_sequence(spec)
        frame = seq.frames[0]
        fg = frame.foreground.astype(bool)
        expected = np.broadcast_to(np.array([1.0, 0.0], dtype=np.float32),
                                   frame.flow_to_next[fg].shape)
        np.testing.assert_allclose(frame.flow_to_next[fg], expected, atol=1e-5)
        np.testing.assert_array_equal(frame.flow_to_next[~fg], 0.0)

    def test_parsing_partitions_image(self, small_sequence):
        for frame in small_sequence.frames:
            np.testing.assert_allclose(frame.parsing.sum(axis=-1), 1.0, atol=1e-5)

    def test_foreground_matches_background_channel(self, small_sequence):
        for frame in small_sequence.frames:
            np.testing.assert_array_equal(
                frame.foreground, (frame.parsing[..., 2] < 0.5).astype(np.uint8))

    def test_basis_nonnegative(self, small_sequence):
        for frame in small_sequence.frames:
            assert frame.basis.min() >= 0.0

    def test_flow_presence_pattern(self, small_sequence):
        frames = small_sequence.frames
        assert frames[-1].flow_to_next is None
        assert frames[0].flow_to_prev is None
        for frame in frames[:-1]:
            assert frame.flow_to_next is not None
        for frame in frames[1:]:
            assert frame.flow_to_prev is not None

    def test_deterministic_given_spec(self):
        spec = olat.make_scene_spec(identity=1, take=2, seed=9, n_frames=2)
        a = olat.render_sequence(spec)
        b = olat.render_sequence(spec)
        assert olat.sequences_equal(a, b)

    def test_warp_consistency_on_covisible_pixels(self):
        # pulling frame t+1's composite back through frame t's motion field
        # must reproduce frame t up to resampling error
        spec = olat.make_scene_spec(identity=1, take=0, seed=3, n_frames=4)
        seq = olat.render_sequence(spec)
        uni = _uniform()
        for t in range(len(seq.frames) - 1):
            cur, nxt = seq.frames[t], seq.frames[t + 1]
            c_t = olat.composite_relit(cur, seq.light_directions, uni)
            c_n = olat.composite_relit(nxt, seq.light_directions, uni)
            pulled, valid = flow.warp(c_n, cur.flow_to_next)
            nxt_fg, _ = flow.warp(nxt.foreground.astype(np.float64), cur.flow_to_next)
            co = (valid > 0) & cur.foreground.astype(bool) & (nxt_fg > 0.999)
            assert co.sum() > 100
            mae = np.abs(pulled - c_t)[co].mean()
            assert mae < 0.02


class TestCompositeRelit:
    def test_zero_light_zero_image(self, small_sequence):
        black = LightMap(np.zeros((16, 16, 3), dtype=np.float32))
        img = olat.composite_relit(small_sequence.frames[0],
                                   small_sequence.light_directions, black)
        assert np.all(img == 0.0)

    def test_mismatched_light_count(self, small_sequence):
        with pytest.raises(ShapeError):
            olat.composite_relit(small_sequence.frames[0],
                                 small_sequence.light_directions[:-1], _uniform())

    def test_linearity_pre_tonemap(self, small_sequence):
        rng = np.random.default_rng(0)
        frame = small_sequence.frames[0]
        dirs = small_sequence.light_directions
        for _ in range(10):
            la = LightMap(rng.uniform(0, 1, (16, 16, 3)).astype(np.float32))
            lb = LightMap(rng.uniform(0, 1, (16, 16, 3)).astype(np.float32))
            alpha, beta = rng.uniform(0, 2, 2)
            mixed = LightMap(alpha * la.values.astype(np.float64)
                             + beta * lb.values.astype(np.float64))
            lhs = olat.composite_relit(frame, dirs, mixed, tonemap=False)
            rhs = (alpha * olat.composite_relit(frame, dirs, la, tonemap=False)
                   + beta * olat.composite_relit(frame, dirs, lb, tonemap=False))
            np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-7)

    def test_delta_map_recovers_single_basis(self, small_sequence):
        # pick a light whose 4-texel bilinear footprint no other light touches,
        # then a delta on its containing texel isolates that basis image
        frame = small_sequence.frames[0]
        dirs = small_sequence.light_directions
        footprints = []
        for d in dirs:
            probe = np.zeros((16, 16, 3), dtype=np.float32)
            support = set()
            for r in range(16):
                for c in range(16):
                    probe[:] = 0
                    probe[r, c] = 1
                    if sample_map_at_directions(LightMap(probe), d[None])[0].max() > 0:
                        support.add((r, c))
            footprints.append(support)
        chosen = None
        for i, sup in enumerate(footprints):
            others = set().union(*(footprints[:i] + footprints[i + 1:]))
            if not (sup & others):
                chosen = i
                break
        assert chosen is not None, "no light with an isolated footprint at desk scale"

        delta = np.zeros((16, 16, 3), dtype=np.float32)
        texel = max(footprints[chosen],
                    key=lambda rc: sample_map_at_directions(
                        LightMap(_delta_at(rc)), dirs[chosen][None])[0].max())
        delta[texel[0], texel[1], :] = 1.0
        out = olat.composite_relit(frame, dirs, LightMap(delta), tonemap=False)
        weight = sample_map_at_directions(LightMap(delta), dirs[chosen][None])[0]
        expected = frame.basis[chosen].astype(np.float64) * weight[None, None, :] \
            * (4 * np.pi / len(dirs))
        np.testing.assert_allclose(out, expected, rtol=1e-5, atol=1e-8)

    def test_fully_lit_image_is_uniform_white_composite(self, small_sequence,
                                                        uniform_map):
        frame = small_sequence.frames[0]
        dirs = small_sequence.light_directions
        expected = olat.composite_relit(frame, dirs, uniform_map)
        np.testing.assert_array_equal(olat.fully_lit_image(frame, dirs), expected)

    def test_tonemap_clamps(self, small_sequence):
        bright = LightMap(np.full((16, 16, 3), 5.0, dtype=np.float32))
        img = olat.composite_relit(small_sequence.frames[0],
                                   small_sequence.light_directions, bright)
        assert img.max() <= 1.0 and img.min() >= 0.0


def _delta_at(rc):
    v = np.zeros((16, 16, 3), dtype=np.float32)
    v[rc[0], rc[1], :] = 1.0
    return v


class TestDatasetRoundTrip:
    def test_round_trip_bit_exact(self, small_sequence, tmp_path):
        take_dir = olat.write_dataset(small_sequence, tmp_path)
        loaded = olat.read_dataset(take_dir)
        assert olat.sequences_equal(small_sequence, loaded)

    def test_read_via_root(self, small_sequence, tmp_path):
        olat.write_dataset(small_sequence, tmp_path)
        loaded = olat.read_dataset(tmp_path)
        assert olat.sequences_equal(small_sequence, loaded)

    def test_missing_meta_names_file(self, small_sequence, tmp_path):
        take_dir = olat.write_dataset(small_sequence, tmp_path)
        (take_dir / "meta.json").unlink()
        with pytest.raises(DataFormatError, match="meta.json"):
            olat.read_dataset(take_dir)

    def test_corrupt_meta(self, small_sequence, tmp_path):
        take_dir = olat.write_dataset(small_sequence, tmp_path)
        (take_dir / "meta.json").write_text("{broken")
        with pytest.raises(DataFormatError, match="meta.json"):
            olat.read_dataset(take_dir)

    def test_shape_contradiction_names_file(self, small_sequence, tmp_path):
        take_dir = olat.write_dataset(small_sequence, tmp_path)
        target = take_dir / "frame_0000" / "basis.f32"
        target.write_bytes(target.read_bytes()[:-4])
        with pytest.raises(DataFormatError, match="basis.f32"):
            olat.read_dataset(take_dir)

    def test_meta_shape_mismatch(self, small_sequence, tmp_path):
        take_dir = olat.write_dataset(small_sequence, tmp_path)
        meta = json.loads((take_dir / "meta.json").read_text())
        meta["n_lights"] += 1
        (take_dir / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(DataFormatError):
            olat.read_dataset(take_dir)


class TestFibonacciDirections:
    def test_unit_norm(self):
        dirs = olat.fibonacci_sphere_directions(16)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, rtol=1e-12)

    def test_rough_balance(self):
        dirs = olat.fibonacci_sphere_directions(64)
        assert abs(float(dirs[:, 2].mean())) < 0.05
