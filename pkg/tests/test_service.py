import base64
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from videorelight.inference import decode_image_bytes, encode_image_png
from videorelight.lighting import PointLight, build_preset_library, project_point_lights
from videorelight.model import ModelConfig, build_model
from videorelight.service import create_app

SIZE = 32


@pytest.fixture(scope="module")
def service_model():
    cfg = ModelConfig(image_size=SIZE, depth=4, base_channels=8, structure_dim=32)
    return build_model(cfg, seed=0, with_critic=False)


@pytest.fixture(scope="module")
def client(service_model):
    with TestClient(create_app(service_model)) as c:
        yield c


def _png_b64(image: np.ndarray) -> str:
    return base64.b64encode(encode_image_png(image)).decode()


def _test_image(seed=0, size=SIZE) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0, 1, size=(size, size, 3)).astype(np.float32)


def _flat_light(value=0.5) -> list:
    return [value] * 768


class TestHealth:
    def test_reports_checkpoint_and_config(self, client, service_model):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["checkpoint_id"] == service_model.checkpoint_id
        assert body["config"]["image_size"] == SIZE


class TestPresets:
    def test_lists_named_maps_with_thumbnails(self, client):
        r = client.get("/presets")
        assert r.status_code == 200
        presets = r.json()["presets"]
        assert {p["name"] for p in presets} == set(build_preset_library())
        for p in presets:
            assert len(p["values"]) == 768
            thumb = decode_image_bytes(base64.b64decode(p["thumbnail_png_b64"]))
            assert thumb.shape == (128, 128, 3)


class TestRelight:
    def test_happy_path(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()),
            "target_light": _flat_light(),
            "options": {"return_parsing": True},
        })
        assert r.status_code == 200
        body = r.json()
        relit = decode_image_bytes(base64.b64decode(body["relit_png_b64"]))
        assert relit.shape == (SIZE, SIZE, 3)
        assert len(body["predicted_source_light"]) == 768
        assert min(body["predicted_source_light"]) >= 0.0
        assert body["timing_ms"] >= 0.0
        parsing = decode_image_bytes(base64.b64decode(body["parsing_png_b64"]))
        assert parsing.shape == (SIZE, SIZE, 3)

    def test_deterministic_for_identical_requests(self, client):
        payload = {"image_b64": _png_b64(_test_image(1)),
                   "target_light": _flat_light(0.3)}
        a = client.post("/relight", json=payload).json()
        b = client.post("/relight", json=payload).json()
        assert a["relit_png_b64"] == b["relit_png_b64"]
        assert a["predicted_source_light"] == b["predicted_source_light"]

    def test_wrong_light_length_is_422(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()),
            "target_light": [0.5] * 767,
        })
        assert r.status_code == 422
        assert "767" in r.json()["error"]

    def test_negative_light_is_400(self, client):
        light = _flat_light()
        light[5] = -1.0
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()), "target_light": light})
        assert r.status_code == 400

    def test_preset_composition(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image(2)),
            "target_light": {"preset": "front-key", "rotation": 4},
        })
        assert r.status_code == 200

    def test_full_rotation_matches_zero_rotation(self, client):
        image = _png_b64(_test_image(3))
        a = client.post("/relight", json={
            "image_b64": image, "target_light": {"preset": "sunset", "rotation": 0}})
        b = client.post("/relight", json={
            "image_b64": image, "target_light": {"preset": "sunset", "rotation": 16}})
        assert a.json()["relit_png_b64"] == b.json()["relit_png_b64"]

    def test_unknown_preset_is_400(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()),
            "target_light": {"preset": "nope"}})
        assert r.status_code == 400
        assert "nope" in r.json()["error"]

    def test_point_light_blend(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image(4)),
            "target_light": {
                "preset": "top-soft", "rotation": 2, "blend": 0.6,
                "point_lights": [{"direction": [0, 0, 1], "distance": 0.5,
                                  "color": [1, 0.5, 0.2]}],
            }})
        assert r.status_code == 200

    def test_point_lights_alone_need_no_blend(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()),
            "target_light": {"point_lights": [{"direction": [0, 1, 0],
                                               "distance": 0.4,
                                               "color": [1, 1, 1]}]}})
        assert r.status_code == 200

    def test_mixing_without_blend_is_400(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()),
            "target_light": {"preset": "top-soft",
                             "point_lights": [{"direction": [0, 0, 1],
                                               "distance": 0.5,
                                               "color": [1, 1, 1]}]}})
        assert r.status_code == 400
        assert "blend" in r.json()["error"]

    def test_blend_out_of_range_is_400(self, client):
        r = client.post("/relight", json={
            "image_b64": _png_b64(_test_image()),
            "target_light": {"preset": "top-soft", "blend": 1.5,
                             "point_lights": [{"direction": [0, 0, 1],
                                               "distance": 0.5, "color": [1, 1, 1]}]}})
        assert r.status_code == 400

    def test_malformed_payloads_are_400(self, client):
        image = _png_b64(_test_image())
        cases = [
            {"target_light": _flat_light()},                      # missing image
            {"image_b64": "&&&not-base64&&&", "target_light": _flat_light()},
            {"image_b64": base64.b64encode(b"not a png").decode(),
             "target_light": _flat_light()},
            {"image_b64": image},                                  # missing light
            {"image_b64": image, "target_light": "front-key"},     # wrong type
        ]
        for payload in cases:
            assert client.post("/relight", json=payload).status_code == 400, payload

    def test_invalid_json_body_is_400(self, client):
        r = client.post("/relight", content=b"{not json",
                        headers={"content-type": "application/json"})
        assert r.status_code == 400

    def test_size_mismatch_requires_resize_flag(self, client):
        big = _test_image(5, size=64)
        r = client.post("/relight", json={
            "image_b64": _png_b64(big), "target_light": _flat_light()})
        assert r.status_code == 400
        r = client.post("/relight", json={
            "image_b64": _png_b64(big), "target_light": _flat_light(),
            "options": {"allow_resize": True}})
        assert r.status_code == 200

    def test_oversize_image_is_413(self, client):
        huge = np.zeros((2100, 2100, 3), dtype=np.float32)
        r = client.post("/relight", json={
            "image_b64": _png_b64(huge), "target_light": _flat_light(),
            "options": {"allow_resize": True}})
        assert r.status_code == 413

    def test_multipart_matches_json(self, client):
        image = _test_image(6)
        json_body = client.post("/relight", json={
            "image_b64": _png_b64(image), "target_light": _flat_light(0.4)}).json()
        r = client.post("/relight",
                        files={"image": ("frame.png", encode_image_png(image),
                                         "image/png")},
                        data={"light": json.dumps(_flat_light(0.4))})
        assert r.status_code == 200
        assert r.json()["relit_png_b64"] == json_body["relit_png_b64"]


class TestRelightSequence:
    def test_constant_sequence_has_zero_rmse_series(self, client):
        frame = _png_b64(_test_image(7))
        r = client.post("/relight-sequence", json={
            "frames_b64": [frame, frame, frame],
            "lights": _flat_light(0.2)})
        assert r.status_code == 200
        body = r.json()
        assert len(body["frames_png_b64"]) == 3
        assert body["adjacent_rmse"] == [0.0, 0.0]

    def test_per_frame_lights_length_checked(self, client):
        frame = _png_b64(_test_image(8))
        r = client.post("/relight-sequence", json={
            "frames_b64": [frame, frame],
            "lights": [_flat_light(), _flat_light(), _flat_light()]})
        assert r.status_code == 400

    def test_empty_frames_rejected(self, client):
        r = client.post("/relight-sequence", json={"frames_b64": [],
                                                   "lights": _flat_light()})
        assert r.status_code == 400


class TestDebugPointlightMap:
    def test_matches_library_projection(self, client):
        payload = {"point_lights": [
            {"direction": [0.0, 0.0, 1.0], "distance": 0.5, "color": [1, 1, 1]},
            {"direction": [1.0, 0.0, 0.0], "distance": 1.2, "color": [0.2, 0.4, 0.8]},
        ]}
        r = client.post("/debug/pointlight-map", json=payload)
        assert r.status_code == 200
        values = np.asarray(r.json()["values"], dtype=np.float32)
        expected = project_point_lights([
            PointLight(np.array([0.0, 0.0, 1.0]), 0.5, np.array([1.0, 1.0, 1.0])),
            PointLight(np.array([1.0, 0.0, 0.0]), 1.2, np.array([0.2, 0.4, 0.8])),
        ]).flat()
        np.testing.assert_allclose(values, expected, rtol=1e-6)

    def test_empty_rejected(self, client):
        assert client.post("/debug/pointlight-map",
                           json={"point_lights": []}).status_code == 400


class TestAppFromEnv:
    def test_builds_from_checkpoint_env_var(self, service_model, tmp_path,
                                            monkeypatch):
        from videorelight.model import save_checkpoint
        from videorelight.service import app_from_env

        ckpt = tmp_path / "env.ckpt"
        save_checkpoint(ckpt, service_model)
        monkeypatch.setenv("RELIGHT_CHECKPOINT", str(ckpt))
        with TestClient(app_from_env()) as c:
            assert c.get("/health").json()["status"] == "ok"

    def test_missing_env_var_is_an_error(self, monkeypatch):
        from videorelight.errors import RelightError
        from videorelight.service import app_from_env

        monkeypatch.delenv("RELIGHT_CHECKPOINT", raising=False)
        with pytest.raises(RelightError):
            app_from_env()


class TestImmutability:
    def test_concurrent_identical_requests_identical_bodies(self, client,
                                                            service_model):
        payload = {"image_b64": _png_b64(_test_image(9)),
                   "target_light": _flat_light(0.7)}
        checkpoint_before = service_model.checkpoint_id

        def call(_):
            body = client.post("/relight", json=payload).json()
            return (body["relit_png_b64"], tuple(body["predicted_source_light"]))

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(call, range(32)))
        assert len(set(results)) == 1
        assert service_model.checkpoint_id == checkpoint_before

    @pytest.mark.slow
    def test_thousand_requests_identical(self, client):
        payload = {"image_b64": _png_b64(_test_image(10)),
                   "target_light": _flat_light(0.6)}

        def call(_):
            body = client.post("/relight", json=payload).json()
            return (body["relit_png_b64"], tuple(body["predicted_source_light"]))

        with ThreadPoolExecutor(max_workers=16) as pool:
            results = list(pool.map(call, range(1000)))
        assert len(set(results)) == 1
