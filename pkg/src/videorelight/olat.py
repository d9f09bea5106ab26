"""Synthetic dynamic one-light-at-a-time sequences with exact supervision.

Renders an animated head proxy (ellipsoid with a hair cap) under N
single-light conditions per frame, producing HDR basis images, semantic
parsing masks (skin / hair / background), foreground masks, and
analytically exact optical flow from the rigid motion script. Any
lighting condition is then reproduced by ``composite_relit`` as a
weighted sum of the basis images.

Flow conventions (gather-style warping, see ``flow.warp``):

* ``flow_to_next`` lives on frame t's pixel grid and holds the screen
  motion of the surface point under each pixel, t -> t+1. Sampling frame
  t+1 at ``p + flow_to_next(p)`` retrieves frame t's content, so this
  field drives the warp that pulls frame t+1 back onto frame t.
* ``flow_to_prev`` is the same field toward frame t-1 and drives the
  warp that pulls frame t-1 forward onto frame t.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .errors import ConfigurationError, DataFormatError, ShapeError
from .lighting import LightMap, sample_map_at_directions

SEM_CHANNELS = 3  # 0 skin, 1 hair, 2 background
DATASET_VERSION = 1


def fibonacci_sphere_directions(n: int) -> np.ndarray:
    """n near-equal-area unit directions (golden-angle spiral)."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    rad = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    ang = golden * i
    return np.stack([rad * np.cos(ang), rad * np.sin(ang), z], axis=1)


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """World-from-local rotation, applied as Ry(yaw) @ Rx(pitch) @ Rz(roll)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cx, sx = math.cos(pitch), math.sin(pitch)
    cz, sz = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return ry @ rx @ rz


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class SceneSpec:
    """Everything needed to render one take deterministically."""

    height: int = 64
    width: int = 64
    n_lights: int = 16
    n_frames: int = 8
    fps: float = 25.0
    world_extent: float = 1.6  # view width in world units

    radii: tuple = (0.36, 0.47, 0.40)
    hair_axis: tuple = (0.0, 0.8, -0.6)
    hair_cos: float = 0.55
    skin_albedo: tuple = (0.72, 0.52, 0.42)
    hair_albedo: tuple = (0.17, 0.12, 0.08)
    skin_spec: float = 0.16
    skin_shine: float = 24.0
    hair_spec: float = 0.32
    hair_shine: float = 60.0
    tex_freq_a: tuple = (3.1, 5.2, 2.4)
    tex_freq_b: tuple = (4.4, 2.7, 3.8)
    tex_amp: float = 0.22

    # per-frame rigid motion
    yaw: tuple = ()
    pitch: tuple = ()
    roll: tuple = ()
    translations: tuple = ()  # n_frames rows of (x, y, z) world offsets

    seed: int = 0
    identity_id: str = "id0"
    take_id: str = "take0"

    def __post_init__(self):
        if self.n_lights < 4:
            raise ConfigurationError("n_lights must be at least 4")
        if not (_is_pow2(self.height) and _is_pow2(self.width)
                and self.height >= 32 and self.width >= 32):
            raise ConfigurationError("height and width must be powers of two >= 32")
        if self.n_frames < 1:
            raise ConfigurationError("n_frames must be positive")
        if min(self.radii) <= 0.0:
            raise ConfigurationError("ellipsoid radii must be positive")
        axis = np.asarray(self.hair_axis, dtype=np.float64)
        self.hair_axis = tuple(axis / np.linalg.norm(axis))
        if len(self.yaw) == 0:
            self.yaw = tuple(0.0 for _ in range(self.n_frames))
        if len(self.pitch) == 0:
            self.pitch = tuple(0.0 for _ in range(self.n_frames))
        if len(self.roll) == 0:
            self.roll = tuple(0.0 for _ in range(self.n_frames))
        if len(self.translations) == 0:
            self.translations = tuple((0.0, 0.0, 0.0) for _ in range(self.n_frames))
        for name in ("yaw", "pitch", "roll", "translations"):
            if len(getattr(self, name)) != self.n_frames:
                raise ConfigurationError(f"motion array {name} must have n_frames entries")

    @property
    def px_scale(self) -> float:
        return self.world_extent / self.width

    def pose(self, t: int):
        rot = rotation_matrix(self.yaw[t], self.pitch[t], self.roll[t])
        return rot, np.asarray(self.translations[t], dtype=np.float64)


def make_scene_spec(identity: int = 0, take: int = 0, seed: int = 0,
                    height: int = 64, width: int = 64, n_lights: int = 16,
                    n_frames: int = 8, motion_scale: float = 1.0) -> SceneSpec:
    """Derive per-identity appearance and per-take motion from the seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, identity, 7]))
    radii = (0.36 * (1.0 + 0.12 * rng.uniform(-1, 1)),
             0.47 * (1.0 + 0.10 * rng.uniform(-1, 1)),
             0.40 * (1.0 + 0.12 * rng.uniform(-1, 1)))
    skin = np.clip(np.array([0.72, 0.52, 0.42]) * (1.0 + 0.18 * rng.uniform(-1, 1, 3)), 0.05, 0.95)
    hair = np.clip(np.array([0.17, 0.12, 0.08]) * (1.0 + 0.5 * rng.uniform(-1, 1, 3)), 0.02, 0.6)
    axis = np.array([0.25 * rng.uniform(-1, 1), 0.8, -0.6 + 0.2 * rng.uniform(-1, 1)])

    mrng = np.random.default_rng(np.random.SeedSequence([seed, identity, take, 13]))
    t_idx = np.arange(n_frames, dtype=np.float64)
    period = max(6.0, n_frames * float(mrng.uniform(0.8, 1.4)))
    yaw_amp = 0.14 * float(mrng.uniform(0.5, 1.2)) * motion_scale
    pitch_amp = 0.06 * float(mrng.uniform(0.4, 1.1)) * motion_scale
    phase = float(mrng.uniform(0, 2 * math.pi))
    yaw = yaw_amp * np.sin(2 * math.pi * t_idx / period + phase)
    pitch = pitch_amp * np.sin(2 * math.pi * t_idx / (period * 1.3) + phase * 0.7)
    px = (1.6 / width)
    tx_amp = 1.5 * px * float(mrng.uniform(0.4, 1.0)) * motion_scale
    ty_amp = 0.8 * px * float(mrng.uniform(0.3, 1.0)) * motion_scale
    trans = np.stack([tx_amp * np.sin(2 * math.pi * t_idx / period + 1.1),
                      ty_amp * np.sin(2 * math.pi * t_idx / (period * 0.9) + 0.3),
                      np.zeros(n_frames)], axis=1)

    return SceneSpec(
        height=height, width=width, n_lights=n_lights, n_frames=n_frames,
        radii=radii,
        hair_axis=tuple(axis), hair_cos=float(rng.uniform(0.48, 0.64)),
        skin_albedo=tuple(skin), hair_albedo=tuple(hair),
        skin_spec=float(rng.uniform(0.10, 0.22)), skin_shine=float(rng.uniform(16, 34)),
        hair_spec=float(rng.uniform(0.22, 0.42)), hair_shine=float(rng.uniform(40, 90)),
        tex_freq_a=tuple(rng.uniform(2.0, 6.0, 3)), tex_freq_b=tuple(rng.uniform(2.0, 6.0, 3)),
        tex_amp=float(rng.uniform(0.12, 0.3)),
        yaw=tuple(yaw), pitch=tuple(pitch), roll=tuple(0.0 * t_idx),
        translations=tuple(map(tuple, trans)),
        seed=seed, identity_id=f"id{identity}", take_id=f"take{take}")


@dataclass
class OlatFrame:
    """Per-frame basis images plus exact masks and flow."""

    basis: np.ndarray        # (n_lights, H, W, 3) float32, >= 0
    parsing: np.ndarray      # (H, W, 3) float32 in [0, 1], channels sum to 1
    foreground: np.ndarray   # (H, W) uint8 in {0, 1}
    flow_to_next: np.ndarray | None = None  # (H, W, 2) float32; None on last frame
    flow_to_prev: np.ndarray | None = None  # (H, W, 2) float32; None on first frame
    aux: dict | None = field(default=None, repr=False, compare=False)

    @property
    def shape(self):
        return self.basis.shape


@dataclass
class OlatSequence:
    frames: list
    light_directions: np.ndarray  # (n_lights, 3) float64 unit vectors
    fps: float
    identity_id: str
    take_id: str
    seed: int = 0

    @property
    def n_lights(self) -> int:
        return self.light_directions.shape[0]

    @property
    def image_hw(self):
        return self.frames[0].parsing.shape[:2]


def _project_screen(points: np.ndarray, spec: SceneSpec) -> np.ndarray:
    """World (x, y) -> fractional (col, row) under the orthographic camera."""
    s = spec.px_scale
    col = points[..., 0] / s + spec.width / 2.0 - 0.5
    row = spec.height / 2.0 - 0.5 - points[..., 1] / s
    return np.stack([col, row], axis=-1)


def _flow_between(material, fg, spec: SceneSpec, t_from: int, t_to: int) -> np.ndarray:
    """Exact screen displacement of frame ``t_from``'s surface points at ``t_to``."""
    h, w = fg.shape
    rot_to, trans_to = spec.pose(t_to)
    world_to = material @ rot_to.T + trans_to
    screen_to = _project_screen(world_to, spec)
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
    here = np.stack([cols, rows], axis=-1)
    flow = np.where(fg[..., None].astype(bool), screen_to - here, 0.0)
    return flow.astype(np.float32)


def render_sequence(spec: SceneSpec) -> OlatSequence:
    """Render every frame under every light, with masks and exact flow.

    Deterministic: the same spec (including seed-derived fields) yields a
    bit-identical sequence under a given kernel backend.
    """
    light_dirs = fibonacci_sphere_directions(spec.n_lights)
    raw = []
    for t in range(spec.n_frames):
        rot, trans = spec.pose(t)
        basis, region, material, normal = kernels.render_frame(
            spec.height, spec.width, spec.px_scale, rot, trans,
            np.asarray(spec.radii), np.asarray(spec.hair_axis), spec.hair_cos,
            np.asarray(spec.skin_albedo), np.asarray(spec.hair_albedo),
            spec.skin_spec, spec.skin_shine, spec.hair_spec, spec.hair_shine,
            np.asarray(spec.tex_freq_a), np.asarray(spec.tex_freq_b), spec.tex_amp,
            light_dirs)
        raw.append((basis, region, material, normal))

    frames = []
    inv_r2 = 1.0 / np.asarray(spec.radii) ** 2
    for t, (basis, region, material, normal) in enumerate(raw):
        fg = (region > 0).astype(np.uint8)
        parsing = np.zeros((spec.height, spec.width, SEM_CHANNELS), dtype=np.float32)
        parsing[:, :, 0] = region == 1
        parsing[:, :, 1] = region == 2
        parsing[:, :, 2] = region == 0

        flow_next = None
        flow_prev = None
        if t + 1 < spec.n_frames:
            flow_next = _flow_between(material, fg, spec, t, t + 1)
        if t > 0:
            flow_prev = _flow_between(material, fg, spec, t, t - 1)

        # local normals let tests reason about visibility in adjacent frames
        m = material * inv_r2[None, None, :]
        norm = np.linalg.norm(m, axis=-1, keepdims=True)
        local_normal = m / np.where(norm > 0, norm, 1.0)

        frames.append(OlatFrame(
            basis=basis.astype(np.float32),
            parsing=parsing,
            foreground=fg,
            flow_to_next=flow_next,
            flow_to_prev=flow_prev,
            aux={"material": material, "local_normal": local_normal,
                 "region": region, "spec": spec, "frame_index": t}))
    return OlatSequence(frames=frames, light_directions=light_dirs, fps=spec.fps,
                        identity_id=spec.identity_id, take_id=spec.take_id,
                        seed=spec.seed)


def composite_relit(frame: OlatFrame, light_dirs: np.ndarray, light: LightMap,
                    tonemap: bool = True, exposure: float = 1.0) -> np.ndarray:
    """Relight a frame by summing its basis images under ``light``.

    Each light direction contributes its bilinear map sample scaled by the
    equal-area solid angle 4*pi/N. The pre-tonemap output is linear in the
    light map; tone mapping applies the fixed exposure and clamps to [0, 1].
    """
    n = frame.basis.shape[0]
    if light_dirs.shape != (n, 3):
        raise ShapeError(
            f"frame holds {n} basis images but got {light_dirs.shape[0]} light directions")
    weights = sample_map_at_directions(light, light_dirs) * (4.0 * math.pi / n)
    hdr = kernels.composite_basis(frame.basis, weights)
    if not tonemap:
        return hdr
    return np.clip(hdr * exposure, 0.0, 1.0)


def fully_lit_image(frame: OlatFrame, light_dirs: np.ndarray) -> np.ndarray:
    """The dataset's reference composite: a uniform white lighting condition."""
    uniform = LightMap(np.full((16, 16, 3), 0.5, dtype=np.float32))
    return composite_relit(frame, light_dirs, uniform)


# ----------------------------------------------------------------------------
# On-disk layout: root/identity/take/frame_%04d/{basis.f32, parsing.f32,
# foreground.png, flow.f32 [, flow_prev.f32]} plus take-level meta.json.
# All .f32 payloads are row-major little-endian float32.
# ----------------------------------------------------------------------------


def _write_f32(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_f32(path: Path, shape) -> np.ndarray:
    if not path.exists():
        raise DataFormatError(f"missing payload {path}")
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise DataFormatError(
            f"{path} holds {raw.size} floats, expected {expected} for shape {tuple(shape)}")
    return raw.reshape(shape).copy()


def write_dataset(seq: OlatSequence, root) -> Path:
    """Write one sequence tree; returns the take directory."""
    take_dir = Path(root) / seq.identity_id / seq.take_id
    take_dir.mkdir(parents=True, exist_ok=True)
    n_frames = len(seq.frames)
    h, w = seq.image_hw
    meta = {
        "version": DATASET_VERSION,
        "kind": "olat-sequence",
        "height": h,
        "width": w,
        "n_lights": int(seq.n_lights),
        "n_frames": n_frames,
        "sem_channels": SEM_CHANNELS,
        "fps": seq.fps,
        "identity_id": seq.identity_id,
        "take_id": seq.take_id,
        "seed": seq.seed,
        "light_directions": seq.light_directions.tolist(),
    }
    (take_dir / "meta.json").write_text(json.dumps(meta, indent=1))
    for t, frame in enumerate(seq.frames):
        fdir = take_dir / f"frame_{t:04d}"
        fdir.mkdir(exist_ok=True)
        _write_f32(fdir / "basis.f32", frame.basis)
        _write_f32(fdir / "parsing.f32", frame.parsing)
        Image.fromarray((frame.foreground * 255).astype(np.uint8), mode="L").save(
            fdir / "foreground.png")
        if frame.flow_to_next is not None:
            _write_f32(fdir / "flow.f32", frame.flow_to_next)
        if frame.flow_to_prev is not None:
            _write_f32(fdir / "flow_prev.f32", frame.flow_to_prev)
    return take_dir


def _load_take(take_dir: Path) -> OlatSequence:
    meta_path = take_dir / "meta.json"
    if not meta_path.exists():
        raise DataFormatError(f"missing sidecar {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"corrupt sidecar {meta_path}: {exc}") from exc
    for key in ("height", "width", "n_lights", "n_frames", "light_directions"):
        if key not in meta:
            raise DataFormatError(f"sidecar {meta_path} is missing field {key!r}")
    h, w = meta["height"], meta["width"]
    n_lights, n_frames = meta["n_lights"], meta["n_frames"]

    frames = []
    for t in range(n_frames):
        fdir = take_dir / f"frame_{t:04d}"
        basis = _read_f32(fdir / "basis.f32", (n_lights, h, w, 3))
        parsing = _read_f32(fdir / "parsing.f32", (h, w, meta.get("sem_channels", 3)))
        fg_path = fdir / "foreground.png"
        if not fg_path.exists():
            raise DataFormatError(f"missing payload {fg_path}")
        fg = (np.asarray(Image.open(fg_path)) > 127).astype(np.uint8)
        flow_next = None
        flow_prev = None
        if t + 1 < n_frames:
            flow_next = _read_f32(fdir / "flow.f32", (h, w, 2))
        if t > 0 and (fdir / "flow_prev.f32").exists():
            flow_prev = _read_f32(fdir / "flow_prev.f32", (h, w, 2))
        frames.append(OlatFrame(basis=basis, parsing=parsing, foreground=fg,
                                flow_to_next=flow_next, flow_to_prev=flow_prev))
    return OlatSequence(
        frames=frames,
        light_directions=np.asarray(meta["light_directions"], dtype=np.float64),
        fps=float(meta.get("fps", 25.0)),
        identity_id=str(meta.get("identity_id", take_dir.parent.name)),
        take_id=str(meta.get("take_id", take_dir.name)),
        seed=int(meta.get("seed", 0)))


def discover_takes(root) -> list:
    """All take directories (holding meta.json) under ``root``, sorted."""
    root = Path(root)
    if (root / "meta.json").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/*/meta.json"))


def read_dataset(root) -> OlatSequence:
    """Read the sequence at ``root`` (a take dir, or a tree holding exactly one)."""
    takes = discover_takes(root)
    if not takes:
        frame_dirs = list(Path(root).glob("frame_*")) + list(Path(root).glob("*/*/frame_*"))
        if frame_dirs:
            raise DataFormatError(
                f"missing sidecar {frame_dirs[0].parent / 'meta.json'}")
        raise DataFormatError(f"no sequence found under {root}")
    if len(takes) > 1:
        raise DataFormatError(
            f"{root} holds {len(takes)} sequences; point at a single take directory")
    return _load_take(takes[0])


def read_all_sequences(root) -> list:
    return [_load_take(p) for p in discover_takes(root)]


def sequences_equal(a: OlatSequence, b: OlatSequence) -> bool:
    """Bit-exact equality on every float payload and mask."""
    if len(a.frames) != len(b.frames):
        return False
    if not np.array_equal(a.light_directions, b.light_directions):
        return False
    for fa, fb in zip(a.frames, b.frames):
        if not (np.array_equal(fa.basis, fb.basis)
                and np.array_equal(fa.parsing, fb.parsing)
                and np.array_equal(fa.foreground, fb.foreground)):
            return False
        for x, y in ((fa.flow_to_next, fb.flow_to_next),
                     (fa.flow_to_prev, fb.flow_to_prev)):
            if (x is None) != (y is None):
                return False
            if x is not None and not np.array_equal(x, y):
                return False
    return True


def dataset_fingerprint(root) -> str:
    """SHA-256 over every payload byte under ``root`` (order-stable)."""
    digest = hashlib.sha256()
    for take in discover_takes(root):
        for p in sorted(take.rglob("*")):
            if p.is_file():
                digest.update(p.relative_to(take).as_posix().encode())
                digest.update(p.read_bytes())
    return digest.hexdigest()
