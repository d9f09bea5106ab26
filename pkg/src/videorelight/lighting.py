"""Environment-lighting maps, point-light synthesis, and triplet sampling.

A lighting condition is a flattened latitude-longitude radiance grid of
shape 16x16x3 (rows sweep latitude theta in [0, pi], columns longitude
phi in [0, 2*pi), channels RGB, linear units). Texel (r, c) is centered
at theta = pi*(r+0.5)/16, phi = 2*pi*(c+0.5)/16 with direction
omega = (sin(theta)cos(phi), sin(theta)sin(phi), cos(theta)).

Training lights are drawn as a triplet: the first frame's light, a
Beta-mixed light for the adjacent frame, and a Beta-mixed target light
perturbed by a random point-light map, so consecutive inputs stay
correlated while targets stay diverse.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError

MAP_ROWS = 16
MAP_COLS = 16
MAP_SHAPE = (MAP_ROWS, MAP_COLS, 3)
MAP_SIZE = MAP_ROWS * MAP_COLS * 3
MAX_POINT_LIGHT_DISTANCE = 1.5


def _validate_values(values: np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.shape != MAP_SHAPE:
        raise ConfigurationError(f"light map must have shape {MAP_SHAPE}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("light map contains non-finite entries")
    if np.any(arr < 0.0):
        raise ConfigurationError("light map contains negative radiance")
    return np.ascontiguousarray(arr)


@dataclass
class LightMap:
    """Non-negative 16x16x3 latitude-longitude radiance grid."""

    values: np.ndarray

    def __post_init__(self):
        self.values = _validate_values(self.values)

    def flat(self) -> np.ndarray:
        """Row-major (theta, phi, channel) vector of 768 float32 values."""
        return self.values.reshape(-1)

    def rotated(self, columns: int) -> "LightMap":
        return rotate_light(self, columns)

    def __eq__(self, other):
        return isinstance(other, LightMap) and np.array_equal(self.values, other.values)


@dataclass
class PointLight:
    """Point source outside the unit sphere, projected onto it for map synthesis."""

    direction: np.ndarray  # unit vector from sphere center
    surface_distance: float  # distance beyond the unit sphere, in (0, 1.5]
    color: np.ndarray  # RGB in [0, 1]

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        if self.direction.shape != (3,):
            raise ConfigurationError("point light direction must be a 3-vector")
        if abs(float(np.linalg.norm(self.direction)) - 1.0) > 1e-6:
            raise ConfigurationError("point light direction must be unit length")
        if not (0.0 < self.surface_distance <= MAX_POINT_LIGHT_DISTANCE):
            raise ConfigurationError(
                f"surface_distance must lie in (0, {MAX_POINT_LIGHT_DISTANCE}]")
        if self.color.shape != (3,) or np.any(self.color < 0.0) or np.any(self.color > 1.0):
            raise ConfigurationError("point light color must be RGB in [0, 1]")


@dataclass
class LightTriplet:
    """Lights for two adjacent input frames plus the relighting target."""

    light_first: LightMap
    light_second: LightMap
    light_target: LightMap
    beta1: float
    beta2: float


def texel_directions() -> np.ndarray:
    """(16, 16, 3) array of texel-center unit directions."""
    r = np.arange(MAP_ROWS, dtype=np.float64)
    c = np.arange(MAP_COLS, dtype=np.float64)
    theta = math.pi * (r + 0.5) / MAP_ROWS
    phi = 2.0 * math.pi * (c + 0.5) / MAP_COLS
    sin_t = np.sin(theta)[:, None]
    dirs = np.empty(MAP_SHAPE, dtype=np.float64)
    dirs[:, :, 0] = sin_t * np.cos(phi)[None, :]
    dirs[:, :, 1] = sin_t * np.sin(phi)[None, :]
    dirs[:, :, 2] = np.cos(theta)[:, None]
    return dirs


_TEXEL_DIRS = texel_directions()


def rotate_light(light: LightMap, columns: int) -> LightMap:
    """Cyclic longitude shift by ``columns mod 16``; latitude rows untouched."""
    shift = int(columns) % MAP_COLS
    if shift == 0:
        return LightMap(light.values.copy())
    return LightMap(np.roll(light.values, shift, axis=1))


def sample_uniform_light(rng: np.random.Generator, library: list[LightMap]) -> LightMap:
    """Draw one library map and apply a random longitudinal rotation."""
    if not library:
        raise ConfigurationError("light library is empty")
    idx = int(rng.integers(0, len(library)))
    columns = int(rng.integers(0, MAP_COLS))
    return rotate_light(library[idx], columns)


def sample_point_lights(rng: np.random.Generator) -> list[PointLight]:
    """Draw 1-3 point sources with uniform direction, offset, and color."""
    count = int(rng.integers(1, 4))
    lights = []
    for _ in range(count):
        vec = rng.normal(size=3)
        norm = float(np.linalg.norm(vec))
        while norm < 1e-12:
            vec = rng.normal(size=3)
            norm = float(np.linalg.norm(vec))
        distance = MAX_POINT_LIGHT_DISTANCE - float(
            rng.uniform(0.0, MAX_POINT_LIGHT_DISTANCE))
        color = rng.uniform(0.0, 1.0, size=3)
        lights.append(PointLight(vec / norm, distance, color))
    return lights


def project_point_lights(lights: list[PointLight]) -> LightMap:
    """Accumulate clamped-cosine lobes with inverse-square falloff per texel.

    Texel (theta, phi) receives, per light,
    color * max(0, omega . direction) / (1 + surface_distance)^2.
    """
    values = np.zeros(MAP_SHAPE, dtype=np.float64)
    for light in lights:
        lobe = np.maximum(_TEXEL_DIRS @ light.direction, 0.0)
        falloff = 1.0 / (1.0 + light.surface_distance) ** 2
        values += lobe[..., None] * light.color[None, None, :] * falloff
    return LightMap(values)


def sample_point_light_map(rng: np.random.Generator) -> LightMap:
    return project_point_lights(sample_point_lights(rng))


def mix_lights(a: LightMap, b: LightMap, weight: float) -> LightMap:
    """weight * a + (1 - weight) * b, computed in float64."""
    return LightMap(weight * a.values.astype(np.float64)
                    + (1.0 - weight) * b.values.astype(np.float64))


def add_lights(a: LightMap, b: LightMap) -> LightMap:
    return LightMap(a.values.astype(np.float64) + b.values.astype(np.float64))


def sample_triplet(rng: np.random.Generator, library: list[LightMap],
                   beta1: float | None = None, beta2: float | None = None,
                   point_map: LightMap | None = None) -> LightTriplet:
    """Draw the (first, second, target) light triplet.

    The first light is a uniform draw; the second mixes it with a fresh
    uniform draw by beta1; the target mixes the second with another
    uniform draw by beta2 and adds a point-light map. Both mixing weights
    come from Beta(0.5, 0.5). Keyword overrides pin individual draws for
    tests and tooling; overriding consumes no rng state for that draw.
    """
    light_first = sample_uniform_light(rng, library)
    draw_j = sample_uniform_light(rng, library)
    draw_k = sample_uniform_light(rng, library)
    if beta1 is None:
        beta1 = float(rng.beta(0.5, 0.5))
    if beta2 is None:
        beta2 = float(rng.beta(0.5, 0.5))
    if point_map is None:
        point_map = sample_point_light_map(rng)
    light_second = mix_lights(light_first, draw_j, beta1)
    light_target = add_lights(mix_lights(light_second, draw_k, beta2), point_map)
    return LightTriplet(light_first, light_second, light_target,
                        float(beta1), float(beta2))


def log_light_distance(light: LightMap, other: LightMap) -> float:
    """0.5 * sum over all 768 entries of (log(1+L) - log(1+L'))^2."""
    a = np.log1p(light.values.astype(np.float64))
    b = np.log1p(other.values.astype(np.float64))
    return 0.5 * float(np.sum((a - b) ** 2))


def sample_map_at_directions(light: LightMap, directions: np.ndarray) -> np.ndarray:
    """Bilinear radiance lookups at unit ``directions`` (N, 3) -> (N, 3).

    Longitude wraps; latitude clamps at the poles. Inverse of the texel
    center convention, so a texel-center direction returns that texel.
    """
    d = np.asarray(directions, dtype=np.float64)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * math.pi)
    rf = theta * MAP_ROWS / math.pi - 0.5
    cf = phi * MAP_COLS / (2.0 * math.pi) - 0.5

    rf = np.clip(rf, 0.0, MAP_ROWS - 1.0)
    r0 = np.floor(rf).astype(np.int64)
    r1 = np.minimum(r0 + 1, MAP_ROWS - 1)
    fr = rf - r0

    c0 = np.floor(cf).astype(np.int64) % MAP_COLS
    c1 = (c0 + 1) % MAP_COLS
    fc = np.mod(cf, 1.0)

    vals = light.values.astype(np.float64)
    top = vals[r0, c0] * (1.0 - fc)[:, None] + vals[r0, c1] * fc[:, None]
    bot = vals[r1, c0] * (1.0 - fc)[:, None] + vals[r1, c1] * fc[:, None]
    return top * (1.0 - fr)[:, None] + bot * fr[:, None]


# ----------------------------------------------------------------------------
# Procedural preset library. Stands in for captured HDR panoramas; values are
# calibrated so composited portraits mostly stay inside [0, 1] at exposure 1.
# ----------------------------------------------------------------------------

_UP = np.array([0.0, 1.0, 0.0])


def _lobe(direction, color, sharpness, gain, floor=0.02):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    cos = np.clip(_TEXEL_DIRS @ d, 0.0, 1.0)
    vals = floor + gain * cos ** sharpness
    return LightMap(vals[..., None] * np.asarray(color, dtype=np.float64))


def build_preset_library() -> dict[str, LightMap]:
    """Deterministic named environment maps used for sampling and the UI."""
    presets: dict[str, LightMap] = {}
    presets["uniform-white"] = LightMap(np.full(MAP_SHAPE, 0.5, dtype=np.float32))
    presets["front-key"] = _lobe([0, 0, 1], [1.0, 0.97, 0.92], 6.0, 1.1)
    presets["top-soft"] = _lobe(_UP, [0.95, 0.97, 1.0], 2.0, 0.8)
    presets["side-warm"] = _lobe([1, 0.1, 0.25], [1.0, 0.72, 0.45], 5.0, 1.2)
    presets["back-rim"] = _lobe([0, 0.25, -1], [0.55, 0.65, 1.0], 8.0, 1.3)

    elevation = _TEXEL_DIRS @ _UP
    sky = np.clip(0.5 * (elevation + 1.0), 0.0, 1.0)
    grad = (0.12 + 0.55 * sky)[..., None] * np.array([0.75, 0.85, 1.05]) \
        + (0.35 * (1.0 - sky))[..., None] * np.array([0.55, 0.42, 0.3])
    presets["sky-ground"] = LightMap(grad)

    band = np.exp(-(elevation / 0.35) ** 2)
    sunset = band[..., None] * np.array([1.2, 0.55, 0.25]) \
        + (0.1 + 0.12 * np.clip(elevation, 0, 1))[..., None] * np.array([0.4, 0.5, 0.9])
    presets["sunset"] = LightMap(sunset)

    studio = project_point_lights([
        PointLight(np.array([0.5, 0.55, 0.67]) / np.linalg.norm([0.5, 0.55, 0.67]),
                   0.4, np.array([1.0, 0.98, 0.95])),
        PointLight(np.array([-0.7, 0.1, 0.7]) / np.linalg.norm([-0.7, 0.1, 0.7]),
                   1.0, np.array([0.45, 0.47, 0.55])),
        PointLight(np.array([0.2, 0.4, -0.89]) / np.linalg.norm([0.2, 0.4, -0.89]),
                   0.7, np.array([0.7, 0.75, 0.9])),
    ])
    presets["studio-three-point"] = studio
    return presets


def default_library() -> list[LightMap]:
    return list(build_preset_library().values())


# ----------------------------------------------------------------------------
# File format: 768 little-endian float32, row-major (theta, phi, channel),
# next to a JSON sidecar {"kind": "lightmap", "shape": [16, 16, 3]}.
# ----------------------------------------------------------------------------


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def save_light_map(light: LightMap, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(light.values.astype("<f4").tobytes())
    sidecar_path(path).write_text(
        json.dumps({"kind": "lightmap", "shape": list(MAP_SHAPE)}))


def load_light_map(path) -> LightMap:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise DataFormatError(f"missing sidecar {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"corrupt sidecar {side}: {exc}") from exc
    if meta.get("kind") != "lightmap" or meta.get("shape") != list(MAP_SHAPE):
        raise DataFormatError(f"sidecar {side} does not describe a 16x16x3 light map")
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != MAP_SIZE:
        raise DataFormatError(
            f"{path} holds {raw.size} floats, expected {MAP_SIZE}")
    return LightMap(raw.reshape(MAP_SHAPE).copy())
