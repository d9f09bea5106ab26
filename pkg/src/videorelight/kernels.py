"""Hot numeric kernels with numba-jitted and pure-numpy twins.

Every kernel exists in two implementations that compute the same math:
an explicit-loop version compiled with ``numba.njit`` and a vectorized
numpy fallback. The active path is chosen by the ``RELIGHT_NUMBA``
environment variable ("0"/"false"/"off" selects numpy; anything else, or
unset, selects numba when importable). ``set_backend``/``using_backend``
override the choice at runtime for tests and benchmarks.

All kernels take and return float64 arrays; callers cast at storage
boundaries. Loop kernels avoid parallel reductions so results are
bit-reproducible within a backend.
"""

from __future__ import annotations

import math
import os
from contextlib import contextmanager

import numpy as np

from .errors import ConfigurationError

try:
    from numba import njit

    _NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):  # noqa: D103
        raise ConfigurationError("numba backend requested but numba is not importable")


def _env_backend() -> str:
    flag = os.environ.get("RELIGHT_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return "numpy"
    return "numba" if _NUMBA_AVAILABLE else "numpy"


_ACTIVE = _env_backend()


def active_backend() -> str:
    return _ACTIVE


def set_backend(name: str) -> None:
    global _ACTIVE
    if name not in ("numpy", "numba"):
        raise ConfigurationError(f"unknown kernel backend {name!r}")
    if name == "numba" and not _NUMBA_AVAILABLE:
        raise ConfigurationError("numba backend requested but numba is not importable")
    _ACTIVE = name


@contextmanager
def using_backend(name: str):
    prev = _ACTIVE
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


# ----------------------------------------------------------------------------
# Frame shading: orthographic ray / ellipsoid intersection, two material
# regions (skin, hair cap), Lambert + Blinn-Phong per light. The camera looks
# down -z; the view vector at every pixel is +z. Region ids: 0 background,
# 1 skin, 2 hair. ``material`` holds the body-local hit coordinates (used for
# exact flow) and ``normal`` the world-space surface normal.
# ----------------------------------------------------------------------------


def _render_frame_numpy(height, width, px_scale, rot, trans, radii,
                        hair_axis, hair_cos, skin_albedo, hair_albedo,
                        skin_spec, skin_shine, hair_spec, hair_shine,
                        tex_freq_a, tex_freq_b, tex_amp, light_dirs):
    n_lights = light_dirs.shape[0]
    cols = (np.arange(width, dtype=np.float64) + 0.5 - width / 2.0) * px_scale
    rows = (height / 2.0 - np.arange(height, dtype=np.float64) - 0.5) * px_scale
    px = np.broadcast_to(cols[None, :], (height, width))
    py = np.broadcast_to(rows[:, None], (height, width))

    rot_t = rot.T
    origin_world = np.stack(
        [px, py, np.full((height, width), 10.0)], axis=-1) - trans[None, None, :]
    o = origin_world @ rot_t.T  # local-frame ray origins
    d = rot_t @ np.array([0.0, 0.0, -1.0])

    inv_r2 = 1.0 / (radii * radii)
    qa = np.sum(d * d * inv_r2)
    qb = 2.0 * np.sum(o * d[None, None, :] * inv_r2[None, None, :], axis=-1)
    qc = np.sum(o * o * inv_r2[None, None, :], axis=-1) - 1.0
    disc = qb * qb - 4.0 * qa * qc
    hit = disc >= 0.0

    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_hit = (-qb - sq) / (2.0 * qa)
    q = o + t_hit[..., None] * d[None, None, :]

    v = q / radii[None, None, :]
    v_norm = np.sqrt(np.sum(v * v, axis=-1))
    v_unit = v / np.where(v_norm > 0.0, v_norm, 1.0)[..., None]
    hair = hit & (v_unit @ hair_axis >= hair_cos)

    region = np.zeros((height, width), dtype=np.int8)
    region[hit] = 1
    region[hair] = 2

    mod = 1.0 - tex_amp * (0.5 + 0.25 * np.sin(v_unit @ tex_freq_a)
                           + 0.25 * np.cos(v_unit @ tex_freq_b))
    albedo = np.where(hair[..., None], hair_albedo[None, None, :],
                      skin_albedo[None, None, :]) * mod[..., None]
    spec_k = np.where(hair, hair_spec, skin_spec)
    shine = np.where(hair, hair_shine, skin_shine)

    m = q * inv_r2[None, None, :]
    n_world = m @ rot.T
    n_len = np.sqrt(np.sum(n_world * n_world, axis=-1))
    n_world = n_world / np.where(n_len > 0.0, n_len, 1.0)[..., None]

    basis = np.zeros((n_lights, height, width, 3), dtype=np.float64)
    view = np.array([0.0, 0.0, 1.0])
    for li in range(n_lights):
        ldir = light_dirs[li]
        ndl = n_world @ ldir
        lit = hit & (ndl > 0.0)
        half = ldir + view
        half = half / math.sqrt(float(half @ half))
        ndh = np.maximum(n_world @ half, 0.0)
        spec = spec_k * np.power(ndh, shine)
        shaded = albedo * ndl[..., None] + spec[..., None]
        basis[li] = np.where(lit[..., None], shaded, 0.0)

    material = np.where(hit[..., None], q, 0.0)
    normal = np.where(hit[..., None], n_world, 0.0)
    return basis, region, material, normal


def _render_frame_loops(height, width, px_scale, rot, trans, radii,
                        hair_axis, hair_cos, skin_albedo, hair_albedo,
                        skin_spec, skin_shine, hair_spec, hair_shine,
                        tex_freq_a, tex_freq_b, tex_amp, light_dirs):
    n_lights = light_dirs.shape[0]
    basis = np.zeros((n_lights, height, width, 3), dtype=np.float64)
    region = np.zeros((height, width), dtype=np.int8)
    material = np.zeros((height, width, 3), dtype=np.float64)
    normal = np.zeros((height, width, 3), dtype=np.float64)

    dx = rot[0, 0] * 0.0 + rot[1, 0] * 0.0 + rot[2, 0] * -1.0
    dy = rot[0, 1] * 0.0 + rot[1, 1] * 0.0 + rot[2, 1] * -1.0
    dz = rot[0, 2] * 0.0 + rot[1, 2] * 0.0 + rot[2, 2] * -1.0
    ir0 = 1.0 / (radii[0] * radii[0])
    ir1 = 1.0 / (radii[1] * radii[1])
    ir2 = 1.0 / (radii[2] * radii[2])
    qa = dx * dx * ir0 + dy * dy * ir1 + dz * dz * ir2

    for r in range(height):
        wy = (height / 2.0 - r - 0.5) * px_scale
        for c in range(width):
            wx = (c + 0.5 - width / 2.0) * px_scale
            gx = wx - trans[0]
            gy = wy - trans[1]
            gz = 10.0 - trans[2]
            ox = rot[0, 0] * gx + rot[1, 0] * gy + rot[2, 0] * gz
            oy = rot[0, 1] * gx + rot[1, 1] * gy + rot[2, 1] * gz
            oz = rot[0, 2] * gx + rot[1, 2] * gy + rot[2, 2] * gz

            qb = 2.0 * (ox * dx * ir0 + oy * dy * ir1 + oz * dz * ir2)
            qc = ox * ox * ir0 + oy * oy * ir1 + oz * oz * ir2 - 1.0
            disc = qb * qb - 4.0 * qa * qc
            if disc < 0.0:
                continue
            t_hit = (-qb - math.sqrt(disc)) / (2.0 * qa)
            q0 = ox + t_hit * dx
            q1 = oy + t_hit * dy
            q2 = oz + t_hit * dz

            v0 = q0 / radii[0]
            v1 = q1 / radii[1]
            v2 = q2 / radii[2]
            vl = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
            if vl > 0.0:
                v0 /= vl
                v1 /= vl
                v2 /= vl
            is_hair = (v0 * hair_axis[0] + v1 * hair_axis[1] + v2 * hair_axis[2]) >= hair_cos
            region[r, c] = 2 if is_hair else 1

            mod = 1.0 - tex_amp * (
                0.5
                + 0.25 * math.sin(v0 * tex_freq_a[0] + v1 * tex_freq_a[1] + v2 * tex_freq_a[2])
                + 0.25 * math.cos(v0 * tex_freq_b[0] + v1 * tex_freq_b[1] + v2 * tex_freq_b[2]))
            if is_hair:
                a0 = hair_albedo[0] * mod
                a1 = hair_albedo[1] * mod
                a2 = hair_albedo[2] * mod
                ks = hair_spec
                sh = hair_shine
            else:
                a0 = skin_albedo[0] * mod
                a1 = skin_albedo[1] * mod
                a2 = skin_albedo[2] * mod
                ks = skin_spec
                sh = skin_shine

            m0 = q0 * ir0
            m1 = q1 * ir1
            m2 = q2 * ir2
            nx = rot[0, 0] * m0 + rot[0, 1] * m1 + rot[0, 2] * m2
            ny = rot[1, 0] * m0 + rot[1, 1] * m1 + rot[1, 2] * m2
            nz = rot[2, 0] * m0 + rot[2, 1] * m1 + rot[2, 2] * m2
            nl = math.sqrt(nx * nx + ny * ny + nz * nz)
            if nl > 0.0:
                nx /= nl
                ny /= nl
                nz /= nl

            material[r, c, 0] = q0
            material[r, c, 1] = q1
            material[r, c, 2] = q2
            normal[r, c, 0] = nx
            normal[r, c, 1] = ny
            normal[r, c, 2] = nz

            for li in range(n_lights):
                lx = light_dirs[li, 0]
                ly = light_dirs[li, 1]
                lz = light_dirs[li, 2]
                ndl = nx * lx + ny * ly + nz * lz
                if ndl <= 0.0:
                    continue
                hx = lx
                hy = ly
                hz = lz + 1.0
                hl = math.sqrt(hx * hx + hy * hy + hz * hz)
                hx /= hl
                hy /= hl
                hz /= hl
                ndh = nx * hx + ny * hy + nz * hz
                if ndh < 0.0:
                    ndh = 0.0
                spec = ks * ndh ** sh
                basis[li, r, c, 0] = a0 * ndl + spec
                basis[li, r, c, 1] = a1 * ndl + spec
                basis[li, r, c, 2] = a2 * ndl + spec

    return basis, region, material, normal


# ----------------------------------------------------------------------------
# Weighted basis sum: out[h,w,c] = sum_n weights[n,c] * basis[n,h,w,c]
# ----------------------------------------------------------------------------


def _composite_basis_numpy(basis, weights):
    return np.einsum("nc,nhwc->hwc", weights, basis)


def _composite_basis_loops(basis, weights):
    n, h, w, _ = basis.shape
    out = np.zeros((h, w, 3), dtype=np.float64)
    for li in range(n):
        w0 = weights[li, 0]
        w1 = weights[li, 1]
        w2 = weights[li, 2]
        for r in range(h):
            for c in range(w):
                out[r, c, 0] += w0 * basis[li, r, c, 0]
                out[r, c, 1] += w1 * basis[li, r, c, 1]
                out[r, c, 2] += w2 * basis[li, r, c, 2]
    return out


# ----------------------------------------------------------------------------
# Backward-sampling bilinear warp: out(p) = image(p + flow(p)).
# ``valid`` is 0 where the sample point leaves the image rectangle.
# ----------------------------------------------------------------------------


def _bilinear_warp_numpy(image, flow):
    h, w, ch = image.shape
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
    sx = cols + flow[:, :, 0]
    sy = rows + flow[:, :, 1]
    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)

    sxc = np.clip(sx, 0.0, w - 1.0)
    syc = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sxc).astype(np.int64)
    y0 = np.floor(syc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sxc - x0
    fy = syc - y0

    i00 = image[y0, x0]
    i01 = image[y0, x1]
    i10 = image[y1, x0]
    i11 = image[y1, x1]
    top = i00 * (1.0 - fx)[..., None] + i01 * fx[..., None]
    bot = i10 * (1.0 - fx)[..., None] + i11 * fx[..., None]
    out = top * (1.0 - fy)[..., None] + bot * fy[..., None]
    out = np.where(valid[..., None], out, 0.0)
    return out, valid.astype(np.float64)


def _bilinear_warp_loops(image, flow):
    h, w, ch = image.shape
    out = np.zeros((h, w, ch), dtype=np.float64)
    valid = np.zeros((h, w), dtype=np.float64)
    for r in range(h):
        for c in range(w):
            sx = c + flow[r, c, 0]
            sy = r + flow[r, c, 1]
            if sx < 0.0 or sx > w - 1.0 or sy < 0.0 or sy > h - 1.0:
                continue
            valid[r, c] = 1.0
            x0 = int(math.floor(sx))
            y0 = int(math.floor(sy))
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = sx - x0
            fy = sy - y0
            for k in range(ch):
                top = image[y0, x0, k] * (1.0 - fx) + image[y0, x1, k] * fx
                bot = image[y1, x0, k] * (1.0 - fx) + image[y1, x1, k] * fx
                out[r, c, k] = top * (1.0 - fy) + bot * fy
    return out, valid


# ----------------------------------------------------------------------------
# Bilinear resize with the half-pixel (align_corners=False) convention.
# ----------------------------------------------------------------------------


def _bilinear_resize_numpy(image, out_h, out_w):
    h, w, ch = image.shape
    scale_y = h / out_h
    scale_x = w / out_w
    sy = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]

    i00 = image[y0[:, None], x0[None, :]]
    i01 = image[y0[:, None], x1[None, :]]
    i10 = image[y1[:, None], x0[None, :]]
    i11 = image[y1[:, None], x1[None, :]]
    top = i00 * (1.0 - fx) + i01 * fx
    bot = i10 * (1.0 - fx) + i11 * fx
    return top * (1.0 - fy) + bot * fy


def _bilinear_resize_loops(image, out_h, out_w):
    h, w, ch = image.shape
    scale_y = h / out_h
    scale_x = w / out_w
    out = np.zeros((out_h, out_w, ch), dtype=np.float64)
    for r in range(out_h):
        sy = (r + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1.0:
            sy = h - 1.0
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for c in range(out_w):
            sx = (c + 0.5) * scale_x - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1.0:
                sx = w - 1.0
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for k in range(ch):
                top = image[y0, x0, k] * (1.0 - fx) + image[y0, x1, k] * fx
                bot = image[y1, x0, k] * (1.0 - fx) + image[y1, x1, k] * fx
                out[r, c, k] = top * (1.0 - fy) + bot * fy
    return out


if _NUMBA_AVAILABLE:
    _render_frame_numba = njit(cache=True)(_render_frame_loops)
    _composite_basis_numba = njit(cache=True)(_composite_basis_loops)
    _bilinear_warp_numba = njit(cache=True)(_bilinear_warp_loops)
    _bilinear_resize_numba = njit(cache=True)(_bilinear_resize_loops)

_REGISTRY = {
    "render_frame": {"numpy": _render_frame_numpy},
    "composite_basis": {"numpy": _composite_basis_numpy},
    "bilinear_warp": {"numpy": _bilinear_warp_numpy},
    "bilinear_resize": {"numpy": _bilinear_resize_numpy},
}
if _NUMBA_AVAILABLE:
    _REGISTRY["render_frame"]["numba"] = _render_frame_numba
    _REGISTRY["composite_basis"]["numba"] = _composite_basis_numba
    _REGISTRY["bilinear_warp"]["numba"] = _bilinear_warp_numba
    _REGISTRY["bilinear_resize"]["numba"] = _bilinear_resize_numba


def _impl(name):
    return _REGISTRY[name][_ACTIVE]


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def render_frame(height, width, px_scale, rot, trans, radii, hair_axis, hair_cos,
                 skin_albedo, hair_albedo, skin_spec, skin_shine, hair_spec,
                 hair_shine, tex_freq_a, tex_freq_b, tex_amp, light_dirs):
    """Shade one frame under every light; see module docstring for frames/regions."""
    return _impl("render_frame")(
        int(height), int(width), float(px_scale), _f64(rot), _f64(trans),
        _f64(radii), _f64(hair_axis), float(hair_cos), _f64(skin_albedo),
        _f64(hair_albedo), float(skin_spec), float(skin_shine), float(hair_spec),
        float(hair_shine), _f64(tex_freq_a), _f64(tex_freq_b), float(tex_amp),
        _f64(light_dirs))


def composite_basis(basis, weights):
    """Per-channel weighted sum of per-light basis images."""
    return _impl("composite_basis")(_f64(basis), _f64(weights))


def bilinear_warp(image, flow):
    """Gather-style warp; returns (warped, validity) with zeros outside the frame."""
    squeeze = image.ndim == 2
    img = _f64(image[..., None] if squeeze else image)
    out, valid = _impl("bilinear_warp")(img, _f64(flow))
    return (out[..., 0] if squeeze else out), valid


def bilinear_resize(image, out_h, out_w):
    """Half-pixel-convention bilinear resize to (out_h, out_w)."""
    squeeze = image.ndim == 2
    img = _f64(image[..., None] if squeeze else image)
    out = _impl("bilinear_resize")(img, int(out_h), int(out_w))
    return out[..., 0] if squeeze else out
