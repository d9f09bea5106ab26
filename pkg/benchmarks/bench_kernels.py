"""Benchmark the numba-jitted kernels against their pure-numpy twins.

Runs each hot kernel on representative desk-scale and larger inputs and
prints per-call timings plus the speedup factor. The numba path includes
a warmup call so JIT compilation is excluded from the timings.

Usage: python benchmarks/bench_kernels.py [--size 128] [--lights 32] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from videorelight import kernels
from videorelight.olat import fibonacci_sphere_directions


def _frame_args(size, n_lights):
    return dict(
        height=size, width=size, px_scale=1.6 / size, rot=np.eye(3),
        trans=np.array([0.02, -0.03, 0.0]), radii=np.array([0.36, 0.47, 0.40]),
        hair_axis=np.array([0.0, 0.8, -0.6]) / np.linalg.norm([0.0, 0.8, -0.6]),
        hair_cos=0.55, skin_albedo=np.array([0.7, 0.5, 0.4]),
        hair_albedo=np.array([0.2, 0.15, 0.1]), skin_spec=0.15, skin_shine=24.0,
        hair_spec=0.3, hair_shine=60.0, tex_freq_a=np.array([3.0, 5.0, 2.0]),
        tex_freq_b=np.array([4.0, 2.0, 3.0]), tex_amp=0.2,
        light_dirs=fibonacci_sphere_directions(n_lights))


def _time(fn, repeats):
    fn()  # warmup (and JIT compile on the numba path)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description="kernel backend benchmark")
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--lights", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    size, lights = args.size, args.lights
    frame_args = _frame_args(size, lights)
    basis = rng.uniform(size=(lights, size, size, 3))
    weights = rng.uniform(size=(lights, 3))
    image = rng.uniform(size=(size, size, 3))
    flow = rng.uniform(-3, 3, size=(size, size, 2))

    cases = [
        (f"render_frame      {size}x{size}, {lights} lights",
         lambda: kernels.render_frame(**frame_args)),
        (f"composite_basis   {lights}x{size}x{size}x3",
         lambda: kernels.composite_basis(basis, weights)),
        (f"bilinear_warp     {size}x{size}x3",
         lambda: kernels.bilinear_warp(image, flow)),
        (f"bilinear_resize   {size}->{size * 2}",
         lambda: kernels.bilinear_resize(image, size * 2, size * 2)),
    ]

    print(f"{'kernel':44s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, fn in cases:
        with kernels.using_backend("numpy"):
            t_np = _time(fn, args.repeats)
        try:
            with kernels.using_backend("numba"):
                t_nb = _time(fn, args.repeats)
        except Exception as exc:  # numba unavailable
            print(f"{name:44s} {t_np * 1e3:10.2f}ms {'n/a':>12s}  ({exc})")
            continue
        print(f"{name:44s} {t_np * 1e3:10.2f}ms {t_nb * 1e3:10.2f}ms "
              f"{t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
