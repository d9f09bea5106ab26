"""Calibration: does the temporal objective reduce flicker at a 2000-step budget?

Trains the full model and a temporal-ablated twin with matched seeds and
budgets, then compares their jitter curves on the 200-frame benchmark.
"""

import json
import sys
import time

import numpy as np

from videorelight import olat
from videorelight.evaluation import LightPath, jitter_benchmark, model_relight_fn
from videorelight.lighting import default_library, rotate_light
from videorelight.losses import LossWeights
from videorelight.model import load_checkpoint
from videorelight.training import TrainConfig, run_training, split_sequences


def main(steps=2000, seed=0, frames=200, out_root="/tmp/temporal_calib"):
    t0 = time.time()
    seqs = [olat.render_sequence(olat.make_scene_spec(i, 0, seed=0, n_frames=8))
            for i in range(4)]
    _, held = split_sequences(seqs, 1)
    lib = default_library()

    results = {}
    for name, temporal in (("with", 1.0), ("without", 0.0)):
        cfg = TrainConfig(out_dir=f"{out_root}/{name}", steps=steps, batch_size=4,
                          warmup_steps=min(1000, steps // 3), seed=seed,
                          checkpoint_every=0, held_out_identities=1,
                          weights=LossWeights(temporal=temporal))
        out = run_training(cfg, sequences=seqs)
        results[name] = out["checkpoint"]
        print(f"{name}: trained in {time.time() - t0:.0f}s", flush=True)

    rng = np.random.default_rng(123)
    path = LightPath(lib, rng)
    target = rotate_light(lib[int(rng.integers(len(lib)))], int(rng.integers(16)))
    base = held[0].frames[0]
    curves = {}
    for name, ckpt in results.items():
        model = load_checkpoint(ckpt, with_critic=False).eval_mode()
        curves[name] = jitter_benchmark(model_relight_fn(model), base,
                                        held[0].light_directions, path, target,
                                        n_frames=frames)
        print(name, [f"{j:.5f}" for _, j in curves[name]], flush=True)

    wins = sum(1 for (_, a), (_, b) in zip(curves["with"], curves["without"])
               if a <= b)
    print(f"temporal wins at {wins}/10 speedups")
    print(json.dumps({"wins": wins, "curves": curves}))


if __name__ == "__main__":
    main(steps=int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
