"""Command-line entry points: gen-data, train, eval, jitter, serve, relight.

Exit codes: 0 success, 2 bad flags or missing referenced paths, 3 data
format errors, 4 checkpoint incompatibilities.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import olat
from .errors import (CheckpointError, ConfigurationError, DataFormatError,
                     EvaluationError, RelightError)
from .evaluation import (EvalReport, LightPath, evaluate_model, jitter_benchmark,
                         model_relight_fn, psnr_from_rmse)
from .inference import encode_image_png, load_image, relight_arrays, resize_image
from .lighting import (build_preset_library, default_library, load_light_map,
                       rotate_light, save_light_map, LightMap)
from .model import load_checkpoint
from .training import TrainConfig, run_training, split_sequences

EXIT_OK = 0
EXIT_FLAGS = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4


def _require_path(parser: argparse.ArgumentParser, flag: str, value: str) -> Path:
    path = Path(value)
    if not path.exists():
        parser.error(f"{flag} path does not exist: {path}")
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relight",
        description="Synthetic-data generation, training, evaluation, and "
                    "serving for video portrait relighting.")
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("gen-data", help="render a synthetic OLAT dataset tree")
    gen.add_argument("--root", required=True, help="output dataset directory")
    gen.add_argument("--identities", type=int, default=4)
    gen.add_argument("--takes", type=int, default=1)
    gen.add_argument("--frames", type=int, default=8)
    gen.add_argument("--size", type=int, default=64)
    gen.add_argument("--n-lights", type=int, default=16)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--motion-scale", type=float, default=1.0)

    train = sub.add_parser("train", help="run the optimization loop")
    train.add_argument("--data", required=True, help="dataset root from gen-data")
    train.add_argument("--out", required=True, help="run directory")
    train.add_argument("--config", help="JSON file mirroring the training config")
    train.add_argument("--steps", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--warmup-steps", type=int)
    train.add_argument("--no-temporal", action="store_true",
                       help="ablate the temporal objective (weight 0)")
    train.add_argument("--quiet", action="store_true")

    ev = sub.add_parser("eval", help="masked RMSE/PSNR/SSIM on held-out identities")
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True, help="report JSON path")
    ev.add_argument("--checkpoint")
    ev.add_argument("--held-out", type=int, default=1)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--oracle", action="store_true",
                    help="score ground truth against itself (rmse must be 0)")

    jit = sub.add_parser("jitter", help="adjacent-frame flicker benchmark")
    jit.add_argument("--checkpoint", required=True)
    jit.add_argument("--data", required=True)
    jit.add_argument("--out", required=True, help="report JSON path")
    jit.add_argument("--csv", help="also write the curve as CSV")
    jit.add_argument("--frames", type=int, default=200)
    jit.add_argument("--max-speedup", type=int, default=10)
    jit.add_argument("--seed", type=int, default=0)

    srv = sub.add_parser("serve", help="start the HTTP inference service")
    srv.add_argument("--checkpoint", required=True)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)

    one = sub.add_parser("relight", help="one-shot file-in/file-out inference")
    one.add_argument("--checkpoint", required=True)
    one.add_argument("--image", required=True, help="input PNG")
    one.add_argument("--out", required=True, help="output PNG")
    one.add_argument("--light-file", help="light map .f32 (with JSON sidecar)")
    one.add_argument("--preset", help="named preset light")
    one.add_argument("--rotation", type=int, default=0,
                     help="longitude rotation columns for --preset")
    one.add_argument("--save-light", help="write the predicted source light here")
    one.add_argument("--save-parsing", help="write the parsing prediction PNG here")
    one.add_argument("--allow-resize", action="store_true")
    return parser


def _cmd_gen_data(args) -> int:
    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)
    for identity in range(args.identities):
        for take in range(args.takes):
            spec = olat.make_scene_spec(
                identity=identity, take=take, seed=args.seed,
                height=args.size, width=args.size, n_lights=args.n_lights,
                n_frames=args.frames, motion_scale=args.motion_scale)
            seq = olat.render_sequence(spec)
            take_dir = olat.write_dataset(seq, root)
            print(f"wrote {take_dir} ({args.frames} frames, {args.n_lights} lights)")
    return EXIT_OK


def _cmd_train(args, parser) -> int:
    _require_path(parser, "--data", args.data)
    if args.config:
        cfg_path = _require_path(parser, "--config", args.config)
        config = TrainConfig.from_json(cfg_path.read_text())
    else:
        config = TrainConfig()
    config.data_root = args.data
    config.out_dir = args.out
    for flag, name in (("steps", "steps"), ("seed", "seed"),
                       ("batch_size", "batch_size"), ("warmup_steps", "warmup_steps")):
        value = getattr(args, flag)
        if value is not None:
            setattr(config, name, value)
    if args.no_temporal:
        config.weights.temporal = 0.0
    hook = None if args.quiet else (
        lambda rec: print(f"step {rec['step']:6d} total {rec['total']:.4f} "
                          f"basic {rec['basic']:.4f}"))
    result = run_training(config, log_hook=hook)
    print(json.dumps(result))
    return EXIT_OK


def _cmd_eval(args, parser) -> int:
    _require_path(parser, "--data", args.data)
    sequences = olat.read_all_sequences(args.data)
    _, held_out = split_sequences(sequences, args.held_out)
    if not held_out:
        held_out = sequences
    library = default_library()
    if args.oracle:
        relight_fn = None
    else:
        if not args.checkpoint:
            parser.error("--checkpoint is required unless --oracle is set")
        model = load_checkpoint(args.checkpoint, with_critic=False).eval_mode()
        relight_fn = model_relight_fn(model)
    metadata = {"dataset_id": str(args.data),
                "checkpoint_id": "oracle" if args.oracle else model.meta.get(
                    "checkpoint_id", model.checkpoint_id)}
    report = evaluate_model(relight_fn, held_out, library, seed=args.seed,
                            oracle=args.oracle, metadata=metadata)
    report.write(args.out)
    print(f"rmse {report.rmse:.6f}  psnr {report.psnr:.4f}  ssim {report.ssim:.4f}"
          f"  -> {args.out}")
    return EXIT_OK


def _cmd_jitter(args, parser) -> int:
    _require_path(parser, "--data", args.data)
    model = load_checkpoint(args.checkpoint, with_critic=False).eval_mode()
    sequences = olat.read_all_sequences(args.data)
    rng = np.random.default_rng(args.seed)
    library = default_library()
    seq = sequences[-1]
    base_frame = seq.frames[0]
    path = LightPath(library, rng)
    target = rotate_light(library[int(rng.integers(len(library)))],
                          int(rng.integers(16)))
    curve = jitter_benchmark(model_relight_fn(model), base_frame,
                             seq.light_directions, path, target,
                             speedups=tuple(range(1, args.max_speedup + 1)),
                             n_frames=args.frames)
    report = EvalReport(rmse=0.0, psnr=psnr_from_rmse(0.0), ssim=1.0,
                        jitter_curve=curve,
                        metadata={"kind": "jitter", "frames": args.frames,
                                  "seed": args.seed,
                                  "dataset_id": str(args.data),
                                  "sequence": f"{seq.identity_id}/{seq.take_id}",
                                  "checkpoint_id": model.meta.get(
                                      "checkpoint_id", model.checkpoint_id)})
    report.write(args.out)
    if args.csv:
        report.write_jitter_csv(args.csv)
    print("jitter: " + ", ".join(f"{s:.0f}x={j:.5f}" for s, j in curve))
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    model = load_checkpoint(args.checkpoint, with_critic=False)
    app = create_app(model)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _cmd_relight(args, parser) -> int:
    image_path = _require_path(parser, "--image", args.image)
    model = load_checkpoint(args.checkpoint, with_critic=False).eval_mode()
    if args.light_file:
        light = load_light_map(_require_path(parser, "--light-file", args.light_file))
    elif args.preset:
        presets = build_preset_library()
        if args.preset not in presets:
            parser.error(f"--preset unknown name {args.preset!r}; "
                         f"choose from {sorted(presets)}")
        light = rotate_light(presets[args.preset], args.rotation)
    else:
        parser.error("provide --light-file or --preset")

    image = load_image(image_path)
    size = model.config.image_size
    if image.shape[:2] != (size, size):
        if not args.allow_resize:
            raise DataFormatError(
                f"{image_path} is {image.shape[1]}x{image.shape[0]}, model expects "
                f"{size}x{size}; pass --allow-resize to resize")
        image = resize_image(image, size)
    relit_u8, pred_light, parsing_u8 = relight_arrays(model, image, light)
    Path(args.out).write_bytes(encode_image_png(relit_u8))
    if args.save_light:
        save_light_map(LightMap(pred_light), args.save_light)
    if args.save_parsing:
        Path(args.save_parsing).write_bytes(encode_image_png(parsing_u8))
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "gen-data":
            return _cmd_gen_data(args)
        if args.verb == "train":
            return _cmd_train(args, parser)
        if args.verb == "eval":
            return _cmd_eval(args, parser)
        if args.verb == "jitter":
            return _cmd_jitter(args, parser)
        if args.verb == "serve":
            return _cmd_serve(args)
        if args.verb == "relight":
            return _cmd_relight(args, parser)
        parser.error(f"unknown verb {args.verb}")
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (DataFormatError, EvaluationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, RelightError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
