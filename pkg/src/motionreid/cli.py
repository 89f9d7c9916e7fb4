"""Command-line entry point wiring config files to the pipeline stages.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import data as D
from .checkpoint import load_checkpoint
from .config import UsageError, config_help, load_settings
from .evaluate import evaluate_split, write_metrics_csv
from .flow_oracle import flow_color_code, write_flow
from .model import init_model
from .motion_net import init_motion_net, motion_forward
from .tensor import Tensor
from .trainer import (
    evaluate_flow_epe,
    init_from_pretrained,
    load_model,
    make_embedder,
    pretrain_phase,
    train_end_to_end,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common_flags(p):
    p.add_argument("--config", default=None, help="path to a key = value config file")
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--overwrite", action="store_true", help="allow writing into existing data")


def _build_parser():
    parser = _Parser(prog="motionreid",
                     description="two-stream video re-identification pipeline",
                     epilog=config_help(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render the synthetic sequence dataset")
    _common_flags(p)

    p = sub.add_parser("pretrain-flow", help="pre-train the motion net on synthetic flow")
    _common_flags(p)

    p = sub.add_parser("train", help="end-to-end Siamese training")
    _common_flags(p)
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--motion", default=None, help="motion checkpoint to initialise from")

    p = sub.add_parser("eval", help="probe/gallery evaluation of a checkpoint")
    _common_flags(p)
    p.add_argument("checkpoint", help="full model checkpoint")
    p.add_argument("--data", required=True, help="dataset directory to evaluate on")

    p = sub.add_parser("flow", help="predict and visualise flow for a frame pair")
    _common_flags(p)
    p.add_argument("checkpoint", help="motion or full model checkpoint")
    p.add_argument("frame_a", help="first frame (binary PPM)")
    p.add_argument("frame_b", help="second frame (binary PPM)")
    p.add_argument("prefix", help="output prefix for .flo and .ppm files")
    return parser


def cmd_gen_data(args, settings):
    rng = np.random.default_rng([args.seed, 0xDA7A])
    specs = D.random_identities(settings.n_identities, rng, gait_pairs=settings.gait_pairs)
    samples = D.build_dataset(specs, settings.sequence_length, seed=args.seed)
    D.save_dataset(args.out, samples, overwrite=args.overwrite)
    print(f"wrote {len(samples)} sequences to {args.out}")
    return 0


def cmd_pretrain_flow(args, settings):
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "motion.ckpt")
    trace = os.path.join(args.out, "flow_trace.csv")
    net, rows = pretrain_phase(settings, args.seed, checkpoint_path=ckpt, trace_path=trace)
    err, baseline = evaluate_flow_epe(net, seed=args.seed)
    print(f"checkpoint: {ckpt}")
    print(f"held-out EPE {err:.3f} px (zero-flow baseline {baseline:.3f} px)")
    return 0


def cmd_train(args, settings):
    samples = D.load_dataset(args.data)
    n_ids = len({s.identity for s in samples})
    cfg = settings.model_config()
    if args.motion is not None:
        model = init_from_pretrained(args.motion, cfg, n_ids, seed=args.seed)
    else:
        model = init_model(cfg, n_ids, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "model.ckpt")
    trace = os.path.join(args.out, "loss_trace.csv")
    rows = train_end_to_end(settings, model, samples, seed=args.seed,
                            checkpoint_path=ckpt, trace_path=trace)
    print(f"checkpoint: {ckpt}")
    print(f"final loss {rows[-1][1]:.4f} over {len(rows)} iterations")
    return 0


def cmd_eval(args, settings):
    samples = D.load_dataset(args.data)
    n_ids = len({s.identity for s in samples})
    model = load_model(args.checkpoint, settings.model_config(), n_ids)
    embed = make_embedder(model)
    trials = []
    for trial in range(settings.eval_trials):
        rng = np.random.default_rng([args.seed, trial])
        trials.append(
            evaluate_split(embed, samples, max_rank=settings.eval_max_rank,
                           augmentations=settings.eval_augmentations,
                           sequence_cap=settings.eval_sequence_cap, rng=rng)
        )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "metrics.csv")
    write_metrics_csv(path, trials)
    mean_rank1 = float(np.mean([t["rank1"] for t in trials]))
    mean_map = float(np.mean([t["mAP"] for t in trials]))
    print(f"metrics: {path}")
    print(f"rank1 {mean_rank1:.3f}  mAP {mean_map:.3f} over {len(trials)} trial(s)")
    return 0


def cmd_flow(args, settings):
    stored = load_checkpoint(args.checkpoint)
    net = init_motion_net(np.random.default_rng(0), settings.motion_widths,
                          settings.motion_deconv_widths, kernel=settings.motion_kernel)
    from .trainer import _copy_named

    _copy_named(stored, net.named("motion"), context=args.checkpoint)
    frame_a = D.u8_to_frame(D.read_ppm(args.frame_a))
    frame_b = D.u8_to_frame(D.read_ppm(args.frame_b))
    if frame_a.shape != frame_b.shape:
        raise ValueError(f"frame extents differ: {frame_a.shape} vs {frame_b.shape}")
    pair = Tensor(np.concatenate([frame_a, frame_b], axis=-1).astype(np.float32))
    pred3 = motion_forward(None, pair, net).pred3.data
    full = D.bilinear_resize(pred3, frame_a.shape[0], frame_a.shape[1]) * 2.0
    write_flow(args.prefix + ".flo", full.astype(np.float32))
    color = flow_color_code(full, max_magnitude=max(2.0, float(np.abs(full).max())))
    D.write_ppm(args.prefix + ".ppm", color)
    print(f"wrote {args.prefix}.flo and {args.prefix}.ppm")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain-flow": cmd_pretrain_flow,
    "train": cmd_train,
    "eval": cmd_eval,
    "flow": cmd_flow,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        settings = load_settings(args.config)
        return _COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, FileExistsError, NotADirectoryError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
