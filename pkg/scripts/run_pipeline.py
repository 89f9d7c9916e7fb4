#!/usr/bin/env python3
"""End-to-end pipeline on one seed: data, flow pre-training, training, eval.

Writes everything under --out and prints the metric summary. A thin
wrapper over the CLI stages so a full run is one command.
"""

import argparse
import os
import sys

from motionreid.cli import main as cli


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/pipeline")
    args = ap.parse_args(argv)

    data_dir = os.path.join(args.out, "dataset")
    run_dir = os.path.join(args.out, f"seed{args.seed}")
    base = ["--seed", str(args.seed)] + (["--config", args.config] if args.config else [])

    for argv in (
        ["gen-data", "--out", data_dir, "--overwrite"] + base,
        ["pretrain-flow", "--out", run_dir] + base,
        ["train", "--data", data_dir, "--motion", os.path.join(run_dir, "motion.ckpt"),
         "--out", run_dir] + base,
        ["eval", os.path.join(run_dir, "model.ckpt"), "--data", data_dir,
         "--out", run_dir] + base,
    ):
        print(f"$ motionreid {' '.join(argv)}", flush=True)
        code = cli(argv)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
