"""Both training phases: flow pre-training and end-to-end Siamese training.

Pre-training regresses the flow pyramid against exact synthetic ground
truth (translating textures mixed with rendered person pairs) under the
step-halving schedule. The resulting checkpoint initialises the motion
net of the full model, which then trains end-to-end on sampled sequence
pairs with the joint contrastive/classification objective; both Siamese
branches read the same parameter storage, so gradients from the two
branches accumulate into shared weights.
"""

from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import data as D
from .accumulator import sequence_embed_pair
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Settings
from .flow_oracle import epe, lucas_kanade, rgb_to_gray
from .losses import multi_task_loss
from .model import ModelConfig, ModelParams, init_model
from .motion_net import downsample_flow, init_motion_net, motion_forward, motion_loss
from .optim import Adam, lr_schedule
from .tensor import Tape, Tensor, backward

__all__ = [
    "flow_pair_source",
    "pretrain_phase",
    "evaluate_flow_epe",
    "init_from_pretrained",
    "train_end_to_end",
    "save_model",
    "load_model",
    "oracle_half_flows",
    "make_embedder",
    "write_trace_csv",
]

TRACE_HEADER = ("iteration", "total", "contrastive", "class_a", "class_b")


def flow_pair_source(settings: Settings, seed: int):
    """Stream of (pair, ground-truth flow) supervision samples.

    Mixes globally shifted textures, sprite fields (small rigid movers
    over a static background), and consecutive person-sequence pairs in
    the configured proportions; deterministic in the seed.
    """
    rng = np.random.default_rng([seed, 0xF10])
    spec_rng = np.random.default_rng([seed, 0xF11])
    # include gait-paired walkers so fast thin-limb motion is well represented
    specs = D.random_identities(6, spec_rng) + D.random_identities(6, spec_rng, gait_pairs=True)
    pool = []
    for i, spec in enumerate(specs):
        sample = D.render_sequence(spec, "A" if i % 2 else "B", 16, seed=seed * 31 + i)
        pool.append(sample)
    tex_frac = settings.pretrain_texture_fraction
    sprite_frac = settings.pretrain_sprite_fraction

    def draw():
        u = rng.random()
        if u < tex_frac:
            return D.texture_flow_pair(rng)
        if u < tex_frac + sprite_frac:
            return D.sprite_flow_pair(rng)
        s = pool[int(rng.integers(len(pool)))]
        t = int(rng.integers(len(s) - 1))
        pair = np.concatenate([s.frames[t], s.frames[t + 1]], axis=-1)
        return pair, s.flows[t]

    return draw


def write_trace_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def pretrain_phase(settings: Settings, seed: int, checkpoint_path=None, resume_from=None,
                   trace_path=None):
    """Train the motion net on synthetic flow; returns (net, trace rows).

    Resuming from a checkpoint restores the parameters and continues the
    iteration counter (the learning-rate schedule keeps its position).
    """
    net = init_motion_net(np.random.default_rng([seed, 0x3A]), settings.motion_widths,
                          settings.motion_deconv_widths, kernel=settings.motion_kernel)
    start_iter = 0
    if resume_from is not None:
        stored = load_checkpoint(resume_from)
        start_iter = int(stored.pop("trainer/iteration")[0])
        _copy_named(stored, net.named("motion"), context=str(resume_from))
    draw = flow_pair_source(settings, seed)
    opt = Adam({k: v for k, v in net.named("motion").items()}, lr=settings.pretrain_lr)
    reduce_mode = settings.pretrain_batch_reduction
    if reduce_mode not in ("average", "sum"):
        raise ValueError(f"unknown batch reduction {reduce_mode!r}")

    trace = []
    batch = settings.pretrain_batch
    # the network's matmuls are small; a single BLAS thread runs them faster
    with threadpool_limits(limits=1, user_api="blas"):
        for it in range(start_iter, start_iter + settings.pretrain_iters):
            pairs, gts = zip(*(draw() for _ in range(batch)))
            pair_t = Tensor(np.stack(pairs))
            gt = np.stack(gts)
            tape = Tape()
            loss = motion_loss(tape, motion_forward(tape, pair_t, net), gt)
            val = float(loss.data)
            if reduce_mode == "sum":
                val *= batch
            if not np.isfinite(val):
                raise FloatingPointError(f"flow pre-training diverged at iteration {it}")
            backward(tape, loss)
            if reduce_mode == "sum":
                for p in opt.params.values():
                    p.grad *= batch
            lr = lr_schedule(it, settings.pretrain_lr, settings.pretrain_warm_iters,
                             settings.pretrain_halve_every)
            opt.step(lr=lr)
            opt.zero_grad()
            trace.append((it, val))
    if checkpoint_path is not None:
        tensors = {k: v.data for k, v in net.named("motion").items()}
        tensors["trainer/iteration"] = np.array([start_iter + settings.pretrain_iters],
                                                dtype=np.float32)
        save_checkpoint(checkpoint_path, tensors)
    if trace_path is not None:
        write_trace_csv(trace_path, ("iteration", "loss"), trace)
    return net, trace


def evaluate_flow_epe(net, seed: int, n_pairs: int = 24):
    """Held-out endpoint error in full-resolution pixels, plus the
    zero-flow baseline on the same pairs."""
    rng = np.random.default_rng([seed, 0xEBE])
    total = 0.0
    baseline = 0.0
    for _ in range(n_pairs):
        pair, gt = D.texture_flow_pair(rng)
        pred3 = motion_forward(None, Tensor(pair), net).pred3.data
        est = D.bilinear_resize(pred3, gt.shape[0], gt.shape[1]) * 2.0
        total += epe(est, gt)
        baseline += epe(np.zeros_like(gt), gt)
    return total / n_pairs, baseline / n_pairs


def _copy_named(stored: dict, targets: dict, context: str):
    """Copy stored arrays into parameter tensors, checking names and shapes."""
    for name, tensor in targets.items():
        if name not in stored:
            raise ValueError(f"{context}: checkpoint is missing tensor {name!r}")
        arr = stored[name]
        if tuple(arr.shape) != tuple(tensor.data.shape):
            raise ValueError(
                f"{context}: tensor {name!r} has extents {arr.shape}, expected {tensor.data.shape}"
            )
        tensor.data = arr.astype(tensor.data.dtype)


def init_from_pretrained(checkpoint_path, cfg: ModelConfig, n_identities: int, seed: int) -> ModelParams:
    """Full model with motion weights from a pre-training checkpoint and
    everything else freshly initialised."""
    model = init_model(cfg, n_identities, seed)
    stored = load_checkpoint(checkpoint_path)
    stored.pop("trainer/iteration", None)
    _copy_named(stored, model.motion.named("motion"), context=str(checkpoint_path))
    return model


def save_model(path, model: ModelParams, iteration: int = 0):
    tensors = {k: v.data for k, v in model.named().items()}
    tensors["trainer/iteration"] = np.array([iteration], dtype=np.float32)
    save_checkpoint(path, tensors)


def load_model(path, cfg: ModelConfig, n_identities: int) -> ModelParams:
    model = init_model(cfg, n_identities, seed=0)
    stored = load_checkpoint(path)
    stored.pop("trainer/iteration", None)
    _copy_named(stored, model.named(), context=str(path))
    return model


def oracle_half_flows(sample) -> np.ndarray:
    """Lucas-Kanade flow for every consecutive pair, at half resolution in
    half-resolution pixel units (the motion stream's input convention)."""
    frames = sample.frames
    flows = []
    for t in range(len(frames) - 1):
        full = lucas_kanade(rgb_to_gray(frames[t]), rgb_to_gray(frames[t + 1]))
        flows.append(downsample_flow(full, 2))
    return np.stack(flows).astype(np.float32)


def make_embedder(model: ModelParams):
    """Sequence -> embedding vector closure for evaluation."""

    def embed(sample):
        flows = oracle_half_flows(sample) if model.config.motion_mode == "oracle" else None
        with threadpool_limits(limits=1, user_api="blas"):
            return model.embed(sample, tape=None, oracle_flows=flows).data

    return embed


def _trainable(model: ModelParams) -> dict:
    """Optimised parameter set; the motion net is excluded when its output
    never enters the graph (zero / oracle motion modes)."""
    params = model.named()
    if model.config.motion_mode != "learned":
        params = {k: v for k, v in params.items() if not k.startswith("motion/")}
    return params


def _clip_grads(params, max_norm):
    total = 0.0
    for p in params.values():
        total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            p.grad *= factor


def train_end_to_end(settings: Settings, model: ModelParams, samples, seed: int,
                     checkpoint_path=None, trace_path=None):
    """Siamese multi-task training over sampled sequence pairs.

    Per iteration: draw a pair, augment each sequence once, cut a training
    window, embed both branches with shared parameters on one tape, apply
    the joint loss, and take an Adam step at the constant end-to-end rate.
    """
    rng = np.random.default_rng([seed, 0xE2E])
    params = _trainable(model)
    opt = Adam(params, lr=settings.train_lr)
    margin = model.config.margin
    # ground-truth flow is pre-training supervision; this phase never reads it
    samples = [replace(s, flows=None) if s.flows is not None else s for s in samples]
    # a single-identity pool trains on positive pairs only
    negatives = len({s.identity for s in samples}) > 1
    trace = []
    with threadpool_limits(limits=1, user_api="blas"):
        for it in range(settings.train_iters):
            seq_a, seq_b, same = D.make_pair(samples, rng, allow_negative=negatives)
            # windowing commutes with the shared shift/flip, so cut first
            seq_a = D.augment(D.sample_subsequence(seq_a, settings.subsequence_length, rng), rng)
            seq_b = D.augment(D.sample_subsequence(seq_b, settings.subsequence_length, rng), rng)
            oracle = model.config.motion_mode == "oracle"
            tape = Tape()
            u_a, u_b = sequence_embed_pair(
                tape, seq_a, seq_b, model.motion, model.streams, model.rnn,
                pool_mode=model.config.pool_mode, motion_mode=model.config.motion_mode,
                oracle_flows_a=oracle_half_flows(seq_a) if oracle else None,
                oracle_flows_b=oracle_half_flows(seq_b) if oracle else None,
            )
            total, l_con, l_a, l_b = multi_task_loss(
                tape, u_a, u_b, same, (seq_a.identity, seq_b.identity), model.softmax, margin
            )
            if not np.isfinite(float(total.data)):
                raise FloatingPointError(f"training loss diverged (NaN) at iteration {it}")
            backward(tape, total)
            if settings.grad_clip > 0:
                _clip_grads(params, settings.grad_clip)
            opt.step()
            opt.zero_grad()
            trace.append((it, float(total.data), float(l_con.data), float(l_a.data), float(l_b.data)))
    if checkpoint_path is not None:
        save_model(checkpoint_path, model, iteration=settings.train_iters)
    if trace_path is not None:
        write_trace_csv(trace_path, TRACE_HEADER, trace)
    return trace
