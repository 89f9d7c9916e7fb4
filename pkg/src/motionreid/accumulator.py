"""Recurrent accumulation of fused features and temporal pooling.

Each consecutive frame pair contributes one fused feature f(t); the
recurrent cell o(t) = M f(t) + N r(t-1), r(t) = tanh(o(t)) threads state
across time with weights shared between all steps, and the o-sequence is
collapsed to a single embedding by averaging or a coordinatewise max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import SequenceSample, prepare_sequence
from .motion_net import MotionNetParams, glorot, motion_forward
from .tensor import Tensor
from .two_stream import TwoStreamParams, two_stream_forward

__all__ = [
    "RnnParams",
    "init_rnn",
    "rnn_step",
    "temporal_pool",
    "sequence_embed",
    "sequence_embed_pair",
]

POOL_MODES = ("average", "max")


@dataclass
class RnnParams:
    m: Tensor  # (q, p) input projection
    n: Tensor  # (q, q) recurrent projection

    @property
    def q(self):
        return self.m.data.shape[0]

    def named(self, prefix: str = "rnn"):
        return {f"{prefix}/M": self.m, f"{prefix}/N": self.n}


def init_rnn(rng, feature_dim: int, embedding_dim: int = 128, dtype=np.float32) -> RnnParams:
    m = glorot(rng, (embedding_dim, feature_dim), feature_dim, embedding_dim, dtype)
    n = glorot(rng, (embedding_dim, embedding_dim), embedding_dim, embedding_dim, dtype)
    return RnnParams(m=m, n=n)


def rnn_step(tape, f: Tensor, r_prev: Tensor, params: RnnParams):
    """One recurrence: o = M f + N r_prev, r = tanh(o)."""
    if f.data.shape != (params.m.data.shape[1],):
        raise ValueError(f"feature length {f.data.shape} does not match M {params.m.data.shape}")
    if r_prev.data.shape != (params.q,):
        raise ValueError(f"state length {r_prev.data.shape} does not match N {params.n.data.shape}")
    o = T.add(tape, T.linear(tape, f, params.m, None), T.linear(tape, r_prev, params.n, None))
    return o, T.tanh(tape, o)


def temporal_pool(tape, outputs, mode: str = "average") -> Tensor:
    """Collapse per-step outputs to one vector by mean or coordinatewise max."""
    outputs = list(outputs)
    if not outputs:
        raise ValueError("temporal pooling needs at least one step output")
    if mode == "average":
        acc = outputs[0]
        for o in outputs[1:]:
            acc = T.add(tape, acc, o)
        return T.scale(tape, acc, 1.0 / len(outputs))
    if mode == "max":
        acc = outputs[0]
        for o in outputs[1:]:
            acc = T.maximum(tape, acc, o)
        return acc
    raise ValueError(f"unknown pooling mode {mode!r}; choose from {POOL_MODES}")


def _step_features(tape, smalls, pairs, motion, streams, motion_mode, oracle_flows) -> Tensor:
    """Batched per-step fused features (n_steps, p) for prepared inputs."""
    dtype = streams.stream_a.steps[0][2].data.dtype
    frames_t = Tensor(smalls.astype(dtype))
    if motion_mode == "learned":
        flow_in = motion_forward(tape, Tensor(pairs.astype(dtype)), motion).pred3
    elif motion_mode == "zero":
        flow_in = Tensor(np.zeros(smalls.shape[:-1] + (2,), dtype=dtype))
    elif motion_mode == "oracle":
        if oracle_flows is None:
            raise ValueError("oracle motion mode needs precomputed flow maps")
        flow_in = Tensor(np.asarray(oracle_flows, dtype=dtype))
    else:
        raise ValueError(f"unknown motion mode {motion_mode!r}")
    feats, _, _ = two_stream_forward(tape, frames_t, flow_in, streams)
    return feats


def _accumulate(tape, feats: Tensor, rows, rnn: RnnParams, pool_mode: str) -> Tensor:
    """Thread the recurrence over the given feature rows and pool."""
    dtype = feats.data.dtype
    r = Tensor(np.zeros(rnn.q, dtype=dtype))
    outputs = []
    for t in rows:
        f_t = T.take_row(tape, feats, t)
        o, r = rnn_step(tape, f_t, r, rnn)
        outputs.append(o)
    return temporal_pool(tape, outputs, pool_mode)


def sequence_embed(tape, sample: SequenceSample, motion: MotionNetParams,
                   streams: TwoStreamParams, rnn: RnnParams, pool_mode: str = "average",
                   motion_mode: str = "learned", oracle_flows=None) -> Tensor:
    """Embed a whole sequence into one vector.

    A T-frame sequence yields T-1 time-steps (consecutive pairs). The
    convolutional work for all steps runs as one batch; the recurrence
    then threads them in order from a zero initial state. ``oracle_flows``
    supplies per-step half-resolution flow maps for the oracle motion
    mode.
    """
    if len(sample) < 2:
        raise ValueError("sequence embedding needs at least 2 frames (one pair)")
    smalls, pairs = prepare_sequence(sample)
    feats = _step_features(tape, smalls, pairs, motion, streams, motion_mode, oracle_flows)
    return _accumulate(tape, feats, range(len(smalls)), rnn, pool_mode)


def sequence_embed_pair(tape, sample_a: SequenceSample, sample_b: SequenceSample,
                        motion: MotionNetParams, streams: TwoStreamParams, rnn: RnnParams,
                        pool_mode: str = "average", motion_mode: str = "learned",
                        oracle_flows_a=None, oracle_flows_b=None):
    """Embed a Siamese pair, sharing one convolutional batch.

    Equivalent to two :func:`sequence_embed` calls on shared parameters;
    stacking both branches' time-steps just halves the kernel launches.
    """
    if len(sample_a) < 2 or len(sample_b) < 2:
        raise ValueError("sequence embedding needs at least 2 frames (one pair)")
    smalls_a, pairs_a = prepare_sequence(sample_a)
    smalls_b, pairs_b = prepare_sequence(sample_b)
    n_a = len(smalls_a)
    smalls = np.concatenate([smalls_a, smalls_b])
    pairs = np.concatenate([pairs_a, pairs_b])
    oracle = None
    if oracle_flows_a is not None and oracle_flows_b is not None:
        oracle = np.concatenate([oracle_flows_a, oracle_flows_b])
    feats = _step_features(tape, smalls, pairs, motion, streams, motion_mode, oracle)
    u_a = _accumulate(tape, feats, range(n_a), rnn, pool_mode)
    u_b = _accumulate(tape, feats, range(n_a, n_a + len(smalls_b)), rnn, pool_mode)
    return u_a, u_b
