"""Full model assembly: motion net, two-stream towers, recurrence, softmax."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .accumulator import RnnParams, init_rnn, sequence_embed
from .motion_net import (
    DEFAULT_DECONV_WIDTHS,
    DEFAULT_MOTION_WIDTHS,
    MotionNetParams,
    glorot,
    init_motion_net,
)
from .tensor import Tensor
from .two_stream import DEFAULT_SPATIAL_WIDTHS, FusionConfig, TwoStreamParams, build_two_stream

__all__ = ["ModelConfig", "ModelParams", "init_model", "named_parameters"]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture widths and behaviour switches."""

    motion_widths: tuple = DEFAULT_MOTION_WIDTHS
    motion_deconv_widths: tuple = DEFAULT_DECONV_WIDTHS
    spatial_widths: tuple = DEFAULT_SPATIAL_WIDTHS
    spatial_kernel: int = 5
    motion_kernel: int = 3
    feature_dim: int = 128  # fused per-step feature length p
    embedding_dim: int = 128  # recurrent output length q
    input_hw: tuple = (64, 32)  # spatial-stream input extents
    fusion: FusionConfig = field(default_factory=FusionConfig)
    pool_mode: str = "average"
    motion_mode: str = "learned"
    margin: float = 2.0


@dataclass
class ModelParams:
    motion: MotionNetParams
    streams: TwoStreamParams
    rnn: RnnParams
    softmax: Tensor  # (K, q) identity weight matrix
    config: ModelConfig

    def named(self) -> dict:
        out = dict(self.motion.named("motion"))
        out.update(self.streams.named("stream"))
        out.update(self.rnn.named("rnn"))
        out["softmax/S"] = self.softmax
        return out

    def embed(self, sample, tape=None, oracle_flows=None) -> Tensor:
        return sequence_embed(
            tape, sample, self.motion, self.streams, self.rnn,
            pool_mode=self.config.pool_mode, motion_mode=self.config.motion_mode,
            oracle_flows=oracle_flows,
        )


def named_parameters(model: ModelParams) -> dict:
    return model.named()


def init_model(cfg: ModelConfig, n_identities: int, seed: int, dtype=np.float32) -> ModelParams:
    """Fresh parameters for every component, seeded and reproducible."""
    rng = np.random.default_rng([seed, 0xA11CE])
    motion = init_motion_net(rng, cfg.motion_widths, cfg.motion_deconv_widths,
                             kernel=cfg.motion_kernel, dtype=dtype)
    streams = build_two_stream(rng, cfg.fusion, widths=cfg.spatial_widths,
                               kernel=cfg.spatial_kernel, feature_dim=cfg.feature_dim,
                               input_hw=cfg.input_hw, dtype=dtype)
    rnn = init_rnn(rng, feature_dim=cfg.feature_dim, embedding_dim=cfg.embedding_dim, dtype=dtype)
    softmax = glorot(rng, (n_identities, cfg.embedding_dim), cfg.embedding_dim, n_identities, dtype)
    return ModelParams(motion=motion, streams=streams, rnn=rnn, softmax=softmax, config=cfg)
