"""Flat text configuration: one "key = value" per line, '#' comments.

Unknown keys are rejected (typo protection); every key has a documented
default that reproduces the published training recipe at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ModelConfig
from .two_stream import FusionConfig

__all__ = ["UsageError", "DEFAULTS", "parse_config", "load_settings", "Settings", "config_help"]


class UsageError(Exception):
    """Bad command line or configuration input."""


def _int_tuple(text):
    return tuple(int(x) for x in str(text).replace(" ", "").split(","))


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# key -> (default, parser, help)
DEFAULTS = {
    # synthetic data
    "n_identities": (20, int, "identities in the generated population"),
    "sequence_length": (32, int, "frames per rendered sequence"),
    "gait_pairs": (False, _bool, "pair identities with shared appearance, distinct gait"),
    # architecture
    "motion_widths": ((4, 8, 8, 16, 16, 32), _int_tuple, "contracting conv channel widths"),
    "motion_deconv_widths": ((16, 8), _int_tuple, "refinement deconv channel widths"),
    "spatial_widths": ((8, 16, 32), _int_tuple, "spatial tower conv channel widths"),
    "spatial_kernel": (5, int, "spatial tower conv kernel size"),
    "motion_kernel": (3, int, "motion net conv kernel size"),
    "feature_dim": (128, int, "fused per-step feature length"),
    "embedding_dim": (128, int, "recurrent embedding length"),
    "fusion_method": ("Concatenation", str, "Concatenation | Sum | Max"),
    "fusion_location": ("Max-pool2", str, "Tanh1..Max-pool3 or FC"),
    "pool_mode": ("average", str, "temporal pooling: average | max"),
    "motion_mode": ("learned", str, "motion stream input: learned | oracle | zero"),
    "margin": (2.0, float, "contrastive margin"),
    # flow pre-training
    "pretrain_iters": (30000, int, "flow pre-training iterations"),
    "pretrain_batch": (4, int, "frame pairs per pre-training step"),
    "pretrain_lr": (1e-4, float, "pre-training base learning rate"),
    "pretrain_warm_iters": (12000, int, "iterations before the first halving"),
    "pretrain_halve_every": (6000, int, "halving interval after warm-up (0 = constant)"),
    "pretrain_texture_fraction": (0.45, float, "shifted-texture share of pre-training pairs"),
    "pretrain_sprite_fraction": (0.25, float, "sprite-field share of pre-training pairs"),
    "pretrain_batch_reduction": ("average", str, "combine batch losses: average | sum"),
    # end-to-end training
    "train_iters": (2000, int, "end-to-end training iterations"),
    "train_lr": (1e-3, float, "end-to-end learning rate (constant)"),
    "subsequence_length": (16, int, "training window, consecutive frames"),
    "grad_clip": (0.0, float, "global-norm gradient clip (0 = off)"),
    # evaluation
    "eval_max_rank": (20, int, "deepest CMC rank reported"),
    "eval_augmentations": (4, int, "test-time augmentation draws (0 = none)"),
    "eval_sequence_cap": (128, int, "max test sequence length"),
    "eval_trials": (1, int, "independent evaluation trials in the CSV"),
}


def parse_config(path=None, overrides=None) -> dict:
    """Defaults, optionally updated from a config file and override mapping."""
    values = {k: v for k, (v, _, _) in DEFAULTS.items()}
    raw = {}
    if path is not None:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
                key, val = (part.strip() for part in text.split("=", 1))
                raw[key] = (val, f"{path}:{lineno}")
    for key, val in (overrides or {}).items():
        raw[key] = (val, "override")
    for key, (val, where) in raw.items():
        if key not in DEFAULTS:
            raise UsageError(f"{where}: unknown configuration key {key!r}")
        parser = DEFAULTS[key][1]
        try:
            values[key] = parser(val)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"{where}: bad value for {key!r}: {exc}") from exc
    return values


@dataclass(frozen=True)
class Settings:
    """Typed view over the flat key space."""

    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            motion_widths=v["motion_widths"],
            motion_deconv_widths=v["motion_deconv_widths"],
            spatial_widths=v["spatial_widths"],
            spatial_kernel=v["spatial_kernel"],
            motion_kernel=v["motion_kernel"],
            feature_dim=v["feature_dim"],
            embedding_dim=v["embedding_dim"],
            fusion=FusionConfig(v["fusion_method"], v["fusion_location"]),
            pool_mode=v["pool_mode"],
            motion_mode=v["motion_mode"],
            margin=v["margin"],
        )


def load_settings(path=None, overrides=None) -> Settings:
    return Settings(parse_config(path, overrides))


def config_help() -> str:
    lines = ["configuration keys (key = default  # description):"]
    for key, (default, _, doc) in DEFAULTS.items():
        if isinstance(default, tuple):
            default = ",".join(str(x) for x in default)
        lines.append(f"  {key} = {default}  # {doc}")
    return "\n".join(lines)
