"""Two spatial networks over appearance and predicted flow, fused mid-tower.

Each spatial tower is three stride-2 convolutions with tanh, each followed
by a stride-2 max pool, and a fully-connected layer on top. The two
streams run up to the configured fusion point, their activations are
combined there (channel interleaving, sum, or elementwise max), and a
single shared tail continues to the per-time-step feature vector. Both
streams see 64 x 32 inputs (the raw frame, and the half-resolution flow
prediction), so activations at every candidate fusion layer line up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .motion_net import MotionNetParams, glorot, motion_forward
from .tensor import Tensor

__all__ = [
    "FUSION_METHODS",
    "FUSION_LOCATIONS",
    "FusionConfig",
    "SpatialTower",
    "TwoStreamParams",
    "build_tower",
    "build_two_stream",
    "spatial_forward",
    "fuse_concat",
    "fuse_sum",
    "fuse_max",
    "deinterleave",
    "two_stream_step",
]

FUSION_METHODS = ("Concatenation", "Sum", "Max")
FUSION_LOCATIONS = ("Tanh1", "Max-pool1", "Tanh2", "Max-pool2", "Tanh3", "Max-pool3", "FC")

# canonical tower order; fusion locations name a subset of these steps
TOWER_STEPS = (
    ("conv", "conv1"),
    ("tanh", "tanh1"),
    ("pool", "pool1"),
    ("conv", "conv2"),
    ("tanh", "tanh2"),
    ("pool", "pool2"),
    ("conv", "conv3"),
    ("tanh", "tanh3"),
    ("pool", "pool3"),
    ("fc", "fc"),
)

_LOCATION_TO_STEP = {
    "Tanh1": "tanh1",
    "Max-pool1": "pool1",
    "Tanh2": "tanh2",
    "Max-pool2": "pool2",
    "Tanh3": "tanh3",
    "Max-pool3": "pool3",
    "FC": "fc",
}

DEFAULT_SPATIAL_WIDTHS = (8, 16, 32)


@dataclass(frozen=True)
class FusionConfig:
    method: str = "Concatenation"
    location: str = "Max-pool2"

    def __post_init__(self):
        canon_m = {m.lower(): m for m in FUSION_METHODS}
        canon_l = {l.lower(): l for l in FUSION_LOCATIONS}
        if self.method.lower() not in canon_m:
            raise ValueError(f"unknown fusion method {self.method!r}; choose from {FUSION_METHODS}")
        if self.location.lower() not in canon_l:
            raise ValueError(f"unknown fusion location {self.location!r}; choose from {FUSION_LOCATIONS}")
        object.__setattr__(self, "method", canon_m[self.method.lower()])
        object.__setattr__(self, "location", canon_l[self.location.lower()])


@dataclass
class SpatialTower:
    """A (possibly partial) spatial pipeline with its parameters."""

    steps: list  # [(kind, name, *param tensors)]
    kernel: int

    def named(self, prefix: str):
        out = {}
        for step in self.steps:
            if step[0] in ("conv", "fc"):
                out[f"{prefix}/{step[1]}/w"] = step[2]
                out[f"{prefix}/{step[1]}/b"] = step[3]
        return out


@dataclass
class TwoStreamParams:
    stream_a: SpatialTower  # appearance, raw 64 x 32 frame
    stream_b: SpatialTower  # motion, half-resolution flow prediction
    tail: SpatialTower  # shared layers after fusion
    fusion: FusionConfig
    feature_dim: int

    def named(self, prefix: str = "stream"):
        out = {}
        out.update(self.stream_a.named(f"{prefix}_app"))
        out.update(self.stream_b.named(f"{prefix}_mot"))
        out.update(self.tail.named(f"{prefix}_tail"))
        return out


def build_tower(rng, in_channels, widths=DEFAULT_SPATIAL_WIDTHS, kernel=5, feature_dim=128,
                input_hw=(64, 32), names=None, tail_in=None, dtype=np.float32) -> SpatialTower:
    """Materialise tower steps (all of them, or the ``names`` subset).

    ``tail_in`` overrides the first convolution's input channel count,
    which is how a concatenation-fused tail doubles its width; for an FC
    tail it gives the fully-connected input length directly.
    """
    if names is None:
        names = [n for _, n in TOWER_STEPS]
    conv_in = {"conv1": in_channels, "conv2": widths[0], "conv3": widths[1]}
    conv_out = {"conv1": widths[0], "conv2": widths[1], "conv3": widths[2]}
    h, w = input_hw
    c = in_channels
    fc_in = None
    steps = []
    first_conv = True
    for kind, name in TOWER_STEPS:
        in_segment = name in names
        if kind == "conv":
            cin = conv_in[name]
            if in_segment and first_conv and tail_in is not None:
                cin = tail_in
            if in_segment:
                wgt = glorot(rng, (kernel, kernel, cin, conv_out[name]), kernel * kernel * cin,
                             kernel * kernel * conv_out[name], dtype)
                bias = Tensor(np.zeros(conv_out[name], dtype=dtype), requires_grad=True)
                steps.append(("conv", name, wgt, bias))
                first_conv = False
            h, w = -(-h // 2), -(-w // 2)
            c = conv_out[name]
        elif kind == "pool":
            if in_segment:
                steps.append(("pool", name))
            h, w = -(-h // 2), -(-w // 2)
        elif kind == "tanh":
            if in_segment:
                steps.append(("tanh", name))
        else:  # fc
            fc_in = h * w * c
            if in_segment:
                if first_conv and tail_in is not None:
                    fc_in = h * w * tail_in  # fused channels, no conv in the tail
                wgt = glorot(rng, (feature_dim, fc_in), fc_in, feature_dim, dtype)
                bias = Tensor(np.zeros(feature_dim, dtype=dtype), requires_grad=True)
                steps.append(("fc", name, wgt, bias))
    return SpatialTower(steps=steps, kernel=kernel)


def run_tower(tape, x: Tensor, tower: SpatialTower):
    """Run the tower, returning the final output and every named activation."""
    acts = {}
    pad = tower.kernel // 2
    for step in tower.steps:
        kind, name = step[0], step[1]
        if kind == "conv":
            x = T.conv2d(tape, x, step[2], step[3], stride=2, padding=pad)
        elif kind == "tanh":
            x = T.tanh(tape, x)
        elif kind == "pool":
            x = T.max_pool2d(tape, x, window=2, stride=2)
        else:
            if x.data.ndim == 4:
                x = T.reshape(tape, x, (x.data.shape[0], -1))
            elif x.data.ndim == 3:
                x = T.reshape(tape, x, (-1,))
            # 1-d and 2-d inputs are already (features,) or (batch, features)
            x = T.linear(tape, x, step[2], step[3])
        acts[name] = x
    return x, acts


def spatial_forward(tape, image: Tensor, tower: SpatialTower, layer: str | None = None):
    """Single-tower forward exposing intermediate activations by name.

    With ``layer`` set, returns that activation; otherwise the dict of all
    of them (including "fc"). Unknown layer names are rejected.
    """
    _, acts = run_tower(tape, image, tower)
    if layer is None:
        return acts
    if layer not in acts:
        raise ValueError(f"unknown layer {layer!r}; tower exposes {sorted(acts)}")
    return acts[layer]


# ---------------------------------------------------------------------------
# fusion operators
# ---------------------------------------------------------------------------


def _check_fusable(op, a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op} needs identical shapes, got {a.data.shape} vs {b.data.shape}")


def fuse_concat(tape, a: Tensor, b: Tensor) -> Tensor:
    """Channel-interleaved stacking: output channel 2d is a's channel d,
    channel 2d-1 is b's (1-based), doubling the channel count."""
    _check_fusable("concatenation fusion", a, b)
    d = a.data.shape[-1]
    y = np.empty(a.data.shape[:-1] + (2 * d,), dtype=np.result_type(a.data, b.data))
    y[..., 1::2] = a.data
    y[..., 0::2] = b.data

    def backward_fn(gy):
        return (gy[..., 1::2], gy[..., 0::2])

    return T._emit(tape, y, (a, b), backward_fn)


def deinterleave(y: np.ndarray):
    """Invert :func:`fuse_concat`: recover (a, b) from the fused map."""
    return y[..., 1::2], y[..., 0::2]


def fuse_sum(tape, a: Tensor, b: Tensor) -> Tensor:
    _check_fusable("sum fusion", a, b)
    return T.add(tape, a, b)


def fuse_max(tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; gradients go to the first stream on ties."""
    _check_fusable("max fusion", a, b)
    return T.maximum(tape, a, b)


_FUSE_FN = {"Concatenation": fuse_concat, "Sum": fuse_sum, "Max": fuse_max}


# ---------------------------------------------------------------------------
# two-stream assembly
# ---------------------------------------------------------------------------


def build_two_stream(rng, fusion: FusionConfig, widths=DEFAULT_SPATIAL_WIDTHS, kernel=5,
                     feature_dim=128, input_hw=(64, 32), appearance_channels=3,
                     motion_channels=2, dtype=np.float32) -> TwoStreamParams:
    """Construct both stream segments and the shared post-fusion tail.

    Concatenation fusion doubles the channel (or vector) width entering
    the tail; fusing at FC appends one extra linear layer mapping the
    fused vector back to the feature dimension.
    """
    all_names = [n for _, n in TOWER_STEPS]
    split = all_names.index(_LOCATION_TO_STEP[fusion.location])
    stream_names = all_names[: split + 1]
    tail_names = all_names[split + 1 :]

    stream_a = build_tower(rng, appearance_channels, widths, kernel, feature_dim, input_hw,
                           names=stream_names, dtype=dtype)
    stream_b = build_tower(rng, motion_channels, widths, kernel, feature_dim, input_hw,
                           names=stream_names, dtype=dtype)

    doubled = fusion.method == "Concatenation"
    if fusion.location == "FC":
        fused_in = feature_dim * (2 if doubled else 1)
        wgt = glorot(rng, (feature_dim, fused_in), fused_in, feature_dim, dtype)
        bias = Tensor(np.zeros(feature_dim, dtype=dtype), requires_grad=True)
        tail = SpatialTower(steps=[("fc", "fuse_fc", wgt, bias)], kernel=kernel)
    else:
        channels_at = {"tanh1": widths[0], "pool1": widths[0], "tanh2": widths[1],
                       "pool2": widths[1], "tanh3": widths[2], "pool3": widths[2]}
        c_split = channels_at[_LOCATION_TO_STEP[fusion.location]]
        tail_in = c_split * 2 if doubled else c_split
        tail = build_tower(rng, appearance_channels, widths, kernel, feature_dim, input_hw,
                           names=tail_names, tail_in=tail_in, dtype=dtype)
    return TwoStreamParams(stream_a=stream_a, stream_b=stream_b, tail=tail,
                           fusion=fusion, feature_dim=feature_dim)


def two_stream_forward(tape, x_a: Tensor, x_b: Tensor, params: TwoStreamParams):
    """Fused per-time-step feature; also returns both streams' activations."""
    out_a, acts_a = run_tower(tape, x_a, params.stream_a)
    out_b, acts_b = run_tower(tape, x_b, params.stream_b)
    fused = _FUSE_FN[params.fusion.method](tape, out_a, out_b)
    f, _ = run_tower(tape, fused, params.tail)
    return f, acts_a, acts_b


def two_stream_step(tape, frame_small: Tensor, pair_full: Tensor, motion: MotionNetParams,
                    streams: TwoStreamParams, motion_mode: str = "learned",
                    oracle_flow=None) -> Tensor:
    """One time-step: appearance on the small frame, motion on the flow.

    motion_mode selects the motion-stream input: "learned" runs the flow
    network on the full-resolution pair, "oracle" consumes a precomputed
    half-resolution flow map, and "zero" ablates the stream entirely.
    """
    if motion_mode == "learned":
        flow_in = motion_forward(tape, pair_full, motion).pred3
    elif motion_mode == "oracle":
        if oracle_flow is None:
            raise ValueError("oracle motion mode needs a precomputed flow map")
        flow_in = oracle_flow if isinstance(oracle_flow, Tensor) else Tensor(oracle_flow)
    elif motion_mode == "zero":
        shape = frame_small.data.shape[:-1] + (2,)
        flow_in = Tensor(np.zeros(shape, dtype=frame_small.data.dtype))
    else:
        raise ValueError(f"unknown motion mode {motion_mode!r}")
    if flow_in.data.shape[-3:-1] != frame_small.data.shape[-3:-1]:
        raise ValueError(
            f"stream resolution mismatch: flow {flow_in.data.shape} vs frame {frame_small.data.shape}"
        )
    f, _, _ = two_stream_forward(tape, frame_small, flow_in, streams)
    return f
