"""Contracting/expanding flow network predicting a three-scale pyramid.

Six named contracting convolutions (conv1, conv1_1, conv2, conv2_1,
conv3, conv3_1) with tanh after each; the three stride-2 stages shrink
the input by 8x. Two refinement stages then each deconvolve features 2x,
concatenate the matching-resolution contracting activations and an
upsampled coarser flow, and predict the next flow, yielding predictions
at 1/8, 1/4 and 1/2 of the input extents. The 1/2-scale head is what
feeds the motion-stream spatial network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "MotionNetParams",
    "FlowPyramid",
    "init_motion_net",
    "motion_forward",
    "downsample_flow",
    "smooth_l1_sum",
    "motion_loss",
    "MOTION_LOSS_WEIGHTS",
]

# per-scale loss weights, coarsest (1/8) to finest (1/2)
MOTION_LOSS_WEIGHTS = (0.01, 0.02, 0.08)

# contracting channel widths; stride pattern is (2, 1, 2, 1, 2, 1) so the
# three *_1 layers refine at constant resolution and the net contraction
# is 8x, matching the 1/8-1/4-1/2 prediction pyramid
DEFAULT_MOTION_WIDTHS = (4, 8, 8, 16, 16, 32)
DEFAULT_DECONV_WIDTHS = (16, 8)

CONTRACT_NAMES = ("conv1", "conv1_1", "conv2", "conv2_1", "conv3", "conv3_1")
CONTRACT_STRIDES = (2, 1, 2, 1, 2, 1)

# feature deconvs carry the refinement signal; tanh there is optional
DECONV_TANH = True


@dataclass
class FlowPyramid:
    """pred1 at 1/8, pred2 at 1/4, pred3 at 1/2 input resolution, 2 channels."""

    pred1: Tensor
    pred2: Tensor
    pred3: Tensor

    def __iter__(self):
        return iter((self.pred1, self.pred2, self.pred3))


@dataclass
class MotionNetParams:
    params: dict  # name -> Tensor
    widths: tuple
    deconv_widths: tuple

    def named(self, prefix: str = "motion"):
        return {f"{prefix}/{k}": v for k, v in self.params.items()}


def glorot(rng, shape, fan_in, fan_out, dtype):
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _conv_param(rng, k, c_in, c_out, dtype):
    w = glorot(rng, (k, k, c_in, c_out), k * k * c_in, k * k * c_out, dtype)
    b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
    return w, b


def init_motion_net(rng, widths=DEFAULT_MOTION_WIDTHS, deconv_widths=DEFAULT_DECONV_WIDTHS,
                    in_channels: int = 6, kernel: int = 3, dtype=np.float32) -> MotionNetParams:
    """Fresh parameters; 3x3 contracting/prediction convs, 4x4 deconvs.

    Contracting biases start spread in (-0.6, 0.6) rather than at zero:
    tanh is odd, so zero-centred units behave linearly and a linear map
    cannot express the even-order matching signal displacement estimation
    needs. Offsetting the operating point exposes that curvature from the
    first gradient step. Prediction heads keep zero biases (zero initial
    flow).
    """
    if len(widths) != 6 or len(deconv_widths) != 2:
        raise ValueError("motion net needs 6 contracting widths and 2 deconv widths")
    p = {}
    c = in_channels
    for name, c_out in zip(CONTRACT_NAMES, widths):
        p[f"{name}/w"], p[f"{name}/b"] = _conv_param(rng, kernel, c, c_out, dtype)
        p[f"{name}/b"].data[:] = rng.uniform(-0.6, 0.6, size=c_out).astype(dtype)
        c = c_out
    # prediction heads: pred1 from the bottleneck, pred2/pred3 from concats
    p["pred1/w"], p["pred1/b"] = _conv_param(rng, kernel, widths[5], 2, dtype)
    cat1 = deconv_widths[0] + widths[3] + 2
    p["pred2/w"], p["pred2/b"] = _conv_param(rng, kernel, cat1, 2, dtype)
    cat2 = deconv_widths[1] + widths[1] + 2
    p["pred3/w"], p["pred3/b"] = _conv_param(rng, kernel, cat2, 2, dtype)
    # refinement: feature deconvs (tanh) and linear flow-upsampling deconvs
    p["deconv1/w"] = glorot(rng, (4, 4, widths[5], deconv_widths[0]), 16 * widths[5], 16 * deconv_widths[0], dtype)
    p["deconv2/w"] = glorot(rng, (4, 4, cat1, deconv_widths[1]), 16 * cat1, 16 * deconv_widths[1], dtype)
    p["upflow1/w"] = glorot(rng, (4, 4, 2, 2), 32, 32, dtype)
    p["upflow2/w"] = glorot(rng, (4, 4, 2, 2), 32, 32, dtype)
    return MotionNetParams(params=p, widths=tuple(widths), deconv_widths=tuple(deconv_widths))


def motion_forward(tape, pair: Tensor, net: MotionNetParams) -> FlowPyramid:
    """Flow pyramid for a channel-concatenated frame pair.

    Accepts (h, w, 6) or a batch (n, h, w, 6); h and w must be divisible
    by 8 so the three contraction stages land on exact extents.
    """
    shape = pair.data.shape
    h, w, c = shape[-3], shape[-2], shape[-1]
    if c != 6:
        raise ValueError(f"motion net expects a 6-channel frame pair, got {c} channels")
    if h % 8 or w % 8:
        raise ValueError(f"input extents {h}x{w} must be divisible by 8")
    p = net.params
    pad = p["conv1/w"].data.shape[0] // 2

    acts = []
    x = pair
    for name, stride in zip(CONTRACT_NAMES, CONTRACT_STRIDES):
        x = T.tanh(tape, T.conv2d(tape, x, p[f"{name}/w"], p[f"{name}/b"], stride=stride, padding=pad))
        acts.append(x)

    pred1 = T.conv2d(tape, x, p["pred1/w"], p["pred1/b"], stride=1, padding=pad)

    feat1 = T.deconv2d(tape, x, p["deconv1/w"], stride=2)
    if DECONV_TANH:
        feat1 = T.tanh(tape, feat1)
    up1 = T.deconv2d(tape, pred1, p["upflow1/w"], stride=2)
    cat1 = T.concat_channels(tape, [feat1, acts[3], up1])
    pred2 = T.conv2d(tape, cat1, p["pred2/w"], p["pred2/b"], stride=1, padding=pad)

    feat2 = T.deconv2d(tape, cat1, p["deconv2/w"], stride=2)
    if DECONV_TANH:
        feat2 = T.tanh(tape, feat2)
    up2 = T.deconv2d(tape, pred2, p["upflow2/w"], stride=2)
    cat2 = T.concat_channels(tape, [feat2, acts[1], up2])
    pred3 = T.conv2d(tape, cat2, p["pred3/w"], p["pred3/b"], stride=1, padding=pad)

    return FlowPyramid(pred1=pred1, pred2=pred2, pred3=pred3)


def downsample_flow(gt: np.ndarray, factor: int) -> np.ndarray:
    """Block-average a flow field and rescale displacements to the new grid."""
    if factor not in (2, 4, 8):
        raise ValueError(f"downsample factor must be 2, 4 or 8, got {factor}")
    h, w = gt.shape[-3], gt.shape[-2]
    if h % factor or w % factor:
        raise ValueError(f"extents {h}x{w} not divisible by {factor}")
    lead = gt.shape[:-3]
    blocks = gt.reshape(*lead, h // factor, factor, w // factor, factor, 2)
    return blocks.mean(axis=(-2, -4)) / factor


def smooth_l1_sum(tape, pred: Tensor, target: np.ndarray) -> Tensor:
    """Sum over elements of the robust loss: 0.5 t^2 inside |t| < 1, |t| - 0.5 outside."""
    if pred.data.shape != target.shape:
        raise ValueError(f"smooth-l1 shape mismatch: {pred.data.shape} vs {target.shape}")
    theta = pred.data - target
    inner = np.abs(theta) < 1.0
    val = np.where(inner, 0.5 * theta * theta, np.abs(theta) - 0.5).sum()

    def backward_fn(gy):
        return (gy * np.where(inner, theta, np.sign(theta)),)

    return T._emit(tape, np.asarray(val, dtype=pred.data.dtype), (pred,), backward_fn)


def motion_loss(tape, pyramid: FlowPyramid, gt: np.ndarray, weights=MOTION_LOSS_WEIGHTS) -> Tensor:
    """Weighted multi-scale robust regression against downsampled ground truth.

    ``gt`` is the full-resolution flow; per-sample sums are averaged over
    the batch when the pyramid is batched.
    """
    if len(weights) != 3:
        raise ValueError(f"need one weight per scale, got {len(weights)}")
    batch = pyramid.pred3.data.ndim == 4
    n = pyramid.pred3.data.shape[0] if batch else 1
    total = None
    for pred, factor, wgt in zip(pyramid, (8, 4, 2), weights):
        term = T.scale(tape, smooth_l1_sum(tape, pred, downsample_flow(gt, factor)), wgt / n)
        total = term if total is None else T.add(tape, total, term)
    return total
