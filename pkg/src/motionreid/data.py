"""Synthetic person sequences with exact ground-truth flow, plus sampling.

Frames are 128 x 64 RGB float32 in [-1, 1] (person upright). Identity is
encoded both in appearance (region colors, body proportions) and in gait
(leg-swing period/amplitude, drift, bob), so the motion pathway's
contribution can be isolated: gait-paired populations share appearance
and drift within a pair and differ only in the gait dynamics.

All sprite motion is quantised to whole pixels per frame, which keeps the
emitted ground-truth flow exactly consistent with frame differencing on
region interiors while staying within the 2 px/frame cap.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .flow_oracle import read_flow, write_flow

__all__ = [
    "FRAME_H",
    "FRAME_W",
    "SyntheticIdentitySpec",
    "SequenceSample",
    "random_identities",
    "render_sequence",
    "build_dataset",
    "augment",
    "apply_shift_flip",
    "sample_subsequence",
    "make_pair",
    "prepare_timestep",
    "prepare_sequence",
    "bilinear_resize",
    "texture_flow_pair",
    "sprite_flow_pair",
    "frame_to_u8",
    "u8_to_frame",
    "write_ppm",
    "read_ppm",
    "save_dataset",
    "load_dataset",
]

FRAME_H = 128
FRAME_W = 64

# camera B photometric model: per-channel gain, brightness offset, start shift
CAMERA_B_GAIN = np.array([0.95, 0.98, 0.93], dtype=np.float32)
CAMERA_B_OFFSET = -0.03
CAMERA_B_SHIFT = 6


@dataclass(frozen=True)
class SyntheticIdentitySpec:
    """Appearance and motion parameters of one synthetic person."""

    torso_color: tuple
    leg_color: tuple
    head_color: tuple
    torso_w: int
    torso_h: int
    leg_len: int
    leg_w: int
    head_h: int
    gait_period: float
    stride_amplitude: float
    drift_velocity: float
    bob_amplitude: float

    def __post_init__(self):
        if self.gait_period < 2:
            raise ValueError(f"gait period must be >= 2 frames, got {self.gait_period}")
        rate = (
            abs(self.drift_velocity)
            + self.stride_amplitude * 2.0 * np.pi / self.gait_period
            + self.bob_amplitude * 4.0 * np.pi / self.gait_period
        )
        if rate > 2.0 + 1e-9:
            raise ValueError(f"per-frame motion bound {rate:.3f} exceeds 2 px")


@dataclass
class SequenceSample:
    """Ordered frames of one person under one camera."""

    identity: int
    camera: str
    frames: np.ndarray  # (t, 128, 64, 3) float32 in [-1, 1]
    flows: np.ndarray | None = None  # (t-1, 128, 64, 2) float32

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError(f"a sequence needs at least 2 frames, got {len(self.frames)}")
        if self.camera not in ("A", "B"):
            raise ValueError(f"camera must be 'A' or 'B', got {self.camera!r}")

    def __len__(self):
        return len(self.frames)


def _color_lattice(rng, count):
    """Well-separated colors: shuffled corners/midpoints of the RGB cube."""
    levels = (-0.8, 0.0, 0.8)
    lattice = np.array([(r, g, b) for r in levels for g in levels for b in levels])
    lattice = lattice[rng.permutation(len(lattice))]
    reps = -(-count // len(lattice))
    colors = np.concatenate([lattice] * reps)[:count]
    return np.clip(colors + rng.uniform(-0.12, 0.12, size=colors.shape), -0.95, 0.95)


def random_identities(n: int, rng, gait_pairs: bool = False):
    """Draw n identity specs with well-spread appearance.

    With gait_pairs=True (n even), identities 2i and 2i+1 share appearance,
    proportions and drift, differing only in leg-swing dynamics.
    """
    if gait_pairs and n % 2:
        raise ValueError("gait-paired populations need an even identity count")
    specs = []
    count = n // 2 if gait_pairs else n
    torso_colors = _color_lattice(rng, count)
    leg_colors = _color_lattice(rng, count)
    for i in range(count):
        torso = tuple(torso_colors[i])
        legs = tuple(leg_colors[i])
        head = tuple(rng.uniform(-0.3, 0.6, size=3))
        shape = dict(
            torso_color=torso,
            leg_color=legs,
            head_color=head,
            torso_w=int(rng.integers(16, 25)),
            torso_h=int(rng.integers(24, 35)),
            leg_len=int(rng.integers(28, 40)),
            leg_w=int(rng.integers(8, 12)),
            head_h=int(rng.integers(8, 13)),
        )
        if gait_pairs:
            # one member swings hard and fast (integer leg deltas of 1-2 px
            # nearly every frame); the other is rigid apart from the shared
            # drift (its amplitudes quantise to zero). Appearance and drift
            # match within the pair, so only motion separates them.
            drift = float(rng.uniform(0.25, 0.5) * rng.choice([-1.0, 1.0]))
            strong_period = float(rng.uniform(8.5, 10.0))
            weak_period = float(rng.uniform(12.0, 16.0))
            specs.append(
                SyntheticIdentitySpec(
                    **shape,
                    gait_period=strong_period,
                    stride_amplitude=float(rng.uniform(1.85, 2.0)),
                    drift_velocity=drift,
                    bob_amplitude=0.0,
                )
            )
            specs.append(
                SyntheticIdentitySpec(
                    **shape,
                    gait_period=weak_period,
                    stride_amplitude=float(rng.uniform(0.1, 0.3)),
                    drift_velocity=drift,
                    bob_amplitude=float(rng.uniform(0.0, 0.2)),
                )
            )
        else:
            period = float(rng.uniform(6.0, 16.0))
            specs.append(
                SyntheticIdentitySpec(
                    **shape,
                    gait_period=period,
                    stride_amplitude=float(rng.uniform(0.5, min(2.0, period / 6.4))),
                    drift_velocity=float(rng.uniform(0.2, 0.5) * rng.choice([-1.0, 1.0])),
                    bob_amplitude=float(rng.uniform(0.0, min(0.35, period / 26.0))),
                )
            )
    return specs


def _background(camera: str) -> np.ndarray:
    ys = np.linspace(-0.45, -0.05, FRAME_H, dtype=np.float32)[:, None]
    xs = np.linspace(-0.05, 0.05, FRAME_W, dtype=np.float32)[None, :]
    bg = np.stack([ys + xs, ys - 0.05 + xs, ys + 0.05 - xs], axis=-1)
    if camera == "B":
        bg = bg * CAMERA_B_GAIN + CAMERA_B_OFFSET
    return bg.astype(np.float32)


def _sprite_regions(spec: SyntheticIdentitySpec, x_center: int, y_top: int, leg_dx: int):
    """Disjoint (rows, cols, color) rectangles for one rendered pose.

    The leg gap is sized from the swing amplitude so the two legs can
    never overlap; this keeps every region a rigid translate between
    frames, which the exact ground-truth flow relies on.
    """
    head_w = max(4, spec.torso_w // 2)
    regions = []
    y = y_top
    regions.append((y, y + spec.head_h, x_center - head_w // 2, x_center + (head_w + 1) // 2, spec.head_color))
    y += spec.head_h
    regions.append((y, y + spec.torso_h, x_center - spec.torso_w // 2, x_center + (spec.torso_w + 1) // 2, spec.torso_color))
    y += spec.torso_h
    half_gap = spec.leg_w // 2 + int(np.ceil(spec.stride_amplitude)) + 2
    left = x_center - half_gap + leg_dx
    right = x_center + half_gap - leg_dx
    regions.append((y, y + spec.leg_len, left - spec.leg_w // 2, left + (spec.leg_w + 1) // 2, spec.leg_color))
    regions.append((y, y + spec.leg_len, right - spec.leg_w // 2, right + (spec.leg_w + 1) // 2, spec.leg_color))
    return regions


def _pose(spec: SyntheticIdentitySpec, t: int, x0: float, y0: int, phase: float):
    """Integer anchor position and leg offset at frame t (drift bounces)."""
    span_lo = spec.torso_w // 2 + 6
    span_hi = FRAME_W - spec.torso_w // 2 - 6
    x = x0
    d = 1.0
    for _ in range(t):
        x += spec.drift_velocity * d
        if x < span_lo or x > span_hi:
            d = -d
            x = float(np.clip(x, span_lo, span_hi))
    leg = spec.stride_amplitude * np.sin(2.0 * np.pi * t / spec.gait_period + phase)
    bob = spec.bob_amplitude * np.sin(4.0 * np.pi * t / spec.gait_period + phase)
    return int(round(x)), y0 + int(round(bob)), int(round(leg))


def render_sequence(spec: SyntheticIdentitySpec, camera: str, length: int, seed: int,
                    identity: int = -1) -> SequenceSample:
    """Render one sequence with exact per-pair ground-truth flow.

    Deterministic in (spec, camera, length, seed); camera B applies a fixed
    photometric shift and a horizontal start offset.
    """
    if length < 2:
        raise ValueError(f"sequence length must be >= 2, got {length}")
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, 0 if camera == "A" else 1])
    sprite_h = spec.head_h + spec.torso_h + spec.leg_len
    y0 = int(rng.integers(4, max(5, FRAME_H - sprite_h - 4)))
    x_lo = spec.torso_w // 2 + 8
    x_hi = FRAME_W - spec.torso_w // 2 - 8
    x0 = float(rng.uniform(x_lo, x_hi))
    if camera == "B":
        x0 = float(np.clip(x0 + CAMERA_B_SHIFT, x_lo, x_hi))
    phase = float(rng.uniform(0.0, 2.0 * np.pi))

    bg = _background(camera)
    gain = CAMERA_B_GAIN if camera == "B" else np.ones(3, dtype=np.float32)
    offset = CAMERA_B_OFFSET if camera == "B" else 0.0

    poses = [_pose(spec, t, x0, y0, phase) for t in range(length)]
    frames = np.empty((length, FRAME_H, FRAME_W, 3), dtype=np.float32)
    region_sets = []
    for t, (xc, yt, leg) in enumerate(poses):
        frame = bg.copy()
        regions = _sprite_regions(spec, xc, yt, leg)
        for r0, r1, c0, c1, color in regions:
            col = np.asarray(color, dtype=np.float32) * gain + offset
            frame[max(0, r0) : max(0, r1), max(0, c0) : max(0, c1)] = np.clip(col, -1.0, 1.0)
        frames[t] = np.clip(frame, -1.0, 1.0)
        region_sets.append(regions)

    flows = np.zeros((length - 1, FRAME_H, FRAME_W, 2), dtype=np.float32)
    for t in range(length - 1):
        (xc0, yt0, leg0), (xc1, yt1, leg1) = poses[t], poses[t + 1]
        body = (xc1 - xc0, yt1 - yt0)
        deltas = [body, body, (body[0] + leg1 - leg0, body[1]), (body[0] - (leg1 - leg0), body[1])]
        for (r0, r1, c0, c1, _), (du, dv) in zip(region_sets[t], deltas):
            flows[t, max(0, r0) : max(0, r1), max(0, c0) : max(0, c1), 0] = du
            flows[t, max(0, r0) : max(0, r1), max(0, c0) : max(0, c1), 1] = dv
    return SequenceSample(identity=identity, camera=camera, frames=frames, flows=flows)


def build_dataset(specs, length: int, seed: int, sequences_per_camera: int = 1):
    """Render every identity under both cameras; identity = spec index.

    With sequences_per_camera > 1 each identity gets several independent
    trajectory draws per camera (an in-memory training pool; the on-disk
    layout stays one sequence per identity per camera).
    """
    samples = []
    for i, spec in enumerate(specs):
        for camera in ("A", "B"):
            for k in range(sequences_per_camera):
                samples.append(
                    render_sequence(spec, camera, length, seed * 7919 + i + 104729 * k, identity=i)
                )
    return samples


# ---------------------------------------------------------------------------
# augmentation and sampling
# ---------------------------------------------------------------------------


def apply_shift_flip(sample: SequenceSample, dx: int, dy: int, flip: bool) -> SequenceSample:
    """Translate every frame by (dx, dy) with edge clamping; optional mirror.

    One shared offset keeps the ground-truth flow valid: displacements are
    unchanged by a common translation, and a mirror negates u.
    """
    frames = sample.frames
    flows = sample.flows
    if dx or dy:
        pad_y = abs(dy)
        pad_x = abs(dx)
        fp = np.pad(frames, ((0, 0), (pad_y, pad_y), (pad_x, pad_x), (0, 0)), mode="edge")
        y0 = pad_y - dy
        x0 = pad_x - dx
        frames = fp[:, y0 : y0 + FRAME_H, x0 : x0 + FRAME_W, :]
        if flows is not None:
            gp = np.pad(flows, ((0, 0), (pad_y, pad_y), (pad_x, pad_x), (0, 0)), mode="edge")
            flows = gp[:, y0 : y0 + FRAME_H, x0 : x0 + FRAME_W, :]
    if flip:
        frames = frames[:, :, ::-1, :]
        if flows is not None:
            flows = flows[:, :, ::-1, :].copy()
            flows[..., 0] *= -1.0
    return replace(sample, frames=np.ascontiguousarray(frames),
                   flows=None if flows is None else np.ascontiguousarray(flows))


def draw_augmentation(rng):
    """One translation offset in +-5% of each extent, plus a mirror coin."""
    dx = rng.uniform(-0.05 * FRAME_W, 0.05 * FRAME_W)
    dy = rng.uniform(-0.05 * FRAME_H, 0.05 * FRAME_H)
    flip = bool(rng.random() < 0.5)
    return dx, dy, flip


def augment(sample: SequenceSample, rng) -> SequenceSample:
    """Apply one shared random translation and mirror to a whole sequence."""
    dx, dy, flip = draw_augmentation(rng)
    return apply_shift_flip(sample, int(round(dx)), int(round(dy)), flip)


def sample_subsequence(sample: SequenceSample, length: int = 16, rng=None) -> SequenceSample:
    """Uniformly positioned window of consecutive frames.

    A sample shorter than the window is returned whole.
    """
    t = len(sample)
    if t <= length:
        return sample
    start = int(rng.integers(0, t - length + 1)) if rng is not None else 0
    flows = None if sample.flows is None else sample.flows[start : start + length - 1]
    return replace(sample, frames=sample.frames[start : start + length], flows=flows)


def make_pair(samples, rng, allow_negative: bool = True):
    """Draw a Siamese training pair: (camera-A sample, camera-B sample, same?).

    Positive and negative pairs are equally likely; a negative pair needs
    at least two identities in the pool. ``allow_negative=False`` restricts
    to positives (single-identity pools).
    """
    by_cam = {"A": {}, "B": {}}
    for s in samples:
        by_cam[s.camera].setdefault(s.identity, []).append(s)
    both = sorted(set(by_cam["A"]) & set(by_cam["B"]))
    if not both:
        raise ValueError("pair sampling needs identities present under both cameras")

    def pick(cam, ident):
        group = by_cam[cam][ident]
        return group[int(rng.integers(len(group)))]

    same = True if not allow_negative else bool(rng.random() < 0.5)
    if same:
        ident = both[int(rng.integers(len(both)))]
        return pick("A", ident), pick("B", ident), True
    ids_a = sorted(by_cam["A"])
    ids_b = sorted(by_cam["B"])
    if len(set(ids_a) | set(ids_b)) < 2:
        raise ValueError("negative pair requested from a single-identity pool")
    while True:
        ia = ids_a[int(rng.integers(len(ids_a)))]
        ib = ids_b[int(rng.integers(len(ids_b)))]
        if ia != ib:
            return pick("A", ia), pick("B", ib), False


# ---------------------------------------------------------------------------
# dual-resolution preparation
# ---------------------------------------------------------------------------


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-centre alignment.

    Samples that fall outside the source grid are linearly extrapolated
    from the border cell, which makes up-then-down by the same factor an
    exact round trip on smooth images.
    """
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(xs).astype(int), 0, max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return (top * (1 - fy) + bot * fy).astype(img.dtype)


def prepare_timestep(sample: SequenceSample, t: int):
    """(h/2 x w/2 x 3 frame, h x w x 6 pair) for step t (0-based, t < T-1).

    At the standard 128 x 64 frame size this is the 64 x 32 appearance
    input and the full-resolution concatenated pair.
    """
    if not 0 <= t < len(sample) - 1:
        raise ValueError(f"time-step {t} out of range for a {len(sample)}-frame sequence")
    h, w = sample.frames.shape[1:3]
    small = bilinear_resize(sample.frames[t], h // 2, w // 2)
    pair = np.concatenate([sample.frames[t], sample.frames[t + 1]], axis=-1)
    return small, pair


def prepare_sequence(sample: SequenceSample):
    """All T-1 time-steps at once: (T-1, h/2, w/2, 3) and (T-1, h, w, 6)."""
    frames = sample.frames
    h, w = frames.shape[1:3]
    heads = frames[:-1]
    if h % 2 == 0 and w % 2 == 0:
        # half-pixel-aligned bilinear at an exact 2x reduction equals this
        # vectorised form, arithmetic included (weights in double, like the
        # general routine)
        half = np.float64(0.5)
        top = heads[:, 0::2, 0::2] * half + heads[:, 0::2, 1::2] * half
        bot = heads[:, 1::2, 0::2] * half + heads[:, 1::2, 1::2] * half
        smalls = (top * half + bot * half).astype(frames.dtype)
    else:
        smalls = np.stack([bilinear_resize(f, h // 2, w // 2) for f in heads])
    pairs = np.concatenate([heads, frames[1:]], axis=-1)
    return smalls, pairs


# ---------------------------------------------------------------------------
# flow pre-training pairs
# ---------------------------------------------------------------------------


# integer displacements with 1 <= |d| <= 2 px
TEXTURE_SHIFTS = tuple(
    (du, dv)
    for du in range(-2, 3)
    for dv in range(-2, 3)
    if (du, dv) != (0, 0) and du * du + dv * dv <= 4
)


def texture_flow_pair(rng, h: int = FRAME_H, w: int = FRAME_W):
    """Dense blocky noise texture under an exact integer translation.

    The second frame is a toroidal shift of the first by one of the twelve
    integer displacements with norm in [1, 2] px, so the constant
    ground-truth flow is exact everywhere. Block granularity of 2-4 px
    puts usable structure inside every receptive field, which is what
    makes the matching problem locally decidable.
    """
    block = int(rng.integers(2, 5))
    gh, gw = -(-h // block), -(-w // block)
    grid = rng.uniform(-0.9, 0.9, size=(gh, gw, 3)).astype(np.float32)
    img = np.ascontiguousarray(np.repeat(np.repeat(grid, block, 0), block, 1)[:h, :w])
    du, dv = TEXTURE_SHIFTS[int(rng.integers(len(TEXTURE_SHIFTS)))]
    frame2 = np.roll(img, (dv, du), axis=(0, 1))
    pair = np.concatenate([img, frame2], axis=-1)
    flow = np.empty((h, w, 2), dtype=np.float32)
    flow[..., 0] = du
    flow[..., 1] = dv
    return pair, flow


# ---------------------------------------------------------------------------
# on-disk dataset layout
# ---------------------------------------------------------------------------


def sprite_flow_pair(rng, h: int = FRAME_H, w: int = FRAME_W, n_sprites: int = 7):
    """Small rigid rectangles drifting over a static blocky background.

    Each sprite gets its own integer velocity (some zero, magnitude <= 2)
    on a non-overlapping course, so the per-pixel ground truth is exact:
    background zero, sprite pixels their velocity. This is the dense
    small-object-motion supervision the person sequences only provide
    sparsely.
    """
    block = int(rng.integers(2, 5))
    gh, gw = -(-h // block), -(-w // block)
    grid = rng.uniform(-0.9, 0.9, size=(gh, gw, 3)).astype(np.float32)
    background = np.ascontiguousarray(np.repeat(np.repeat(grid, block, 0), block, 1)[:h, :w])

    frame1 = background.copy()
    frame2 = background.copy()
    flow = np.zeros((h, w, 2), dtype=np.float32)
    occupied = np.zeros((h, w), dtype=bool)
    for _ in range(n_sprites):
        sh = int(rng.integers(8, 36))
        sw = int(rng.integers(5, 16))
        du = int(rng.integers(-2, 3))
        dv = int(rng.integers(-2, 3))
        if du * du + dv * dv > 4:
            dv = 0
        for _ in range(12):  # rejection-sample a free slot
            y = int(rng.integers(2, h - sh - 2 - abs(dv)))
            x = int(rng.integers(2, w - sw - 2 - abs(du)))
            y0, x0 = min(y, y + dv), min(x, x + du)
            y1, x1 = max(y, y + dv) + sh, max(x, x + du) + sw
            if not occupied[y0 - 1 : y1 + 1, x0 - 1 : x1 + 1].any():
                occupied[y0:y1, x0:x1] = True
                color = rng.uniform(-0.9, 0.9, size=3).astype(np.float32)
                frame1[y : y + sh, x : x + sw] = color
                frame2[y + dv : y + dv + sh, x + du : x + du + sw] = color
                flow[y : y + sh, x : x + sw] = (du, dv)
                break
    return np.concatenate([frame1, frame2], axis=-1), flow


def frame_to_u8(frame: np.ndarray) -> np.ndarray:
    return np.round((np.clip(frame, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


def u8_to_frame(arr: np.ndarray) -> np.ndarray:
    return (arr.astype(np.float32) / 127.5) - 1.0


def write_ppm(path, rgb: np.ndarray):
    """Binary P6 image, 8 bits per channel."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"write_ppm expects (h, w, 3) uint8, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    need = pos + 3 * w * h
    if len(raw) < need:
        raise ValueError(f"{path}: truncated pixel data, missing {need - len(raw)} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=3 * w * h, offset=pos).reshape(h, w, 3).copy()


def save_dataset(root, samples, overwrite: bool = False):
    """One directory per identity per camera; PPM frames, .flo ground truth.

    The index file lists "identity camera frame_count" per sequence.
    """
    root = os.fspath(root)
    if os.path.exists(root) and os.listdir(root) and not overwrite:
        raise FileExistsError(f"refusing to write into non-empty {root} without overwrite")
    os.makedirs(root, exist_ok=True)
    lines = []
    for s in samples:
        d = os.path.join(root, f"{s.identity:04d}_{s.camera}")
        os.makedirs(d, exist_ok=True)
        for i, frame in enumerate(s.frames):
            write_ppm(os.path.join(d, f"frame_{i:05d}.ppm"), frame_to_u8(frame))
        if s.flows is not None:
            for i, flow in enumerate(s.flows):
                write_flow(os.path.join(d, f"flow_{i:05d}.flo"), flow)
        lines.append(f"{s.identity} {s.camera} {len(s)}\n")
    with open(os.path.join(root, "index.txt"), "w") as f:
        f.writelines(lines)


def load_dataset(root):
    root = os.fspath(root)
    index = os.path.join(root, "index.txt")
    if not os.path.exists(index):
        raise FileNotFoundError(f"dataset index not found: {index}")
    samples = []
    with open(index) as f:
        for line in f:
            if not line.strip():
                continue
            ident_s, camera, count_s = line.split()
            ident, count = int(ident_s), int(count_s)
            d = os.path.join(root, f"{ident:04d}_{camera}")
            frames = np.stack(
                [u8_to_frame(read_ppm(os.path.join(d, f"frame_{i:05d}.ppm"))) for i in range(count)]
            )
            flow0 = os.path.join(d, "flow_00000.flo")
            flows = None
            if os.path.exists(flow0):
                flows = np.stack([read_flow(os.path.join(d, f"flow_{i:05d}.flo")) for i in range(count - 1)])
            samples.append(SequenceSample(identity=ident, camera=camera, frames=frames, flows=flows))
    return samples
