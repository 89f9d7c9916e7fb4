"""Classical Lucas-Kanade flow, endpoint error, flow file I/O and color coding.

A flow field is an (h, w, 2) array: channel 0 is the horizontal
displacement u (columns, +x right), channel 1 the vertical displacement v
(rows, +y down), both in pixels from the first frame to the second.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "FLO_TAG",
    "lucas_kanade",
    "epe",
    "flow_color_code",
    "read_flow",
    "write_flow",
    "rgb_to_gray",
]

FLO_TAG = np.float32(202021.25)

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def rgb_to_gray(frame: np.ndarray) -> np.ndarray:
    """Luminance-weighted grayscale of an (h, w, 3) frame."""
    return frame @ GRAY_WEIGHTS


def _box_sum(img: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^2 window, clipped at borders, via integral images."""
    h, w = img.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = np.cumsum(np.cumsum(img, axis=0), axis=1)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - radius, 0, h)
    y1 = np.clip(ys + radius + 1, 0, h)
    x0 = np.clip(xs - radius, 0, w)
    x1 = np.clip(xs + radius + 1, 0, w)
    return (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )


def lucas_kanade(frame_a: np.ndarray, frame_b: np.ndarray, window: int = 7,
                 tau: float = 1e-4) -> np.ndarray:
    """Per-pixel least-squares flow under brightness constancy.

    Solves the windowed 2x2 normal equations at every pixel; pixels whose
    structure tensor has a smaller eigenvalue below ``tau`` relative to
    the window gradient energy get zero flow (aperture / flat regions).
    """
    if frame_a.shape != frame_b.shape or frame_a.ndim != 2:
        raise ValueError(
            f"lucas_kanade needs two equal-extent grayscale frames, got "
            f"{frame_a.shape} and {frame_b.shape}"
        )
    if window % 2 != 1 or window < 3:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    a = frame_a.astype(np.float64)
    b = frame_b.astype(np.float64)
    mid = 0.5 * (a + b)
    ix = np.zeros_like(mid)
    iy = np.zeros_like(mid)
    ix[:, 1:-1] = 0.5 * (mid[:, 2:] - mid[:, :-2])
    iy[1:-1, :] = 0.5 * (mid[2:, :] - mid[:-2, :])
    it = b - a

    r = window // 2
    sxx = _box_sum(ix * ix, r)
    syy = _box_sum(iy * iy, r)
    sxy = _box_sum(ix * iy, r)
    sxt = _box_sum(ix * it, r)
    syt = _box_sum(iy * it, r)

    trace = sxx + syy
    det = sxx * syy - sxy * sxy
    lam_min = 0.5 * (trace - np.sqrt(np.maximum((sxx - syy) ** 2 + 4 * sxy * sxy, 0.0)))
    ok = lam_min > tau * np.maximum(trace, 1e-9)

    safe_det = np.where(ok, det, 1.0)
    u = np.where(ok, (-syy * sxt + sxy * syt) / safe_det, 0.0)
    v = np.where(ok, (sxy * sxt - sxx * syt) / safe_det, 0.0)
    return np.stack([u, v], axis=-1)


def epe(est: np.ndarray, gt: np.ndarray) -> float:
    """Mean endpoint error between two flow fields, in pixels."""
    if est.shape != gt.shape:
        raise ValueError(f"epe extent mismatch: {est.shape} vs {gt.shape}")
    d = est.astype(np.float64) - gt.astype(np.float64)
    return float(np.sqrt((d * d).sum(axis=-1)).mean())


def flow_color_code(flow: np.ndarray, max_magnitude: float) -> np.ndarray:
    """Direction-as-hue, speed-as-saturation rendering of a flow field.

    Zero flow maps to white; magnitudes at or above ``max_magnitude``
    saturate at full intensity. Returns (h, w, 3) uint8.
    """
    if max_magnitude <= 0:
        raise ValueError("max_magnitude must be positive")
    u = flow[..., 0].astype(np.float64)
    v = flow[..., 1].astype(np.float64)
    mag = np.sqrt(u * u + v * v)
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0
    sat = np.clip(mag / max_magnitude, 0.0, 1.0)

    # standard HSV hexagon with value fixed at 1
    h6 = hue * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = 1.0 - sat
    q = 1.0 - sat * f
    t = 1.0 - sat * (1.0 - f)
    one = np.ones_like(sat)
    lut = np.stack(
        [
            np.stack([one, t, p], axis=-1),
            np.stack([q, one, p], axis=-1),
            np.stack([p, one, t], axis=-1),
            np.stack([p, q, one], axis=-1),
            np.stack([t, p, one], axis=-1),
            np.stack([one, p, q], axis=-1),
        ],
        axis=0,
    )
    rgb = np.take_along_axis(lut, i[None, ..., None], axis=0)[0]
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def write_flow(path, flow: np.ndarray):
    """Write a flow field: float32 tag 202021.25, int32 width/height, then
    row-major interleaved (u, v) float32, all little-endian."""
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow field must be (h, w, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("refusing to write non-finite flow values")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(FLO_TAG.tobytes())
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(flow.astype("<f4").tobytes())


def read_flow(path) -> np.ndarray:
    """Read a flow file written by :func:`write_flow`; bit-exact round trip."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise ValueError(f"flow file too short: header needs 12 bytes, found {len(raw)}")
    tag = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if tag != FLO_TAG:
        raise ValueError(f"bad flow file tag {tag!r} (expected {float(FLO_TAG)})")
    w, h = (int(x) for x in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if w <= 0 or h <= 0:
        raise ValueError(f"bad flow extents {w}x{h}")
    need = 12 + 8 * w * h
    if len(raw) < need:
        raise ValueError(f"truncated flow payload: missing {need - len(raw)} bytes")
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12)
    return data.reshape(h, w, 2).copy()
