"""Lucas-Kanade against synthetic translations, EPE, color coding, flo I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionreid.flow_oracle import (
    FLO_TAG,
    epe,
    flow_color_code,
    lucas_kanade,
    read_flow,
    write_flow,
)


def band_limited_texture(h, w, seed, n_waves=8, min_wavelength=8.0):
    """Smooth random texture that can be evaluated at shifted coordinates."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    def render(dx=0.0, dy=0.0):
        img = np.zeros((h, w))
        r = np.random.default_rng(seed)
        for _ in range(n_waves):
            wavelength = r.uniform(min_wavelength, 4 * min_wavelength)
            theta = r.uniform(0, 2 * np.pi)
            phase = r.uniform(0, 2 * np.pi)
            amp = r.uniform(0.3, 1.0)
            kx = np.cos(theta) * 2 * np.pi / wavelength
            ky = np.sin(theta) * 2 * np.pi / wavelength
            img += amp * np.cos(kx * (xs - dx) + ky * (ys - dy) + phase)
        return img

    return render


class TestLucasKanade:
    def test_identical_frames_zero_flow(self):
        rng = np.random.default_rng(0)
        frame = rng.normal(size=(32, 32))
        flow = lucas_kanade(frame, frame)
        np.testing.assert_array_equal(flow, np.zeros((32, 32, 2)))

    def test_integer_translation_recovered(self):
        render = band_limited_texture(48, 48, seed=1)
        a = render()
        b = render(dx=1.0, dy=0.0)
        flow = lucas_kanade(a, b, window=7)
        interior = flow[8:-8, 8:-8]
        assert abs(interior[..., 0].mean() - 1.0) < 0.2
        assert abs(interior[..., 1].mean() - 0.0) < 0.2

    def test_flat_frames_zero_flow(self):
        a = np.full((20, 20), 0.5)
        b = np.full((20, 20), 0.5)
        np.testing.assert_array_equal(lucas_kanade(a, b), np.zeros((20, 20, 2)))

    def test_extent_mismatch_rejected(self):
        with pytest.raises(ValueError, match="extent"):
            lucas_kanade(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_translation_equivariance(self):
        """Shifting both frames by the same offset leaves interior flow unchanged."""
        render = band_limited_texture(48, 48, seed=2)
        a, b = render(), render(dx=1.0, dy=0.5)
        f1 = lucas_kanade(a, b)
        a_s = np.roll(a, (3, 2), axis=(0, 1))
        b_s = np.roll(b, (3, 2), axis=(0, 1))
        f2 = lucas_kanade(a_s, b_s)
        np.testing.assert_allclose(
            f1[10:-10, 10:-10], np.roll(f2, (-3, -2), axis=(0, 1))[10:-10, 10:-10], atol=1e-3
        )

    def test_subpixel_translation(self):
        render = band_limited_texture(48, 48, seed=3)
        a, b = render(), render(dx=0.5, dy=0.5)
        flow = lucas_kanade(a, b)
        interior = flow[8:-8, 8:-8]
        assert abs(interior[..., 0].mean() - 0.5) < 0.15
        assert abs(interior[..., 1].mean() - 0.5) < 0.15


class TestEpe:
    def test_equal_fields_zero(self):
        f = np.random.default_rng(3).normal(size=(5, 5, 2))
        assert epe(f, f) == 0.0

    def test_three_four_five(self):
        gt = np.zeros((4, 4, 2))
        est = np.zeros((4, 4, 2))
        est[..., 0] = 3.0
        est[..., 1] = 4.0
        assert epe(est, gt) == pytest.approx(5.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(6, 5, 2))
        b = rng.normal(size=(6, 5, 2))
        want = np.mean(
            [
                np.hypot(a[i, j, 0] - b[i, j, 0], a[i, j, 1] - b[i, j, 1])
                for i in range(6)
                for j in range(5)
            ]
        )
        assert epe(a, b) == pytest.approx(want, rel=1e-12)

    def test_metric_properties(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(4, 4, 2))
        b = rng.normal(size=(4, 4, 2))
        assert epe(a, b) >= 0
        assert epe(a, b) == pytest.approx(epe(b, a))
        assert epe(a, a) == 0.0

    def test_mismatch_rejected(self):
        with pytest.raises(ValueError, match="extent"):
            epe(np.zeros((3, 3, 2)), np.zeros((4, 3, 2)))


class TestColorCode:
    def test_zero_flow_is_white(self):
        img = flow_color_code(np.zeros((5, 5, 2)), max_magnitude=1.0)
        np.testing.assert_array_equal(img, np.full((5, 5, 3), 255, dtype=np.uint8))

    def test_opposite_directions_complementary(self):
        """Full-saturation complements sum to white per channel."""
        f = np.zeros((1, 2, 2))
        f[0, 0] = (1.0, 0.0)
        f[0, 1] = (-1.0, 0.0)
        img = flow_color_code(f, max_magnitude=1.0).astype(int)
        np.testing.assert_allclose(img[0, 0] + img[0, 1], [255, 255, 255], atol=1)

    def test_magnitude_saturates(self):
        f = np.zeros((1, 2, 2))
        f[0, 0] = (5.0, 0.0)
        f[0, 1] = (50.0, 0.0)
        img = flow_color_code(f, max_magnitude=2.0)
        np.testing.assert_array_equal(img[0, 0], img[0, 1])

    def test_direction_injective(self):
        angles = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        f = np.stack([np.cos(angles), np.sin(angles)], axis=-1).reshape(1, 12, 2)
        img = flow_color_code(f, max_magnitude=1.0)
        colors = {tuple(px) for px in img[0]}
        assert len(colors) == 12

    def test_bad_normalisation_rejected(self):
        with pytest.raises(ValueError):
            flow_color_code(np.zeros((2, 2, 2)), max_magnitude=0.0)


class TestFlowIO:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        flow = rng.normal(size=(7, 5, 2)).astype(np.float32) * 10
        p = tmp_path / "f.flo"
        write_flow(p, flow)
        got = read_flow(p)
        assert got.dtype == np.float32
        assert np.array_equal(got, flow)

    def test_truncated_file_names_missing_bytes(self, tmp_path):
        p = tmp_path / "t.flo"
        write_flow(p, np.zeros((4, 4, 2), dtype=np.float32))
        raw = p.read_bytes()
        p.write_bytes(raw[:-10])
        with pytest.raises(ValueError, match="missing 10 bytes"):
            read_flow(p)

    def test_bad_tag_rejected(self, tmp_path):
        p = tmp_path / "b.flo"
        data = np.array([1.0], dtype="<f4").tobytes() + np.array([2, 2], dtype="<i4").tobytes()
        p.write_bytes(data + b"\x00" * 32)
        with pytest.raises(ValueError, match="tag"):
            read_flow(p)

    def test_nonfinite_write_rejected(self, tmp_path):
        flow = np.zeros((2, 2, 2), dtype=np.float32)
        flow[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            write_flow(tmp_path / "n.flo", flow)

    @settings(max_examples=25, deadline=None)
    @given(h=st.integers(1, 12), w=st.integers(1, 12), seed=st.integers(0, 10 ** 6))
    def test_round_trip_property(self, h, w, seed, tmp_path_factory):
        flow = (np.random.default_rng(seed).normal(size=(h, w, 2)) * 100).astype(np.float32)
        p = tmp_path_factory.mktemp("flo") / "x.flo"
        write_flow(p, flow)
        assert np.array_equal(read_flow(p), flow)

    def test_tag_constant(self):
        assert float(FLO_TAG) == 202021.25
