"""Spatial towers, the three fusion operators, and fused step contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionreid.motion_net import init_motion_net
from motionreid.tensor import Tape, Tensor, backward, grad_check, sum_all
from motionreid.two_stream import (
    FUSION_LOCATIONS,
    FUSION_METHODS,
    FusionConfig,
    build_tower,
    build_two_stream,
    deinterleave,
    fuse_concat,
    fuse_max,
    fuse_sum,
    run_tower,
    spatial_forward,
    two_stream_forward,
    two_stream_step,
)

TINY_MOTION = (3, 4, 4, 5, 5, 6)
TINY_DECONV = (4, 3)
TINY_SPATIAL = (4, 6, 8)


def tiny_streams(fusion, seed=0, dtype=np.float64, feature_dim=10, input_hw=(8, 4)):
    rng = np.random.default_rng(seed)
    return build_two_stream(rng, fusion, widths=TINY_SPATIAL, kernel=3,
                            feature_dim=feature_dim, input_hw=input_hw, dtype=dtype)


class TestTowerShapes:
    def test_activation_extents_64x32(self):
        tower = build_tower(np.random.default_rng(0), in_channels=3)
        acts = spatial_forward(None, Tensor(np.zeros((64, 32, 3), dtype=np.float32)), tower)
        assert acts["pool2"].data.shape[:2] == (4, 2)  # four stride-2 halvings
        assert acts["pool3"].data.shape[:2] == (1, 1)  # six halvings, ceil mode
        assert acts["fc"].data.shape == (128,)

    def test_zero_input_fc_equals_bias(self):
        tower = build_tower(np.random.default_rng(1), in_channels=3)
        bias = tower.steps[-1][3]
        bias.data[:] = np.random.default_rng(2).normal(size=bias.data.shape).astype(np.float32)
        acts = spatial_forward(None, Tensor(np.zeros((64, 32, 3), dtype=np.float32)), tower)
        np.testing.assert_allclose(acts["fc"].data, bias.data, atol=1e-6)

    def test_unknown_layer_rejected(self):
        tower = build_tower(np.random.default_rng(3), in_channels=3)
        with pytest.raises(ValueError, match="unknown layer"):
            spatial_forward(None, Tensor(np.zeros((64, 32, 3), dtype=np.float32)), tower, layer="conv9")

    def test_motion_stream_two_channels(self):
        tower = build_tower(np.random.default_rng(4), in_channels=2)
        acts = spatial_forward(None, Tensor(np.zeros((64, 32, 2), dtype=np.float32)), tower)
        assert acts["fc"].data.shape == (128,)


class TestFusionOps:
    def test_concat_interleaving_order(self):
        a = Tensor(np.array([[[1.0, 2.0]]]))
        b = Tensor(np.array([[[10.0, 20.0]]]))
        y = fuse_concat(None, a, b)
        np.testing.assert_array_equal(y.data[0, 0], [10.0, 1.0, 20.0, 2.0])

    def test_concat_bijection(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(3, 3, 4)).astype(np.float32)
        b = rng.normal(size=(3, 3, 4)).astype(np.float32)
        y = fuse_concat(None, Tensor(a), Tensor(b))
        ra, rb = deinterleave(y.data)
        assert np.array_equal(ra, a) and np.array_equal(rb, b)

    def test_concat_index_formula(self):
        """Every output position obeys the interleaving index map (1-based)."""
        rng = np.random.default_rng(6)
        a = rng.normal(size=(3, 3, 4))
        b = rng.normal(size=(3, 3, 4))
        y = fuse_concat(None, Tensor(a), Tensor(b)).data
        for i in range(3):
            for j in range(3):
                for d in range(1, 5):
                    assert y[i, j, 2 * d - 1] == a[i, j, d - 1]
                    assert y[i, j, 2 * d - 2] == b[i, j, d - 1]

    def test_sum_fusion(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3))
        np.testing.assert_array_equal(fuse_sum(None, Tensor(a), Tensor(np.zeros_like(b))).data, a)
        s1 = fuse_sum(None, Tensor(a), Tensor(b)).data
        s2 = fuse_sum(None, Tensor(b), Tensor(a)).data
        np.testing.assert_array_equal(s1, s2)
        np.testing.assert_allclose(s1, a + b, atol=1e-12)

    def test_max_fusion(self):
        rng = np.random.default_rng(8)
        a, b = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3))
        np.testing.assert_array_equal(fuse_max(None, Tensor(a), Tensor(a)).data, a)
        m = fuse_max(None, Tensor(a), Tensor(b)).data
        assert np.all(m >= a) and np.all(m >= b)
        np.testing.assert_array_equal(m, np.maximum(a, b))
        np.testing.assert_array_equal(m, fuse_max(None, Tensor(b), Tensor(a)).data)

    def test_extent_mismatch_rejected(self):
        a = Tensor(np.zeros((2, 2, 3)))
        b = Tensor(np.zeros((2, 3, 3)))
        for fn in (fuse_concat, fuse_sum, fuse_max):
            with pytest.raises(ValueError, match="identical"):
                fn(None, a, b)

    def test_max_fusion_tie_gradient_to_first(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        tape = Tape()
        backward(tape, sum_all(tape, fuse_max(tape, a, b)))
        np.testing.assert_array_equal(a.grad, np.ones((2, 2)))
        assert b.grad is None or np.all(b.grad == 0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_fusion_algebra_properties(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 3, 2))
        b = rng.normal(size=(2, 3, 2))
        assert np.allclose(fuse_sum(None, Tensor(a), Tensor(b)).data,
                           fuse_sum(None, Tensor(b), Tensor(a)).data)
        assert np.array_equal(fuse_max(None, Tensor(a), Tensor(a)).data, a)
        ra, rb = deinterleave(fuse_concat(None, Tensor(a), Tensor(b)).data)
        assert np.array_equal(ra, a) and np.array_equal(rb, b)


class TestTwoStreamAssembly:
    def test_concat_at_pool2_doubles_tail_input(self):
        streams = tiny_streams(FusionConfig("Concatenation", "Max-pool2"))
        conv3_w = streams.tail.steps[0][2]
        assert conv3_w.data.shape[2] == 2 * TINY_SPATIAL[1]

    def test_sum_at_pool2_keeps_tail_input(self):
        streams = tiny_streams(FusionConfig("Sum", "Max-pool2"))
        conv3_w = streams.tail.steps[0][2]
        assert conv3_w.data.shape[2] == TINY_SPATIAL[1]

    def test_identical_streams_max_fusion_collapses(self):
        """Max fusion of identical streams equals the single tower output."""
        fusion = FusionConfig("Max", "Max-pool2")
        rng = np.random.default_rng(9)
        streams = build_two_stream(rng, fusion, widths=TINY_SPATIAL, kernel=3,
                                   feature_dim=10, input_hw=(8, 4), motion_channels=3,
                                   dtype=np.float64)
        # share appearance parameters across both stream segments
        streams.stream_b = streams.stream_a
        x = Tensor(np.random.default_rng(10).normal(size=(8, 4, 3)))
        f, acts_a, _ = two_stream_forward(None, x, Tensor(x.data.copy()), streams)
        single, _ = run_tower(None, acts_a["pool2"], streams.tail)
        np.testing.assert_allclose(f.data, single.data, atol=1e-12)

    @pytest.mark.parametrize("method", FUSION_METHODS)
    @pytest.mark.parametrize("location", FUSION_LOCATIONS)
    def test_all_combinations_forward_backward(self, method, location):
        fusion = FusionConfig(method, location)
        streams = tiny_streams(fusion, seed=11)
        rng = np.random.default_rng(12)
        x_a = Tensor(rng.normal(size=(8, 4, 3)))
        x_b = Tensor(rng.normal(size=(8, 4, 2)))
        tape = Tape()
        f, acts_a, acts_b = two_stream_forward(tape, x_a, x_b, streams)
        assert f.data.shape == (10,)
        # resolution-matching contract at the fusion point
        for name in acts_a:
            assert acts_a[name].data.shape[:-1] == acts_b[name].data.shape[:-1]
        loss = sum_all(tape, f)
        backward(tape, loss)
        for name, p in streams.named().items():
            assert p.grad is not None, f"no gradient reached {name}"
            assert np.all(np.isfinite(p.grad))

    @pytest.mark.parametrize("method", FUSION_METHODS)
    @pytest.mark.parametrize("location", ["Max-pool2", "FC"])
    def test_grad_check_method_location(self, method, location):
        streams = tiny_streams(FusionConfig(method, location), seed=13)
        rng = np.random.default_rng(14)
        x_a = Tensor(rng.normal(size=(8, 4, 3)))
        x_b = Tensor(rng.normal(size=(8, 4, 2)))

        def graph(t):
            f, _, _ = two_stream_forward(t, x_a, x_b, streams)
            return sum_all(t, T_mul(t, f))

        def T_mul(t, f):
            from motionreid.tensor import mul

            return mul(t, f, f)

        wrt = [x_a, x_b] + list(streams.named().values())
        err = grad_check(graph, wrt, max_coords=4, rng=np.random.default_rng(15))
        assert err < 1e-4

    @pytest.mark.parametrize("location", ["Max-pool2", "FC"])
    def test_batched_forward_matches_per_sample(self, location):
        streams = tiny_streams(FusionConfig("Concatenation", location), seed=23)
        rng = np.random.default_rng(24)
        xa = rng.normal(size=(3, 8, 4, 3))
        xb = rng.normal(size=(3, 8, 4, 2))
        batched, _, _ = two_stream_forward(None, Tensor(xa), Tensor(xb), streams)
        assert batched.data.shape == (3, 10)
        for i in range(3):
            single, _, _ = two_stream_forward(None, Tensor(xa[i]), Tensor(xb[i]), streams)
            np.testing.assert_allclose(batched.data[i], single.data, rtol=1e-10)

    def test_unknown_fusion_rejected(self):
        with pytest.raises(ValueError, match="method"):
            FusionConfig("average", "Max-pool2")
        with pytest.raises(ValueError, match="location"):
            FusionConfig("Sum", "conv7")

    def test_fusion_config_canonicalises_case(self):
        cfg = FusionConfig("concatenation", "max-pool2")
        assert cfg.method == "Concatenation"
        assert cfg.location == "Max-pool2"


class TestTwoStreamStep:
    def test_learned_step_shapes(self):
        rng = np.random.default_rng(16)
        motion = init_motion_net(rng, TINY_MOTION, TINY_DECONV, dtype=np.float64)
        streams = tiny_streams(FusionConfig(), seed=17)
        frame = Tensor(rng.normal(size=(8, 4, 3)))
        pair = Tensor(rng.normal(size=(16, 8, 6)))
        f = two_stream_step(None, frame, pair, motion, streams)
        assert f.data.shape == (10,)

    def test_zero_mode_ignores_pair(self):
        rng = np.random.default_rng(18)
        motion = init_motion_net(rng, TINY_MOTION, TINY_DECONV, dtype=np.float64)
        streams = tiny_streams(FusionConfig(), seed=19)
        frame = Tensor(rng.normal(size=(8, 4, 3)))
        p1 = Tensor(rng.normal(size=(16, 8, 6)))
        p2 = Tensor(rng.normal(size=(16, 8, 6)))
        f1 = two_stream_step(None, frame, p1, motion, streams, motion_mode="zero")
        f2 = two_stream_step(None, frame, p2, motion, streams, motion_mode="zero")
        np.testing.assert_array_equal(f1.data, f2.data)

    def test_oracle_mode_requires_flow(self):
        rng = np.random.default_rng(20)
        motion = init_motion_net(rng, TINY_MOTION, TINY_DECONV, dtype=np.float64)
        streams = tiny_streams(FusionConfig(), seed=21)
        frame = Tensor(rng.normal(size=(8, 4, 3)))
        pair = Tensor(rng.normal(size=(16, 8, 6)))
        with pytest.raises(ValueError, match="oracle"):
            two_stream_step(None, frame, pair, motion, streams, motion_mode="oracle")
        f = two_stream_step(None, frame, pair, motion, streams, motion_mode="oracle",
                            oracle_flow=np.zeros((8, 4, 2)))
        assert f.data.shape == (10,)

    @pytest.mark.parametrize("seed", range(3))
    def test_full_step_grad_check(self, seed):
        rng = np.random.default_rng(30 + seed)
        motion = init_motion_net(np.random.default_rng(seed), TINY_MOTION, TINY_DECONV, dtype=np.float64)
        streams = tiny_streams(FusionConfig(), seed=40 + seed)
        frame = Tensor(rng.normal(size=(8, 4, 3)))
        pair = Tensor(rng.normal(size=(16, 8, 6)) * 0.5)

        def graph(t):
            from motionreid.tensor import mul, sum_all as s

            f = two_stream_step(t, frame, pair, motion, streams)
            return s(t, mul(t, f, f))

        wrt = [frame, pair] + list(motion.params.values()) + list(streams.named().values())
        err = grad_check(graph, wrt, max_coords=3, rng=np.random.default_rng(seed))
        assert err < 1e-4
