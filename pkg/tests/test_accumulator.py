"""Recurrence arithmetic, temporal pooling, and whole-sequence embedding."""

import numpy as np
import pytest

from motionreid.accumulator import init_rnn, rnn_step, sequence_embed, temporal_pool
from motionreid.data import SequenceSample, random_identities, render_sequence
from motionreid.motion_net import init_motion_net
from motionreid.tensor import Tensor, grad_check, sum_all, mul
from motionreid.two_stream import FusionConfig, build_two_stream

TINY_MOTION = (3, 4, 4, 5, 5, 6)
TINY_DECONV = (4, 3)
TINY_SPATIAL = (4, 6, 8)


def tiny_model(seed=0, dtype=np.float64, q=6, p=10, input_hw=(8, 4)):
    rng = np.random.default_rng(seed)
    motion = init_motion_net(rng, TINY_MOTION, TINY_DECONV, dtype=dtype)
    streams = build_two_stream(rng, FusionConfig(), widths=TINY_SPATIAL, kernel=3,
                               feature_dim=p, input_hw=input_hw, dtype=dtype)
    rnn = init_rnn(rng, feature_dim=p, embedding_dim=q, dtype=dtype)
    return motion, streams, rnn


def tiny_sequence(n_frames, seed=0, h=16, w=8):
    rng = np.random.default_rng(seed)
    frames = rng.uniform(-1, 1, size=(n_frames, h, w, 3)).astype(np.float64)
    return SequenceSample(identity=0, camera="A", frames=frames)


class TestRnnStep:
    def test_zero_inputs_zero_state(self):
        rnn = init_rnn(np.random.default_rng(0), feature_dim=3, embedding_dim=4)
        o, r = rnn_step(None, Tensor(np.zeros(3)), Tensor(np.zeros(4)), rnn)
        np.testing.assert_array_equal(o.data, np.zeros(4))
        np.testing.assert_array_equal(r.data, np.zeros(4))

    def test_memoryless_when_recurrent_matrix_zero(self):
        rng = np.random.default_rng(1)
        rnn = init_rnn(rng, feature_dim=3, embedding_dim=4)
        rnn.n.data[:] = 0.0
        f = Tensor(rng.normal(size=3))
        o1, _ = rnn_step(None, f, Tensor(np.zeros(4)), rnn)
        o2, _ = rnn_step(None, f, Tensor(rng.normal(size=4)), rnn)
        np.testing.assert_allclose(o1.data, o2.data, atol=1e-12)

    def test_hand_two_by_two(self):
        m = np.array([[1.0, 2.0], [0.0, -1.0]])
        n = np.array([[0.5, 0.0], [0.0, 0.5]])
        rnn = init_rnn(np.random.default_rng(2), feature_dim=2, embedding_dim=2)
        rnn.m.data[:] = m
        rnn.n.data[:] = n
        f = np.array([1.0, -1.0])
        r_prev = np.array([0.2, 0.4])
        o, r = rnn_step(None, Tensor(f), Tensor(r_prev), rnn)
        want_o = m @ f + n @ r_prev
        np.testing.assert_allclose(o.data, want_o, atol=1e-12)
        np.testing.assert_allclose(r.data, np.tanh(want_o), atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        rnn = init_rnn(np.random.default_rng(3), feature_dim=3, embedding_dim=4)
        with pytest.raises(ValueError, match="feature"):
            rnn_step(None, Tensor(np.zeros(5)), Tensor(np.zeros(4)), rnn)
        with pytest.raises(ValueError, match="state"):
            rnn_step(None, Tensor(np.zeros(3)), Tensor(np.zeros(5)), rnn)

    def test_state_bounded(self):
        rng = np.random.default_rng(4)
        rnn = init_rnn(rng, feature_dim=3, embedding_dim=4, dtype=np.float64)
        r = Tensor(np.zeros(4))
        for _ in range(20):
            _, r = rnn_step(None, Tensor(rng.normal(size=3) * 3), r, rnn)
            assert np.all(np.abs(r.data) < 1.0)


class TestTemporalPool:
    def test_constant_sequence_identity(self):
        c = np.array([0.3, -0.8, 0.1])
        outs = [Tensor(c.copy()) for _ in range(5)]
        np.testing.assert_allclose(temporal_pool(None, outs, "average").data, c, atol=1e-12)
        np.testing.assert_array_equal(temporal_pool(None, outs, "max").data, c)

    def test_two_step_example(self):
        a = Tensor(np.array([1.0, -1.0]))
        b = Tensor(np.array([3.0, -3.0]))
        np.testing.assert_allclose(temporal_pool(None, [a, b], "average").data, [2.0, -2.0])
        np.testing.assert_allclose(temporal_pool(None, [a, b], "max").data, [3.0, -1.0])

    def test_max_dominates_average_for_nonnegative(self):
        rng = np.random.default_rng(5)
        outs = [Tensor(rng.uniform(0, 1, size=4)) for _ in range(7)]
        avg = temporal_pool(None, outs, "average").data
        mx = temporal_pool(None, outs, "max").data
        assert np.all(mx >= avg)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            temporal_pool(None, [], "average")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="pooling"):
            temporal_pool(None, [Tensor(np.zeros(2))], "median")


class TestSequenceEmbed:
    def test_two_frames_average_equals_single_output(self):
        motion, streams, rnn = tiny_model(seed=0)
        sample = tiny_sequence(2, seed=1)
        u = sequence_embed(None, sample, motion, streams, rnn, pool_mode="average")
        u_max = sequence_embed(None, sample, motion, streams, rnn, pool_mode="max")
        np.testing.assert_allclose(u.data, u_max.data, atol=1e-12)  # single step: mean == max

    def test_single_frame_rejected(self):
        motion, streams, rnn = tiny_model()
        with pytest.raises(ValueError, match="at least 2"):
            frames = np.zeros((2, 16, 8, 3))
            s = SequenceSample(identity=0, camera="A", frames=frames)
            s.frames = s.frames[:1]  # bypass the constructor check deliberately
            sequence_embed(None, s, motion, streams, rnn)

    def test_order_sensitivity(self):
        """Reversing frames changes the embedding when N is nonzero."""
        motion, streams, rnn = tiny_model(seed=2)
        sample = tiny_sequence(5, seed=3)
        u_fwd = sequence_embed(None, sample, motion, streams, rnn)
        rev = SequenceSample(identity=0, camera="A", frames=sample.frames[::-1].copy())
        u_rev = sequence_embed(None, rev, motion, streams, rnn)
        assert not np.allclose(u_fwd.data, u_rev.data)

    def test_memoryless_average_degeneration(self):
        """With N = 0 and average pooling, u is the mean of per-step features
        through M: accumulation reduced to pooling."""
        motion, streams, rnn = tiny_model(seed=4)
        rnn.n.data[:] = 0.0
        sample = tiny_sequence(4, seed=5)
        u = sequence_embed(None, sample, motion, streams, rnn, pool_mode="average")
        from motionreid.data import prepare_sequence
        from motionreid.two_stream import two_stream_forward
        from motionreid.motion_net import motion_forward

        smalls, pairs = prepare_sequence(sample)
        flow = motion_forward(None, Tensor(pairs), motion).pred3
        feats, _, _ = two_stream_forward(None, Tensor(smalls), flow, streams)
        want = (rnn.m.data @ feats.data.T).mean(axis=1)
        np.testing.assert_allclose(u.data, want, atol=1e-10)

    def test_deterministic(self):
        motion, streams, rnn = tiny_model(seed=6)
        sample = tiny_sequence(4, seed=7)
        a = sequence_embed(None, sample, motion, streams, rnn)
        b = sequence_embed(None, sample, motion, streams, rnn)
        assert np.array_equal(a.data, b.data)

    def test_zero_and_oracle_modes(self):
        motion, streams, rnn = tiny_model(seed=8)
        sample = tiny_sequence(4, seed=9)
        u_zero = sequence_embed(None, sample, motion, streams, rnn, motion_mode="zero")
        assert u_zero.data.shape == (6,)
        flows = np.zeros((3, 8, 4, 2))
        u_oracle = sequence_embed(None, sample, motion, streams, rnn,
                                  motion_mode="oracle", oracle_flows=flows)
        np.testing.assert_allclose(u_zero.data, u_oracle.data, atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_grad_check_t3(self, seed):
        """Full pipeline finite-difference check on a 3-frame sequence."""
        motion, streams, rnn = tiny_model(seed=seed)
        sample = tiny_sequence(3, seed=100 + seed)

        def graph(t):
            u = sequence_embed(t, sample, motion, streams, rnn)
            return sum_all(t, mul(t, u, u))

        wrt = list(motion.params.values()) + list(streams.named().values()) + [rnn.m, rnn.n]
        err = grad_check(graph, wrt, max_coords=3, rng=np.random.default_rng(seed))
        assert err < 1e-4
