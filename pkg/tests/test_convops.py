import numpy as np
import pytest

from gdq.convops import (
    avg_pool,
    bicubic_upscale,
    conv2d,
    conv2d_naive,
    depth_to_space,
    global_avg_pool,
    group_norm,
    pad2d,
    relu,
)


class TestConv2d:
    def test_identity_1x1(self):
        x = np.random.default_rng(0).random((1, 2, 5, 5))
        w = np.zeros((2, 2, 1, 1))
        w[0, 0, 0, 0] = 1.0
        w[1, 1, 0, 0] = 1.0
        np.testing.assert_array_equal(conv2d(x, w), x)

    def test_box_kernel_constant_reflect(self):
        x = np.full((1, 1, 6, 6), 0.37)
        w = np.full((1, 1, 3, 3), 1.0 / 9.0)
        out = conv2d(x, w, pad=1, pad_mode="reflect")
        np.testing.assert_allclose(out, x, atol=1e-12)

    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("pad,mode", [(0, "zero"), (1, "zero"), (2, "reflect")])
    def test_matches_naive_oracle(self, stride, pad, mode):
        rng = np.random.default_rng(stride * 10 + pad)
        x = rng.normal(size=(2, 3, 7, 6))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        fast = conv2d(x, w, b, stride=stride, pad=pad, pad_mode=mode)
        slow = conv2d_naive(x, w, b, stride=stride, pad=pad, pad_mode=mode)
        assert fast.shape == slow.shape
        assert np.max(np.abs(fast - slow)) < 1e-5

    def test_output_dims_formula(self):
        x = np.zeros((1, 1, 9, 7))
        w = np.zeros((2, 1, 3, 3))
        out = conv2d(x, w, stride=2, pad=1)
        # (n + 2p - k) // s + 1
        assert out.shape == (1, 2, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channel"):
            conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))

    def test_bias_broadcast(self):
        x = np.zeros((1, 1, 3, 3))
        w = np.zeros((2, 1, 1, 1))
        out = conv2d(x, w, bias=np.array([1.0, -1.0]))
        np.testing.assert_array_equal(out[0, 0], np.ones((3, 3)))
        np.testing.assert_array_equal(out[0, 1], -np.ones((3, 3)))


def test_pad2d_modes():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    z = pad2d(x, 1, "zero")
    assert z.shape == (1, 1, 4, 4)
    assert z[0, 0, 0, 0] == 0.0
    r = pad2d(x, 1, "reflect")
    assert r[0, 0, 0, 0] == x[0, 0, 1, 1]
    with pytest.raises(ValueError):
        pad2d(x, 1, "wrap")


def test_relu():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_avg_pool_mean_of_blocks():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    out = avg_pool(x, 2)
    np.testing.assert_array_equal(out[0, 0], [[2.5, 4.5], [10.5, 12.5]])
    with pytest.raises(ValueError, match="divisible"):
        avg_pool(np.zeros((1, 1, 3, 4)), 2)


def test_global_avg_pool():
    x = np.stack([np.full((4, 4), 2.0), np.full((4, 4), -1.0)])[None]
    np.testing.assert_array_equal(global_avg_pool(x), [[2.0, -1.0]])


class TestGroupNorm:
    def test_constant_input_returns_shift(self):
        # zero variance: normalized value is 0 / sqrt(eps) = 0, output = shift
        x = np.full((1, 4, 3, 3), 5.0)
        out = group_norm(x, 2, scale=np.ones(4), shift=np.array([1.0, 2.0, 3.0, 4.0]))
        for c in range(4):
            np.testing.assert_allclose(out[0, c], np.full((3, 3), c + 1.0), atol=1e-12)

    def test_normalizes_per_group(self):
        rng = np.random.default_rng(1)
        x = rng.normal(3.0, 2.0, (1, 4, 8, 8))
        out = group_norm(x, 2, np.ones(4), np.zeros(4))
        for g in range(2):
            block = out[0, 2 * g:2 * g + 2]
            assert abs(block.mean()) < 1e-10
            assert block.std() == pytest.approx(1.0, abs=1e-3)  # eps-shifted

    def test_bad_group_count(self):
        with pytest.raises(ValueError, match="divisible"):
            group_norm(np.zeros((1, 3, 2, 2)), 2, np.ones(3), np.zeros(3))


class TestDepthToSpace:
    def test_layout(self):
        # channel c*s^2 + dy*s + dx -> offset (dy, dx)
        x = np.arange(4.0).reshape(1, 4, 1, 1)
        out = depth_to_space(x, 2)
        np.testing.assert_array_equal(out[0, 0], [[0.0, 1.0], [2.0, 3.0]])

    def test_shape(self):
        out = depth_to_space(np.zeros((1, 12, 5, 7)), 2)
        assert out.shape == (1, 3, 10, 14)

    def test_bad_channels(self):
        with pytest.raises(ValueError, match="divisible"):
            depth_to_space(np.zeros((1, 5, 2, 2)), 2)


class TestBicubic:
    def test_scale_one_identity(self):
        x = np.random.default_rng(2).random((1, 3, 4, 4))
        np.testing.assert_array_equal(bicubic_upscale(x, 1), x)

    def test_constant_preserved(self):
        x = np.full((1, 1, 5, 7), 0.42)
        out = bicubic_upscale(x, 2)
        assert out.shape == (1, 1, 10, 14)
        np.testing.assert_allclose(out, 0.42, atol=1e-12)

    @pytest.mark.parametrize("scale", [2, 4])
    def test_linear_ramp_reproduced_in_interior(self, scale):
        # the Catmull-Rom kernel has linear precision; border rows deviate
        # only because of index clamping
        n = 8
        x = np.tile(np.arange(n, dtype=np.float64), (1, 1, n, 1))
        out = bicubic_upscale(x, scale)
        cols = (np.arange(n * scale) + 0.5) / scale - 0.5
        interior = slice(2 * scale, -2 * scale)
        expected = np.tile(cols, (n * scale, 1))
        np.testing.assert_allclose(
            out[0, 0][:, interior], expected[:, interior], atol=1e-9
        )

    def test_upscale_shape_and_range_overshoot(self):
        # step edges may legitimately overshoot: callers clamp
        x = np.zeros((1, 1, 4, 8))
        x[..., 4:] = 1.0
        out = bicubic_upscale(x, 2)
        assert out.shape == (1, 1, 8, 16)
        assert out.max() > 1.0  # characteristic bicubic ringing
