import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgcompute.tensor import (
    ConvBlockParams,
    FeatureMatrix,
    ShapeError,
    TensorMap,
    concat_channels,
    conv2d_block,
    dsconv_block,
    from_vertices,
    resample,
    split_channels,
    to_vertices,
)

from oracles import naive_conv


def _identity_1x1(c):
    return ConvBlockParams(np.eye(c, dtype=np.float32)[:, :, None, None], np.zeros(c), activation="none")


def test_identity_1x1_conv(rng):
    x = TensorMap(rng.standard_normal((2, 3, 4, 5)).astype(np.float32))
    assert conv2d_block(x, _identity_1x1(3)) == x


def test_zero_input_silu_gives_zero(rng):
    p = ConvBlockParams.init(rng, 3, 4, 3)
    p = dataclasses.replace(p, bias=np.zeros(4))
    out = conv2d_block(TensorMap(np.zeros((1, 3, 5, 5))), p)
    assert np.all(out.data == 0)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_oracle(rng, stride):
    x = rng.standard_normal((1, 3, 5, 5)).astype(np.float32)
    p = ConvBlockParams.init(rng, 3, 4, 3, stride=stride, activation="none")
    got = conv2d_block(TensorMap(x), p).data
    want = naive_conv(x, p.weight, p.bias, stride=stride)
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-6)
    assert got.shape[2:] == (-(-5 // stride),) * 2


def test_grouped_conv_matches_oracle(rng):
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    dw = ConvBlockParams.init(rng, 4, 4, 3, groups=4, activation="none")
    pw = ConvBlockParams.init(rng, 4, 4, 1, activation="none")
    got = dsconv_block(TensorMap(x), dw, pw).data
    want = naive_conv(naive_conv(x, dw.weight, dw.bias, groups=4), pw.weight, pw.bias)
    np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-6)


def test_dsconv_is_composition(rng):
    x = TensorMap(rng.standard_normal((2, 4, 6, 6)).astype(np.float32))
    dw = ConvBlockParams.init(rng, 4, 4, 5, groups=4)
    pw = ConvBlockParams.init(rng, 4, 6, 1)
    assert dsconv_block(x, dw, pw) == conv2d_block(conv2d_block(x, dw), pw)


def test_dsconv_zero_depthwise_gives_bias(rng):
    x = TensorMap(rng.standard_normal((1, 3, 4, 4)).astype(np.float32))
    dw = ConvBlockParams(np.zeros((3, 1, 3, 3)), np.zeros(3), groups=3, activation="none")
    pw = dataclasses.replace(_identity_1x1(3), bias=np.array([1.0, -2.0, 0.5]))
    out = dsconv_block(x, dw, pw).data
    np.testing.assert_array_equal(out, np.broadcast_to(pw.bias[None, :, None, None], out.shape))


def test_conv_errors(rng):
    with pytest.raises(ShapeError):
        ConvBlockParams(np.zeros((2, 2, 2, 2)), np.zeros(2))
    with pytest.raises(ShapeError):
        ConvBlockParams(np.zeros((3, 1, 3, 3)), np.zeros(3), groups=2)
    with pytest.raises(ShapeError):
        conv2d_block(TensorMap(np.zeros((1, 2, 3, 3))), ConvBlockParams.init(rng, 3, 3, 1))


@given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([1, 3, 5, 7]), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_same_padding_shape_law(h, w, k, seed):
    rng = np.random.default_rng(seed)
    p = ConvBlockParams.init(rng, 2, 3, k)
    assert conv2d_block(TensorMap(rng.standard_normal((1, 2, h, w))), p).shape == (1, 3, h, w)


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_linearity(seed):
    rng = np.random.default_rng(seed)
    p = dataclasses.replace(ConvBlockParams.init(rng, 3, 2, 3, activation="none"), bias=np.zeros(2))
    x, y = rng.standard_normal((2, 1, 3, 6, 6))
    a, b = rng.normal(size=2)
    lhs = conv2d_block(TensorMap(a * x + b * y), p).data
    rhs = a * conv2d_block(TensorMap(x), p).data + b * conv2d_block(TensorMap(y), p).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-5 * np.abs(rhs).max())


def test_translation_covariance(rng):
    p = ConvBlockParams.init(rng, 2, 2, 3)
    canvas = np.zeros((1, 2, 10, 10), dtype=np.float32)
    canvas[:, :, 3:6, 3:6] = rng.standard_normal((2, 3, 3))
    shifted = np.roll(canvas, (1, 1), axis=(2, 3))
    a = conv2d_block(TensorMap(canvas), p).data
    b = conv2d_block(TensorMap(shifted), p).data
    np.testing.assert_array_equal(b[:, :, 1:, 1:], a[:, :, :-1, :-1])


def test_resample_round_trip_and_constants(rng):
    x = TensorMap(rng.standard_normal((1, 2, 2, 2)).astype(np.float32))
    assert resample(resample(x, 4, 4, "nearest_up"), 2, 2, "avg_down") == x
    const = TensorMap(np.full((1, 2, 6, 6), 0.3, dtype=np.float32))
    assert np.all(resample(const, 2, 3, "avg_down").data == np.float32(0.3))
    assert np.all(resample(const, 12, 18, "nearest_up").data == np.float32(0.3))


def test_avg_down_matches_block_means():
    ramp = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    out = resample(TensorMap(ramp), 2, 2, "avg_down").data[0, 0]
    want = [[sum(ramp[0, 0, r, c] for r in (2 * i, 2 * i + 1) for c in (2 * j, 2 * j + 1)) / 4
             for j in range(2)] for i in range(2)]
    np.testing.assert_array_equal(out, want)


def test_resample_rejects_fractional_ratio():
    x = TensorMap(np.zeros((1, 1, 3, 3)))
    with pytest.raises(ShapeError):
        resample(x, 2, 2, "avg_down")
    with pytest.raises(ShapeError):
        resample(x, 4, 4, "nearest_up")


def test_concat_split(rng):
    widths = (32, 64, 128, 256, 512)
    maps = [TensorMap(rng.standard_normal((1, c, 2, 2)).astype(np.float32)) for c in widths]
    cat = concat_channels(maps)
    assert cat.channels == 992
    assert all(a == b for a, b in zip(split_channels(cat, widths), maps))
    assert concat_channels(maps[:1]) == maps[0]
    halves = split_channels(maps[1], [32, 32])
    assert [h.channels for h in halves] == [32, 32]
    assert concat_channels(halves) == maps[1]
    assert split_channels(maps[0], [32])[0] == maps[0]
    with pytest.raises(ShapeError):
        split_channels(maps[0], [10, 10])
    with pytest.raises(ShapeError):
        concat_channels([maps[0], TensorMap(np.zeros((1, 1, 3, 2)))])


def test_vertex_layout():
    x = TensorMap(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2))
    m = to_vertices(x)
    assert m.data.shape == (4, 2)
    np.testing.assert_array_equal(m.data[0], x.data[0, :, 0, 0])
    np.testing.assert_array_equal(m.data[1], x.data[0, :, 0, 1])
    assert m.grid_meta == (2, 2, 1)


def test_vertex_layout_batches(rng):
    x = TensorMap(rng.standard_normal((2, 3, 2, 3)).astype(np.float32))
    m = to_vertices(x)
    np.testing.assert_array_equal(m.data[:6], to_vertices(TensorMap(x.data[:1])).data)
    np.testing.assert_array_equal(m.data[6:], to_vertices(TensorMap(x.data[1:])).data)
    assert from_vertices(m) == x
    with pytest.raises(ShapeError):
        from_vertices(FeatureMatrix(m.data))


def test_container_invariants():
    with pytest.raises(ShapeError):
        TensorMap(np.zeros((1, 0, 2, 2)))
    with pytest.raises(ShapeError):
        FeatureMatrix(np.zeros((5, 2)), grid_meta=(2, 2, 1))
