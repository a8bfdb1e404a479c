import dataclasses

import numpy as np
import pytest

from hgcompute.backbone import FeaturePyramid, backbone_forward, init_backbone_weights
from hgcompute.config import BackboneConfig, NeckConfig
from hgcompute.hypergraph import hyperconv, build_epsilon_ball_hypergraph
from hgcompute.neck import (
    bottom_up,
    hypergraph_compute,
    hyperc2net,
    init_neck_weights,
    run_neck,
    semantic_collect,
    semantic_scatter,
)
from hgcompute.tensor import FeatureMatrix, ShapeError, TensorMap, to_vertices


def random_pyramid(scale, size, batch=1, seed=0):
    widths = NeckConfig(scale).widths
    rng = np.random.default_rng(seed)
    return FeaturePyramid(tuple(
        TensorMap(rng.standard_normal((batch, w, size // s, size // s)).astype(np.float32))
        for w, s in zip(widths, (2, 4, 8, 16, 32))))


def test_collect_scale_s_geometry():
    cfg = NeckConfig("S")
    w = init_neck_weights(cfg, 0)
    assert w.fuse.in_channels == 992 and w.fuse.out_channels == 256
    x = semantic_collect(random_pyramid("S", 640), cfg, w)
    assert (x.vertices, x.channels, x.grid_meta) == (1600, 256, (40, 40, 1))


def test_collecting_set_changes_only_fuse_width():
    pyr = random_pyramid("S", 64)
    full = NeckConfig("S")
    sub = full.with_overrides(collecting_set=(3, 4, 5))
    assert init_neck_weights(sub, 0).fuse.in_channels == 128 + 256 + 512
    assert init_neck_weights(NeckConfig("N", collecting_set=(3, 4, 5)), 0).fuse.in_channels == 448
    a = hyperc2net(pyr, full, init_neck_weights(full, 0))
    b = hyperc2net(pyr, sub, init_neck_weights(sub, 0))
    assert [t.shape for t in a.as_tuple()] == [t.shape for t in b.as_tuple()]


def test_single_level_needs_no_resampling():
    pyr = random_pyramid("N", 64)
    cfg = NeckConfig("N", collecting_set=(4,))
    w = init_neck_weights(cfg, 0)
    assert w.fuse.in_channels == 128
    from hgcompute.tensor import conv2d_block
    assert semantic_collect(pyr, cfg, w) == to_vertices(conv2d_block(pyr.level(4), w.fuse))


def test_mode_none_is_identity_and_batch1_pooling_agrees():
    pyr = random_pyramid("N", 64)
    cfg = NeckConfig("N", mode="none")
    w = init_neck_weights(cfg, 0)
    x = semantic_collect(pyr, cfg, w)
    assert hypergraph_compute(x, cfg, w) == x
    hi = cfg.with_overrides(mode="high_order", epsilon=3.0)
    assert hypergraph_compute(x, hi, w) == hypergraph_compute(x, hi.with_overrides(pooling="cross_batch"), w)
    assert not np.array_equal(hypergraph_compute(x, hi, w).data, x.data)
    with pytest.raises(ShapeError):
        hypergraph_compute(FeatureMatrix(np.zeros((4, 3))), cfg, w)


def test_high_order_matches_direct_hyperconv():
    pyr = random_pyramid("N", 64, batch=2)
    cfg = NeckConfig("N", epsilon=4.0)
    w = init_neck_weights(cfg, 0)
    x = semantic_collect(pyr, cfg, w)
    got = hypergraph_compute(x, cfg, w)
    for b in range(2):
        rows = x.data[b * 4:(b + 1) * 4]
        want = hyperconv(rows, build_epsilon_ball_hypergraph(rows, 4.0), w.theta).data
        np.testing.assert_array_equal(got.data[b * 4:(b + 1) * 4], want)
    pooled = hypergraph_compute(x, cfg.with_overrides(pooling="cross_batch"), w)
    want = hyperconv(x.data, build_epsilon_ball_hypergraph(x.data, 4.0), w.theta).data
    np.testing.assert_array_equal(pooled.data, want)


def test_scatter_shapes_at_640():
    pyr = random_pyramid("S", 640)
    cfg = NeckConfig("S", mode="none")
    w = init_neck_weights(cfg, 0)
    s3, s4, s5 = semantic_scatter(semantic_collect(pyr, cfg, w), pyr, cfg, w)
    assert (s3.shape, s4.shape, s5.shape) == ((1, 128, 80, 80), (1, 256, 40, 40), (1, 512, 20, 20))


def test_scatter_zero_hyper_half_is_linear_in_b():
    pyr = random_pyramid("N", 64)
    cfg = NeckConfig("N")
    w = init_neck_weights(cfg, 0)
    scatter = []
    for conv, width in zip(w.scatter, (64, 128, 256)):
        weight = np.zeros_like(conv.weight)
        weight[:, cfg.hyper_channels:, 0, 0] = np.eye(width)
        scatter.append(dataclasses.replace(conv, weight=weight, bias=np.zeros(width), activation="none"))
    w = dataclasses.replace(w, scatter=tuple(scatter))
    zero = FeatureMatrix(np.zeros((16, cfg.hyper_channels), dtype=np.float32), (4, 4, 1))
    for s, level in zip(semantic_scatter(zero, pyr, cfg, w), (3, 4, 5)):
        assert s == pyr.level(level)
    with pytest.raises(ShapeError):
        semantic_scatter(FeatureMatrix(zero.data), pyr, cfg, w)


def test_bottom_up_contract(rng):
    cfg = NeckConfig("N")
    w = init_neck_weights(cfg, 0)
    zeros = [TensorMap(np.zeros((1, c, s, s))) for c, s in ((64, 8), (128, 4), (256, 2))]
    zb = dataclasses.replace(
        w, down=tuple(dataclasses.replace(c, bias=np.zeros_like(c.bias)) for c in w.down),
        merge=tuple(dataclasses.replace(c, bias=np.zeros_like(c.bias)) for c in w.merge))
    out = bottom_up(*zeros, zb)
    assert [t.shape for t in out.as_tuple()] == [(1, 64, 8, 8), (1, 128, 4, 4), (1, 256, 2, 2)]
    assert all(np.all(t.data == 0) for t in out.as_tuple())
    s = [TensorMap(rng.standard_normal(z.shape).astype(np.float32)) for z in zeros]
    base = bottom_up(*s, w).n5
    s3 = TensorMap(s[0].data + rng.standard_normal(s[0].shape).astype(np.float32))
    assert not np.array_equal(bottom_up(s3, s[1], s[2], w).n5.data, base.data)
    with pytest.raises(ShapeError):
        bottom_up(s[1], s[1], s[2], w)


@pytest.mark.parametrize("scale", ["N", "S", "M", "L"])
def test_desk_scale_pipeline_shapes(scale):
    cfg = BackboneConfig(scale)
    image = TensorMap(np.random.default_rng(0).random((1, 3, 256, 256), dtype=np.float32))
    pyr = backbone_forward(image, cfg, init_backbone_weights(cfg, 0))
    ncfg = NeckConfig(scale)
    out = hyperc2net(pyr, ncfg, init_neck_weights(ncfg, 1))
    widths = ncfg.widths
    assert [t.shape for t in out.as_tuple()] == [
        (1, widths[2], 32, 32), (1, widths[3], 16, 16), (1, widths[4], 8, 8)]


def test_per_image_batch_independence():
    pyr = random_pyramid("N", 64, batch=2, seed=3)
    cfg = NeckConfig("N", epsilon=5.0)
    w = init_neck_weights(cfg, 0)
    both = hyperc2net(pyr, cfg, w).as_tuple()
    for i in range(2):
        alone = hyperc2net(FeaturePyramid(tuple(TensorMap(l.data[i:i + 1]) for l in pyr.levels)), cfg, w)
        for a, b in zip(both, alone.as_tuple()):
            np.testing.assert_allclose(a.data[i:i + 1], b.data, rtol=1e-6, atol=1e-6 * np.abs(b.data).max())


def test_mode_none_equals_pipeline_without_propagation():
    pyr = random_pyramid("N", 64)
    cfg = NeckConfig("N")
    w = init_neck_weights(cfg, 0)
    a = hyperc2net(pyr, cfg.with_overrides(mode="none"), w)
    b = run_neck(pyr, cfg, w, x_hyper=semantic_collect(pyr, cfg, w)).outputs
    assert all(x == y for x, y in zip(a.as_tuple(), b.as_tuple()))


def test_pyramid_width_mismatch_is_rejected():
    pyr = random_pyramid("N", 64)
    cfg = NeckConfig("S")
    with pytest.raises(ShapeError):
        semantic_collect(pyr, cfg, init_neck_weights(cfg, 0))


def test_config_from_mapping():
    cfg = NeckConfig.from_mapping({"scale": "m", "mode": "low_order", "collecting_set": "B3,B4,B5",
                                   "pooling": "cross_batch", "target_stride": "8"})
    assert (cfg.scale, cfg.epsilon, cfg.hyper_channels, cfg.collecting_set) == ("M", 10.0, 384, (3, 4, 5))
    assert cfg.collected_width == 192 + 384 + 576
    with pytest.raises(ValueError):
        NeckConfig("S", mode="sideways")
    with pytest.raises(ValueError):
        NeckConfig("S", collecting_set=())
