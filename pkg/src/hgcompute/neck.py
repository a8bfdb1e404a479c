"""Collect / hypergraph-compute / scatter neck over a five-level feature pyramid.

Selected pyramid levels are resized to one shared grid, concatenated and
projected to ``hyper_channels``; every grid cell becomes a vertex. After
the hypergraph stage the vertex features are put back on the grid, resized
to strides 8/16/32, fused with B3/B4/B5 and passed through a bottom-up
downsample-and-fuse path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backbone import FeaturePyramid
from .config import NeckConfig
from .hypergraph import (
    build_epsilon_ball_hypergraph,
    graphconv_low_order,
    hyperconv,
)
from .tensor import (
    ConvBlockParams,
    FeatureMatrix,
    ShapeError,
    TensorMap,
    concat_channels,
    conv2d_block,
    from_vertices,
    resize_to,
    to_vertices,
)

OUTPUT_LEVELS = (3, 4, 5)


@dataclass(frozen=True, eq=False)
class NeckWeights:
    fuse: ConvBlockParams  # collected width -> hyper_channels, 1x1
    theta: np.ndarray  # hyper_channels x hyper_channels
    scatter: tuple  # per output level: (hyper + B_i) -> B_i, 1x1
    down: tuple  # 3x3 stride-2: N3 -> N3 width, N4 -> N4 width
    merge: tuple  # 1x1: (B3 + B4) -> B4, (B4 + B5) -> B5


@dataclass(frozen=True, eq=False)
class NeckOutputs:
    n3: TensorMap
    n4: TensorMap
    n5: TensorMap

    def as_tuple(self) -> tuple:
        return self.n3, self.n4, self.n5


@dataclass(frozen=True, eq=False)
class NeckTrace:
    x_mixed: FeatureMatrix
    x_hyper: FeatureMatrix
    scattered: tuple
    outputs: NeckOutputs


def init_neck_weights(cfg: NeckConfig, seed: int) -> NeckWeights:
    rng = np.random.default_rng(seed)
    init = ConvBlockParams.init
    hc = cfg.hyper_channels
    w3, w4, w5 = (cfg.widths[i - 1] for i in OUTPUT_LEVELS)
    fuse = init(rng, cfg.collected_width, hc, 1)
    bound = 1.0 / np.sqrt(hc)
    theta = rng.uniform(-bound, bound, size=(hc, hc)).astype(np.float32)
    scatter = tuple(init(rng, hc + w, w, 1) for w in (w3, w4, w5))
    down = (init(rng, w3, w3, 3, stride=2), init(rng, w4, w4, 3, stride=2))
    merge = (init(rng, w3 + w4, w4, 1), init(rng, w4 + w5, w5, 1))
    return NeckWeights(fuse, theta, scatter, down, merge)


def _check_pyramid(pyr: FeaturePyramid, cfg: NeckConfig):
    widths = tuple(level.channels for level in pyr.levels)
    if widths != tuple(cfg.widths):
        raise ShapeError(f"pyramid widths {widths} do not match the {cfg.scale} preset {cfg.widths}")


def semantic_collect(pyr: FeaturePyramid, cfg: NeckConfig, w: NeckWeights) -> FeatureMatrix:
    _check_pyramid(pyr, cfg)
    th, tw = pyr.grid(cfg.target_stride)
    parts = [resize_to(pyr.level(i), th, tw) for i in cfg.collecting_set]
    mixed = conv2d_block(concat_channels(parts), w.fuse)
    return to_vertices(mixed)


def _image_slices(x: FeatureMatrix, pooling: str) -> list:
    if pooling == "cross_batch" or x.grid_meta is None:
        return [slice(0, x.vertices)]
    h, wd, b = x.grid_meta
    per = h * wd
    return [slice(i * per, (i + 1) * per) for i in range(b)]


def neck_hypergraphs(x_mixed: FeatureMatrix, cfg: NeckConfig) -> list:
    """The epsilon-ball hypergraphs the high-order stage would build, one per pooled vertex set."""
    return [
        build_epsilon_ball_hypergraph(x_mixed.data[s], cfg.epsilon)
        for s in _image_slices(x_mixed, cfg.pooling)
    ]


def hypergraph_compute(x_mixed: FeatureMatrix, cfg: NeckConfig, w: NeckWeights) -> FeatureMatrix:
    if x_mixed.channels != cfg.hyper_channels:
        raise ShapeError(f"expected {cfg.hyper_channels} channels, got {x_mixed.channels}")
    if cfg.mode == "none":
        return x_mixed
    out = np.empty_like(x_mixed.data)
    for s in _image_slices(x_mixed, cfg.pooling):
        rows = x_mixed.data[s]
        if cfg.mode == "high_order":
            g = build_epsilon_ball_hypergraph(rows, cfg.epsilon)
            out[s] = hyperconv(rows, g, w.theta).data
        else:
            out[s] = graphconv_low_order(rows, cfg.epsilon, w.theta).data
    return FeatureMatrix(out, x_mixed.grid_meta)


def semantic_scatter(x_hyper: FeatureMatrix, pyr: FeaturePyramid, cfg: NeckConfig, w: NeckWeights) -> tuple:
    if x_hyper.grid_meta is None:
        raise ShapeError("x_hyper carries no grid_meta")
    grid = from_vertices(x_hyper)
    out = []
    for level, conv in zip(OUTPUT_LEVELS, w.scatter):
        b = pyr.level(level)
        resized = resize_to(grid, b.height, b.width)
        out.append(conv2d_block(concat_channels([resized, b]), conv))
    return tuple(out)


def bottom_up(s3: TensorMap, s4: TensorMap, s5: TensorMap, w: NeckWeights) -> NeckOutputs:
    for small, big in ((s3, s4), (s4, s5)):
        if (small.height, small.width) != (2 * big.height, 2 * big.width) or small.batch != big.batch:
            raise ShapeError(f"bottom-up inputs must halve spatially: {small.shape} -> {big.shape}")
    n3 = s3
    n4 = conv2d_block(concat_channels([conv2d_block(n3, w.down[0]), s4]), w.merge[0])
    n5 = conv2d_block(concat_channels([conv2d_block(n4, w.down[1]), s5]), w.merge[1])
    return NeckOutputs(n3, n4, n5)


def run_neck(pyr: FeaturePyramid, cfg: NeckConfig, w: NeckWeights,
             x_hyper: Optional[FeatureMatrix] = None) -> NeckTrace:
    """Full neck with intermediates. Passing ``x_hyper`` skips the collect and compute stages."""
    x_mixed = semantic_collect(pyr, cfg, w) if x_hyper is None else x_hyper
    if x_hyper is None:
        x_hyper = hypergraph_compute(x_mixed, cfg, w)
    scattered = semantic_scatter(x_hyper, pyr, cfg, w)
    return NeckTrace(x_mixed, x_hyper, scattered, bottom_up(*scattered, w))


def hyperc2net(pyr: FeaturePyramid, cfg: NeckConfig, w: NeckWeights) -> NeckOutputs:
    return run_neck(pyr, cfg, w).outputs
