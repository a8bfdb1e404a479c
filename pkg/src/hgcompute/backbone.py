"""Five-stage backbone built from mixed-aggregation (MANet) blocks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import LEVEL_STRIDES, BackboneConfig
from .tensor import (
    ConvBlockParams,
    ShapeError,
    TensorMap,
    concat_channels,
    conv2d_block,
    dsconv_block,
    split_channels,
)


@dataclass(frozen=True, eq=False)
class ConvNeck:
    """Two k x k convolutions, c -> c; the block adds the residual."""

    first: ConvBlockParams
    second: ConvBlockParams


@dataclass(frozen=True, eq=False)
class ManetParams:
    conv1: ConvBlockParams  # in -> 2c, 1x1
    conv2: ConvBlockParams  # 2c -> c, 1x1
    conv3: ConvBlockParams  # 2c -> c, 1x1
    ds_depthwise: ConvBlockParams  # c -> c, k x k, groups c
    ds_pointwise: ConvBlockParams  # c -> c, 1x1
    necks: tuple  # n ConvNeck units
    conv_o: ConvBlockParams  # (4 + n) c -> 2c, 1x1

    @property
    def c(self) -> int:
        return self.conv2.out_channels

    @property
    def n(self) -> int:
        return len(self.necks)

    @property
    def k(self) -> int:
        return self.ds_depthwise.kernel

    @classmethod
    def init(cls, rng: np.random.Generator, in_channels: int, out_channels: int, n: int, k: int) -> "ManetParams":
        if out_channels % 2:
            raise ShapeError("MANet output width must be even")
        c = out_channels // 2
        init = ConvBlockParams.init
        return cls(
            conv1=init(rng, in_channels, 2 * c, 1),
            conv2=init(rng, 2 * c, c, 1),
            conv3=init(rng, 2 * c, c, 1),
            ds_depthwise=init(rng, c, c, k, groups=c),
            ds_pointwise=init(rng, c, c, 1),
            necks=tuple(ConvNeck(init(rng, c, c, k), init(rng, c, c, k)) for _ in range(n)),
            conv_o=init(rng, (4 + n) * c, 2 * c, 1),
        )


def manet_branches(x: TensorMap, p: ManetParams) -> list:
    """The 4 + n branch outputs X1 .. X_{4+n}, each with c channels."""
    if x.channels != p.conv1.in_channels:
        raise ShapeError(f"MANet expects {p.conv1.in_channels} channels, got {x.channels}")
    mid = conv2d_block(x, p.conv1)
    x1 = conv2d_block(mid, p.conv2)
    x2 = dsconv_block(conv2d_block(mid, p.conv3), p.ds_depthwise, p.ds_pointwise)
    x3, x4 = split_channels(mid, [p.c, p.c])
    branches = [x1, x2, x3, x4]
    prev = x4
    for unit in p.necks:
        y = conv2d_block(conv2d_block(prev, unit.first), unit.second)
        prev = TensorMap(y.data + prev.data)
        branches.append(prev)
    return branches


def manet_block(x: TensorMap, p: ManetParams) -> TensorMap:
    return conv2d_block(concat_channels(manet_branches(x, p)), p.conv_o)


@dataclass(frozen=True, eq=False)
class BackboneStage:
    down: ConvBlockParams  # 3x3 stride-2
    manet: Optional[ManetParams]


@dataclass(frozen=True, eq=False)
class BackboneWeights:
    stages: tuple


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    levels: tuple  # B1..B5

    def __post_init__(self):
        if len(self.levels) != 5:
            raise ShapeError(f"pyramid needs 5 levels, got {len(self.levels)}")
        for i in range(1, 5):
            a, b = self.levels[i - 1], self.levels[i]
            if a.batch != b.batch or (a.height, a.width) != (2 * b.height, 2 * b.width):
                raise ShapeError(f"B{i + 1} must halve B{i}: {a.shape} -> {b.shape}")

    def level(self, i: int) -> TensorMap:
        """1-based access: level(1) is B1."""
        return self.levels[i - 1]

    @property
    def batch(self) -> int:
        return self.levels[0].batch

    def grid(self, stride: int) -> tuple:
        b1 = self.levels[0]
        scale = stride // LEVEL_STRIDES[0]
        if b1.height % scale or b1.width % scale:
            raise ShapeError(f"stride {stride} grid is not reachable from B1 {b1.height}x{b1.width}")
        return b1.height // scale, b1.width // scale


def init_backbone_weights(cfg: BackboneConfig, seed: int, in_channels: int = 3) -> BackboneWeights:
    rng = np.random.default_rng(seed)
    stages = []
    prev = in_channels
    for i, width in enumerate(cfg.widths):
        down = ConvBlockParams.init(rng, prev, width, 3, stride=2)
        manet = None
        if i > 0:
            manet = ManetParams.init(rng, width, width, cfg.depths[i - 1], cfg.kernels[i - 1])
        stages.append(BackboneStage(down, manet))
        prev = width
    return BackboneWeights(tuple(stages))


def backbone_forward(image: TensorMap, cfg: BackboneConfig, weights: BackboneWeights) -> FeaturePyramid:
    if image.height % 32 or image.width % 32:
        raise ShapeError(f"input size {image.height}x{image.width} is not divisible by 32")
    if image.channels != weights.stages[0].down.in_channels:
        raise ShapeError(f"expected {weights.stages[0].down.in_channels} input channels, got {image.channels}")
    levels = []
    x = image
    for stage in weights.stages:
        x = conv2d_block(x, stage.down)
        if stage.manet is not None:
            x = manet_block(x, stage.manet)
        levels.append(x)
    return FeaturePyramid(tuple(levels))
