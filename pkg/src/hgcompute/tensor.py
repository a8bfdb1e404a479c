"""Dense feature-map containers and the spatial kernels built on them.

Layout is row-major (batch, channel, row, column). Forward paths run in
float32; float64 inputs are carried through unchanged so gradient checks
can use them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ACTIVATIONS = ("silu", "none")


class ShapeError(ValueError):
    """Raised when tensor shapes or channel counts do not line up."""


def _as_float(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float32)
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class TensorMap:
    data: np.ndarray

    def __post_init__(self):
        data = _as_float(self.data)
        if data.ndim != 4:
            raise ShapeError(f"TensorMap needs 4 axes, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, TensorMap):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class FeatureMatrix:
    """V x C vertex features; ``grid_meta`` is (height, width, batch) of the source map."""

    data: np.ndarray
    grid_meta: Optional[tuple] = None

    def __post_init__(self):
        data = _as_float(self.data)
        if data.ndim != 2:
            raise ShapeError(f"FeatureMatrix needs 2 axes, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        if self.grid_meta is not None:
            h, w, b = (int(v) for v in self.grid_meta)
            if b * h * w != data.shape[0]:
                raise ShapeError(
                    f"grid_meta {(h, w, b)} implies {b * h * w} vertices, got {data.shape[0]}"
                )
            object.__setattr__(self, "grid_meta", (h, w, b))

    @property
    def vertices(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.grid_meta == other.grid_meta
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ConvBlockParams:
    """Convolution + bias + activation with batch norm folded into weight/bias."""

    weight: np.ndarray  # (out, in // groups, k, k)
    bias: np.ndarray  # (out,)
    stride: int = 1
    groups: int = 1
    activation: str = "silu"
    in_channels: int = field(init=False)

    def __post_init__(self):
        w = _as_float(self.weight)
        b = _as_float(self.bias)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"weight must be (out, in/groups, k, k), got {w.shape}")
        if w.shape[2] % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {w.shape[2]}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
        if self.groups < 1 or w.shape[0] % self.groups:
            raise ShapeError(f"groups={self.groups} does not divide out_channels={w.shape[0]}")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "in_channels", w.shape[1] * self.groups)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @classmethod
    def init(cls, rng: np.random.Generator, in_channels: int, out_channels: int, kernel: int = 1,
             stride: int = 1, groups: int = 1, activation: str = "silu") -> "ConvBlockParams":
        """Variance-preserving uniform init: weights in +-sqrt(3 / fan_in), bias in +-1/sqrt(fan_in)."""
        if in_channels % groups:
            raise ShapeError(f"groups={groups} does not divide in_channels={in_channels}")
        fan_in = (in_channels // groups) * kernel * kernel
        bound = np.sqrt(3.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(out_channels, in_channels // groups, kernel, kernel))
        b = rng.uniform(-1.0, 1.0, size=out_channels) / np.sqrt(fan_in)
        return cls(w.astype(np.float32), b.astype(np.float32), stride, groups, activation)


def silu(x: np.ndarray) -> np.ndarray:
    # x * sigmoid(x), written to avoid overflow in exp for large |x|
    return x * (0.5 * (1.0 + np.tanh(0.5 * x)))


def _patches(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(C, H, W) -> (C, k, k, Ho, Wo) view over the same-padded input."""
    pad = (k - 1) // 2
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, Ho, Wo, k, k)
    return win.transpose(0, 3, 4, 1, 2)


def conv2d_block(x: TensorMap, p: ConvBlockParams) -> TensorMap:
    if x.channels != p.in_channels:
        raise ShapeError(f"input has {x.channels} channels, conv expects {p.in_channels}")
    k, g = p.kernel, p.groups
    cin_g = p.in_channels // g
    cout_g = p.out_channels // g
    dtype = np.result_type(x.data.dtype, p.weight.dtype)
    w = p.weight.astype(dtype, copy=False).reshape(g, cout_g, cin_g * k * k)
    outs = []
    # one image at a time so results never depend on batch composition
    for img in x.data:
        cols = _patches(img.astype(dtype, copy=False), k, p.stride)
        ho, wo = cols.shape[-2:]
        cols = cols.reshape(g, cin_g * k * k, ho * wo)
        y = np.matmul(w, cols).reshape(p.out_channels, ho, wo)
        outs.append(y)
    y = np.stack(outs) + p.bias.astype(dtype, copy=False)[None, :, None, None]
    if p.activation == "silu":
        y = silu(y)
    return TensorMap(y.astype(dtype, copy=False))


def dsconv_block(x: TensorMap, depthwise: ConvBlockParams, pointwise: ConvBlockParams) -> TensorMap:
    """Depthwise k x k convolution followed by a 1 x 1 pointwise convolution."""
    if depthwise.groups != depthwise.in_channels or depthwise.out_channels != depthwise.in_channels:
        raise ShapeError("depthwise stage must have groups == in_channels == out_channels")
    if pointwise.kernel != 1:
        raise ShapeError("pointwise stage must use a 1x1 kernel")
    return conv2d_block(conv2d_block(x, depthwise), pointwise)


def resample(x: TensorMap, target_h: int, target_w: int, mode: str) -> TensorMap:
    h, w = x.height, x.width
    if mode == "nearest_up":
        if target_h % h or target_w % w:
            raise ShapeError(f"cannot nearest-upsample {h}x{w} to {target_h}x{target_w}")
        fh, fw = target_h // h, target_w // w
        return TensorMap(np.repeat(np.repeat(x.data, fh, axis=2), fw, axis=3))
    if mode == "avg_down":
        if h % target_h or w % target_w:
            raise ShapeError(f"cannot average-pool {h}x{w} to {target_h}x{target_w}")
        fh, fw = h // target_h, w // target_w
        b, c = x.batch, x.channels
        blocks = x.data.reshape(b, c, target_h, fh, target_w, fw)
        # float64 sums keep the down(up(x)) round trip exact for float32 maps
        return TensorMap(blocks.mean(axis=(3, 5), dtype=np.float64).astype(x.data.dtype))
    raise ValueError(f"unknown resample mode {mode!r}")


def resize_to(x: TensorMap, target_h: int, target_w: int) -> TensorMap:
    """Average-pool when shrinking, nearest-repeat when growing, no-op otherwise."""
    if (x.height, x.width) == (target_h, target_w):
        return x
    if x.height >= target_h and x.width >= target_w:
        return resample(x, target_h, target_w, "avg_down")
    if x.height <= target_h and x.width <= target_w:
        return resample(x, target_h, target_w, "nearest_up")
    raise ShapeError(f"mixed up/down resize {x.height}x{x.width} -> {target_h}x{target_w}")


def concat_channels(xs: Sequence[TensorMap]) -> TensorMap:
    if not xs:
        raise ShapeError("nothing to concatenate")
    ref = xs[0]
    for t in xs[1:]:
        if (t.batch, t.height, t.width) != (ref.batch, ref.height, ref.width):
            raise ShapeError(
                f"spatial mismatch: {(t.batch, t.height, t.width)} vs {(ref.batch, ref.height, ref.width)}"
            )
    if len(xs) == 1:
        return ref
    dtype = np.result_type(*[t.data.dtype for t in xs])
    return TensorMap(np.concatenate([t.data.astype(dtype, copy=False) for t in xs], axis=1))


def split_channels(x: TensorMap, sizes: Sequence[int]) -> list:
    if sum(sizes) != x.channels or any(s < 1 for s in sizes):
        raise ShapeError(f"split sizes {list(sizes)} do not partition {x.channels} channels")
    bounds = np.cumsum([0, *sizes])
    return [TensorMap(x.data[:, a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def to_vertices(x: TensorMap) -> FeatureMatrix:
    """Flatten to one row per pixel, rows ordered (batch, row, column)."""
    b, c, h, w = x.shape
    rows = x.data.transpose(0, 2, 3, 1).reshape(b * h * w, c)
    return FeatureMatrix(rows, grid_meta=(h, w, b))


def from_vertices(m: FeatureMatrix) -> TensorMap:
    if m.grid_meta is None:
        raise ShapeError("feature matrix carries no grid_meta; cannot restore a map")
    h, w, b = m.grid_meta
    return TensorMap(m.data.reshape(b, h, w, m.channels).transpose(0, 3, 1, 2))
