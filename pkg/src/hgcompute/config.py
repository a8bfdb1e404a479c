"""Scale presets and the configuration objects for the backbone and the neck."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

MODES = ("none", "low_order", "high_order")
POOLINGS = ("per_image", "cross_batch")
LEVEL_STRIDES = (2, 4, 8, 16, 32)


@dataclass(frozen=True)
class ScalePreset:
    widths: tuple  # B1..B5 channel widths
    hyper_channels: int
    epsilon: float
    depths: tuple  # MANet depth n for stages 2..5
    kernels: tuple  # MANet kernel k for stages 2..5


PRESETS = {
    "N": ScalePreset((16, 32, 64, 128, 256), 128, 6.0, (1, 2, 2, 1), (3, 5, 5, 3)),
    "S": ScalePreset((32, 64, 128, 256, 512), 256, 8.0, (1, 2, 2, 1), (3, 5, 5, 3)),
    "M": ScalePreset((48, 96, 192, 384, 576), 384, 10.0, (2, 4, 4, 2), (3, 5, 5, 3)),
    "L": ScalePreset((64, 128, 256, 512, 512), 512, 10.0, (3, 6, 6, 3), (3, 5, 5, 3)),
}


def preset(scale: str) -> ScalePreset:
    try:
        return PRESETS[scale.upper()]
    except KeyError:
        raise ValueError(f"unknown scale {scale!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class BackboneConfig:
    scale: str = "S"
    widths: tuple = field(default=None)
    depths: tuple = field(default=None)
    kernels: tuple = field(default=None)

    def __post_init__(self):
        p = preset(self.scale)
        object.__setattr__(self, "scale", self.scale.upper())
        for name in ("widths", "depths", "kernels"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, getattr(p, name))
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if len(self.widths) != 5 or len(self.depths) != 4 or len(self.kernels) != 4:
            raise ValueError("need 5 stage widths and 4 MANet depths/kernels")
        if any(k % 2 == 0 for k in self.kernels):
            raise ValueError(f"kernel sizes must be odd, got {self.kernels}")
        if any(w % 2 for w in self.widths[1:]):
            raise ValueError("MANet stage widths must be even (2c)")


@dataclass(frozen=True)
class NeckConfig:
    scale: str = "S"
    mode: str = "high_order"
    epsilon: float = None
    hyper_channels: int = None
    target_stride: int = 16
    collecting_set: tuple = (1, 2, 3, 4, 5)
    pooling: str = "per_image"
    widths: tuple = None

    def __post_init__(self):
        p = preset(self.scale)
        object.__setattr__(self, "scale", self.scale.upper())
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", p.epsilon)
        if self.hyper_channels is None:
            object.__setattr__(self, "hyper_channels", p.hyper_channels)
        if self.widths is None:
            object.__setattr__(self, "widths", p.widths)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "collecting_set", tuple(sorted(set(int(v) for v in self.collecting_set))))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if not self.collecting_set or not set(self.collecting_set) <= {1, 2, 3, 4, 5}:
            raise ValueError(f"collecting_set must be a non-empty subset of 1..5, got {self.collecting_set}")
        if self.hyper_channels < 1:
            raise ValueError("hyper_channels must be positive")
        if not self.epsilon >= 0 or self.epsilon == float("inf"):
            raise ValueError("epsilon must be finite and >= 0")
        if self.target_stride not in LEVEL_STRIDES:
            raise ValueError(f"target_stride must be one of {LEVEL_STRIDES}")

    @property
    def collected_width(self) -> int:
        return sum(self.widths[i - 1] for i in self.collecting_set)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "NeckConfig":
        """Build from string key=value pairs (scale, mode, epsilon, target_stride, collecting_set, pooling)."""
        known = {"scale", "mode", "epsilon", "target_stride", "collecting_set", "pooling", "hyper_channels"}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                continue
            raw = str(raw).strip()
            if key == "epsilon":
                kwargs[key] = float(raw)
            elif key in ("target_stride", "hyper_channels"):
                kwargs[key] = int(raw)
            elif key == "collecting_set":
                kwargs[key] = parse_levels(raw)
            else:
                kwargs[key] = raw
        return cls(**kwargs)

    def with_overrides(self, **kwargs) -> "NeckConfig":
        return replace(self, **kwargs)


def parse_levels(text: str) -> tuple:
    """'B1,B3,B5' or '1,3,5' -> (1, 3, 5)."""
    levels = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        levels.append(int(tok[1:] if tok[:1] in "Bb" else tok))
    return tuple(levels)
