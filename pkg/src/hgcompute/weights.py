"""Flatten nested weight containers to named arrays and back."""
from __future__ import annotations

import dataclasses

import numpy as np

from .tensor import ConvBlockParams, ShapeError


def flatten(obj, prefix: str = "") -> dict:
    if isinstance(obj, ConvBlockParams):
        return {f"{prefix}.weight": obj.weight, f"{prefix}.bias": obj.bias}
    if isinstance(obj, np.ndarray):
        return {prefix: obj}
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            out.update(flatten(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name))
        return out
    if isinstance(obj, (tuple, list)):
        out = {}
        for i, item in enumerate(obj):
            out.update(flatten(item, f"{prefix}.{i}"))
        return out
    if obj is None:
        return {}
    raise TypeError(f"cannot flatten {type(obj).__name__} at {prefix!r}")


def _take(tensors: dict, name: str, like: np.ndarray) -> np.ndarray:
    if name not in tensors:
        raise KeyError(f"missing tensor {name!r}")
    arr = np.asarray(tensors[name], dtype=np.float32)
    if arr.shape != like.shape:
        raise ShapeError(f"{name}: stored shape {arr.shape}, expected {like.shape}")
    return arr


def restore(template, tensors: dict, prefix: str = ""):
    """Copy of ``template`` with every array replaced by ``tensors[name]``."""
    if isinstance(template, ConvBlockParams):
        return dataclasses.replace(
            template,
            weight=_take(tensors, f"{prefix}.weight", template.weight),
            bias=_take(tensors, f"{prefix}.bias", template.bias),
        )
    if isinstance(template, np.ndarray):
        return _take(tensors, prefix, template)
    if dataclasses.is_dataclass(template):
        changes = {
            f.name: restore(getattr(template, f.name), tensors, f"{prefix}.{f.name}" if prefix else f.name)
            for f in dataclasses.fields(template)
            if f.init
        }
        return dataclasses.replace(template, **changes)
    if isinstance(template, (tuple, list)):
        return type(template)(restore(item, tensors, f"{prefix}.{i}") for i, item in enumerate(template))
    if template is None:
        return None
    raise TypeError(f"cannot restore {type(template).__name__} at {prefix!r}")
