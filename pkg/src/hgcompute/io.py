"""File formats: HYT1 tensors, weight directories, hypergraph text, PGM/PPM, key=value configs."""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .hypergraph import Hypergraph
from .tensor import TensorMap

MAGIC = b"HYT1"
_HEADER = struct.Struct("<4sBBH")
DTYPE_F32 = 0
MANIFEST = "manifest.json"


class FormatError(ValueError):
    """Malformed or unsupported file content."""


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim > 255:
        raise FormatError("rank too large")
    dims = [int(d) for d in arr.shape]
    header = _HEADER.pack(MAGIC, DTYPE_F32, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}I", *dims)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated HYT1 header")
    magic, dtype, rank, reserved = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if reserved:
        raise FormatError("reserved header bytes must be zero")
    off = _HEADER.size
    if len(buf) < off + 4 * rank:
        raise FormatError("truncated HYT1 dimensions")
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != 4 * count:
        raise FormatError(f"payload holds {len(buf) - off} bytes, expected {4 * count}")
    return np.frombuffer(buf, dtype="<f4", offset=off).astype(np.float32).reshape(dims)


def save_tensor(path, arr) -> None:
    Path(path).write_bytes(encode_tensor(getattr(arr, "data", arr)))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def save_weights(directory, tensors: Mapping[str, np.ndarray]) -> None:
    """Write each named tensor as ``<name>.hyt`` plus a JSON name -> file manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name in sorted(tensors):
        fname = f"{name}.hyt"
        save_tensor(directory / fname, tensors[name])
        manifest[name] = fname
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_weights(directory) -> dict:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    return {name: load_tensor(directory / fname) for name, fname in manifest.items()}


def format_hypergraph(g: Hypergraph) -> str:
    lines = [f"{g.vertex_count} {g.edge_count}"]
    lines += [" ".join(str(int(v)) for v in e) for e in g.hyperedges]
    return "\n".join(lines) + "\n"


def parse_hypergraph(text: str) -> Hypergraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty hypergraph file")
    try:
        n, m = (int(t) for t in lines[0].split())
        edges = tuple(np.array([int(t) for t in ln.split()], dtype=np.int64) for ln in lines[1:])
    except ValueError as exc:
        raise FormatError(f"bad hypergraph text: {exc}") from exc
    if len(edges) != m:
        raise FormatError(f"header declares {m} hyperedges, found {len(edges)}")
    return Hypergraph(n, edges)


def _read_header_tokens(buf: bytes, count: int):
    """Return the first ``count`` whitespace tokens (skipping # comments) and the payload offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def load_pgm_ppm(path) -> TensorMap:
    """Binary P5/P6 image -> 1 x 3 x H x W map scaled to [0, 1]; gray is replicated."""
    buf = Path(path).read_bytes()
    try:
        tokens, off = _read_header_tokens(buf, 4)
        magic = tokens[0].decode("ascii")
        width, height, maxval = (int(t) for t in tokens[1:])
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed PNM header: {exc}") from exc
    if magic not in ("P5", "P6"):
        raise FormatError(f"unsupported PNM type {magic!r}")
    if not 0 < maxval < 256:
        raise FormatError(f"unsupported maxval {maxval}; only 8-bit images are read")
    if width < 1 or height < 1:
        raise FormatError("image dimensions must be positive")
    planes = 1 if magic == "P5" else 3
    size = width * height * planes
    if len(buf) - off < size:
        raise FormatError("truncated raster")
    raster = np.frombuffer(buf, dtype=np.uint8, count=size, offset=off)
    img = raster.reshape(height, width, planes).transpose(2, 0, 1).astype(np.float32) / np.float32(maxval)
    if planes == 1:
        img = np.repeat(img, 3, axis=0)
    return TensorMap(img[None])


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    _, h, w = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.transpose(1, 2, 0).tobytes())


def heatmap_pixels(x: TensorMap) -> np.ndarray:
    """Channel mean, min-max scaled to 0..255; a constant map gives all zeros."""
    if x.batch != 1:
        raise ValueError("heatmaps are drawn for a single image")
    mean = x.data[0].astype(np.float64).mean(axis=0)
    lo, hi = mean.min(), mean.max()
    if hi <= lo:
        return np.zeros(mean.shape, dtype=np.uint8)
    return np.rint((mean - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def export_heatmap(x: TensorMap, path) -> None:
    write_pgm(path, heatmap_pixels(x))


def parse_key_values(text: str) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_key_values(path) -> dict:
    return parse_key_values(Path(path).read_text())
