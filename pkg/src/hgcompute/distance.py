"""Pairwise squared Euclidean distances between feature rows.

Two compiled kernels share one contract: a straightforward all-pairs
double loop, and a cache-blocked version that walks square tiles of the
upper triangle and mirrors them. Both accumulate each entry in float64
over channels in index order, so they agree to rounding and the blocked
result is exactly symmetric with an exact-zero diagonal.
"""
import numba
import numpy as np

DEFAULT_TILE = 64


@numba.njit
def _naive_kernel(x, out):
    n, c = x.shape
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(c):
                d = np.float64(x[i, k]) - np.float64(x[j, k])
                s += d * d
            out[i, j] = s


@numba.njit
def _blocked_kernel(x, out, tile):
    n, c = x.shape
    for i0 in range(0, n, tile):
        i1 = min(i0 + tile, n)
        for j0 in range(i0, n, tile):
            j1 = min(j0 + tile, n)
            for i in range(i0, i1):
                jstart = j0 if j0 > i else i + 1
                for j in range(jstart, j1):
                    s = 0.0
                    for k in range(c):
                        d = np.float64(x[i, k]) - np.float64(x[j, k])
                        s += d * d
                    out[i, j] = s
                    out[j, i] = s
    for i in range(n):
        out[i, i] = 0.0


def _rows(x) -> np.ndarray:
    data = getattr(x, "data", x)
    data = np.ascontiguousarray(data)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"expected a non-empty V x C matrix, got shape {data.shape}")
    if data.dtype not in (np.float32, np.float64):
        data = data.astype(np.float64)
    return data


def pairwise_sq_distances_naive(x) -> np.ndarray:
    rows = _rows(x)
    out = np.empty((rows.shape[0], rows.shape[0]), dtype=np.float64)
    _naive_kernel(rows, out)
    return out


def pairwise_sq_distances(x, tile: int = DEFAULT_TILE) -> np.ndarray:
    """V x V matrix of squared L2 distances between the rows of ``x``.

    ``x`` may be a FeatureMatrix or a plain 2-D array.
    """
    if tile < 1:
        raise ValueError("tile must be positive")
    rows = _rows(x)
    out = np.empty((rows.shape[0], rows.shape[0]), dtype=np.float64)
    _blocked_kernel(rows, out, tile)
    return out
