"""Epsilon-ball hypergraphs over feature points and residual hypergraph convolution.

The convolution is ``X + Dv^-1 H De^-1 H^T X Theta``: every hyperedge takes
the mean of its members' transformed features, then every vertex adds the
mean of the hyperedges it belongs to. ``hyperconv`` evaluates this through
membership lists; ``hyperconv_oracle`` is a deliberately literal loop
version used only to check it.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

from .distance import pairwise_sq_distances
from .tensor import FeatureMatrix, ShapeError


@dataclass(frozen=True, eq=False)
class Hypergraph:
    vertex_count: int
    hyperedges: tuple

    def __post_init__(self):
        n = int(self.vertex_count)
        if n < 1:
            raise ValueError("hypergraph needs at least one vertex")
        edges = []
        covered = np.zeros(n, dtype=bool)
        for i, e in enumerate(self.hyperedges):
            e = np.asarray(e, dtype=np.int64)
            if e.ndim != 1 or e.size == 0:
                raise ValueError(f"hyperedge {i} is empty")
            if e[0] < 0 or e[-1] >= n or np.any(np.diff(e) <= 0):
                raise ValueError(f"hyperedge {i} must hold distinct ascending indices in [0, {n})")
            covered[e] = True
            edges.append(e)
        if not covered.all():
            raise ValueError(f"vertex {int(np.argmin(covered))} belongs to no hyperedge")
        object.__setattr__(self, "vertex_count", n)
        object.__setattr__(self, "hyperedges", tuple(edges))

    @property
    def edge_count(self) -> int:
        return len(self.hyperedges)

    @cached_property
    def _edge_csr(self):
        sizes = np.array([e.size for e in self.hyperedges], dtype=np.int64)
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        members = np.concatenate(self.hyperedges)
        return members, ptr

    @cached_property
    def _vertex_csr(self):
        members, ptr = self._edge_csr
        edge_ids = np.repeat(np.arange(self.edge_count, dtype=np.int64), np.diff(ptr))
        order = np.argsort(members, kind="stable")
        counts = np.bincount(members, minlength=self.vertex_count)
        vptr = np.concatenate([[0], np.cumsum(counts)])
        return edge_ids[order], vptr

    def incidence(self) -> np.ndarray:
        """Dense N x M 0/1 incidence matrix; meant for small test instances."""
        h = np.zeros((self.vertex_count, self.edge_count), dtype=np.float64)
        for j, e in enumerate(self.hyperedges):
            h[e, j] = 1.0
        return h

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (
            self.vertex_count == other.vertex_count
            and self.edge_count == other.edge_count
            and all(np.array_equal(a, b) for a, b in zip(self.hyperedges, other.hyperedges))
        )

    __hash__ = None


class DegreePair(NamedTuple):
    vertex_degrees: np.ndarray
    hyperedge_degrees: np.ndarray


@dataclass(frozen=True)
class EpsilonBallParams:
    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps < 0:
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)


def _feature_rows(x) -> np.ndarray:
    return x.data if isinstance(x, FeatureMatrix) else np.asarray(x)


def _epsilon(p) -> float:
    return p.epsilon if isinstance(p, EpsilonBallParams) else EpsilonBallParams(p).epsilon


def ball_neighbors(x, epsilon) -> list:
    """For each vertex v, the ascending indices u with ||x_u - x_v|| < epsilon, plus v itself."""
    rows = _feature_rows(x)
    if not np.all(np.isfinite(rows)):
        raise ValueError("features contain non-finite values")
    eps = _epsilon(epsilon)
    inside = np.sqrt(pairwise_sq_distances(rows)) < eps
    np.fill_diagonal(inside, True)
    return [np.flatnonzero(row) for row in inside]


def build_epsilon_ball_hypergraph(x, p) -> Hypergraph:
    """One hyperedge per vertex: the open epsilon-ball around it (center always kept)."""
    balls = ball_neighbors(x, p)
    return Hypergraph(len(balls), tuple(balls))


def degrees(g: Hypergraph) -> DegreePair:
    members, ptr = g._edge_csr
    return DegreePair(
        np.bincount(members, minlength=g.vertex_count).astype(np.int64),
        np.diff(ptr).astype(np.int64),
    )


@numba.njit
def _segment_mean(values, index, ptr):
    out = np.zeros((ptr.size - 1, values.shape[1]), dtype=np.float64)
    for s in range(ptr.size - 1):
        a, b = ptr[s], ptr[s + 1]
        for p in range(a, b):
            row = values[index[p]]
            for c in range(values.shape[1]):
                out[s, c] += row[c]
        inv = 1.0 / (b - a)
        for c in range(values.shape[1]):
            out[s, c] *= inv
    return out


@numba.njit
def _weighted_gather(values, index, weight, ptr):
    out = np.zeros((ptr.size - 1, values.shape[1]), dtype=np.float64)
    for s in range(ptr.size - 1):
        for p in range(ptr[s], ptr[s + 1]):
            row = values[index[p]]
            w = weight[p]
            for c in range(values.shape[1]):
                out[s, c] += w * row[c]
    return out


def propagate(g: Hypergraph, y) -> np.ndarray:
    """``Dv^-1 H De^-1 H^T y`` in float64, without forming H."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape[0] != g.vertex_count:
        raise ShapeError(f"{y.shape[0]} feature rows for {g.vertex_count} vertices")
    members, ptr = g._edge_csr
    edge_means = _segment_mean(y, members, ptr)
    edge_ids, vptr = g._vertex_csr
    return _segment_mean(edge_means, edge_ids, vptr)


def _check_theta(x: np.ndarray, g: Hypergraph, theta: np.ndarray, square: bool = True):
    if theta.ndim != 2 or theta.shape[0] != x.shape[1]:
        raise ShapeError(f"theta shape {theta.shape} does not match {x.shape[1]} channels")
    if square and theta.shape[1] != theta.shape[0]:
        raise ShapeError("the residual path needs a square theta")
    if x.shape[0] != g.vertex_count:
        raise ShapeError(f"{x.shape[0]} feature rows for {g.vertex_count} vertices")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta has non-finite entries")


def _wrap(out: np.ndarray, like) -> FeatureMatrix:
    rows = _feature_rows(like)
    return FeatureMatrix(out.astype(rows.dtype), getattr(like, "grid_meta", None))


def hyperconv(x, g: Hypergraph, theta) -> FeatureMatrix:
    """Residual hypergraph convolution. Accumulates in float64, returns the input dtype."""
    rows = _feature_rows(x)
    theta = np.asarray(theta)
    _check_theta(rows, g, theta)
    x64 = rows.astype(np.float64)
    out = x64 + propagate(g, x64 @ theta.astype(np.float64))
    return _wrap(out, x)


def hyperconv_oracle(x, g: Hypergraph, theta) -> FeatureMatrix:
    """Literal two-stage vertex -> hyperedge -> vertex loops in float64."""
    rows = _feature_rows(x)
    theta = np.asarray(theta)
    _check_theta(rows, g, theta)
    xs = rows.astype(np.float64)
    th = theta.astype(np.float64)
    edge_feats = []
    for e in g.hyperedges:
        acc = np.zeros(th.shape[1])
        for v in e:
            acc = acc + xs[v] @ th
        edge_feats.append(acc / len(e))
    edge_sets = [set(e.tolist()) for e in g.hyperedges]
    out = np.empty((g.vertex_count, th.shape[1]))
    for v in range(g.vertex_count):
        incident = [j for j, e in enumerate(edge_sets) if v in e]
        acc = np.zeros(th.shape[1])
        for j in incident:
            acc = acc + edge_feats[j]
        out[v] = xs[v] + acc / len(incident)
    return FeatureMatrix(out, getattr(x, "grid_meta", None))


def hyperconv_grad_theta(x, g: Hypergraph, upstream) -> np.ndarray:
    """Gradient of ``sum(upstream * hyperconv(x, g, theta))`` with respect to theta."""
    rows = _feature_rows(x)
    up = _feature_rows(upstream)
    if up.shape != rows.shape:
        raise ShapeError(f"upstream shape {up.shape} does not match output shape {rows.shape}")
    px = propagate(g, rows)
    return px.T @ up.astype(np.float64)


def propagation_matrix(g: Hypergraph, degree_pair: Optional[DegreePair] = None) -> np.ndarray:
    """Dense ``Dv^-1 H De^-1 H^T``. ``degree_pair`` overrides the computed degrees."""
    dv, de = degree_pair if degree_pair is not None else degrees(g)
    h = g.incidence()
    return (h / dv[:, None]) @ (h / de[None, :]).T


def graph_propagate(x, p, y=None) -> np.ndarray:
    """``D^-1/2 A D^-1/2 y`` on the epsilon-ball graph of ``x`` (``y`` defaults to ``x``), float64.

    A links u and v when their distance is below epsilon, which includes the
    self-loop whenever epsilon > 0. With epsilon = 0, A is the identity.
    """
    rows = _feature_rows(x)
    y = rows if y is None else np.asarray(y)
    neighbors = ball_neighbors(rows, p)
    sizes = np.array([nb.size for nb in neighbors], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(sizes)])
    members = np.concatenate(neighbors)
    deg = sizes.astype(np.float64)
    owner = np.repeat(np.arange(len(neighbors)), sizes)
    weight = 1.0 / np.sqrt(deg[owner] * deg[members])
    return _weighted_gather(np.ascontiguousarray(y, dtype=np.float64), members, weight, ptr)


def graphconv_low_order(x, p, theta) -> FeatureMatrix:
    """Graph counterpart of ``hyperconv``: ``X + D^-1/2 A D^-1/2 X Theta``."""
    rows = _feature_rows(x)
    theta = np.asarray(theta)
    if theta.ndim != 2 or theta.shape != (rows.shape[1], rows.shape[1]):
        raise ShapeError(f"theta shape {theta.shape} does not match {rows.shape[1]} channels")
    x64 = rows.astype(np.float64)
    out = x64 + graph_propagate(rows, p, x64 @ theta.astype(np.float64))
    return _wrap(out, x)


def normalized_adjacency(x, p) -> np.ndarray:
    """Dense ``D^-1/2 A D^-1/2`` on the epsilon-ball graph; test-scale only."""
    rows = _feature_rows(x)
    a = np.zeros((rows.shape[0], rows.shape[0]))
    for v, nb in enumerate(ball_neighbors(rows, p)):
        a[v, nb] = 1.0
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


def permute(g: Hypergraph, perm: Sequence[int]) -> Hypergraph:
    """Relabel vertex ``perm[i]`` as ``i`` and reorder hyperedges the same way."""
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    edges = tuple(np.sort(inv[g.hyperedges[j]]) for j in perm)
    return Hypergraph(g.vertex_count, edges)
