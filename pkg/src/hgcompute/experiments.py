"""Synthetic experiments: clustered point sets, the propagation ablation,
gradient-descent fitting of theta, and kernel timing."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distance import pairwise_sq_distances, pairwise_sq_distances_naive
from .hypergraph import (
    build_epsilon_ball_hypergraph,
    graph_propagate,
    hyperconv,
    hyperconv_grad_theta,
    propagate,
)


class FitDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ClusterSpec:
    k_clusters: int = 4
    points_per_cluster: int = 32
    dim: int = 8
    center_separation: float = 20.0
    intra_spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_clusters < 1 or self.points_per_cluster < 1 or self.dim < 1:
            raise ValueError("cluster counts and dimension must be positive")
        if self.k_clusters > self.dim:
            raise ValueError("k_clusters must not exceed dim (centers sit on coordinate axes)")
        if self.intra_spread < 0 or not self.center_separation > 2 * self.intra_spread:
            raise ValueError("need center_separation > 2 * intra_spread >= 0")


def make_clusters(spec: ClusterSpec):
    """Gaussian blobs (per-coordinate std ``intra_spread``) around centers that are
    pairwise exactly ``center_separation`` apart. Returns (points, labels)."""
    rng = np.random.default_rng(spec.seed)
    centers = np.zeros((spec.k_clusters, spec.dim))
    centers[np.arange(spec.k_clusters), np.arange(spec.k_clusters)] = spec.center_separation / np.sqrt(2.0)
    labels = np.repeat(np.arange(spec.k_clusters), spec.points_per_cluster)
    noise = rng.normal(0.0, spec.intra_spread, size=(labels.size, spec.dim))
    return centers[labels] + noise, labels


def within_cluster_variance(y: np.ndarray, labels: np.ndarray) -> float:
    """Mean squared distance of each row to its own cluster mean."""
    total = 0.0
    for k in np.unique(labels):
        rows = y[labels == k]
        total += float(((rows - rows.mean(axis=0)) ** 2).sum())
    return total / y.shape[0]


def propagation_output(x: np.ndarray, mode: str, epsilon: float) -> np.ndarray:
    """The message-passing term of each mode with theta = identity."""
    if mode == "none":
        return x
    if mode == "high_order":
        return propagate(build_epsilon_ball_hypergraph(x, epsilon), x)
    if mode == "low_order":
        return graph_propagate(x, epsilon)
    raise ValueError(f"unknown mode {mode!r}")


def ablate(spec: ClusterSpec, epsilon: float) -> list:
    """Rows of (mode, epsilon, within-cluster variance, ratio to mode none)."""
    x, labels = make_clusters(spec)
    base = within_cluster_variance(x, labels)
    if base == 0:
        raise ValueError("degenerate spec: clusters have zero spread")
    rows = []
    for mode in ("none", "low_order", "high_order"):
        var = within_cluster_variance(propagation_output(x, mode, epsilon), labels)
        rows.append({"mode": mode, "epsilon": epsilon, "within_cluster_variance": var,
                     "variance_ratio": var / base})
    return rows


def cluster_targets(spec: ClusterSpec) -> np.ndarray:
    """One random target row per cluster with norm on the order of the centers'."""
    rng = np.random.default_rng(spec.seed + 1)
    scale = spec.center_separation / np.sqrt(2.0 * spec.dim)
    return rng.normal(0.0, scale, size=(spec.k_clusters, spec.dim))


def fit_theta(x: np.ndarray, targets: np.ndarray, epsilon: float, step: float, steps: int,
              theta0=None) -> tuple:
    """Plain gradient descent on theta for mean((hyperconv(x) - targets)**2).

    Returns (theta, losses) with ``losses[t]`` evaluated before update t
    and the last entry after the final update.
    """
    g = build_epsilon_ball_hypergraph(x, epsilon)
    theta = np.zeros((x.shape[1], x.shape[1])) if theta0 is None else np.array(theta0, dtype=np.float64)
    scale = 2.0 / targets.size
    losses = []
    for _ in range(steps + 1):
        gap = hyperconv(x, g, theta).data - targets
        loss = float(np.mean(gap ** 2))
        if not np.isfinite(loss) or (losses and loss > 1e3 * losses[0]):
            raise FitDiverged(f"loss became {loss} after {len(losses)} steps")
        losses.append(loss)
        if len(losses) > steps:
            break
        theta = theta - step * hyperconv_grad_theta(x, g, scale * gap)
    return theta, losses


def fit_theta_demo(spec: ClusterSpec, epsilon: float = 6.0, step: float = 1e-3, steps: int = 200) -> list:
    x, labels = make_clusters(spec)
    targets = cluster_targets(spec)[labels]
    _, losses = fit_theta(x, targets, epsilon, step, steps)
    return losses


def _time_ns(fn, repetitions: int) -> float:
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return float(np.median(times))


def bench(vertex_counts: Sequence[int], channels: int, repetitions: int = 1, seed: int = 0,
          epsilon: float = 8.0) -> list:
    """Median wall time per call of each kernel, in nanoseconds."""
    rng = np.random.default_rng(seed)
    warm = rng.standard_normal((4, 2)).astype(np.float32)
    pairwise_sq_distances(warm), pairwise_sq_distances_naive(warm)
    hyperconv(warm, build_epsilon_ball_hypergraph(warm, epsilon), np.eye(2))
    rows = []
    for v in vertex_counts:
        x = rng.standard_normal((v, channels)).astype(np.float32)
        theta = (rng.standard_normal((channels, channels)) / np.sqrt(channels)).astype(np.float32)
        g = build_epsilon_ball_hypergraph(x, epsilon)
        kernels = [
            ("pairwise_naive", lambda: pairwise_sq_distances_naive(x)),
            ("pairwise_blocked", lambda: pairwise_sq_distances(x)),
            ("build_hypergraph", lambda: build_epsilon_ball_hypergraph(x, epsilon)),
            ("hyperconv", lambda: hyperconv(x, g, theta)),
        ]
        for name, fn in kernels:
            rows.append({"kernel": name, "V": v, "C": channels, "ns_per_op": _time_ns(fn, repetitions)})
    return rows
