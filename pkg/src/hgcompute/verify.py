"""Seeded property suite behind ``hgcompute verify``.

Each check draws its own instances from a fixed seed and reports the
worst error it saw against its tolerance. The report text carries no
timings so two runs with one seed are byte-identical.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backbone import (
    BackboneConfig,
    ConvNeck,
    ManetParams,
    backbone_forward,
    init_backbone_weights,
    manet_block,
    manet_branches,
)
from .config import PRESETS, NeckConfig
from .distance import pairwise_sq_distances, pairwise_sq_distances_naive
from .experiments import ClusterSpec, make_clusters, within_cluster_variance
from .hypergraph import (
    DegreePair,
    build_epsilon_ball_hypergraph,
    degrees,
    hyperconv,
    hyperconv_grad_theta,
    hyperconv_oracle,
    permute,
    propagate,
    propagation_matrix,
)
from .neck import init_neck_weights, run_neck, semantic_collect
from .tensor import (
    ConvBlockParams,
    FeatureMatrix,
    TensorMap,
    concat_channels,
    conv2d_block,
    from_vertices,
    resample,
    split_channels,
    to_vertices,
)

ORACLE_TOL = 1e-6
GRAD_TOL = 1e-4
GRAD_STEP = 1e-5
DISTANCE_TOL = 1e-5
LINEARITY_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    instances: int
    max_error: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<34} instances={self.instances:<4d} "
                f"max_err={self.max_error:.3e}  tol={self.tolerance:.0e}")


def max_relative_error(a, b) -> float:
    """Element-wise |a - b| / |b|; entries where both are zero count as exact."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = np.abs(a - b)
    denom = np.abs(b)
    err = np.where(diff == 0, 0.0, diff / np.where(denom == 0, np.finfo(float).tiny, denom))
    return float(err.max(initial=0.0))


def max_scaled_error(a, b) -> float:
    """max |a - b| divided by max |b|: relative error in the max norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = float(np.abs(a - b).max(initial=0.0))
    scale = float(np.abs(b).max(initial=0.0))
    if diff == 0:
        return 0.0
    return diff / scale if scale > 0 else float("inf")


def random_instance(rng: np.random.Generator, max_n: int = 128, max_c: int = 32, dtype=np.float32):
    """Random features, an epsilon drawn up to past the data diameter, and a theta."""
    n = int(rng.integers(1, max_n + 1))
    c = int(rng.integers(1, max_c + 1))
    x = rng.standard_normal((n, c)).astype(dtype)
    diameter = float(np.sqrt(pairwise_sq_distances(x).max()))
    eps = float(rng.uniform(0.0, 1.1 * diameter + 1e-3))
    theta = rng.standard_normal((c, c)).astype(dtype)
    return x, eps, theta


# hypergraph-core


def check_oracle_equivalence(seed: int, instances: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        x, eps, theta = random_instance(rng)
        g = build_epsilon_ball_hypergraph(x, eps)
        worst = max(worst, max_relative_error(hyperconv(x, g, theta).data, hyperconv_oracle(x, g, theta).data))
    return CheckResult("oracle_equivalence", instances, worst, ORACLE_TOL, worst <= ORACLE_TOL)


def check_row_stochastic(seed: int, instances: int = 100, inject_fault: bool = False) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        x, eps, _ = random_instance(rng)
        g = build_epsilon_ball_hypergraph(x, eps)
        pair = degrees(g)
        if inject_fault:
            pair = DegreePair(pair.vertex_degrees, pair.hyperedge_degrees + 1)
        p = propagation_matrix(g, pair)
        err = float(np.abs(p.sum(axis=1) - 1.0).max())
        if p.min() < 0:
            err = max(err, float(-p.min()))
        worst = max(worst, err)
    return CheckResult("row_stochastic_propagation", instances, worst, ORACLE_TOL, worst <= ORACLE_TOL)


def check_constant_fixed_point(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        x, eps, theta = random_instance(rng)
        row = rng.standard_normal(x.shape[1]).astype(np.float32)
        const = np.tile(row, (x.shape[0], 1))
        g = build_epsilon_ball_hypergraph(x, eps)
        expect = row.astype(np.float64) @ (np.eye(x.shape[1]) + theta.astype(np.float64))
        out = hyperconv(const, g, theta).data
        worst = max(worst, max_relative_error(out, np.tile(expect, (x.shape[0], 1))))
    return CheckResult("constant_rows_fixed_point", instances, worst, ORACLE_TOL, worst <= ORACLE_TOL)


def check_residual_identity(seed: int, instances: int = 30) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        x, eps, theta = random_instance(rng)
        g = build_epsilon_ball_hypergraph(x, eps)
        mismatches += not np.array_equal(hyperconv(x, g, np.zeros_like(theta)).data, x)
    return CheckResult("residual_identity_bitwise", instances, float(mismatches), 0.0, mismatches == 0)


def check_degenerate_epsilon(seed: int, instances: int = 50) -> CheckResult:
    """eps = 0 gives singleton balls and X + X Theta; eps past the diameter gives the
    full hypergraph and X + mean(X) Theta."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    structural = 0
    for _ in range(instances):
        x, _, theta = random_instance(rng)
        # duplicate rows would share a ball at eps = 0 only if their distance were < 0
        x64, th64 = x.astype(np.float64), theta.astype(np.float64)
        g0 = build_epsilon_ball_hypergraph(x, 0.0)
        structural += any(e.tolist() != [v] for v, e in enumerate(g0.hyperedges))
        worst = max(worst, max_relative_error(hyperconv(x, g0, theta).data, x64 + x64 @ th64))
        far = 2.0 * float(np.sqrt(pairwise_sq_distances(x).max())) + 1.0
        gf = build_epsilon_ball_hypergraph(x, far)
        structural += any(e.size != x.shape[0] for e in gf.hyperedges)
        expect = x64 + x64.mean(axis=0) @ th64
        worst = max(worst, max_relative_error(hyperconv(x, gf, theta).data, expect))
    passed = structural == 0 and worst <= ORACLE_TOL
    return CheckResult("degenerate_epsilon_laws", instances, worst if not structural else float("inf"),
                       ORACLE_TOL, passed)


def check_permutation_equivariance(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    structural = 0
    for _ in range(instances):
        x, eps, theta = random_instance(rng)
        perm = rng.permutation(x.shape[0])
        g = build_epsilon_ball_hypergraph(x, eps)
        gp = build_epsilon_ball_hypergraph(x[perm], eps)
        structural += not (gp == permute(g, perm))
        worst = max(worst, max_relative_error(hyperconv(x[perm], gp, theta).data,
                                              hyperconv(x, g, theta).data[perm]))
    return CheckResult("permutation_equivariance", instances, worst if not structural else float("inf"),
                       ORACLE_TOL, structural == 0 and worst <= ORACLE_TOL)


def check_epsilon_monotonicity(seed: int, instances: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(instances):
        x, e1, _ = random_instance(rng)
        e2 = e1 + float(rng.uniform(0.0, 2.0))
        g1 = build_epsilon_ball_hypergraph(x, e1)
        g2 = build_epsilon_ball_hypergraph(x, e2)
        for v, (a, b) in enumerate(zip(g1.hyperedges, g2.hyperedges)):
            violations += not set(a.tolist()) <= set(b.tolist())
            violations += v not in set(a.tolist())
        violations += g1.edge_count != x.shape[0]
        violations += int(degrees(g1).vertex_degrees.min()) < 1
    return CheckResult("epsilon_monotonicity_and_centers", instances, float(violations), 0.0, violations == 0)


def check_distance_kernels(seed: int, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    structural = 0
    for _ in range(instances):
        v = int(rng.integers(1, 200))
        c = int(rng.integers(1, 48))
        x = rng.standard_normal((v, c)).astype(np.float32)
        if v > 2:
            x[v - 1] = x[0]
        d = pairwise_sq_distances(x, tile=int(rng.integers(1, 80)))
        structural += not np.array_equal(d, d.T)
        structural += bool(np.any(np.diag(d) != 0))
        if v > 2:
            structural += d[0, v - 1] != 0
        worst = max(worst, max_relative_error(d, pairwise_sq_distances_naive(x)))
    return CheckResult("distance_blocked_vs_naive", instances, worst if not structural else float("inf"),
                       DISTANCE_TOL, structural == 0 and worst <= DISTANCE_TOL)


def check_cluster_smoothing(seed: int, instances: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        spread = float(rng.uniform(0.2, 1.0))
        spec = ClusterSpec(k_clusters=int(rng.integers(2, 6)), points_per_cluster=int(rng.integers(4, 20)),
                           dim=8, center_separation=20.0, intra_spread=spread, seed=int(rng.integers(2**31)))
        x, labels = make_clusters(spec)
        g = build_epsilon_ball_hypergraph(x, 6.0)
        ratio = within_cluster_variance(propagate(g, x), labels) / within_cluster_variance(x, labels)
        worst = max(worst, ratio)
    return CheckResult("cluster_smoothing_variance_ratio", instances, worst, 1.0, worst < 1.0)


def fd_theta_error(x: np.ndarray, eps: float, theta: np.ndarray, upstream: np.ndarray,
                   step: float = GRAD_STEP) -> float:
    """Worst relative gap between the analytic theta gradient and central differences."""
    g = build_epsilon_ball_hypergraph(x, eps)
    analytic = hyperconv_grad_theta(x, g, upstream)

    def loss(t):
        return float(np.sum(upstream * hyperconv(x, g, t).data))

    numeric = np.empty_like(theta)
    for idx in np.ndindex(theta.shape):
        tp, tm = theta.copy(), theta.copy()
        tp[idx] += step
        tm[idx] -= step
        numeric[idx] = (loss(tp) - loss(tm)) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradient(seed: int, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        x, eps, theta = random_instance(rng, max_n=40, max_c=8, dtype=np.float64)
        upstream = rng.standard_normal(x.shape)
        worst = max(worst, fd_theta_error(x, eps, theta, upstream))
    return CheckResult("theta_gradient_finite_difference", instances, worst, GRAD_TOL, worst <= GRAD_TOL)


# tensor-core


def _random_conv(rng, cin, cout, k, groups=1, activation="none", bias=True):
    p = ConvBlockParams.init(rng, cin, cout, k, groups=groups, activation=activation)
    if not bias:
        p = dataclasses.replace(p, bias=np.zeros_like(p.bias))
    return p


def check_conv_linearity(seed: int, instances: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        cin, cout, k = int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.choice([1, 3, 5]))
        p = _random_conv(rng, cin, cout, k, bias=False)
        x = rng.standard_normal((2, cin, 7, 6)).astype(np.float32)
        y = rng.standard_normal((2, cin, 7, 6)).astype(np.float32)
        a, b = np.float32(rng.normal()), np.float32(rng.normal())
        lhs = conv2d_block(TensorMap(a * x + b * y), p).data
        rhs = a * conv2d_block(TensorMap(x), p).data + b * conv2d_block(TensorMap(y), p).data
        worst = max(worst, max_scaled_error(lhs, rhs))
    return CheckResult("conv_linearity", instances, worst, LINEARITY_TOL, worst <= LINEARITY_TOL)


def check_conv_geometry(seed: int, instances: int = 10) -> CheckResult:
    """Same-padding shape law and one-pixel translation covariance."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    bad = 0
    for _ in range(instances):
        k = int(rng.choice([1, 3, 5, 7]))
        p = _random_conv(rng, 2, 3, k)
        h, w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        bad += conv2d_block(TensorMap(rng.standard_normal((1, 2, h, w))), p).shape[2:] != (h, w)
        pad = k
        core = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
        canvas = np.zeros((1, 2, 5 + 2 * pad + 1, 5 + 2 * pad + 1), dtype=np.float32)
        shifted = canvas.copy()
        canvas[:, :, pad:pad + 5, pad:pad + 5] = core
        shifted[:, :, pad + 1:pad + 6, pad + 1:pad + 6] = core
        a = conv2d_block(TensorMap(canvas), p).data
        b = conv2d_block(TensorMap(shifted), p).data
        worst = max(worst, max_scaled_error(b[:, :, 1:, 1:], a[:, :, :-1, :-1]))
    tol = 1e-6
    return CheckResult("conv_same_padding_and_translation", instances, worst if not bad else float("inf"),
                       tol, bad == 0 and worst <= tol)


def check_round_trips(seed: int, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        b, c, h, w = (int(v) for v in rng.integers(1, 5, size=4))
        x = TensorMap(rng.standard_normal((b, c, h, w)).astype(np.float32))
        mismatches += from_vertices(to_vertices(x)) != x
        sizes = [int(s) for s in rng.integers(1, 4, size=int(rng.integers(1, 4)))]
        y = TensorMap(rng.standard_normal((b, sum(sizes), h, w)).astype(np.float32))
        mismatches += concat_channels(split_channels(y, sizes)) != y
        f = int(rng.integers(1, 4))
        mismatches += resample(resample(x, h * f, w * f, "nearest_up"), h, w, "avg_down") != x
    return CheckResult("round_trips_bitwise", instances, float(mismatches), 0.0, mismatches == 0)


# backbone-toy


def check_manet_laws(seed: int, instances: int = 4) -> CheckResult:
    """Width law for n = 1..instances, residual law with zeroed ConvNeck units."""
    rng = np.random.default_rng(seed)
    bad = 0
    worst = 0.0
    x = TensorMap(rng.standard_normal((1, 6, 5, 5)).astype(np.float32))
    for n in range(1, instances + 1):
        p = ManetParams.init(rng, 6, 8, n, 3)
        out = manet_block(x, p)
        bad += out.shape != (1, 8, 5, 5)
        bad += p.conv_o.in_channels != (4 + n) * 4
        zero = tuple(
            ConvNeck(*(dataclasses.replace(c, weight=np.zeros_like(c.weight), bias=np.zeros_like(c.bias),
                                           activation="none") for c in (u.first, u.second)))
            for u in p.necks
        )
        branches = manet_branches(x, dataclasses.replace(p, necks=zero))
        for extra in branches[4:]:
            worst = max(worst, max_scaled_error(extra.data, branches[3].data))
        bad += len(branches) != 4 + n
    return CheckResult("manet_width_and_residual_laws", instances, worst if not bad else float("inf"),
                       0.0, bad == 0 and worst == 0.0)


def check_backbone(seed: int, instances: int = 4) -> CheckResult:
    """Stage widths per preset, stride geometry and bitwise determinism."""
    bad = 0
    rng = np.random.default_rng(seed)
    image = TensorMap(rng.random((1, 3, 64, 64), dtype=np.float32))
    for scale in list(PRESETS)[:instances]:
        cfg = BackboneConfig(scale)
        w1 = init_backbone_weights(cfg, seed)
        pyr = backbone_forward(image, cfg, w1)
        bad += tuple(l.channels for l in pyr.levels) != PRESETS[scale].widths
        bad += tuple(l.height for l in pyr.levels) != (32, 16, 8, 4, 2)
        again = backbone_forward(image, cfg, init_backbone_weights(cfg, seed))
        bad += any(a != b for a, b in zip(pyr.levels, again.levels))
    return CheckResult("backbone_widths_strides_determinism", instances, float(bad), 0.0, bad == 0)


# hgcscs-neck


def _desk_pyramid(scale: str, seed: int, size: int = 64, batch: int = 1):
    cfg = BackboneConfig(scale)
    rng = np.random.default_rng(seed)
    image = TensorMap(rng.random((batch, 3, size, size), dtype=np.float32))
    return backbone_forward(image, cfg, init_backbone_weights(cfg, seed))


def _features_to_grid_eps(x_mixed: FeatureMatrix, quantile: float = 0.3) -> float:
    """An epsilon that yields non-trivial balls on these particular features."""
    d = np.sqrt(pairwise_sq_distances(x_mixed.data))
    return float(np.quantile(d[np.triu_indices_from(d, 1)], quantile)) if d.shape[0] > 1 else 1.0


def check_neck_laws(seed: int, instances: int = 4) -> CheckResult:
    """Shape law, mode-none transparency, eps = 0 collapse, collecting-set plumbing, per-image batching."""
    bad = 0
    worst = 0.0
    for scale in list(PRESETS)[:instances]:
        pyr = _desk_pyramid(scale, seed)
        cfg = NeckConfig(scale)
        w = init_neck_weights(cfg, seed + 1)
        trace = run_neck(pyr, cfg, w)
        widths = PRESETS[scale].widths
        for out, level, side in zip(trace.outputs.as_tuple(), (3, 4, 5), (8, 4, 2)):
            bad += out.shape != (1, widths[level - 1], side, side)
        # mode none equals the pipeline with the propagation stage removed
        none = run_neck(pyr, cfg.with_overrides(mode="none"), w)
        skipped = run_neck(pyr, cfg, w, x_hyper=semantic_collect(pyr, cfg, w))
        bad += any(a != b for a, b in zip(none.outputs.as_tuple(), skipped.outputs.as_tuple()))
        # eps = 0: the hypergraph stage reduces to X + X Theta
        zero = run_neck(pyr, cfg.with_overrides(epsilon=0.0), w)
        xm = none.x_mixed.data.astype(np.float64)
        linear = FeatureMatrix((xm + xm @ w.theta.astype(np.float64)).astype(np.float32), none.x_mixed.grid_meta)
        ref = run_neck(pyr, cfg, w, x_hyper=linear)
        for a, b in zip(zero.outputs.as_tuple(), ref.outputs.as_tuple()):
            worst = max(worst, max_scaled_error(a.data, b.data))
        # only the fuse input width depends on the collecting set
        sub = cfg.with_overrides(collecting_set=(3, 4, 5))
        sub_trace = run_neck(pyr, sub, init_neck_weights(sub, seed + 1))
        bad += init_neck_weights(sub, seed + 1).fuse.in_channels != sum(widths[2:])
        bad += any(a.shape != b.shape for a, b in zip(sub_trace.outputs.as_tuple(), trace.outputs.as_tuple()))
    # per-image pooling never mixes images
    pyr2 = _desk_pyramid("N", seed, batch=2)
    cfg = NeckConfig("N")
    w = init_neck_weights(cfg, seed + 1)
    cfg = cfg.with_overrides(epsilon=_features_to_grid_eps(semantic_collect(pyr2, cfg, w)))
    both = run_neck(pyr2, cfg, w).outputs.as_tuple()
    for i in range(2):
        single = type(pyr2)(tuple(TensorMap(l.data[i:i + 1]) for l in pyr2.levels))
        alone = run_neck(single, cfg, w).outputs.as_tuple()
        for a, b in zip(both, alone):
            worst = max(worst, max_scaled_error(a.data[i:i + 1], b.data))
    return CheckResult("neck_shape_mode_batch_laws", instances, worst if not bad else float("inf"),
                       ORACLE_TOL, bad == 0 and worst <= ORACLE_TOL)


CHECKS: list = [
    ("oracle_equivalence", check_oracle_equivalence),
    ("row_stochastic_propagation", check_row_stochastic),
    ("constant_rows_fixed_point", check_constant_fixed_point),
    ("residual_identity_bitwise", check_residual_identity),
    ("degenerate_epsilon_laws", check_degenerate_epsilon),
    ("permutation_equivariance", check_permutation_equivariance),
    ("epsilon_monotonicity_and_centers", check_epsilon_monotonicity),
    ("distance_blocked_vs_naive", check_distance_kernels),
    ("cluster_smoothing_variance_ratio", check_cluster_smoothing),
    ("theta_gradient_finite_difference", check_gradient),
    ("conv_linearity", check_conv_linearity),
    ("conv_same_padding_and_translation", check_conv_geometry),
    ("round_trips_bitwise", check_round_trips),
    ("manet_width_and_residual_laws", check_manet_laws),
    ("backbone_widths_strides_determinism", check_backbone),
    ("neck_shape_mode_batch_laws", check_neck_laws),
]


def run_all(seed: int = 0, inject_fault: bool = False) -> list:
    results = []
    for i, (name, fn) in enumerate(CHECKS):
        check_seed = seed * 1000 + i
        if fn is check_row_stochastic:
            results.append(fn(check_seed, inject_fault=inject_fault))
        else:
            results.append(fn(check_seed))
    return results


def format_report(results: list, seed: int) -> str:
    lines = [f"hgcompute verify  seed={seed}"]
    lines += [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
