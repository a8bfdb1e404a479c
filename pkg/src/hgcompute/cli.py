"""Command-line entry point: verify, demo, bench, ablate, fit, hypergraph.

Exit codes: 0 success, 1 check failure, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import sys
from pathlib import Path

import numpy as np

from . import io, verify
from .backbone import BackboneConfig, backbone_forward, init_backbone_weights
from .config import NeckConfig, preset
from .distance import pairwise_sq_distances
from .experiments import ClusterSpec, FitDiverged, ablate, bench, fit_theta_demo
from .hypergraph import build_epsilon_ball_hypergraph, degrees
from .neck import init_neck_weights, neck_hypergraphs, run_neck
from .tensor import TensorMap, from_vertices

EXIT_OK, EXIT_FAIL, EXIT_BAD_INPUT = 0, 1, 2


class BadInput(Exception):
    pass


def _settings(args, keys) -> dict:
    """Config-file values overlaid with any command-line overrides."""
    values = io.read_key_values(args.config) if args.config else {}
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    return values


def _seed(args, values) -> int:
    raw = args.seed if args.seed is not None else values.get("seed")
    if raw is None:
        raise BadInput("--seed is required for this command")
    return int(raw)


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rows_to_csv(rows: list, columns: list) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{row[k]:.10g}" if isinstance(row[k], float) else row[k]) for k in columns})
    return buf.getvalue()


def _emit(text: str, out: Path | None, name: str) -> None:
    sys.stdout.write(text)
    if out is not None:
        (out / name).write_text(text)


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = verify.run_all(seed, inject_fault=args.inject_fault)
    _emit(verify.format_report(results, seed), _out_dir(args), "verify_report.txt")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _stats(t) -> str:
    d = t.data.astype(np.float64)
    return f"mean={d.mean():+.6e} std={d.std():.6e} min={d.min():+.6e} max={d.max():+.6e}"


def _shape(t) -> str:
    return "x".join(str(s) for s in t.shape)


def cmd_demo(args) -> int:
    values = _settings(args, ["scale", "mode", "epsilon", "target_stride", "collecting_set", "pooling", "size",
                              "input"])
    seed = _seed(args, values)
    scale = values.get("scale", "S")
    ncfg = NeckConfig.from_mapping({**values, "scale": scale})
    bcfg = BackboneConfig(scale)
    if values.get("input"):
        image = io.load_pgm_ppm(values["input"])
    else:
        size = int(values.get("size", 256))
        image = TensorMap(np.random.default_rng(seed).random((1, 3, size, size), dtype=np.float32))
    p = preset(scale)
    pyr = backbone_forward(image, bcfg, init_backbone_weights(bcfg, seed))
    weights = init_neck_weights(ncfg, seed + 1)
    trace = run_neck(pyr, ncfg, weights)

    lines = [
        f"scale {ncfg.scale}",
        f"widths B1..B5 {' '.join(map(str, p.widths))}",
        f"hyperconv C_in {ncfg.hyper_channels} C_out {ncfg.hyper_channels}",
        f"epsilon {ncfg.epsilon:g}",
        f"manet depths n {' '.join(map(str, bcfg.depths))}",
        f"manet kernels k {' '.join(map(str, bcfg.kernels))}",
        f"mode {ncfg.mode}",
        f"pooling {ncfg.pooling}",
        f"target_stride {ncfg.target_stride}",
        f"collecting_set {','.join(f'B{i}' for i in ncfg.collecting_set)}",
        f"seed {seed}",
        f"input {_shape(image)} {_stats(image)}",
    ]
    for i, level in enumerate(pyr.levels, 1):
        lines.append(f"B{i} {_shape(level)} {_stats(level)}")
    lines.append(f"X_mixed vertices {trace.x_mixed.vertices} channels {trace.x_mixed.channels} {_stats(trace.x_mixed)}")
    if trace.x_mixed.vertices > 1:
        rows = trace.x_mixed.data[: trace.x_mixed.vertices // trace.x_mixed.grid_meta[2]]
        d = np.sqrt(pairwise_sq_distances(rows))
        q = np.quantile(d[np.triu_indices_from(d, 1)], [0.1, 0.5, 0.9]) if d.shape[0] > 1 else np.zeros(3)
        lines.append(f"X_mixed image0 pairwise distance p10={q[0]:.6e} p50={q[1]:.6e} p90={q[2]:.6e}")
    for j, g in enumerate(neck_hypergraphs(trace.x_mixed, ncfg)):
        dv, de = degrees(g)
        lines.append(
            f"hypergraph {j} vertices {g.vertex_count} hyperedges {g.edge_count} "
            f"vertex_degree min={dv.min()} mean={dv.mean():.4f} max={dv.max()} "
            f"hyperedge_degree min={de.min()} mean={de.mean():.4f} max={de.max()}"
        )
    lines.append(f"X_hyper {_stats(trace.x_hyper)}")
    for name, t in zip(("N3", "N4", "N5"), trace.outputs.as_tuple()):
        lines.append(f"{name} {_shape(t)} {_stats(t)}")
    report = "\n".join(lines) + "\n"
    out = _out_dir(args)
    _emit(report, out, "demo_report.txt")
    if out is not None:
        pre = from_vertices(trace.x_mixed)
        post = from_vertices(trace.x_hyper)
        io.export_heatmap(TensorMap(pre.data[:1]), out / "heatmap_pre_hyperconv.pgm")
        io.export_heatmap(TensorMap(post.data[:1]), out / "heatmap_post_hyperconv.pgm")
    return EXIT_OK


def cmd_bench(args) -> int:
    values = _settings(args, ["vertex_counts", "channels", "repetitions", "epsilon"])
    seed = _seed(args, values)
    counts = [int(v) for v in values.get("vertex_counts", "256,1024,4096").split(",") if v]
    rows = bench(counts, int(values.get("channels", 256)), int(values.get("repetitions", 1)), seed,
                 float(values.get("epsilon", 8.0)))
    _emit(_rows_to_csv(rows, ["kernel", "V", "C", "ns_per_op"]), _out_dir(args), "bench.csv")
    by = {(r["kernel"], r["V"]): r["ns_per_op"] for r in rows}
    for v in counts:
        ratio = by[("pairwise_blocked", v)] / by[("pairwise_naive", v)]
        print(f"# V={v} blocked/naive time ratio {ratio:.3f}", file=sys.stderr)
    return EXIT_OK


CLUSTER_KEYS = ["k_clusters", "points_per_cluster", "dim", "center_separation", "intra_spread"]


def _cluster_spec(values: dict, seed: int) -> ClusterSpec:
    kwargs = {}
    for key in CLUSTER_KEYS:
        if key in values:
            kwargs[key] = float(values[key]) if key in ("center_separation", "intra_spread") else int(values[key])
    return ClusterSpec(seed=seed, **kwargs)


def cmd_ablate(args) -> int:
    values = _settings(args, CLUSTER_KEYS + ["epsilon"])
    seed = _seed(args, values)
    spec = _cluster_spec(values, seed)
    rows = ablate(spec, float(values.get("epsilon", 6.0)))
    _emit(_rows_to_csv(rows, ["mode", "epsilon", "within_cluster_variance", "variance_ratio"]),
          _out_dir(args), "ablation.csv")
    ratio = {r["mode"]: r["variance_ratio"] for r in rows}
    print(f"# high_order <= low_order: {ratio['high_order'] <= ratio['low_order']}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    values = _settings(args, CLUSTER_KEYS + ["epsilon", "step", "steps"])
    seed = _seed(args, values)
    spec = _cluster_spec(values, seed)
    try:
        losses = fit_theta_demo(spec, float(values.get("epsilon", 6.0)), float(values.get("step", 1e-3)),
                                int(values.get("steps", 200)))
    except FitDiverged as exc:
        print(f"fit diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rows = [{"step": i, "loss": v} for i, v in enumerate(losses)]
    _emit(_rows_to_csv(rows, ["step", "loss"]), _out_dir(args), "fit_trace.csv")
    print(f"# final/initial loss {losses[-1] / losses[0]:.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_hypergraph(args) -> int:
    values = _settings(args, ["input", "epsilon"])
    if not values.get("input"):
        raise BadInput("--input is required")
    x = io.load_tensor(values["input"])
    if x.ndim != 2:
        raise BadInput(f"expected a rank-2 feature matrix, got rank {x.ndim}")
    eps = float(values.get("epsilon", 8.0))
    g = build_epsilon_ball_hypergraph(x, eps)
    dv, de = degrees(g)
    sys.stdout.write(
        f"vertices {g.vertex_count} hyperedges {g.edge_count} incidences {int(de.sum())} epsilon {eps:g}\n"
        f"vertex_degree min={dv.min()} mean={dv.mean():.4f} max={dv.max()}\n"
        f"hyperedge_degree min={de.min()} mean={de.mean():.4f} max={de.max()}\n"
    )
    out = _out_dir(args)
    if out is not None:
        (out / "hypergraph.txt").write_text(io.format_hypergraph(g))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgcompute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=fn)
        return p

    p = add("verify", cmd_verify, "run the seeded property suite")
    p.add_argument("--inject-fault", action="store_true", help="perturb hyperedge degrees by one")

    p = add("demo", cmd_demo, "backbone + neck on an image or seeded noise")
    p.add_argument("--scale", choices=["N", "S", "M", "L"])
    p.add_argument("--mode", choices=["none", "low_order", "high_order"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--target-stride", dest="target_stride", type=int)
    p.add_argument("--collecting-set", dest="collecting_set", help="e.g. B3,B4,B5")
    p.add_argument("--pooling", choices=["per_image", "cross_batch"])
    p.add_argument("--size", type=int, help="side of the synthetic noise image")
    p.add_argument("--input", help="PGM/PPM image")

    p = add("bench", cmd_bench, "time distance, construction and convolution kernels")
    p.add_argument("--vertex-counts", dest="vertex_counts", help="comma list, default 256,1024,4096")
    p.add_argument("--channels", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--epsilon", type=float)

    for name, fn, help_ in (("ablate", cmd_ablate, "none / low_order / high_order on clustered points"),
                            ("fit", cmd_fit, "gradient descent on theta")):
        p = add(name, fn, help_)
        p.add_argument("--k-clusters", dest="k_clusters", type=int)
        p.add_argument("--points-per-cluster", dest="points_per_cluster", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--center-separation", dest="center_separation", type=float)
        p.add_argument("--intra-spread", dest="intra_spread", type=float)
        p.add_argument("--epsilon", type=float)
        if name == "fit":
            p.add_argument("--step", type=float)
            p.add_argument("--steps", type=int)

    p = add("hypergraph", cmd_hypergraph, "build an epsilon-ball hypergraph from a HYT1 matrix")
    p.add_argument("--input", help="rank-2 HYT1 tensor")
    p.add_argument("--epsilon", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BadInput, io.FormatError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
