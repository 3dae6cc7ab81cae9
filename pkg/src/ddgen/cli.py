"""Command-line entry point: ingest, train, generate, eval, report."""

from __future__ import annotations

import os
import sys


def _apply_thread_cap() -> None:
    """Honor DDGEN_THREADS by capping BLAS pools before numpy loads."""
    raw = os.environ.get("DDGEN_THREADS")
    if raw is None:
        return
    try:
        threads = int(raw)
        if threads < 1:
            raise ValueError
    except ValueError:
        raise SystemExit(f"error: DDGEN_THREADS must be a positive integer, got {raw!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


_apply_thread_cap()

import argparse
import dataclasses

import numpy as np

from . import clustering, data, metrics, plotting
from .diffusion import build_path, default_schedule, sample_marginals
from .divergence import offsets_for, path_dual_values
from .errors import DdgenError, FormatError
from .model import DualFunctionModel
from .sampler import WalkConfig
from .trainer import TrainConfig, generate, train

_SCALAR_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig) if f.name != "walk"}
_WALK_FIELDS = {f.name for f in dataclasses.fields(WalkConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("hidden_dims",):
        return tuple(int(p) for p in raw.split(",") if p.strip())
    if key == "activation":
        return raw
    if raw.lower() in ("none", ""):
        return None
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        if any(c in raw for c in ".eE") and not raw.lstrip("+-").isdigit():
            return float(raw)
        return int(raw)
    except ValueError:
        return raw


def load_config(path) -> TrainConfig:
    """Parse a `key = value` config file into a TrainConfig.

    Lines starting with # are comments; walk options use `walk.<field>` keys.
    Unknown keys are errors.
    """
    overrides: dict = {}
    walk_overrides: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}:{lineno}: expected `key = value`, got {line.strip()!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key.startswith("walk."):
                wkey = key[len("walk."):]
                if wkey not in _WALK_FIELDS:
                    raise FormatError(f"{path}:{lineno}: unknown walk config key {wkey!r}")
                walk_overrides[wkey] = _parse_value(wkey, value)
            elif key in _SCALAR_FIELDS:
                overrides[key] = _parse_value(key, value)
            else:
                raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
    cfg = TrainConfig(**overrides)
    if walk_overrides:
        cfg.walk = dataclasses.replace(cfg.walk, **walk_overrides)
    return cfg


def _override(cfg: TrainConfig, args, names) -> TrainConfig:
    changes = {}
    for name in names:
        value = getattr(args, name)
        if value is not None:
            changes[name] = tuple(int(p) for p in value.split(",")) if name == "hidden_dims" else value
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddgen", description="Generative sampling in the dual divergence space.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="window a CSV time series into a .dds image set")
    p.add_argument("--input", required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--norm", choices=["global", "per-image"], default="global")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the dual function on a .dds image set")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    for flag, kind in [
        ("--iters", int), ("--warmup", int), ("--learning-rate", float), ("--batch-size", int),
        ("--path-steps", int), ("--knn-k", int), ("--cut-count", int), ("--seed", int),
        ("--lambda-div", float), ("--lambda-cluster", float), ("--lambda-gen", float),
        ("--hidden-dims", str),
    ]:
        p.add_argument(flag, type=kind)

    p = sub.add_parser("generate", help="generate samples with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--knn-k", type=int, default=8)
    p.add_argument("--cut-count", type=int, default=4)

    p = sub.add_parser("eval", help="write the metrics report for real vs generated sets")
    p.add_argument("--model", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--knn-k", type=int, default=8)
    p.add_argument("--profile-out", help="also export the real set's dual profile CSV")

    p = sub.add_parser("report", help="render sample heatmaps and the dual-profile plots")
    p.add_argument("--real", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cut-count", type=int, default=4)
    p.add_argument("--max-images", type=int, default=8)
    return parser


def _offsets_from_data(model, X, seed):
    schedule = default_schedule(X.cols, model.path_steps)
    Z = sample_marginals(X, seed)
    return offsets_for(model, build_path(X, Z, schedule))


def _cmd_ingest(args) -> int:
    series = data.load_csv(args.input)
    norm = data.NORM_GLOBAL if args.norm == "global" else data.NORM_PER_IMAGE
    spec = data.WindowSpec(window=args.window, stride=args.stride, normalization=norm)
    images = data.window_series(series, spec)
    data.write_dds(images, args.out)
    print(f"wrote {images.count} images of {images.rows}x{images.cols} to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    cfg = _override(cfg, args, [
        "iters", "warmup", "learning_rate", "batch_size", "path_steps", "knn_k",
        "cut_count", "seed", "lambda_div", "lambda_cluster", "lambda_gen", "hidden_dims",
    ])
    X = data.read_dds(args.data)
    model, offsets, trace = train(X, cfg)
    model.save(args.out)
    if args.trace:
        trace.to_csv(args.trace)
    final = trace.records[-1].div_path if trace.records else float("nan")
    print(f"trained {len(trace.records)} iterations, final path divergence {final:.4f}; wrote {args.out}")
    return 0


def _cmd_generate(args) -> int:
    model = DualFunctionModel.load(args.model)
    X = data.read_dds(args.data)
    offsets = _offsets_from_data(model, X, args.seed)
    cfg = TrainConfig(knn_k=args.knn_k, cut_count=args.cut_count,
                      walk=WalkConfig(seed=args.seed))
    out = generate(model, offsets, X, args.count, cfg)
    data.write_dds(out, args.out)
    print(f"wrote {out.count} generated images to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = DualFunctionModel.load(args.model)
    X = data.read_dds(args.real)
    X_g = data.read_dds(args.gen, tag=data.TAG_GENERATED)
    offsets = _offsets_from_data(model, X, args.seed)
    d_max, margin = metrics.theorem2_check(model, offsets, X, X_g)
    report = metrics.MetricsReport(
        div_gen_vs_data=metrics.divergence_gen_vs_data(model, offsets, X, X_g),
        entropy_proxy=metrics.entropy_proxy(X_g, metrics.AuxTrainConfig(seed=args.seed)),
        mmi_real=metrics.mmi(model, offsets, X, seed=args.seed),
        mmi_gen=metrics.mmi(model, offsets, X_g, seed=args.seed),
        cluster_novelty=metrics.cluster_novelty(model, offsets, X, X_g, args.knn_k),
        fid_dual=metrics.fid_dual(model, X, X_g),
        theorem2_margin=margin,
    )
    report.to_csv(args.out)
    if args.profile_out:
        duals = path_dual_values(model, X.pixels, offsets)
        clustering.profile_to_csv(clustering.build_profile(duals, args.knn_k), args.profile_out)
    print(f"wrote metrics to {args.out}")
    return 0


def write_pgm(image: np.ndarray, path) -> None:
    """Binary PGM, maxval 255, pixel = round(255 * value)."""
    rows, cols = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(np.round(255.0 * image).astype(np.uint8).tobytes())


def write_profile_svg(values: np.ndarray, cut_ranks: np.ndarray, path) -> None:
    """Standalone SVG scatter of the dual profile with cut-point lines."""
    width, height, pad = 800, 400, 40
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    n = values.size

    def sx(rank):
        return pad + (width - 2 * pad) * (rank / max(n - 1, 1))

    def sy(v):
        return height - pad - (height - 2 * pad) * ((v - lo) / span)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for rank in cut_ranks:
        parts.append(f'<line x1="{sx(rank):.1f}" y1="{pad}" x2="{sx(rank):.1f}" '
                     f'y2="{height - pad}" stroke="red" stroke-dasharray="4 3"/>')
    for rank, v in enumerate(values):
        parts.append(f'<circle cx="{sx(rank):.1f}" cy="{sy(v):.1f}" r="2" fill="steelblue"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _cmd_report(args) -> int:
    X = data.read_dds(args.real)
    X_g = data.read_dds(args.gen, tag=data.TAG_GENERATED)
    values, d_ranks, d_knn = clustering.profile_from_csv(args.profile)
    os.makedirs(args.out_dir, exist_ok=True)
    for i in range(min(args.max_images, X.count)):
        write_pgm(X.pixels[i], os.path.join(args.out_dir, f"real_{i:03d}.pgm"))
    for i in range(min(args.max_images, X_g.count)):
        write_pgm(X_g.pixels[i], os.path.join(args.out_dir, f"gen_{i:03d}.pgm"))
    if d_knn.size:
        top = np.lexsort((d_ranks, -d_knn))[: min(args.cut_count, d_knn.size)]
        cut_ranks = np.sort(d_ranks[top])
    else:
        cut_ranks = np.array([], dtype=np.int64)
    write_profile_svg(values, cut_ranks, os.path.join(args.out_dir, "profile.svg"))
    plotting.plot_dual_profile(values, cut_ranks, d_knn, d_ranks,
                               os.path.join(args.out_dir, "profile.png"))
    plotting.plot_sample_grid(X, X_g, os.path.join(args.out_dir, "samples.png"))
    with open(os.path.join(args.out_dir, "report_summary.csv"), "w", newline="") as fh:
        fh.write("key,value\n")
        fh.write(f"real_count,{X.count}\n")
        fh.write(f"gen_count,{X_g.count}\n")
        fh.write(f"dual_min,{values.min()!r}\n")
        fh.write(f"dual_max,{values.max()!r}\n")
        fh.write(f"cut_ranks,{';'.join(str(r) for r in cut_ranks)}\n")
    print(f"wrote report artifacts to {args.out_dir}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except DdgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
