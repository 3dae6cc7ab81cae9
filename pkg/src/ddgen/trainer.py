"""Training loop: per iteration, ascend the path divergence vs marginals,
descend the clustering loss, and (after warmup) ascend the divergence of the
data vs freshly generated samples. Returns the EMA model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Var
from .clustering import clustering_loss
from .data import ImageSet, TAG_GENERATED
from .diffusion import build_path, default_schedule, sample_marginals
from .divergence import (
    NormalizedDualOffsets,
    TOWARD_DATA,
    TOWARD_MARGINAL,
    normalize_dual,
    offsets_for,
    path_divergence,
)
from .errors import ArgumentError, GenerationError, TrainingError
from .model import DualFunctionModel, ModelConfig
from .sampler import WalkConfig, sample_via_gradient_walk

_NO_EARLY_STOP_MIN = 4  # holdout sets smaller than this cannot drive early stopping


@dataclass
class TrainConfig:
    iters: int = 2000
    warmup: int = 500
    learning_rate: float = 1e-3
    batch_size: int = 512
    path_steps: int = 4
    knn_k: int = 8
    cut_count: int = 4
    ema_decay: float = 0.999
    clip_norm: float = 1.0
    marginal_refresh: int = 100
    walk: WalkConfig = field(default_factory=WalkConfig)
    lambda_div: float = 1.0
    lambda_cluster: float = 1.0
    lambda_gen: float = 1.0
    seed: int = 0
    early_stop_patience: int = 200
    holdout_fraction: float = 0.1
    direction: str = TOWARD_DATA
    hidden_dims: tuple[int, ...] = (128, 64)
    activation: str = "tanh"
    init_scale: float | None = None

    def __post_init__(self):
        if self.warmup > self.iters:
            raise ArgumentError("warmup must not exceed iters")
        if min(self.lambda_div, self.lambda_cluster, self.lambda_gen) < 0:
            raise ArgumentError("loss weights must be >= 0")
        if self.iters < 0 or self.batch_size < 1:
            raise ArgumentError("iters must be >= 0 and batch_size >= 1")
        if self.direction not in (TOWARD_DATA, TOWARD_MARGINAL):
            raise ArgumentError(f"unknown training direction {self.direction!r}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_dims=tuple(self.hidden_dims),
            activation=self.activation,
            step_conditioned=True,
            init_scale=self.init_scale,
            seed=self.seed,
        )


@dataclass
class TraceRecord:
    iteration: int
    div_path: float
    cluster_loss: float
    grad_norm: float
    gen_div: float | None = None
    walk_success_rate: float | None = None


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)
    stopped_early_at: int | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "div_path", "cluster_loss", "grad_norm", "gen_div", "walk_success_rate"])
            for r in self.records:
                writer.writerow([
                    r.iteration, repr(r.div_path), repr(r.cluster_loss), repr(r.grad_norm),
                    "" if r.gen_div is None else repr(r.gen_div),
                    "" if r.walk_success_rate is None else repr(r.walk_success_rate),
                ])

    @classmethod
    def from_csv(cls, path) -> "TrainTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.records.append(TraceRecord(
                    iteration=int(row["iteration"]),
                    div_path=float(row["div_path"]),
                    cluster_loss=float(row["cluster_loss"]),
                    grad_norm=float(row["grad_norm"]),
                    gen_div=float(row["gen_div"]) if row["gen_div"] else None,
                    walk_success_rate=float(row["walk_success_rate"]) if row["walk_success_rate"] else None,
                ))
        return trace


# ---- tape-side loss pieces ----

def _dv_t(f_num: Var, f_den: Var) -> Var:
    return f_num.mean() - f_den.logmeanexp()


def _path_div_t(fwd, path_pixels: list[np.ndarray], batch: np.ndarray, direction: str) -> Var:
    total = None
    for j in range(len(path_pixels) - 1):
        lo, hi = fwd(path_pixels[j][batch], j), fwd(path_pixels[j + 1][batch], j)
        term = _dv_t(lo, hi) if direction == TOWARD_DATA else _dv_t(hi, lo)
        total = term if total is None else total + term
    return total


def _duals_t(fwd, images: np.ndarray, path_pixels: list[np.ndarray], batch: np.ndarray) -> Var:
    """Tape version of the normalized path dual coordinate on a batch."""
    total = None
    for j in range(len(path_pixels) - 1):
        eta_j = fwd(path_pixels[j][batch], j).logmeanexp()
        term = fwd(images, j) - eta_j
        total = term if total is None else total + term
    return total


def _cluster_loss_t(duals: Var, knn_k: int) -> Var:
    n = duals.value.shape[0]
    perm = np.argsort(duals.value, kind="stable")
    ranks = np.arange(knn_k, n - knn_k + 1)
    right = perm[ranks[:, None] + np.arange(knn_k)[None, :]]
    left = perm[ranks[:, None] - knn_k + np.arange(knn_k)[None, :]]
    d = duals.take(right).mean(axis=1) - duals.take(left).logmeanexp(axis=1)
    return d.sum() - d.logsumexp()


class _EarlyStop:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_iter = 0

    def update(self, iteration: int, value: float) -> bool:
        """Record the holdout divergence; True means stop now."""
        if value > self.best:
            self.best = value
            self.best_iter = iteration
            return False
        return iteration - self.best_iter >= self.patience


def train(X: ImageSet, cfg: TrainConfig) -> tuple[DualFunctionModel, NormalizedDualOffsets, TrainTrace]:
    if X.count < 2:
        raise ArgumentError("training needs at least 2 images")
    rng = np.random.default_rng(cfg.seed)
    k = cfg.path_steps
    schedule = default_schedule(X.cols, k)

    n_hold = int(round(X.count * cfg.holdout_fraction))
    perm = rng.permutation(X.count)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    X_tr = X.subset(train_idx)
    hold_path = None
    if n_hold >= _NO_EARLY_STOP_MIN:
        X_ho = X.subset(hold_idx)
        hold_path = build_path(X_ho, sample_marginals(X_ho, int(rng.integers(2**63))), schedule)

    model = DualFunctionModel.create(cfg.model_config(), X.rows, X.cols, k)
    trace = TrainTrace()
    stopper = _EarlyStop(cfg.early_stop_patience)
    n_tr = X_tr.count
    batch_size = min(cfg.batch_size, n_tr)

    path = build_path(X_tr, sample_marginals(X_tr, int(rng.integers(2**63))), schedule)
    path_pixels = [s.pixels for s in path]

    for i in range(cfg.iters):
        if i > 0 and cfg.marginal_refresh > 0 and i % cfg.marginal_refresh == 0:
            path = build_path(X_tr, sample_marginals(X_tr, int(rng.integers(2**63))), schedule)
            path_pixels = [s.pixels for s in path]
        batch = rng.choice(n_tr, size=batch_size, replace=False)

        grad_norm = 0.0
        div_value = float("nan")
        if cfg.lambda_div > 0:
            def div_loss(fwd):
                return _path_div_t(fwd, path_pixels, batch, cfg.direction) * (-cfg.lambda_div)

            grad_norm = model.grad_params_and_step(div_loss, cfg.learning_rate, cfg.clip_norm, cfg.ema_decay)

        cluster_value = float("nan")
        if cfg.lambda_cluster > 0 and batch_size >= 2 * cfg.knn_k:
            def clu_loss(fwd):
                duals = _duals_t(fwd, path_pixels[0][batch], path_pixels, batch)
                return _cluster_loss_t(duals, cfg.knn_k) * cfg.lambda_cluster

            model.grad_params_and_step(clu_loss, cfg.learning_rate, cfg.clip_norm, cfg.ema_decay)

        gen_value = None
        walk_rate = None
        if i >= cfg.warmup and cfg.lambda_gen > 0 and batch_size >= 2 * cfg.knn_k:
            offsets = _batch_offsets(model, path_pixels, batch)
            walk_cfg = replace(cfg.walk, targets_per_gap=2, seed=int(rng.integers(2**63)))
            X_batch = ImageSet(path_pixels[0][batch])
            Xg, stats = sample_via_gradient_walk(model, offsets, X_batch, cfg.knn_k, cfg.cut_count, walk_cfg)
            walk_rate = stats.success_rate
            if Xg.count > 0:
                # per the overall algorithm, ascend D(data || generated)
                def gen_loss(fwd):
                    f_x = _duals_t(fwd, path_pixels[0][batch], path_pixels, batch)
                    f_g = _duals_t(fwd, Xg.pixels, path_pixels, batch)
                    return _dv_t(f_x, f_g) * (-cfg.lambda_gen)

                model.grad_params_and_step(gen_loss, cfg.learning_rate, cfg.clip_norm, cfg.ema_decay)
                gen_value = _eval_gen_div(model, path_pixels, batch, Xg)

        # trace values are recorded after the iteration's updates
        div_value = path_divergence(model, _batch_sets(path_pixels, batch), cfg.direction).value
        cluster_value = _eval_cluster(model, path_pixels, batch, cfg.knn_k)
        if not np.isfinite(div_value) or not np.isfinite(cluster_value):
            raise TrainingError(f"non-finite trace values at iteration {i}")
        trace.records.append(TraceRecord(i, div_value, cluster_value, grad_norm, gen_value, walk_rate))

        if hold_path is not None:
            hold_div = path_divergence(model, hold_path, cfg.direction).value
            if stopper.update(i, hold_div):
                trace.stopped_early_at = i
                break

    final = model.ema_model()
    offsets = offsets_for(final, path)
    return final, offsets, trace


def _batch_sets(path_pixels, batch) -> list[ImageSet]:
    return [ImageSet(p[batch]) for p in path_pixels]


def _batch_offsets(model, path_pixels, batch) -> NormalizedDualOffsets:
    return normalize_dual([model.forward(path_pixels[j][batch], j) for j in range(len(path_pixels) - 1)])


def _eval_cluster(model, path_pixels, batch, knn_k: int) -> float:
    from .clustering import build_profile
    from .divergence import path_dual_values

    if len(batch) < 2 * knn_k:
        return 0.0
    offsets = _batch_offsets(model, path_pixels, batch)
    duals = path_dual_values(model, path_pixels[0][batch], offsets)
    return clustering_loss(build_profile(duals, knn_k).d_knn)


def _eval_gen_div(model, path_pixels, batch, Xg: ImageSet) -> float:
    from .divergence import dv_estimate, path_dual_values

    offsets = _batch_offsets(model, path_pixels, batch)
    f_g = path_dual_values(model, Xg.pixels, offsets)
    f_x = path_dual_values(model, path_pixels[0][batch], offsets)
    return dv_estimate(f_g, f_x)


def generate(model: DualFunctionModel, offsets: NormalizedDualOffsets, X: ImageSet,
             count: int, cfg: TrainConfig) -> ImageSet:
    """Generate `count` images, cycling gaps until the 4x attempt budget runs out."""
    if count == 0:
        return ImageSet(np.empty((0, X.rows, X.cols)), tag=TAG_GENERATED)
    budget = 4 * count
    attempts = 0
    collected: list[np.ndarray] = []
    round_idx = 0
    while sum(c.shape[0] for c in collected) < count and attempts < budget:
        walk_cfg = replace(cfg.walk, seed=cfg.walk.seed + round_idx)
        Xg, stats = sample_via_gradient_walk(model, offsets, X, cfg.knn_k, cfg.cut_count, walk_cfg)
        attempts += stats.attempts
        if Xg.count:
            collected.append(Xg.pixels)
        round_idx += 1
    total = sum(c.shape[0] for c in collected)
    if total == 0:
        raise GenerationError(f"no walk converged in {attempts} attempts (cuts={cfg.cut_count}, "
                              f"targets_per_gap={cfg.walk.targets_per_gap})")
    pixels = np.concatenate(collected, axis=0)[:count]
    return ImageSet(pixels, tag=TAG_GENERATED)
