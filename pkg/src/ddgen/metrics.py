"""Evaluation suite: divergence of generated vs real samples, entropy proxy,
multivariate mutual information, cluster novelty, dual-representation Frechet
distance, the generated-sample divergence bound check, and the direct-vs-path
variance experiment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .clustering import build_profile
from .data import ImageSet, synth_gaussian_ar1
from .diffusion import build_path, default_schedule, sample_marginals, DiffusionSchedule
from .divergence import (
    NormalizedDualOffsets,
    TOWARD_DATA,
    dv_estimate,
    logmeanexp,
    path_divergence,
    path_dual_values,
)
from .errors import ArgumentError, NumericalError
from .model import DualFunctionModel, ModelConfig


@dataclass
class MetricsReport:
    div_gen_vs_data: float
    entropy_proxy: float
    mmi_real: float
    mmi_gen: float
    cluster_novelty: float
    fid_dual: float
    theorem2_margin: float
    walk_failure_count: int = 0

    FIELDS = (
        "div_gen_vs_data", "entropy_proxy", "mmi_real", "mmi_gen",
        "cluster_novelty", "fid_dual", "theorem2_margin", "walk_failure_count",
    )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for name in self.FIELDS:
                writer.writerow([name, repr(getattr(self, name))])

    @classmethod
    def from_csv(cls, path) -> "MetricsReport":
        values = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                values[row["metric"]] = float(row["value"])
        values["walk_failure_count"] = int(values.get("walk_failure_count", 0))
        return cls(**values)


def divergence_gen_vs_data(model, offsets: NormalizedDualOffsets, X: ImageSet, X_g: ImageSet) -> float:
    """DV estimate with the generated duals as numerator, real duals as denominator."""
    if X.count == 0 or X_g.count == 0:
        raise ArgumentError("both sets must be non-empty")
    return dv_estimate(path_dual_values(model, X_g.pixels, offsets),
                       path_dual_values(model, X.pixels, offsets))


@dataclass
class AuxTrainConfig:
    """Budget for the auxiliary dual model behind the entropy proxy."""

    iters: int = 200
    learning_rate: float = 1e-3
    hidden_dims: tuple[int, ...] = (64, 32)
    clip_norm: float = 1.0
    ema_decay: float = 0.99
    batch_size: int = 512
    seed: int = 0


def entropy_proxy(X_g: ImageSet, aux_cfg: AuxTrainConfig | None = None) -> float:
    """-D(U || X_g) with U uniform on the pixel box; 0 marks maximal entropy.

    A fresh dual model is trained on half the samples to maximize the DV
    estimate and the reported value comes from the held-out half.
    """
    if X_g.count == 0:
        raise ArgumentError("X_g must be non-empty")
    cfg = aux_cfg or AuxTrainConfig()
    rng = np.random.default_rng(cfg.seed)
    uniform = rng.uniform(0.0, 1.0, size=X_g.pixels.shape)
    model = DualFunctionModel.create(
        ModelConfig(hidden_dims=cfg.hidden_dims, step_conditioned=False, seed=cfg.seed),
        X_g.rows, X_g.cols, 1,
    )
    n = X_g.count
    half = max(1, n // 2)
    perm = rng.permutation(n)
    fit_idx = perm[:half]
    eval_idx = perm[half:] if n > 1 else fit_idx
    batch_size = min(cfg.batch_size, half)
    for _ in range(cfg.iters):
        batch = rng.choice(fit_idx, size=batch_size, replace=False)

        def loss(fwd):
            return (fwd(uniform[batch]).mean() - fwd(X_g.pixels[batch]).logmeanexp()) * (-1.0)

        model.grad_params_and_step(loss, cfg.learning_rate, cfg.clip_norm, cfg.ema_decay)
    final = model.ema_model()
    div = dv_estimate(final.forward(uniform[eval_idx]), final.forward(X_g.pixels[eval_idx]))
    if not np.isfinite(div):
        raise NumericalError("entropy proxy training produced a non-finite divergence")
    return -div


def mmi(model, offsets: NormalizedDualOffsets, S: ImageSet,
        schedule: DiffusionSchedule | None = None, seed: int = 0) -> float:
    """Multi-information estimate D(S || marginals of S) along the diffusion path.

    Draws a fresh marginal sample of S, builds the diffusion path, and sums
    the data-ward per-step DV estimates. The offsets cancel inside each
    per-step estimate, so they are accepted for interface symmetry only.
    """
    if schedule is None:
        schedule = default_schedule(S.cols, model.path_steps)
    Z = sample_marginals(S, seed)
    path = build_path(S, Z, schedule)
    return path_divergence(model, path, TOWARD_DATA).value


def cluster_novelty(model, offsets: NormalizedDualOffsets, X: ImageSet, X_g: ImageSet, knn_k: int) -> float:
    """Softmax statistic of local divergences on the union profile, normalized
    by the same statistic on the real profile alone; below 1 means the
    generated samples fill gaps."""
    if X.count + X_g.count < 2 * knn_k:
        raise ArgumentError(f"need at least {2 * knn_k} samples in the union")
    union = np.concatenate([path_dual_values(model, X.pixels, offsets),
                            path_dual_values(model, X_g.pixels, offsets)])
    stat_union = _novelty_stat(union, knn_k)
    stat_real = _novelty_stat(path_dual_values(model, X.pixels, offsets), knn_k)
    if stat_real == 0.0:
        raise NumericalError("degenerate real profile: normalization statistic is zero")
    return stat_union / stat_real


def _novelty_stat(duals: np.ndarray, knn_k: int) -> float:
    d_knn = build_profile(duals, knn_k).d_knn
    return logmeanexp(d_knn)


def frechet_distance(emb_a: np.ndarray, emb_b: np.ndarray) -> float:
    """Frechet distance between Gaussians fitted to two embedding sets.

    The matrix square root comes from a symmetric eigendecomposition of
    S_b^{1/2} S_a S_b^{1/2}, eigenvalues clamped at zero.
    """
    a = np.atleast_2d(np.asarray(emb_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(emb_b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ArgumentError("need at least 2 embeddings per set")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(a.shape[1], a.shape[1])
    cov_b = np.cov(b, rowvar=False).reshape(b.shape[1], b.shape[1])
    sqrt_b = _psd_sqrt(cov_b)
    inner = sqrt_b @ cov_a @ sqrt_b
    eig = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    if eig.min() < -1e-8:
        raise NumericalError(f"cross-covariance not PSD: min eigenvalue {eig.min():.3e}")
    eig = np.clip(eig, 0.0, None)
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.sum(np.sqrt(eig)))


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    if vals.min() < -1e-8:
        raise NumericalError(f"covariance not PSD: min eigenvalue {vals.min():.3e}")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def fid_dual(model, X: ImageSet, X_g: ImageSet) -> float:
    """Frechet distance between penultimate-layer embeddings of the two sets."""
    step = 0 if model.config.step_conditioned else None
    return frechet_distance(model.penultimate(X.pixels, step), model.penultimate(X_g.pixels, step))


def theorem2_check(model, offsets: NormalizedDualOffsets, X: ImageSet, X_g: ImageSet) -> tuple[float, float]:
    """Verify D(X_g || X) <= d_max + log n in the dual space; returns (d_max, margin)."""
    if X.count == 0 or X_g.count == 0:
        raise ArgumentError("both sets must be non-empty")
    f_x = path_dual_values(model, X.pixels, offsets)
    f_g = path_dual_values(model, X_g.pixels, offsets)
    d_max = float(np.max([np.abs(f_x - g).min() for g in f_g]))
    div = dv_estimate(f_g, f_x)
    margin = d_max + np.log(X.count) - div
    if margin < 0:
        raise NumericalError(f"divergence bound violated: margin {margin:.3e}")
    return d_max, float(margin)


@dataclass
class VarianceResult:
    var_direct: float
    var_path: float
    estimates_direct: list[float] = field(default_factory=list)
    estimates_path: list[float] = field(default_factory=list)
    dropped_trials: int = 0


def variance_experiment(distribution_spec, n: int, trials: int, k: int,
                        train_iters: int = 300, learning_rate: float = 2e-3,
                        hidden_dims: tuple[int, ...] = (64, 32), seed: int = 0) -> VarianceResult:
    """Compare estimator variance of the direct (k=1) vs path (k-step) form.

    `distribution_spec` is ("ar1", rho, rows, cols). Each trial draws a fresh
    training set and trains both estimators with identical budgets; each
    estimate is then evaluated on an independent draw from the same
    distribution, so the variance reflects the estimator and not the fit to
    one training sample. Training early-stops on a holdout split, which keeps
    overfitting amplitude (spurious separation of finite samples, worst for
    the direct estimator) out of the measured variance.
    """
    if trials < 10:
        raise ArgumentError("need trials >= 10")
    kind, rho, rows, cols = distribution_spec
    if kind != "ar1":
        raise ArgumentError(f"unknown distribution spec {kind!r}")
    from .trainer import TrainConfig, train

    result = VarianceResult(var_direct=0.0, var_path=0.0)
    for trial in range(trials):
        X, _ = synth_gaussian_ar1(n, rows, cols, rho, seed=seed + 1000 * trial)
        X_eval, _ = synth_gaussian_ar1(n, rows, cols, rho, seed=seed + 1000 * trial + 500)
        estimates = []
        try:
            for steps in (1, k):
                cfg = TrainConfig(
                    iters=train_iters, warmup=train_iters, learning_rate=learning_rate,
                    batch_size=n, path_steps=steps, lambda_cluster=0.0, lambda_gen=0.0,
                    hidden_dims=hidden_dims, seed=seed + 1000 * trial + steps,
                    holdout_fraction=0.2, early_stop_patience=30,
                    marginal_refresh=0,
                )
                model, _, _ = train(X, cfg)
                schedule = default_schedule(cols, steps)
                Z = sample_marginals(X_eval, seed=seed + 1000 * trial + 7)
                path = build_path(X_eval, Z, schedule)
                estimates.append(path_divergence(model, path, TOWARD_DATA).value)
        except Exception:
            result.dropped_trials += 1
            continue
        result.estimates_direct.append(estimates[0])
        result.estimates_path.append(estimates[1])
    if len(result.estimates_direct) < 2:
        raise NumericalError(f"too many dropped trials ({result.dropped_trials})")
    result.var_direct = float(np.var(result.estimates_direct, ddof=1))
    result.var_path = float(np.var(result.estimates_path, ddof=1))
    return result
