"""Generate novel images by gradient walks toward target dual coordinates.

Targets are laid in the empty dual-space gaps at selected cut points; each
walk follows sign(target - f(x)) * df/dx with pixel clamping, and results
whose dual coordinate falls outside the real samples' range are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import build_profile, select_cut_points
from .data import ImageSet, TAG_GENERATED
from .divergence import NormalizedDualOffsets, path_dual_values
from .errors import ArgumentError, WalkError


@dataclass
class WalkConfig:
    targets_per_gap: int = 8
    step_size: float = 0.05
    max_steps: int = 200
    tol: float | None = None  # None: 0.02 * dual range of the real set
    noise_scale: float | None = None  # None: 0.01 * step_size
    seed: int = 0

    def __post_init__(self):
        if self.targets_per_gap < 1:
            raise ArgumentError("targets_per_gap must be >= 1")
        if self.step_size <= 0.0:
            raise ArgumentError("step_size must be > 0")
        if self.max_steps < 1:
            raise ArgumentError("max_steps must be >= 1")
        if self.tol is not None and self.tol <= 0.0:
            raise ArgumentError("tol must be > 0")
        if self.noise_scale is not None and self.noise_scale < 0.0:
            raise ArgumentError("noise_scale must be >= 0")

    def resolved_noise(self) -> float:
        return self.noise_scale if self.noise_scale is not None else 0.01 * self.step_size

    def resolved_tol(self, dual_range: float) -> float:
        if self.tol is not None:
            return self.tol
        return max(0.02 * dual_range, 1e-12)


@dataclass
class WalkStats:
    attempts: int = 0
    converged: int = 0
    retained: int = 0

    @property
    def success_rate(self) -> float:
        return self.retained / self.attempts if self.attempts else 0.0


def _path_grad(model, images: np.ndarray) -> np.ndarray:
    """Gradient of the path dual coordinate: sum of per-step input gradients."""
    if model.config.step_conditioned:
        total = np.zeros_like(images)
        for j in range(model.path_steps):
            total += model.grad_input(images, j)
        return total
    return model.grad_input(images, None)


def walk_batch(model, offsets: NormalizedDualOffsets, starts: np.ndarray,
               targets: np.ndarray, tol: float, cfg: WalkConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Run all walks in lockstep. Returns (final images, converged mask)."""
    x = np.clip(np.asarray(starts, dtype=np.float64).copy(), 0.0, 1.0)
    targets = np.asarray(targets, dtype=np.float64)
    dual = path_dual_values(model, x, offsets)
    done = np.abs(dual - targets) <= tol
    noise_scale = cfg.resolved_noise()
    for _ in range(cfg.max_steps):
        if done.all():
            break
        active = ~done
        grad = _path_grad(model, x[active])
        if not np.isfinite(grad).all():
            raise WalkError("non-finite gradient during walk")
        sign = np.sign(targets[active] - dual[active])[:, None, None]
        step = cfg.step_size * sign * grad
        if noise_scale > 0.0:
            step = step + noise_scale * rng.standard_normal(grad.shape)
        x[active] = np.clip(x[active] + step, 0.0, 1.0)
        dual[active] = path_dual_values(model, x[active], offsets)
        done = done | (np.abs(dual - targets) <= tol)
    return x, done


def gradient_walk(model, offsets: NormalizedDualOffsets, x_start: np.ndarray,
                  target: float, cfg: WalkConfig, tol: float | None = None):
    """Walk one image toward a target dual value; None means budget exhausted."""
    if not np.isfinite(target):
        raise ArgumentError("target must be finite")
    if tol is None:
        tol = cfg.tol if cfg.tol is not None else 1e-3
    rng = np.random.default_rng(cfg.seed)
    x, done = walk_batch(model, offsets, np.asarray(x_start)[None], np.array([target]), tol, cfg, rng)
    return x[0] if done[0] else None


def _gap_targets(model, offsets, X: ImageSet, knn_k: int, c: int, cfg: WalkConfig):
    """Profile the real set, pick cuts, and lay out (start, target) pairs."""
    duals = path_dual_values(model, X.pixels, offsets)
    profile = build_profile(duals, knn_k)
    cuts = select_cut_points(profile, c)
    dual_range = float(profile.sorted_values[-1] - profile.sorted_values[0])
    tol = cfg.resolved_tol(dual_range)
    starts, targets = [], []
    for rank in cuts.indices:
        left_idx = profile.sort_permutation[rank - 1]
        right_idx = profile.sort_permutation[rank]
        a, b = profile.sorted_values[rank - 1], profile.sorted_values[rank]
        for i in range(1, cfg.targets_per_gap + 1):
            t = a + (b - a) * i / (cfg.targets_per_gap + 1)
            # start from the nearer gap endpoint; alternate on exact ties
            if abs(t - a) < abs(t - b) or (abs(t - a) == abs(t - b) and i % 2 == 1):
                starts.append(X.pixels[left_idx])
            else:
                starts.append(X.pixels[right_idx])
            targets.append(t)
    bounds = (float(duals.min()), float(duals.max()))
    return np.array(starts), np.array(targets), tol, bounds


def sample_via_gradient_walk(model, offsets: NormalizedDualOffsets, X: ImageSet,
                             knn_k: int, c: int, cfg: WalkConfig) -> tuple[ImageSet, WalkStats]:
    """Fill the c widest dual-space gaps of X with gradient-walked samples.

    Converged walks whose dual value leaves [min, max] of the real duals are
    discarded (the OOD filter). An empty result is a warning, not an error.
    """
    starts, targets, tol, bounds = _gap_targets(model, offsets, X, knn_k, c, cfg)
    rng = np.random.default_rng(cfg.seed)
    x, done = walk_batch(model, offsets, starts, targets, tol, cfg, rng)
    stats = WalkStats(attempts=len(targets), converged=int(done.sum()))
    if stats.converged == 0:
        return ImageSet(np.empty((0, X.rows, X.cols)), tag=TAG_GENERATED), stats
    kept = x[done]
    duals = path_dual_values(model, kept, offsets)
    in_range = (duals >= bounds[0]) & (duals <= bounds[1])
    kept = kept[in_range]
    stats.retained = int(in_range.sum())
    return ImageSet(kept, tag=TAG_GENERATED), stats
