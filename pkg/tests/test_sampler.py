"""Gradient walks toward dual-space targets and gap-filling sampling."""

import numpy as np
import pytest

from ddgen.data import ImageSet
from ddgen.divergence import NormalizedDualOffsets, path_dual_values
from ddgen.errors import ArgumentError
from ddgen.model import DualFunctionModel, ModelConfig
from ddgen.sampler import WalkConfig, gradient_walk, sample_via_gradient_walk, walk_batch


def linear_model(rows=2, cols=2, scale=None):
    """A model whose dual is effectively linear in the pixels."""
    cfg = ModelConfig(hidden_dims=(4,), step_conditioned=False, seed=0)
    m = DualFunctionModel.create(cfg, rows, cols, 1)
    # small first layer keeps tanh in its near-linear regime, so the dual is
    # a monotone function of the mean pixel value
    m.weights[0][...] = 0.2
    m.biases[0][...] = 0.0
    m.weights[1][...] = 1.0
    m.biases[1][...] = 0.0
    return m


def zero_model(rows=2, cols=2):
    cfg = ModelConfig(hidden_dims=(4,), step_conditioned=False, seed=0)
    m = DualFunctionModel.create(cfg, rows, cols, 1)
    for w in m.weights:
        w[...] = 0.0
    for b in m.biases:
        b[...] = 0.0
    return m


OFF1 = NormalizedDualOffsets(np.zeros(1))


def test_walk_config_validation():
    with pytest.raises(ArgumentError):
        WalkConfig(targets_per_gap=0)
    with pytest.raises(ArgumentError):
        WalkConfig(step_size=0.0)
    with pytest.raises(ArgumentError):
        WalkConfig(max_steps=0)
    with pytest.raises(ArgumentError):
        WalkConfig(tol=-1.0)
    with pytest.raises(ArgumentError):
        WalkConfig(noise_scale=-0.1)


def test_walk_already_at_target_returns_start():
    m = linear_model()
    x = np.full((2, 2), 0.5)
    target = float(path_dual_values(m, x, OFF1)[0])
    cfg = WalkConfig(noise_scale=0.0, tol=1e-6, seed=0)
    out = gradient_walk(m, OFF1, x, target, cfg)
    assert out is not None
    assert np.array_equal(out, x)


def test_walk_linear_model_converges():
    m = linear_model()
    x = np.full((2, 2), 0.5)
    start_dual = float(path_dual_values(m, x, OFF1)[0])
    target = start_dual + 0.1
    cfg = WalkConfig(step_size=0.01, noise_scale=0.0, tol=1e-3, max_steps=200, seed=0)
    out = gradient_walk(m, OFF1, x, target, cfg)
    assert out is not None
    final = float(path_dual_values(m, out, OFF1)[0])
    assert abs(final - target) <= 1e-3
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_walk_zero_gradient_fails():
    m = zero_model()
    x = np.full((2, 2), 0.5)
    cfg = WalkConfig(noise_scale=0.0, tol=1e-6, max_steps=10, seed=0)
    assert gradient_walk(m, OFF1, x, 1.0, cfg) is None


def test_walk_rejects_nonfinite_target():
    m = linear_model()
    with pytest.raises(ArgumentError):
        gradient_walk(m, OFF1, np.full((2, 2), 0.5), np.inf, WalkConfig())


def test_walk_batch_outputs_clamped_and_deterministic():
    m = linear_model()
    rng = np.random.default_rng(3)
    starts = rng.uniform(size=(6, 2, 2))
    duals = path_dual_values(m, starts, OFF1)
    targets = duals + 0.05
    cfg = WalkConfig(step_size=0.02, noise_scale=0.0, seed=5)
    x1, done1 = walk_batch(m, OFF1, starts, targets, 1e-3, cfg, np.random.default_rng(5))
    x2, done2 = walk_batch(m, OFF1, starts, targets, 1e-3, cfg, np.random.default_rng(5))
    assert np.array_equal(x1, x2)
    assert np.array_equal(done1, done2)
    assert x1.min() >= 0.0 and x1.max() <= 1.0


def two_level_set(n=40, seed=0):
    rng = np.random.default_rng(seed)
    lows = np.clip(0.25 + 0.01 * rng.standard_normal((n // 2, 2, 2)), 0, 1)
    highs = np.clip(0.75 + 0.01 * rng.standard_normal((n // 2, 2, 2)), 0, 1)
    return ImageSet(np.concatenate([lows, highs]))


def test_sample_via_gradient_walk_fills_gap():
    m = linear_model()
    X = two_level_set()
    cfg = WalkConfig(targets_per_gap=4, step_size=0.02, noise_scale=0.0, max_steps=300, seed=7)
    Xg, stats = sample_via_gradient_walk(m, OFF1, X, knn_k=4, c=1, cfg=cfg)
    assert stats.attempts == 4
    assert stats.retained >= 1
    duals = path_dual_values(m, Xg.pixels, OFF1)
    real = path_dual_values(m, X.pixels, OFF1)
    assert duals.min() >= real.min() and duals.max() <= real.max()
    assert Xg.pixels.min() >= 0.0 and Xg.pixels.max() <= 1.0
    assert Xg.tag == "generated"
    # generated duals land in the inter-cluster gap
    lo_max = np.sort(real)[len(real) // 2 - 1]
    hi_min = np.sort(real)[len(real) // 2]
    assert np.all(duals > lo_max) and np.all(duals < hi_min)


def test_sample_all_failures_returns_empty():
    # one step cannot bridge the inter-cluster gap at a vanishing tolerance
    m = linear_model()
    X = two_level_set(seed=1)
    cfg = WalkConfig(targets_per_gap=2, max_steps=1, noise_scale=0.0, tol=1e-12, seed=8)
    Xg, stats = sample_via_gradient_walk(m, OFF1, X, knn_k=4, c=1, cfg=cfg)
    assert Xg.count == 0
    assert stats.converged == 0
    assert stats.retained == 0
    assert stats.success_rate == 0.0


def test_sample_deterministic_given_seed():
    m = linear_model()
    X = two_level_set(seed=2)
    cfg = WalkConfig(targets_per_gap=3, step_size=0.02, max_steps=200, seed=9)
    a, _ = sample_via_gradient_walk(m, OFF1, X, knn_k=4, c=1, cfg=cfg)
    b, _ = sample_via_gradient_walk(m, OFF1, X, knn_k=4, c=1, cfg=cfg)
    assert np.array_equal(a.pixels, b.pixels)


def test_targets_strictly_interior_midpoint_case():
    m = linear_model()
    X = two_level_set(seed=3)
    cfg = WalkConfig(targets_per_gap=1, step_size=0.02, noise_scale=0.0, max_steps=400, seed=10)
    Xg, stats = sample_via_gradient_walk(m, OFF1, X, knn_k=4, c=1, cfg=cfg)
    assert stats.attempts == 1
    if Xg.count:
        real = path_dual_values(m, X.pixels, OFF1)
        srt = np.sort(real)
        gap_lo, gap_hi = srt[len(srt) // 2 - 1], srt[len(srt) // 2]
        mid = (gap_lo + gap_hi) / 2.0
        tol = cfg.resolved_tol(float(srt[-1] - srt[0]))
        dual = path_dual_values(m, Xg.pixels, OFF1)[0]
        assert abs(dual - mid) <= tol + 1e-12
