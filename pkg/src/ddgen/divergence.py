"""Empirical Donsker-Varadhan divergence and its path-summed decomposition.

All values are in nats. The estimator for samples Znum vs Zden is
mean(f(Znum)) - logmeanexp(f(Zden)), with logmeanexp computed max-shifted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, InputError

TOWARD_MARGINAL = "toward_marginal"
TOWARD_DATA = "toward_data"


def logmeanexp(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ArgumentError("logmeanexp of empty vector")
    m = v.max()
    return float(m + np.log(np.mean(np.exp(v - m))))


def dv_estimate(f_num: np.ndarray, f_den: np.ndarray) -> float:
    """mean(f_num) - logmeanexp(f_den)."""
    num = np.asarray(f_num, dtype=np.float64)
    den = np.asarray(f_den, dtype=np.float64)
    if num.size == 0 or den.size == 0:
        raise ArgumentError("dv_estimate requires non-empty inputs")
    if not (np.isfinite(num).all() and np.isfinite(den).all()):
        raise InputError("dv_estimate requires finite inputs")
    return float(num.mean()) - logmeanexp(den)


@dataclass
class DivergenceEstimate:
    value: float
    numerator_count: int
    denominator_count: int
    per_step: list[float] | None = None


@dataclass
class NormalizedDualOffsets:
    """Per-step logmeanexp of the dual over the matching intermediate set."""

    eta: np.ndarray  # (k,)

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.float64)

    @property
    def steps(self) -> int:
        return int(self.eta.shape[0])


def normalize_dual(f_values_per_step) -> NormalizedDualOffsets:
    """Offsets eta[j] = logmeanexp of the step-j dual over Z^j."""
    if len(f_values_per_step) == 0:
        raise ArgumentError("need at least one step")
    eta = []
    for j, values in enumerate(f_values_per_step):
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            raise ArgumentError(f"empty dual-value vector at step {j}")
        eta.append(logmeanexp(v))
    return NormalizedDualOffsets(np.array(eta))


def offsets_for(model, path_sets) -> NormalizedDualOffsets:
    """Offsets computed from a model over a diffusion path [Z^0, ..., Z^k]."""
    return normalize_dual([model.forward(path_sets[j].pixels, j) for j in range(len(path_sets) - 1)])


def path_dual_values(model, images: np.ndarray, offsets: NormalizedDualOffsets) -> np.ndarray:
    """Canonical dual coordinates: sum over steps of f(x, j) - eta[j]."""
    if model.config.step_conditioned and offsets.steps != model.path_steps:
        raise ArgumentError(f"model has {model.path_steps} steps, offsets have {offsets.steps}")
    total = np.zeros(np.asarray(images).reshape(-1, model.rows, model.cols).shape[0])
    for j in range(offsets.steps):
        total = total + model.forward(images, j if model.config.step_conditioned else None) - offsets.eta[j]
    return total


def path_dual_value(model, image: np.ndarray, offsets: NormalizedDualOffsets) -> float:
    return float(path_dual_values(model, image, offsets)[0])


def path_divergence(model, path_samples, direction: str = TOWARD_MARGINAL) -> DivergenceEstimate:
    """Sum of per-step DV estimates along a diffusion path [Z^0=X, ..., Z^k=Z].

    toward_marginal: per_step[j] = dv(f(Z^{j+1}, j), f(Z^j, j)), the estimate
    of D(Z || X). toward_data swaps numerator and denominator per step, the
    estimate of D(X || Z).
    """
    if len(path_samples) < 2:
        raise ArgumentError("path needs at least 2 sample sets")
    if direction not in (TOWARD_MARGINAL, TOWARD_DATA):
        raise ArgumentError(f"unknown direction {direction!r}")
    k = len(path_samples) - 1
    per_step = []
    for j in range(k):
        step = j if model.config.step_conditioned else None
        f_lo = model.forward(path_samples[j].pixels, step)
        f_hi = model.forward(path_samples[j + 1].pixels, step)
        if direction == TOWARD_MARGINAL:
            per_step.append(dv_estimate(f_hi, f_lo))
        else:
            per_step.append(dv_estimate(f_lo, f_hi))
    value = per_step[0] if k == 1 else float(np.sum(per_step))
    return DivergenceEstimate(
        value=value,
        numerator_count=path_samples[-1].count if direction == TOWARD_MARGINAL else path_samples[0].count,
        denominator_count=path_samples[0].count if direction == TOWARD_MARGINAL else path_samples[-1].count,
        per_step=per_step,
    )
