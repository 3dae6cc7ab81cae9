"""Localized divergence between nearest neighbors in the 1-D dual space.

Sorting the dual coordinates gives a profile; at every interior cut rank j
the local divergence is the DV estimate between the k right-neighbors
(numerator) and k left-neighbors (denominator). Cut points with maximal
local divergence separate clusters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .divergence import dv_estimate, logmeanexp
from .errors import ArgumentError


@dataclass
class DualProfile:
    sorted_values: np.ndarray  # ascending dual coordinates
    sort_permutation: np.ndarray  # sorted rank -> original index
    d_knn: np.ndarray  # one per interior cut rank, length n - 2k + 1
    knn_k: int

    @property
    def n(self) -> int:
        return int(self.sorted_values.shape[0])

    def cut_ranks(self) -> np.ndarray:
        """The cut ranks covered by d_knn: [knn_k, n - knn_k]."""
        return np.arange(self.knn_k, self.n - self.knn_k + 1)


@dataclass
class CutPointSet:
    indices: np.ndarray  # cut ranks, sorted ascending

    @property
    def count(self) -> int:
        return int(self.indices.shape[0])


def build_profile(dual_values: np.ndarray, knn_k: int) -> DualProfile:
    """Sort dual values (stable, ties by original index) and compute d_knn."""
    values = np.asarray(dual_values, dtype=np.float64)
    if knn_k < 2:
        raise ArgumentError("knn_k must be >= 2")
    n = values.shape[0]
    if n < 2 * knn_k:
        raise ArgumentError(f"need at least {2 * knn_k} values, got {n}")
    perm = np.argsort(values, kind="stable")
    sorted_values = values[perm]
    d_knn = np.empty(n - 2 * knn_k + 1)
    for i, j in enumerate(range(knn_k, n - knn_k + 1)):
        d_knn[i] = dv_estimate(sorted_values[j : j + knn_k], sorted_values[j - knn_k : j])
    return DualProfile(sorted_values, perm, d_knn, knn_k)


def clustering_loss(d_knn: np.ndarray) -> float:
    """sum(d_knn) - logsumexp(d_knn); minimizing trades mean down, max up."""
    d = np.asarray(d_knn, dtype=np.float64)
    if d.size == 0:
        raise ArgumentError("clustering_loss of empty vector")
    return float(d.sum()) - (logmeanexp(d) + float(np.log(d.size)))


def select_cut_points(profile: DualProfile, c: int) -> CutPointSet:
    """The c cut ranks with largest d_knn; ties go to the smaller rank."""
    if c < 1:
        raise ArgumentError("c must be >= 1")
    if c > profile.d_knn.shape[0]:
        raise ArgumentError(f"c={c} exceeds the {profile.d_knn.shape[0]} available cut points")
    # lexsort: primary key -d_knn, secondary key rank (already the tie order)
    order = np.lexsort((np.arange(profile.d_knn.shape[0]), -profile.d_knn))
    picked = np.sort(order[:c]) + profile.knn_k
    return CutPointSet(indices=picked)


def profile_to_csv(profile: DualProfile, path) -> None:
    """Export `rank,dual_value,original_index,d_knn` (d_knn blank off-range)."""
    lo, hi = profile.knn_k, profile.n - profile.knn_k
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "dual_value", "original_index", "d_knn"])
        for rank in range(profile.n):
            d = ""
            if lo <= rank <= hi:
                d = repr(float(profile.d_knn[rank - lo]))
            writer.writerow([rank, repr(float(profile.sorted_values[rank])), int(profile.sort_permutation[rank]), d])


def profile_from_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a profile CSV back: (dual_values sorted, cut ranks, d_knn)."""
    values, ranks, d_knn = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            values.append(float(row["dual_value"]))
            if row["d_knn"]:
                ranks.append(int(row["rank"]))
                d_knn.append(float(row["d_knn"]))
    return np.array(values), np.array(ranks, dtype=np.int64), np.array(d_knn)
