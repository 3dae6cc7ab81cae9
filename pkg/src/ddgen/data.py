"""Dataset ingestion, the on-disk tensor format, and synthetic generators.

Images are stored as float64 in memory (values in [0, 1]) and as little-endian
float32 on disk in the ``.dds`` container.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, InputError

DDS_MAGIC = b"DDS1"

TAG_REAL = "real"
TAG_MARGINAL = "marginal"
TAG_GENERATED = "generated"


def intermediate_tag(step: int) -> str:
    return f"intermediate({step})"


@dataclass
class ImageSet:
    """An ordered collection of single-channel images with values in [0, 1]."""

    pixels: np.ndarray  # (n, rows, cols) float64
    tag: str = TAG_REAL

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3:
            raise ArgumentError(f"pixels must be (n, rows, cols), got shape {self.pixels.shape}")
        if self.pixels.size and not np.isfinite(self.pixels).all():
            raise InputError("image pixels must be finite")
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise InputError("image pixels must lie in [0, 1]")

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def rows(self) -> int:
        return self.pixels.shape[1]

    @property
    def cols(self) -> int:
        return self.pixels.shape[2]

    def subset(self, indices) -> "ImageSet":
        return ImageSet(self.pixels[np.asarray(indices)], tag=self.tag)


@dataclass
class SeriesMatrix:
    """A multivariate time series: T timesteps by C channels."""

    values: np.ndarray  # (T, C) float64
    column_names: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ArgumentError(f"series must be (T, C), got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise InputError("series values must be finite")

    @property
    def timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


NORM_GLOBAL = "global_minmax"
NORM_PER_IMAGE = "per_image_minmax"


@dataclass
class WindowSpec:
    window: int
    stride: int = 1
    normalization: str = NORM_GLOBAL

    def __post_init__(self):
        if self.window < 1:
            raise ArgumentError("window must be >= 1")
        if self.stride < 1:
            raise ArgumentError("stride must be >= 1")
        if self.normalization not in (NORM_GLOBAL, NORM_PER_IMAGE):
            raise ArgumentError(f"unknown normalization {self.normalization!r}")


def window_series(series: SeriesMatrix, spec: WindowSpec) -> ImageSet:
    """Cut a series into images: channels become rows, time becomes columns.

    With a zero value range (constant input) all pixels are set to 0.5.
    """
    T, C = series.timesteps, series.channels
    if T < spec.window:
        raise ArgumentError(f"series length {T} shorter than window {spec.window}")
    count = (T - spec.window) // spec.stride + 1
    images = np.empty((count, C, spec.window), dtype=np.float64)
    for i in range(count):
        start = i * spec.stride
        images[i] = series.values[start : start + spec.window].T
    if spec.normalization == NORM_GLOBAL:
        lo, hi = series.values.min(), series.values.max()
        images = _minmax(images, lo, hi)
    else:
        for i in range(count):
            images[i] = _minmax(images[i], images[i].min(), images[i].max())
    return ImageSet(images, tag=TAG_REAL)


def _minmax(block: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi - lo <= 0.0:
        return np.full_like(block, 0.5)
    return (block - lo) / (hi - lo)


def load_csv(path) -> SeriesMatrix:
    """Parse a CSV of timesteps x channels, with an optional header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    names = None
    start = 0
    if not _all_numeric(rows[0]):
        names = [c.strip() for c in rows[0]]
        start = 1
        if start == len(rows):
            raise FormatError(f"{path}: header but no data rows")
    width = len(rows[start])
    data = np.empty((len(rows) - start, width), dtype=np.float64)
    for i, row in enumerate(rows[start:], start=start):
        if len(row) != width:
            raise FormatError(f"{path}: ragged row {i + 1} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                data[i - start, j] = float(cell)
            except ValueError:
                raise FormatError(f"{path}: non-numeric cell at row {i + 1}, column {j + 1}: {cell!r}") from None
    return SeriesMatrix(data, column_names=names)


def _all_numeric(row) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return False
    return True


def write_dds(image_set: ImageSet, path) -> None:
    """Write the `.dds` container: magic, u32 n/rows/cols, f32 pixels (LE)."""
    n, rows, cols = image_set.count, image_set.rows, image_set.cols
    with open(path, "wb") as fh:
        fh.write(DDS_MAGIC)
        fh.write(struct.pack("<III", n, rows, cols))
        fh.write(image_set.pixels.astype("<f4").tobytes())


def read_dds(path, tag: str = TAG_REAL) -> ImageSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DDS_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r} at byte offset 0, expected {DDS_MAGIC!r}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header, {len(blob)} bytes, expected at least 16")
    n, rows, cols = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * n * rows * cols
    if len(blob) != expected:
        raise FormatError(f"{path}: payload length mismatch, expected {expected} bytes, found {len(blob)}")
    pixels = np.frombuffer(blob, dtype="<f4", offset=16).astype(np.float64).reshape(n, rows, cols)
    return ImageSet(pixels, tag=tag)


def synth_gaussian_ar1(n: int, rows: int, cols: int, rho: float, seed: int):
    """Gaussian images with AR(1) pixel correlation rho^|i-j| over the flat index.

    Values are clipped to +-3 and mapped affinely to [0, 1]. Returns the set
    and the analytic multi-information of the unclipped Gaussian,
    -(D-1)/2 * ln(1 - rho^2) nats.
    """
    if abs(rho) >= 1.0:
        raise ArgumentError("need |rho| < 1")
    dim = rows * cols
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, dim))
    x = np.empty_like(eps)
    x[:, 0] = eps[:, 0]
    scale = np.sqrt(1.0 - rho * rho)
    for j in range(1, dim):
        x[:, j] = rho * x[:, j - 1] + scale * eps[:, j]
    pixels = (np.clip(x, -3.0, 3.0) + 3.0) / 6.0
    analytic_mmi = -0.5 * (dim - 1) * np.log(1.0 - rho * rho)
    return ImageSet(pixels.reshape(n, rows, cols), tag=TAG_REAL), float(analytic_mmi)


def synth_two_clusters(n: int, rows: int, cols: int, separation: float, seed: int):
    """Two image clusters with means 0.5 +- separation/2 plus sigma=0.05 noise."""
    if separation < 0.0:
        raise ArgumentError("separation must be > 0")
    if n % 2 != 0:
        raise ArgumentError("n must be even")
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2 :] = 1
    means = np.where(labels == 0, 0.5 - separation / 2.0, 0.5 + separation / 2.0)
    pixels = means[:, None, None] + 0.05 * rng.standard_normal((n, rows, cols))
    pixels = np.clip(pixels, 0.0, 1.0)
    return ImageSet(pixels, tag=TAG_REAL), labels
