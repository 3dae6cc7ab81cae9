"""Ingestion, windowing, the .dds container, and synthetic generators."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ddgen.data import (
    ImageSet,
    NORM_PER_IMAGE,
    SeriesMatrix,
    WindowSpec,
    load_csv,
    read_dds,
    synth_gaussian_ar1,
    synth_two_clusters,
    window_series,
    write_dds,
)
from ddgen.errors import ArgumentError, FormatError, InputError


def test_imageset_validation():
    with pytest.raises(ArgumentError):
        ImageSet(np.zeros((2, 2)))
    with pytest.raises(InputError):
        ImageSet(np.full((1, 2, 2), 1.5))
    with pytest.raises(InputError):
        ImageSet(np.full((1, 2, 2), np.nan))
    empty = ImageSet(np.empty((0, 2, 2)))
    assert empty.count == 0


def test_series_matrix_validation():
    with pytest.raises(ArgumentError):
        SeriesMatrix(np.zeros(3))
    with pytest.raises(InputError):
        SeriesMatrix(np.full((2, 2), np.inf))


def test_window_series_count_and_shape():
    series = SeriesMatrix(np.arange(8.0).reshape(4, 2))
    out = window_series(series, WindowSpec(window=2, stride=2))
    assert out.count == 2
    assert (out.rows, out.cols) == (2, 2)


def test_window_series_constant_is_half():
    series = SeriesMatrix(np.full((6, 3), 2.0))
    out = window_series(series, WindowSpec(window=3))
    assert np.all(out.pixels == 0.5)


def test_window_series_ramp_exact():
    series = SeriesMatrix(np.arange(10.0).reshape(10, 1))
    out = window_series(series, WindowSpec(window=10))
    assert out.count == 1
    assert np.allclose(out.pixels[0, 0], np.arange(10) / 9.0, atol=1e-15)


def test_window_series_per_image_norm():
    series = SeriesMatrix(np.array([[0.0], [1.0], [10.0], [11.0]]))
    out = window_series(series, WindowSpec(window=2, stride=2, normalization=NORM_PER_IMAGE))
    assert np.allclose(out.pixels[0, 0], [0.0, 1.0])
    assert np.allclose(out.pixels[1, 0], [0.0, 1.0])


def test_window_series_never_reads_past_end():
    series = SeriesMatrix(np.arange(14.0).reshape(7, 2))
    out = window_series(series, WindowSpec(window=3, stride=2))
    assert out.count == (7 - 3) // 2 + 1
    with pytest.raises(ArgumentError):
        window_series(SeriesMatrix(np.zeros((2, 1))), WindowSpec(window=5))


def test_window_spec_validation():
    with pytest.raises(ArgumentError):
        WindowSpec(window=0)
    with pytest.raises(ArgumentError):
        WindowSpec(window=2, stride=0)
    with pytest.raises(ArgumentError):
        WindowSpec(window=2, normalization="zscore")


def test_load_csv_with_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    series = load_csv(p)
    assert series.column_names == ["a", "b"]
    assert np.array_equal(series.values, [[1.0, 2.0], [3.0, 4.0]])


def test_load_csv_headerless(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("1.5,2.5\n3.5,4.5\n")
    series = load_csv(p)
    assert series.column_names is None
    assert series.timesteps == 2


def test_load_csv_diagnostics(tmp_path):
    ragged = tmp_path / "r.csv"
    ragged.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="row 2"):
        load_csv(ragged)
    bad = tmp_path / "b.csv"
    bad.write_text("1,2\n3,x\n")
    with pytest.raises(FormatError, match="row 2, column 2"):
        load_csv(bad)
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(FormatError, match="empty"):
        load_csv(empty)


@settings(max_examples=30, deadline=None)
@given(pixels=hnp.arrays(np.float32, hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=5),
                         elements=st.floats(0, 1, width=32, allow_nan=False)))
def test_dds_roundtrip_lossless(tmp_path_factory, pixels):
    path = tmp_path_factory.mktemp("dds") / "x.dds"
    original = ImageSet(pixels.astype(np.float64))
    write_dds(original, path)
    loaded = read_dds(path)
    assert np.array_equal(loaded.pixels.astype(np.float32), pixels)


def test_dds_double_roundtrip_bitexact(tmp_path):
    X, _ = synth_gaussian_ar1(5, 3, 4, 0.3, seed=0)
    p1, p2 = tmp_path / "a.dds", tmp_path / "b.dds"
    write_dds(X, p1)
    write_dds(read_dds(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dds_length_arithmetic(tmp_path):
    X = ImageSet(np.random.default_rng(0).uniform(size=(3, 2, 5)))
    p = tmp_path / "x.dds"
    write_dds(X, p)
    assert p.stat().st_size == 16 + 4 * 3 * 2 * 5


def test_dds_malformed_diagnostics(tmp_path):
    X = ImageSet(np.random.default_rng(1).uniform(size=(2, 2, 2)))
    good = tmp_path / "good.dds"
    write_dds(X, good)
    blob = good.read_bytes()

    magic = tmp_path / "magic.dds"
    magic.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(FormatError, match="byte offset 0"):
        read_dds(magic)

    short = tmp_path / "short.dds"
    short.write_bytes(blob[:-4])  # one float missing
    with pytest.raises(FormatError, match=f"expected {len(blob)} bytes, found {len(blob) - 4}"):
        read_dds(short)

    header_only = tmp_path / "h.dds"
    header_only.write_bytes(b"DDS1\x01")
    with pytest.raises(FormatError, match="truncated header"):
        read_dds(header_only)


def test_dds_header_fields(tmp_path):
    X = ImageSet(np.random.default_rng(2).uniform(size=(4, 3, 2)))
    p = tmp_path / "x.dds"
    write_dds(X, p)
    blob = p.read_bytes()
    assert blob[:4] == b"DDS1"
    assert struct.unpack("<III", blob[4:16]) == (4, 3, 2)


def test_synth_ar1_analytic_values():
    _, mmi0 = synth_gaussian_ar1(10, 2, 2, 0.0, seed=0)
    assert mmi0 == pytest.approx(0.0, abs=1e-15)
    _, mmi = synth_gaussian_ar1(10, 4, 4, 0.5, seed=0)
    assert mmi == pytest.approx(-7.5 * np.log(0.75), abs=1e-12)
    assert mmi == pytest.approx(2.1572, abs=5e-4)
    with pytest.raises(ArgumentError):
        synth_gaussian_ar1(10, 2, 2, 1.0, seed=0)


def test_synth_ar1_adjacent_correlation():
    X, _ = synth_gaussian_ar1(5000, 4, 4, 0.5, seed=3)
    flat = X.pixels.reshape(5000, -1)
    corrs = [np.corrcoef(flat[:, j], flat[:, j + 1])[0, 1] for j in range(15)]
    assert abs(np.mean(corrs) - 0.5) < 0.05


def test_synth_ar1_seed_deterministic():
    a, _ = synth_gaussian_ar1(20, 3, 3, 0.4, seed=9)
    b, _ = synth_gaussian_ar1(20, 3, 3, 0.4, seed=9)
    assert np.array_equal(a.pixels, b.pixels)
    assert a.pixels.min() >= 0.0 and a.pixels.max() <= 1.0


def test_synth_two_clusters_properties():
    X, labels = synth_two_clusters(200, 2, 2, separation=0.6, seed=0)
    assert (labels == 0).sum() == 100 and (labels == 1).sum() == 100
    means = X.pixels.reshape(200, -1).mean(axis=1)
    threshold = 0.5
    predicted = (means > threshold).astype(int)
    assert np.array_equal(predicted, labels)  # 100% separable at 0.6
    with pytest.raises(ArgumentError):
        synth_two_clusters(5, 2, 2, 0.5, seed=0)


def test_synth_two_clusters_degenerate_separation():
    X, labels = synth_two_clusters(20, 2, 2, separation=0.0, seed=1)
    assert X.count == 20
    means = X.pixels.reshape(20, -1).mean(axis=1)
    # single cluster: label means are statistically indistinguishable
    assert abs(means[labels == 0].mean() - means[labels == 1].mean()) < 0.1
