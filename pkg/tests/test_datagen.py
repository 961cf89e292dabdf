import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from tcm_al import EmbeddingDataset, kmeans
from tcm_al.datagen import (
    LongTailSpec,
    MixtureSpec,
    gaussian_mixture,
    load_embeddings,
    longtail_sizes,
    longtail_subsample,
    save_embeddings,
)
from tcm_al.errors import FormatError, InvalidSpecError


def test_mixture_shape_and_labels():
    ds = gaussian_mixture(MixtureSpec(2, 3, 4, 5.0, 1.0, seed=0))
    assert ds.features.shape == (6, 4)
    assert ds.labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_mixture_deterministic():
    spec = MixtureSpec(3, 10, 5, 4.0, 0.5, seed=21)
    assert gaussian_mixture(spec).features.tobytes() == gaussian_mixture(spec).features.tobytes()


def test_mixture_zero_separation_overlaps():
    ds = gaussian_mixture(MixtureSpec(2, 2000, 3, 0.0, 1.0, seed=1))
    m0 = ds.features[ds.labels == 0].mean(0)
    m1 = ds.features[ds.labels == 1].mean(0)
    assert np.linalg.norm(m0 - m1) < 0.2


def test_mixture_center_distances_scale_with_separation():
    def centers(s):
        ds = gaussian_mixture(MixtureSpec(3, 4000, 6, s, 0.1, seed=5))
        return np.array([ds.features[ds.labels == c].mean(0) for c in range(3)])

    c5, c10 = centers(5.0), centers(10.0)
    d5 = np.linalg.norm(c5[0] - c5[1])
    d10 = np.linalg.norm(c10[0] - c10[1])
    assert d10 / d5 == pytest.approx(2.0, rel=0.01)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_mixture_invalid_sigma(sigma):
    with pytest.raises(InvalidSpecError):
        gaussian_mixture(MixtureSpec(2, 3, 2, 1.0, sigma))


@pytest.mark.parametrize("class_count", [4, 8])
def test_well_separated_mixture_is_recovered_by_kmeans(class_count):
    for seed in range(5):
        ds = gaussian_mixture(MixtureSpec(class_count, 100, 8, 10.0, 1.0, seed=seed))
        assign = kmeans(ds.features, class_count, seed).assignment
        table = np.zeros((class_count, class_count))
        np.add.at(table, (assign, ds.labels), 1)
        rows, cols = linear_sum_assignment(-table)
        assert table[rows, cols].sum() / ds.n_samples >= 0.99


def test_longtail_examples():
    base = gaussian_mixture(MixtureSpec(3, 100, 2, 5.0, 1.0, seed=0))
    # 100 * 10 ** -0.5 = 31.62
    assert longtail_subsample(base, LongTailSpec(10, seed=0)).class_sizes().tolist() == [100, 32, 10]
    two = gaussian_mixture(MixtureSpec(2, 100, 2, 5.0, 1.0, seed=0))
    assert longtail_subsample(two, LongTailSpec(5)).class_sizes().tolist() == [100, 20]
    same = longtail_subsample(base, LongTailSpec(1))
    assert same.features.tobytes() == base.features.tobytes()


def test_longtail_errors():
    base = gaussian_mixture(MixtureSpec(3, 10, 2, 5.0, 1.0))
    with pytest.raises(InvalidSpecError):
        longtail_subsample(base, LongTailSpec(11))
    unbalanced = base.subset(np.arange(25))
    with pytest.raises(InvalidSpecError):
        longtail_subsample(unbalanced, LongTailSpec(2))


def test_longtail_subset_rows_come_from_source():
    base = gaussian_mixture(MixtureSpec(4, 50, 3, 5.0, 1.0, seed=2))
    lt = longtail_subsample(base, LongTailSpec(5, seed=8))
    rows = {r.tobytes() for r in base.features}
    assert all(r.tobytes() in rows for r in lt.features)


def test_round_trip(tmp_path, rng):
    ds = EmbeddingDataset(rng.standard_normal((7, 3)), rng.integers(0, 4, 7), 5)
    save_embeddings(ds, tmp_path / "f.emb", tmp_path / "l.lab")
    back = load_embeddings(tmp_path / "f.emb", tmp_path / "l.lab")
    assert back.features.tobytes() == ds.features.tobytes()
    assert back.labels.tolist() == ds.labels.tolist()
    assert back.class_count == 5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 9), st.integers(2, 6))
def test_round_trip_property(tmp_path_factory, seed, n, d, c):
    rng = np.random.default_rng(seed)
    ds = EmbeddingDataset(rng.standard_normal((n, d)) * 1e3, rng.integers(0, c, n), c)
    path = tmp_path_factory.mktemp("rt")
    save_embeddings(ds, path / "f.emb", path / "l.lab")
    back = load_embeddings(path / "f.emb", path / "l.lab")
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.labels, ds.labels) and back.class_count == c


def test_emb_layout_is_documented_bytes(tmp_path):
    ds = EmbeddingDataset(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), np.array([0, 1]), 2)
    save_embeddings(ds, tmp_path / "f.emb", tmp_path / "l.lab")
    raw = (tmp_path / "f.emb").read_bytes()
    assert raw == b"EMB v1 2 3\n" + np.arange(1, 7, dtype="<f4").tobytes()
    assert (tmp_path / "l.lab").read_text() == "LAB v1 2 2\n0\n1\n"


def test_load_infers_dims_and_class_count(tmp_path):
    (tmp_path / "f.emb").write_bytes(b"EMB v1 2 3\n" + np.zeros(6, dtype="<f4").tobytes())
    (tmp_path / "l.lab").write_text("0\n4\n")
    ds = load_embeddings(tmp_path / "f.emb", tmp_path / "l.lab")
    assert (ds.n_samples, ds.dimension, ds.class_count) == (2, 3, 5)


def test_label_count_mismatch(tmp_path):
    (tmp_path / "f.emb").write_bytes(b"EMB v1 2 3\n" + np.zeros(6, dtype="<f4").tobytes())
    (tmp_path / "l.lab").write_text("0\n1\n1\n")
    with pytest.raises(FormatError, match="row 3"):
        load_embeddings(tmp_path / "f.emb", tmp_path / "l.lab")


def test_truncated_emb_reports_row(tmp_path):
    (tmp_path / "f.emb").write_bytes(b"EMB v1 3 2\n" + np.zeros(3, dtype="<f4").tobytes())
    (tmp_path / "l.lab").write_text("0\n1\n1\n")
    with pytest.raises(FormatError, match="row 2"):
        load_embeddings(tmp_path / "f.emb", tmp_path / "l.lab")


def test_non_finite_emb_reports_row(tmp_path):
    vals = np.zeros(6, dtype="<f4")
    vals[4] = np.nan
    (tmp_path / "f.emb").write_bytes(b"EMB v1 3 2\n" + vals.tobytes())
    (tmp_path / "l.lab").write_text("0\n1\n1\n")
    with pytest.raises(FormatError, match="row 3"):
        load_embeddings(tmp_path / "f.emb", tmp_path / "l.lab")


def test_csv_fallback(tmp_path):
    (tmp_path / "f.csv").write_text("1.5,2\n3,4\n")
    (tmp_path / "l.lab").write_text("LAB v1 2 3\n0\n2\n")
    ds = load_embeddings(tmp_path / "f.csv", tmp_path / "l.lab")
    assert ds.features.tolist() == [[1.5, 2.0], [3.0, 4.0]]
    assert ds.class_count == 3


def test_csv_ragged_row(tmp_path):
    (tmp_path / "f.csv").write_text("1,2\n3\n")
    (tmp_path / "l.lab").write_text("0\n1\n")
    with pytest.raises(FormatError, match="row 2"):
        load_embeddings(tmp_path / "f.csv", tmp_path / "l.lab")


def test_label_beyond_header_class_count(tmp_path):
    (tmp_path / "f.csv").write_text("1\n2\n")
    (tmp_path / "l.lab").write_text("LAB v1 2 2\n0\n2\n")
    with pytest.raises(FormatError, match="row 3"):
        load_embeddings(tmp_path / "f.csv", tmp_path / "l.lab")


def test_longtail_sizes_formula():
    for c_count in (2, 3, 10, 100):
        for ratio in (5, 10):
            sizes = longtail_sizes(500, c_count, ratio)
            assert sizes[0] == 500 and sizes[-1] == round(500 / ratio)
            assert sizes == [math.floor(500 * ratio ** (-c / (c_count - 1)) + 0.5) for c in range(c_count)]
