"""Dataset construction, LIBSVM text I/O, and the linear-map helpers."""

import numpy as np
import pytest
import scipy.sparse

import dualbatch as db
from helpers import random_dense_dataset

SAMPLE = """\
+1 1:0.5 3:-1.25
-1 2:2.0
# a comment line

1 1:1e-3 2:4 5:0.25
"""


def test_parse_libsvm_fields():
    ds = db.parse_libsvm(SAMPLE)
    assert ds.n == 3 and ds.d == 5 and ds.nnz == 6
    assert np.array_equal(ds.labels, [1.0, -1.0, 1.0])
    assert np.array_equal(ds.indptr, [0, 2, 3, 6])
    assert np.array_equal(ds.indices, [0, 2, 1, 0, 1, 4])
    assert np.array_equal(ds.data, [0.5, -1.25, 2.0, 1e-3, 4.0, 0.25])


def test_parse_errors_carry_line_numbers():
    with pytest.raises(db.LoadError, match="line 2"):
        db.parse_libsvm("+1 1:1\n-1 2:oops\n")
    with pytest.raises(db.LoadError, match="line 1"):
        db.parse_libsvm("abc 1:1\n")
    # physical line numbers: comments and blanks count
    with pytest.raises(db.LoadError, match="line 3"):
        db.parse_libsvm("# header\n+1 1:1\n-1 3:1 2:1\n")
    with pytest.raises(db.LoadError, match="must be >= 1"):
        db.parse_libsvm("+1 0:1\n")
    with pytest.raises(db.LoadError, match="empty row"):
        db.parse_libsvm("+1\n")
    with pytest.raises(db.LoadError, match="no records"):
        db.parse_libsvm("# only a comment\n")
    with pytest.raises(db.LoadError, match="idx:value"):
        db.parse_libsvm("+1 1=3\n")
    # validation failures detected after line assembly still raise LoadError
    with pytest.raises(db.LoadError, match="zero norm"):
        db.parse_libsvm("+1 1:0.0\n")


def test_write_parse_roundtrip_is_exact():
    rng = np.random.default_rng(0)
    for _ in range(20):
        ds = random_dense_dataset(rng, 12, 7)
        back = db.parse_libsvm(db.write_libsvm(ds), d=ds.d)
        for name in ("indptr", "indices", "data", "labels"):
            assert np.array_equal(getattr(ds, name), getattr(back, name))
        assert back.d == ds.d


def test_save_and_load(tmp_path):
    ds = db.synthetic_dataset(10, 6, 0.5, seed=3)
    path = tmp_path / "x.svm"
    db.save_libsvm(ds, path)
    back = db.load_libsvm(path, d=ds.d)
    assert np.array_equal(ds.data, back.data)
    assert np.array_equal(ds.labels, back.labels)


def test_to_dense_matches_scipy():
    rng = np.random.default_rng(1)
    ds = random_dense_dataset(rng, 15, 9)
    sp = scipy.sparse.csr_matrix((ds.data, ds.indices, ds.indptr),
                                 shape=(ds.n, ds.d))
    assert np.array_equal(ds.to_dense(), sp.toarray())


def test_linear_maps_match_dense_oracle():
    rng = np.random.default_rng(2)
    for _ in range(25):
        n = int(rng.integers(2, 30))
        d = int(rng.integers(2, 15))
        ds = random_dense_dataset(rng, n, d)
        X = ds.to_dense()
        w = rng.standard_normal(d)
        u = rng.standard_normal(n)
        lam = float(rng.uniform(0.01, 2.0))
        assert np.allclose(db.matvec(ds, w), X @ w, rtol=1e-12, atol=1e-12)
        assert np.allclose(db.rmatvec(ds, u), X.T @ u, rtol=1e-12, atol=1e-12)
        assert np.allclose(db.primal_image(ds, u, lam),
                           X.T @ u / (lam * n), rtol=1e-12, atol=1e-12)


def test_cached_statistics_match_dense():
    rng = np.random.default_rng(3)
    ds = random_dense_dataset(rng, 20, 8)
    X = ds.to_dense()
    assert np.allclose(ds.row_norms_sq, (X ** 2).sum(axis=1), rtol=1e-12)
    assert np.array_equal(ds.row_nnz, (X != 0).sum(axis=1))
    assert np.array_equal(ds.col_nnz, (X != 0).sum(axis=0))


def test_make_dataset_validation():
    db.make_dataset([0, 2], [0, 1], [1.0, 2.0], [1.0])
    with pytest.raises(db.ConfigError, match="strictly increasing"):
        db.make_dataset([0, 2], [1, 0], [1.0, 2.0], [1.0])
    with pytest.raises(db.ConfigError, match="strictly increasing"):
        db.make_dataset([0, 2], [1, 1], [1.0, 2.0], [1.0])
    with pytest.raises(db.ConfigError, match="negative"):
        db.make_dataset([0, 1], [-1], [1.0], [1.0])
    with pytest.raises(db.ConfigError, match="no features"):
        db.make_dataset([0, 0, 2], [0, 1], [1.0, 2.0], [1.0, -1.0])
    with pytest.raises(db.ConfigError, match="smaller than"):
        db.make_dataset([0, 2], [0, 1], [1.0, 2.0], [1.0], d=1)
    with pytest.raises(db.ConfigError, match="finite"):
        db.make_dataset([0, 1], [0], [np.inf], [1.0])
    with pytest.raises(db.ConfigError, match="zero norm"):
        db.make_dataset([0, 1], [0], [0.0], [1.0])
    with pytest.raises(db.ConfigError, match="indptr"):
        db.make_dataset([0, 3], [0, 1], [1.0, 2.0], [1.0])
    widened = db.make_dataset([0, 2], [0, 1], [1.0, 2.0], [1.0], d=10)
    assert widened.d == 10 and widened.col_nnz.shape == (10,)
    # row index resolution in the error message for a later row
    with pytest.raises(db.ConfigError, match="row 1"):
        db.make_dataset([0, 2, 4], [0, 1, 3, 2], [1.0, 1.0, 1.0, 1.0],
                        [1.0, -1.0])


def test_dataset_arrays_are_read_only():
    ds = db.synthetic_dataset(5, 4, 1.0, seed=0)
    with pytest.raises(ValueError):
        ds.data[0] = 9.0
    with pytest.raises(ValueError):
        ds.labels[0] = -ds.labels[0]


def test_normalize_rows():
    rng = np.random.default_rng(4)
    ds = random_dense_dataset(rng, 10, 5)
    nd = db.normalize_rows(ds)
    assert np.allclose(nd.row_norms_sq, 1.0, atol=1e-12)
    assert not np.shares_memory(nd.data, ds.data)
    # direction preserved
    assert np.allclose(nd.to_dense() * np.sqrt(ds.row_norms_sq)[:, None],
                       ds.to_dense(), atol=1e-12)


def test_synthetic_dataset_properties():
    ds = db.synthetic_dataset(50, 20, 0.25, seed=9)
    again = db.synthetic_dataset(50, 20, 0.25, seed=9)
    assert np.array_equal(ds.data, again.data)
    assert np.array_equal(ds.labels, again.labels)
    assert ds.n == 50 and ds.d == 20
    assert np.all(ds.row_nnz == 5)
    assert np.all(np.abs(ds.labels) == 1.0)
    assert np.allclose(ds.row_norms_sq, 1.0, atol=1e-12)
    assert np.all(ds.data != 0.0)

    raw = db.synthetic_dataset(50, 20, 0.25, seed=9, normalize=False)
    assert not np.allclose(raw.row_norms_sq, 1.0)
    assert db.synthetic_dataset(11, 20, 0.01, seed=1).row_nnz.min() == 1
    other = db.synthetic_dataset(50, 20, 0.25, seed=10)
    assert not np.array_equal(ds.data, other.data)

    with pytest.raises(db.ConfigError):
        db.synthetic_dataset(0, 5, 0.5, seed=0)
    with pytest.raises(db.ConfigError):
        db.synthetic_dataset(5, 5, 0.0, seed=0)
    with pytest.raises(db.ConfigError):
        db.synthetic_dataset(5, 5, 0.5, seed=0, noise=1.5)


def test_synthetic_noise_flips_labels_only():
    clean = db.synthetic_dataset(400, 10, 0.5, seed=2, noise=0.0)
    noisy = db.synthetic_dataset(400, 10, 0.5, seed=2, noise=0.3)
    assert np.array_equal(clean.data, noisy.data)
    frac = float(np.mean(clean.labels != noisy.labels))
    assert 0.15 < frac < 0.45
