import numpy as np
import pytest
import scipy.sparse as sp

from glru.data import (
    Dataset,
    ModificationSpec,
    drop_constant_features,
    dump_libsvm,
    load_libsvm,
    normalize,
    split_dataset,
)
from glru.errors import NormalizationError, ParseError, ValidationError


def sparse_dataset(seed=0, n=12, d=5, classification=True):
    rng = np.random.default_rng(seed)
    x = sp.random(n, d, density=0.5, random_state=seed, format="csr")
    # make sure no row or column is empty so norms stay informative
    x = x.tolil()
    for i in range(n):
        x[i, i % d] = rng.uniform(0.5, 1.5)
    y = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0) if classification \
        else rng.normal(size=n)
    return Dataset(x.tocsr(), y, classification)


# -- container -----------------------------------------------------------------

def test_dataset_shapes_and_norms_dense():
    x = np.array([[1.0, 2.0], [0.0, -3.0], [4.0, 0.0]])
    ds = Dataset(x, [1.0, -1.0, 1.0])
    assert (ds.n, ds.d) == (3, 2)
    assert not ds.is_sparse
    assert ds.classification
    np.testing.assert_allclose(ds.feature_norms, [np.sqrt(17), np.sqrt(13)])
    np.testing.assert_allclose(ds.instance_norms, [np.sqrt(5), 3.0, 4.0])


def test_dataset_norms_sparse_match_dense():
    ds = sparse_dataset(3)
    dense = Dataset(ds.to_dense(), ds.y, ds.classification)
    np.testing.assert_allclose(ds.feature_norms, dense.feature_norms)
    np.testing.assert_allclose(ds.instance_norms, dense.instance_norms)


def test_dataset_matvec_and_rmatvec():
    ds = sparse_dataset(1)
    w = np.arange(ds.d, dtype=float)
    v = np.arange(ds.n, dtype=float)
    np.testing.assert_allclose(ds.matvec(w), ds.to_dense() @ w)
    np.testing.assert_allclose(ds.rmatvec(v), ds.to_dense().T @ v)


def test_row_and_col_nonzeros_skip_zeros():
    x = np.array([[0.0, 2.0, 0.0], [1.0, 0.0, 3.0]])
    ds = Dataset(x, [1.0, -1.0])
    idx, vals = ds.row_nonzeros(0)
    np.testing.assert_array_equal(idx, [1])
    np.testing.assert_allclose(vals, [2.0])
    idx, vals = ds.col_nonzeros(2)
    np.testing.assert_array_equal(idx, [1])
    np.testing.assert_allclose(vals, [3.0])
    # sparse storage drops explicit zeros on construction
    xs = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    xs[0, 1] = 0.0
    ds2 = Dataset(xs.tocsr(), [1.0, 1.0])
    idx, _ = ds2.row_nonzeros(0)
    assert idx.size == 0


def test_dataset_is_immutable():
    ds = Dataset(np.eye(2), [1.0, -1.0])
    with pytest.raises(ValueError):
        ds.x[0, 0] = 5.0
    with pytest.raises(ValueError):
        ds.y[0] = 2.0
    with pytest.raises(ValueError):
        ds.feature_norms[0] = 7.0


def test_dataset_validation():
    with pytest.raises(ValidationError):
        Dataset(np.eye(2), [1.0])
    with pytest.raises(ValidationError):
        Dataset(np.zeros((0, 2)), [])
    with pytest.raises(ValidationError):
        Dataset(np.eye(2), [1.0, 2.0], classification=True)
    ds = Dataset(np.eye(2), [1.0, 2.0])
    assert not ds.classification
    assert Dataset(np.eye(2), [1.0, -1.0]).classification


# -- modifications ---------------------------------------------------------------

def test_remove_instances_matches_numpy():
    ds = sparse_dataset(5)
    out = ds.remove_instances([1, 4])
    keep = [i for i in range(ds.n) if i not in (1, 4)]
    np.testing.assert_allclose(out.to_dense(), ds.to_dense()[keep])
    np.testing.assert_allclose(out.y, ds.y[keep])
    assert out.is_sparse


def test_add_instances_appends_rows():
    ds = sparse_dataset(6)
    rows = np.arange(2 * ds.d, dtype=float).reshape(2, ds.d)
    out = ds.add_instances(rows, [1.0, -1.0])
    assert out.n == ds.n + 2
    np.testing.assert_allclose(out.to_dense()[-2:], rows)
    assert out.is_sparse  # storage kind is preserved
    dense = Dataset(ds.to_dense(), ds.y, ds.classification)
    out2 = dense.add_instances(rows, [1.0, -1.0])
    assert not out2.is_sparse


def test_remove_and_add_features():
    ds = sparse_dataset(7)
    out = ds.remove_features([0, 2])
    keep = [j for j in range(ds.d) if j not in (0, 2)]
    np.testing.assert_allclose(out.to_dense(), ds.to_dense()[:, keep])
    cols = np.ones((ds.n, 2))
    out2 = ds.add_features(cols)
    np.testing.assert_allclose(out2.to_dense()[:, -2:], cols)
    out3 = ds.add_features(cols, at=1)
    np.testing.assert_allclose(out3.to_dense()[:, 1:3], cols)
    np.testing.assert_allclose(out3.to_dense()[:, 0], ds.to_dense()[:, 0])


def test_modification_validation_errors():
    ds = Dataset(np.eye(3), [1.0, -1.0, 1.0])
    with pytest.raises(ValidationError):
        ds.remove_instances([])
    with pytest.raises(ValidationError):
        ds.remove_instances([0, 0])
    with pytest.raises(ValidationError):
        ds.remove_instances([3])
    with pytest.raises(ValidationError):
        ds.remove_instances([0, 1, 2])
    with pytest.raises(ValidationError):
        ds.remove_features([0, 1, 2])
    with pytest.raises(ValidationError):
        ds.add_instances(np.ones((1, 2)), [1.0])
    with pytest.raises(ValidationError):
        ds.add_instances(np.ones((2, 3)), [1.0])
    with pytest.raises(ValidationError):
        ds.add_features(np.ones((2, 1)))
    with pytest.raises(ValidationError):
        ds.add_features(np.ones((3, 1)), at=7)


def test_modification_spec_dispatch():
    ds = Dataset(np.eye(3), [1.0, -1.0, 1.0])
    assert ModificationSpec("remove-instances", indices=(0,)).apply(ds).n == 2
    assert ModificationSpec("remove-features", indices=(1,)).apply(ds).d == 2
    spec = ModificationSpec("add-instances", rows=np.ones((1, 3)), labels=[1.0])
    assert spec.apply(ds).n == 4
    spec = ModificationSpec("add-features", cols=np.ones((3, 1)))
    assert spec.apply(ds).d == 4
    with pytest.raises(ValidationError):
        ModificationSpec("transpose")


# -- LIBSVM I/O -------------------------------------------------------------------

def test_libsvm_round_trip(tmp_path):
    ds = sparse_dataset(11)
    path = tmp_path / "data.txt"
    dump_libsvm(ds, path)
    back = load_libsvm(path)
    assert back.is_sparse and back.classification
    np.testing.assert_allclose(back.to_dense(), ds.to_dense())
    np.testing.assert_allclose(back.y, ds.y)
    # a second round trip is a fixed point of the text form
    path2 = tmp_path / "data2.txt"
    dump_libsvm(back, path2)
    assert path.read_text() == path2.read_text()


def test_libsvm_regression_round_trip(tmp_path):
    ds = sparse_dataset(12, classification=False)
    path = tmp_path / "reg.txt"
    dump_libsvm(ds, path)
    back = load_libsvm(path, expect_labels="regression")
    assert not back.classification
    np.testing.assert_allclose(back.y, ds.y)
    np.testing.assert_allclose(back.to_dense(), ds.to_dense())


def test_libsvm_dimension_is_max_index(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("+1 2:1.5\n-1 5:2.0\n+1\n")
    ds = load_libsvm(path)
    assert (ds.n, ds.d) == (3, 5)
    dense = ds.to_dense()
    assert dense[0, 1] == 1.5 and dense[1, 4] == 2.0
    assert np.all(dense[2] == 0.0)


@pytest.mark.parametrize("content,fragment", [
    ("+1 2:1.0 1:2.0\n", "line 1"),
    ("+1 0:1.0\n", "line 1"),
    ("-1 3:1.0\nxx 1:1.0\n", "line 2"),
    ("+1 1:one\n", "line 1"),
    ("+1 1=3\n", "line 1"),
])
def test_libsvm_parse_errors_carry_line_numbers(tmp_path, content, fragment):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    with pytest.raises(ParseError, match=fragment):
        load_libsvm(path)


def test_libsvm_empty_and_label_validation(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("\n\n")
    with pytest.raises(ParseError):
        load_libsvm(path)
    path.write_text("2 1:1.0\n")
    with pytest.raises(ValidationError):
        load_libsvm(path, expect_labels="classification")
    load_libsvm(path, expect_labels="regression")
    with pytest.raises(ValidationError):
        load_libsvm(path, expect_labels="counts")


# -- normalization ----------------------------------------------------------------

def test_normalize_dense_centers_and_scales():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.normal(2.0, 3.0, size=(40, 4)), rng.normal(size=40),
                 classification=False)
    out = normalize(ds, "dense")
    x = out.to_dense()
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(x.var(axis=0), 1.0, rtol=1e-12)


def test_normalize_dense_zero_variance_names_column():
    x = np.ones((5, 3))
    x[:, 0] = np.arange(5)
    x[:, 2] = np.arange(5) ** 2
    ds = Dataset(x, np.ones(5), classification=False)
    with pytest.raises(NormalizationError, match="column 1"):
        normalize(ds, "dense")


def test_normalize_sparse_scales_column_norms():
    ds = sparse_dataset(13)
    out = normalize(ds, "sparse")
    assert out.is_sparse
    np.testing.assert_allclose(out.feature_norms, np.sqrt(ds.n), rtol=1e-12)
    assert out.x.nnz == ds.x.nnz  # zeros stay zeros
    dense = Dataset(ds.to_dense(), ds.y, ds.classification)
    out2 = normalize(dense, "sparse")
    assert not out2.is_sparse
    np.testing.assert_allclose(out2.feature_norms, np.sqrt(ds.n), rtol=1e-12)


def test_normalize_sparse_rejects_zero_column():
    x = np.eye(3)
    x[:, 1] = 0.0
    ds = Dataset(x, np.ones(3), classification=False)
    with pytest.raises(NormalizationError, match="column 1"):
        normalize(ds, "sparse")
    with pytest.raises(ValidationError):
        normalize(ds, "minmax")


def test_drop_constant_features():
    x = np.array([[1.0, 2.0, 0.0, 5.0],
                  [1.0, 3.0, 0.0, 5.0],
                  [1.0, 4.0, 0.0, 5.0]])
    ds = Dataset(x, np.ones(3), classification=False)
    out, dropped = drop_constant_features(ds)
    np.testing.assert_array_equal(dropped, [0, 2, 3])
    np.testing.assert_allclose(out.to_dense(), x[:, [1]])
    # sparse: a column that is partly zero with equal nonzeros is not constant
    xs = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
    ds2 = Dataset(xs, np.ones(2), classification=False)
    out2, dropped2 = drop_constant_features(ds2)
    np.testing.assert_array_equal(dropped2, [0])
    assert out2.d == 1


def test_split_dataset_is_deterministic_partition():
    ds = sparse_dataset(17, n=20)
    tr1, te1 = split_dataset(ds, 0.25, seed=4)
    tr2, te2 = split_dataset(ds, 0.25, seed=4)
    np.testing.assert_allclose(tr1.to_dense(), tr2.to_dense())
    np.testing.assert_allclose(te1.y, te2.y)
    assert tr1.n + te1.n == ds.n
    assert te1.n == 5
    with pytest.raises(ValidationError):
        split_dataset(ds, 0.0)
    with pytest.raises(ValidationError):
        split_dataset(ds, 1.0)
