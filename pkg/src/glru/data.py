"""Dataset container, LIBSVM-format I/O, normalization, and the dataset
modifications (instance/feature additions and removals) the gap machinery
reasons about.

Datasets are immutable after construction. Sparse data keeps both a row-wise
(CSR) and a column-wise (CSC) structure, built once: instance-level work
walks rows, feature-level work walks columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import NormalizationError, ParseError, ValidationError

MOD_KINDS = ("remove-instances", "add-instances", "remove-features", "add-features")


class Dataset:
    """An n x d design matrix with outcomes and cached row/column norms.

    Parameters
    ----------
    x : ndarray or scipy sparse matrix, shape (n, d)
    y : array-like, length n
        Outcomes; +/-1 for classification.
    classification : bool, optional
        Defaults to True exactly when every outcome is +/-1.
    """

    __slots__ = ("x", "x_csc", "y", "feature_norms", "instance_norms",
                 "classification")

    def __init__(self, x, y, classification=None):
        if sparse.issparse(x):
            xr = sparse.csr_matrix(x, dtype=float, copy=True)
            xr.eliminate_zeros()
            xr.sort_indices()
            self.x = xr
            self.x_csc = xr.tocsc()
        else:
            xd = np.array(x, dtype=float, copy=True, ndmin=2)
            if xd.ndim != 2:
                raise ValidationError("x must be a 2-d matrix")
            xd.setflags(write=False)
            self.x = xd
            self.x_csc = None
        y = np.array(y, dtype=float, copy=True).ravel()
        y.setflags(write=False)
        if self.x.shape[0] != y.size:
            raise ValidationError("x has %d rows but y has %d entries"
                                  % (self.x.shape[0], y.size))
        if y.size == 0:
            raise ValidationError("dataset must be nonempty")
        self.y = y
        is_pm1 = bool(np.all(np.isin(y, (-1.0, 1.0))))
        if classification is None:
            classification = is_pm1
        elif classification and not is_pm1:
            raise ValidationError("classification outcomes must be +/-1")
        self.classification = bool(classification)
        if self.is_sparse:
            sq = self.x.copy()
            sq.data **= 2
            self.feature_norms = np.sqrt(np.asarray(sq.sum(axis=0)).ravel())
            self.instance_norms = np.sqrt(np.asarray(sq.sum(axis=1)).ravel())
        else:
            self.feature_norms = np.sqrt((self.x ** 2).sum(axis=0))
            self.instance_norms = np.sqrt((self.x ** 2).sum(axis=1))
        self.feature_norms.setflags(write=False)
        self.instance_norms.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.x)

    def matvec(self, w) -> np.ndarray:
        return np.asarray(self.x @ np.asarray(w, dtype=float)).ravel()

    def rmatvec(self, v) -> np.ndarray:
        return np.asarray(self.x.T @ np.asarray(v, dtype=float)).ravel()

    def row_dense(self, i) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.x.getrow(i).todense()).ravel()
        return self.x[i]

    def col_dense(self, j) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.x_csc.getcol(j).todense()).ravel()
        return self.x[:, j]

    def row_nonzeros(self, i):
        """(indices, values) of the stored nonzeros of row i."""
        if self.is_sparse:
            lo, hi = self.x.indptr[i], self.x.indptr[i + 1]
            return self.x.indices[lo:hi], self.x.data[lo:hi]
        row = self.x[i]
        idx = np.nonzero(row)[0]
        return idx, row[idx]

    def col_nonzeros(self, j):
        """(indices, values) of the stored nonzeros of column j."""
        if self.is_sparse:
            lo, hi = self.x_csc.indptr[j], self.x_csc.indptr[j + 1]
            return self.x_csc.indices[lo:hi], self.x_csc.data[lo:hi]
        col = self.x[:, j]
        idx = np.nonzero(col)[0]
        return idx, col[idx]

    def to_dense(self) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.x.todense())
        return np.asarray(self.x)

    # -- modifications ------------------------------------------------------

    def remove_instances(self, indices) -> "Dataset":
        idx = _check_removal(indices, self.n, "instance")
        if idx.size >= self.n:
            raise ValidationError("cannot remove every instance")
        keep = np.setdiff1d(np.arange(self.n), idx)
        return Dataset(self.x[keep], self.y[keep], self.classification)

    def add_instances(self, rows, labels) -> "Dataset":
        rows = _as_matrix(rows, self.is_sparse)
        labels = np.asarray(labels, dtype=float).ravel()
        if rows.shape[0] == 0:
            raise ValidationError("no instances to add")
        if rows.shape[1] != self.d:
            raise ValidationError("new rows have width %d, expected %d"
                                  % (rows.shape[1], self.d))
        if rows.shape[0] != labels.size:
            raise ValidationError("row/label count mismatch")
        if self.is_sparse:
            x = sparse.vstack([self.x, sparse.csr_matrix(rows)], format="csr")
        else:
            x = np.vstack([self.x, _dense(rows)])
        return Dataset(x, np.concatenate([self.y, labels]), self.classification)

    def remove_features(self, indices) -> "Dataset":
        idx = _check_removal(indices, self.d, "feature")
        if idx.size >= self.d:
            raise ValidationError("cannot remove every feature")
        keep = np.setdiff1d(np.arange(self.d), idx)
        x = self.x_csc[:, keep].tocsr() if self.is_sparse else self.x[:, keep]
        return Dataset(x, self.y, self.classification)

    def add_features(self, cols, at=None) -> "Dataset":
        """Append columns (default) or insert them before position ``at``."""
        cols = _as_matrix(cols, self.is_sparse)
        if cols.shape[1] == 0:
            raise ValidationError("no features to add")
        if cols.shape[0] != self.n:
            raise ValidationError("new columns have height %d, expected %d"
                                  % (cols.shape[0], self.n))
        if at is None:
            at = self.d
        if not 0 <= at <= self.d:
            raise ValidationError("insertion position out of range")
        if self.is_sparse:
            left = self.x_csc[:, :at]
            right = self.x_csc[:, at:]
            x = sparse.hstack([left, sparse.csc_matrix(cols), right],
                              format="csr")
        else:
            x = np.hstack([self.x[:, :at], _dense(cols), self.x[:, at:]])
        return Dataset(x, self.y, self.classification)


def _dense(m):
    return np.asarray(m.todense()) if sparse.issparse(m) else np.asarray(m, dtype=float)


def _as_matrix(m, prefer_sparse):
    if sparse.issparse(m):
        return sparse.csr_matrix(m, dtype=float)
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    return sparse.csr_matrix(m) if prefer_sparse else m


def _check_removal(indices, size, what) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValidationError("no %ss to remove" % what)
    if np.unique(idx).size != idx.size:
        raise ValidationError("duplicate %s index" % what)
    if idx.min() < 0 or idx.max() >= size:
        raise ValidationError("%s index out of range" % what)
    return idx


@dataclass(frozen=True)
class ModificationSpec:
    """One of the four dataset modifications.

    Removals carry `indices`; instance additions carry `rows` and `labels`;
    feature additions carry `cols` (full-height columns).
    """

    kind: str
    indices: tuple = ()
    rows: object = None
    labels: object = None
    cols: object = None

    def __post_init__(self):
        if self.kind not in MOD_KINDS:
            raise ValidationError("unknown modification kind %r" % (self.kind,))

    def apply(self, ds: Dataset) -> Dataset:
        if self.kind == "remove-instances":
            return ds.remove_instances(self.indices)
        if self.kind == "add-instances":
            return ds.add_instances(self.rows, self.labels)
        if self.kind == "remove-features":
            return ds.remove_features(self.indices)
        return ds.add_features(self.cols)


# ---------------------------------------------------------------------------
# LIBSVM text format
# ---------------------------------------------------------------------------

def load_libsvm(path, expect_labels="classification") -> Dataset:
    """Read `label idx:val ...` lines with 1-based, strictly increasing
    indices per line. The feature count is the largest index seen.
    """
    if expect_labels not in ("classification", "regression"):
        raise ValidationError("expect_labels must be classification or regression")
    labels = []
    rows = []
    max_idx = 0
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            toks = line.split()
            try:
                label = float(toks[0])
            except ValueError:
                raise ParseError("line %d: bad label %r" % (lineno, toks[0])) from None
            pairs = []
            prev = 0
            for tok in toks[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise ParseError("line %d: expected idx:val, got %r"
                                     % (lineno, tok))
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError("line %d: bad pair %r" % (lineno, tok)) from None
                if idx <= prev:
                    raise ParseError("line %d: indices must be 1-based and "
                                     "strictly increasing" % lineno)
                prev = idx
                pairs.append((idx - 1, val))
            max_idx = max(max_idx, prev)
            labels.append(label)
            rows.append(pairs)
    if not rows:
        raise ParseError("%s: empty dataset" % (path,))
    if expect_labels == "classification" and not all(v in (-1.0, 1.0) for v in labels):
        raise ValidationError("classification labels must be +/-1")
    data, ri, ci = [], [], []
    for i, pairs in enumerate(rows):
        for j, v in pairs:
            if v != 0.0:
                ri.append(i)
                ci.append(j)
                data.append(v)
    x = sparse.coo_matrix((data, (ri, ci)),
                          shape=(len(rows), max_idx)).tocsr()
    return Dataset(x, labels, expect_labels == "classification")


def dump_libsvm(ds: Dataset, path):
    """Write a dataset back out in LIBSVM text format."""
    with open(path, "w", encoding="ascii") as fh:
        for i in range(ds.n):
            if ds.classification:
                head = "+1" if ds.y[i] > 0 else "-1"
            else:
                head = "%.17g" % ds.y[i]
            idx, vals = ds.row_nonzeros(i)
            body = " ".join("%d:%.17g" % (j + 1, v) for j, v in zip(idx, vals))
            fh.write(head + (" " + body if body else "") + "\n")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize(ds: Dataset, strategy: str) -> Dataset:
    """Column normalization.

    "dense": center to mean zero and scale to sample variance one (divisor
    n); densifies sparse input since centering destroys sparsity.
    "sparse": scale each column so its L2 norm is sqrt(n); zeros stay zeros.
    """
    if strategy == "dense":
        x = ds.to_dense()
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        bad = np.nonzero(var == 0.0)[0]
        if bad.size:
            raise NormalizationError("column %d has zero variance" % bad[0])
        return Dataset((x - mean) / np.sqrt(var), ds.y, ds.classification)
    if strategy == "sparse":
        norms = ds.feature_norms
        bad = np.nonzero(norms == 0.0)[0]
        if bad.size:
            raise NormalizationError("column %d is all zeros" % bad[0])
        scale = np.sqrt(ds.n) / norms
        if ds.is_sparse:
            x = (ds.x @ sparse.diags(scale)).tocsr()
        else:
            x = ds.x * scale
        return Dataset(x, ds.y, ds.classification)
    raise ValidationError("unknown normalization strategy %r" % (strategy,))


def drop_constant_features(ds: Dataset):
    """Remove columns with a single distinct value.

    Returns (restricted dataset, dropped column indices). The restricted
    dataset may have zero columns.
    """
    const = np.zeros(ds.d, dtype=bool)
    for j in range(ds.d):
        idx, vals = ds.col_nonzeros(j)
        if idx.size == 0:
            const[j] = True
        elif idx.size == ds.n:
            const[j] = bool(np.all(vals == vals[0]))
    dropped = np.nonzero(const)[0]
    if dropped.size == 0:
        return ds, dropped
    keep = np.nonzero(~const)[0]
    x = ds.x_csc[:, keep].tocsr() if ds.is_sparse else ds.x[:, keep]
    return Dataset(x, ds.y, ds.classification), dropped


def split_dataset(ds: Dataset, test_fraction: float, seed: int = 0):
    """Deterministic shuffle split into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_test = max(1, int(round(test_fraction * ds.n)))
    if n_test >= ds.n:
        raise ValidationError("split leaves no training instances")
    test, train = perm[:n_test], perm[n_test:]
    x = ds.x
    return (Dataset(x[np.sort(train)], ds.y[np.sort(train)], ds.classification),
            Dataset(x[np.sort(test)], ds.y[np.sort(test)], ds.classification))
