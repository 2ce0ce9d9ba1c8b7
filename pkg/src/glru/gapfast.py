"""Fast duality gaps of the old solution on a modified problem.

Each function evaluates P_new(w_hat) - D_new(alpha_hat) for the candidate
built from the trained model (restriction for removals, KKT-selected
extension for additions) without re-reading the unchanged data: the training
cache carries X w*, X^T a*, and the four objective sums, so only the touched
rows or columns plus one fixed-length correction pass are needed.

For instance changes the sums are re-weighted by the exact factor
n_old/n_new applied once, the removed or added per-instance terms are
adjusted at 1/n_new each, and the penalty-conjugate total is re-evaluated on
the updated d-vector (1/n_new)(X^T a* -+ sum_i a_i X_{i:}). For feature
changes n is unchanged: the per-feature penalty terms of the touched columns
are corrected and the loss sum is re-evaluated at the updated margins
X w* -+ sum_j w_j X_{:j}.

The module-level TOUCHES counter is reset on entry to every gap call and
counts distinct matrix entries read plus each fixed-length correction pass;
it instruments the cost claims and is not thread safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import convex, data
from .bounds import GapCertificate
from .erm import TrainedModel, snap_intercept
from .errors import ConfigError, GlruError, SpecializationError, ValidationError


@dataclass
class TouchCounter:
    """Cost instrumentation: distinct matrix entries read and whole-vector
    operations performed by the current gap call."""

    matrix_entries_touched: int = 0
    vector_ops: int = 0

    def reset(self):
        self.matrix_entries_touched = 0
        self.vector_ops = 0

    def touch(self, k):
        self.matrix_entries_touched += int(k)

    def vec(self, k=1):
        self.vector_ops += int(k)


TOUCHES = TouchCounter()


def _check_model(model: TrainedModel, ds):
    if model.alpha.size != ds.n or model.w.size != ds.d:
        raise ConfigError(
            "model shape (n=%d, d=%d) does not match the dataset (n=%d, d=%d)"
            % (model.alpha.size, model.w.size, ds.n, ds.d))
    if model.reg.dim != ds.d:
        raise ConfigError("regularizer dimension %d does not match data %d"
                          % (model.reg.dim, ds.d))


def _certificate(gap, p_ref, n_new, lam, mu) -> GapCertificate:
    if math.isnan(gap):
        raise GlruError("duality gap evaluated to NaN")
    scale = max(1.0, abs(p_ref)) if math.isfinite(p_ref) else 1.0
    if gap < -1e-9 * scale:
        raise GlruError("negative duality gap %.3e; the model cache does not "
                        "belong to this dataset" % gap)
    return GapCertificate(gap=max(gap, 0.0), n_new=n_new, lam=lam, mu=mu)


def gap_instance_removal(model: TrainedModel, ds_old, removed):
    """Gap of (w*old, restricted a*old) after deleting the given instances.

    Touches the removed rows and one length-d pass for the penalty-conjugate
    argument; everything else is read from the cache.
    """
    TOUCHES.reset()
    _check_model(model, ds_old)
    idx = data._check_removal(removed, ds_old.n, "instance")
    if idx.size >= ds_old.n:
        raise ValidationError("cannot remove every instance")
    loss, reg, cache = model.loss, model.reg, model.cache
    n_old = ds_old.n
    n_new = n_old - idx.size
    loss_rm = float(convex.loss_value_vec(
        loss.kind, loss.gamma, ds_old.y[idx], cache.xw[idx]).sum())
    conj_rm = float(convex.loss_conj_vec(
        loss.kind, loss.gamma, ds_old.y[idx], -model.alpha[idx]).sum())
    delta = np.zeros(ds_old.d)
    for i in idx:
        ridx, rvals = ds_old.row_nonzeros(i)
        delta[ridx] += model.alpha[i] * rvals
        TOUCHES.touch(rvals.size)
    v_new = snap_intercept((cache.xt_alpha - delta) / n_new, reg)
    TOUCHES.touch(ds_old.d)
    TOUCHES.vec(2)
    pr_conj_new = convex.reg_conj_total(reg, v_new)
    scale = n_old / n_new
    loss_part = scale * cache.loss_sum - loss_rm / n_new
    conj_part = scale * cache.loss_conj_sum - conj_rm / n_new
    p_new = loss_part + cache.reg_sum
    gap = p_new + conj_part + pr_conj_new
    alpha_hat = np.delete(model.alpha, idx)
    TOUCHES.vec(1)
    cert = _certificate(gap, p_new, n_new, reg.strong_convexity, loss.mu)
    return cert, alpha_hat


def gap_instance_addition(model: TrainedModel, ds_old, new_rows, new_labels):
    """Gap of (w*old, a*old extended by -ell'(X_{i:} w*old)) after adding
    instances. Touches the new rows plus one length-d pass."""
    TOUCHES.reset()
    _check_model(model, ds_old)
    rows = data._as_matrix(new_rows, ds_old.is_sparse)
    labels = np.asarray(new_labels, dtype=float).ravel()
    if rows.shape[0] == 0:
        raise ValidationError("no instances to add")
    if rows.shape[1] != ds_old.d:
        raise ValidationError("new rows have width %d, expected %d"
                              % (rows.shape[1], ds_old.d))
    if rows.shape[0] != labels.size:
        raise ValidationError("row/label count mismatch")
    if ds_old.classification and not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValidationError("classification labels must be +/-1")
    loss, reg, cache = model.loss, model.reg, model.cache
    k = rows.shape[0]
    n_old = ds_old.n
    n_new = n_old + k
    t = np.asarray(rows @ model.w).ravel()
    TOUCHES.touch(rows.nnz if ds_old.is_sparse else rows.size)
    alpha_add = -convex.loss_grad_vec(loss.kind, loss.gamma, labels, t)
    loss_add = float(convex.loss_value_vec(
        loss.kind, loss.gamma, labels, t).sum())
    conj_add = float(convex.loss_conj_vec(
        loss.kind, loss.gamma, labels, -alpha_add).sum())
    delta = np.asarray(rows.T @ alpha_add).ravel()
    v_new = snap_intercept((cache.xt_alpha + delta) / n_new, reg)
    TOUCHES.touch(ds_old.d)
    TOUCHES.vec(2)
    pr_conj_new = convex.reg_conj_total(reg, v_new)
    scale = n_old / n_new
    loss_part = scale * cache.loss_sum + loss_add / n_new
    conj_part = scale * cache.loss_conj_sum + conj_add / n_new
    p_new = loss_part + cache.reg_sum
    gap = p_new + conj_part + pr_conj_new
    alpha_hat = np.concatenate([model.alpha, alpha_add])
    TOUCHES.vec(1)
    cert = _certificate(gap, p_new, n_new, reg.strong_convexity, loss.mu)
    return cert, alpha_hat


def gap_feature_removal(model: TrainedModel, ds_old, removed):
    """Gap of (restricted w*old, a*old) after deleting features: the touched
    columns correct the cached margins, their penalty terms come out of the
    cached sums, and one length-n loss pass finishes the job."""
    TOUCHES.reset()
    _check_model(model, ds_old)
    idx = data._check_removal(removed, ds_old.d, "feature")
    if idx.size >= ds_old.d:
        raise ValidationError("cannot remove every feature")
    loss, reg, cache = model.loss, model.reg, model.cache
    if reg.intercept and (ds_old.d - 1) in idx:
        raise ValidationError("cannot remove the intercept coordinate")
    n = ds_old.n
    xw_new = cache.xw.copy()
    TOUCHES.vec(1)
    corr_val = 0.0
    corr_conj = 0.0
    for j in idx:
        cidx, cvals = ds_old.col_nonzeros(j)
        if model.w[j] != 0.0:
            xw_new[cidx] -= model.w[j] * cvals
        TOUCHES.touch(cvals.size)
        corr_val += convex.reg_value(reg, j, model.w[j])
        corr_conj += convex.reg_conj(reg, j, cache.xt_alpha[j] / n)
    loss_new = float(convex.loss_value_vec(
        loss.kind, loss.gamma, ds_old.y, xw_new).mean())
    TOUCHES.touch(n)
    reg_new = reg.resize(ds_old.d - idx.size)
    p_new = loss_new + cache.reg_sum - corr_val
    gap = p_new - cache.dual_value - corr_conj
    w_hat = np.delete(model.w, idx)
    TOUCHES.vec(1)
    cert = _certificate(gap, p_new, n, reg_new.strong_convexity, loss.mu)
    return cert, w_hat


def gap_feature_addition(model: TrainedModel, ds_old, new_cols, reg_new=None):
    """Gap of (w*old extended by conjugate-subgradient elements, a*old) after
    adding features. New columns go in front of an intercept when there is
    one, so the intercept stays last; reg_new defaults to the model's penalty
    family widened to the new dimension."""
    TOUCHES.reset()
    _check_model(model, ds_old)
    cols = _as_columns(new_cols, ds_old)
    k = cols.shape[1]
    if k == 0:
        raise ValidationError("no features to add")
    if cols.shape[0] != ds_old.n:
        raise ValidationError("new columns have height %d, expected %d"
                              % (cols.shape[0], ds_old.n))
    loss, reg, cache = model.loss, model.reg, model.cache
    if reg_new is None:
        reg_new = reg.resize(ds_old.d + k)
    if reg_new.dim != ds_old.d + k:
        raise ConfigError("reg_new covers %d coordinates, expected %d"
                          % (reg_new.dim, ds_old.d + k))
    if reg_new.intercept != reg.intercept:
        raise ConfigError("reg_new must keep the intercept setting")
    n = ds_old.n
    at = ds_old.d - 1 if reg.intercept else ds_old.d
    w_add = np.empty(k)
    corr_val = 0.0
    corr_conj = 0.0
    for m in range(k):
        cidx, cvals = _col_nonzeros(cols, m)
        TOUCHES.touch(cvals.size)
        v = float(cvals @ model.alpha[cidx]) / n
        iv = convex.reg_conj_subgrad(reg_new, at + m, v)
        w_add[m] = convex.min_abs_element(iv)
        corr_val += convex.reg_value(reg_new, at + m, w_add[m]) if \
            math.isfinite(w_add[m]) else convex.INF
        corr_conj += convex.reg_conj(reg_new, at + m, v)
    w_hat = np.insert(model.w, at, w_add)
    TOUCHES.vec(1)
    if not (math.isfinite(corr_val) and math.isfinite(corr_conj)):
        cert = _certificate(convex.INF, convex.INF, n,
                            reg_new.strong_convexity, loss.mu)
        return cert, w_hat
    xw_new = cache.xw.copy()
    TOUCHES.vec(1)
    for m in range(k):
        if w_add[m] != 0.0:
            cidx, cvals = _col_nonzeros(cols, m)
            xw_new[cidx] += w_add[m] * cvals
    loss_new = float(convex.loss_value_vec(
        loss.kind, loss.gamma, ds_old.y, xw_new).mean())
    TOUCHES.touch(n)
    p_new = loss_new + cache.reg_sum + corr_val
    gap = p_new - cache.dual_value + corr_conj
    cert = _certificate(gap, p_new, n, reg_new.strong_convexity, loss.mu)
    return cert, w_hat


def gap_loocv_l2(model: TrainedModel, ds, i) -> GapCertificate:
    """Single-instance removal under a plain quadratic penalty: the
    penalty-conjugate total collapses to a norm, expanded through the cache
    so only row i and one length-d pass are touched."""
    TOUCHES.reset()
    _check_model(model, ds)
    _require_plain_l2(model.reg)
    if not 0 <= int(i) < ds.n:
        raise ValidationError("instance index out of range")
    if ds.n < 2:
        raise ValidationError("cannot remove every instance")
    i = int(i)
    loss, reg, cache = model.loss, model.reg, model.cache
    n = ds.n
    n_new = n - 1
    ridx, rvals = ds.row_nonzeros(i)
    TOUCHES.touch(rvals.size)
    xta = cache.xt_alpha
    xta_sq = float(xta @ xta)
    TOUCHES.touch(ds.d)
    a_i = float(model.alpha[i])
    cross = float(rvals @ xta[ridx])
    rn2 = float(ds.instance_norms[i]) ** 2
    nrm2 = max(xta_sq - 2.0 * a_i * cross + a_i * a_i * rn2, 0.0)
    pr_conj_new = nrm2 / (2.0 * reg.lam * n_new * n_new)
    loss_i = float(convex.loss_value_vec(
        loss.kind, loss.gamma, ds.y[i], cache.xw[i]))
    conj_i = float(convex.loss_conj_vec(
        loss.kind, loss.gamma, ds.y[i], -a_i))
    scale = n / n_new
    loss_part = scale * cache.loss_sum - loss_i / n_new
    conj_part = scale * cache.loss_conj_sum - conj_i / n_new
    p_new = loss_part + cache.reg_sum
    gap = p_new + conj_part + pr_conj_new
    return _certificate(gap, p_new, n_new, reg.strong_convexity, loss.mu)


def gap_feature_removal_l2(model: TrainedModel, ds, j) -> GapCertificate:
    """Single-feature removal under a plain quadratic penalty: both penalty
    corrections are closed forms of cached scalars, so only column j and one
    length-n loss pass are touched."""
    TOUCHES.reset()
    _check_model(model, ds)
    _require_plain_l2(model.reg)
    if not 0 <= int(j) < ds.d:
        raise ValidationError("feature index out of range")
    if ds.d < 2:
        raise ValidationError("cannot remove every feature")
    j = int(j)
    loss, reg, cache = model.loss, model.reg, model.cache
    n = ds.n
    cidx, cvals = ds.col_nonzeros(j)
    TOUCHES.touch(cvals.size)
    xw_new = cache.xw.copy()
    TOUCHES.vec(1)
    if model.w[j] != 0.0:
        xw_new[cidx] -= model.w[j] * cvals
    loss_new = float(convex.loss_value_vec(
        loss.kind, loss.gamma, ds.y, xw_new).mean())
    TOUCHES.touch(n)
    u = cache.xt_alpha[j] / n
    p_new = loss_new + cache.reg_sum - 0.5 * reg.lam * model.w[j] ** 2
    gap = p_new - cache.dual_value - u * u / (2.0 * reg.lam)
    return _certificate(gap, p_new, n, reg.strong_convexity, loss.mu)


def _require_plain_l2(reg):
    if reg.kind != "l2" or reg.intercept:
        raise SpecializationError(
            "this fast path needs a plain quadratic penalty on every "
            "coordinate (kind l2, no intercept)")


def _as_columns(cols, ds):
    if sparse.issparse(cols):
        return sparse.csc_matrix(cols, dtype=float)
    cols = np.asarray(cols, dtype=float)
    if cols.ndim == 1:
        cols = cols.reshape(-1, 1)
    return sparse.csc_matrix(cols) if ds.is_sparse else cols


def _col_nonzeros(cols, m):
    if sparse.issparse(cols):
        lo, hi = cols.indptr[m], cols.indptr[m + 1]
        return cols.indices[lo:hi], cols.data[lo:hi]
    col = cols[:, m]
    idx = np.nonzero(col)[0]
    return idx, col[idx]
