"""Primal/dual objectives, duality gap, KKT transfer maps, and the training
solver with relative-gap stopping.

The primal problem is

    P(w) = (1/n) sum_i ell_{y_i}(X_{i:} w) + sum_j rho_j(w_j)

and its dual

    D(a) = -(1/n) sum_i ell*_{y_i}(-a_i) - sum_j rho_j*((1/n) X_{:j}^T a).

Every function here takes the loss as a family: the `kind`/`gamma` of the
given LossSpec apply to all instances while the outcome comes from each row
of the dataset (LossSpec.y is not read).

The solver is a Newton method with Armijo line search when the coordinate
penalties are differentiable, and proximal coordinate descent otherwise; a
stalled Newton run falls back to coordinate descent. Stopping is purely
gap-based, so the guarantee does not depend on which method ran.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import convex
from .convex import LossSpec, RegSpec
from .errors import ConfigError, ConvergenceError

# The dual feasibility constraint attached to an unregularized intercept is
# the exact equality X_{:d}^T a = 0. Floating point cannot hold it exactly,
# so everywhere the per-feature products (1/n) X^T a are formed, an intercept
# entry within this relative tolerance of zero is treated as zero. The
# solver's feasibility projection leaves residuals around 1e-13 relative;
# genuinely infeasible candidates sit many orders of magnitude above.
INTERCEPT_EQ_RTOL = 1e-8


def snap_intercept(v: np.ndarray, reg: RegSpec) -> np.ndarray:
    """Zero out a rounding-level intercept entry of the product vector v."""
    if reg.intercept and v.size:
        scale = max(1.0, float(np.abs(v).max()))
        if abs(v[-1]) <= INTERCEPT_EQ_RTOL * scale:
            v = v.copy()
            v[-1] = 0.0
    return v


@dataclass
class PrecomputeCache:
    """Quantities retained from training that every fast gap reuses."""

    xw: np.ndarray            # X w*
    xt_alpha: np.ndarray      # X^T a*
    loss_sum: float           # (1/n) sum ell_{y_i}(X_{i:} w*)
    reg_sum: float            # sum rho_j(w*_j)
    loss_conj_sum: float      # (1/n) sum ell*_{y_i}(-a*_i)
    reg_conj_sum: float       # sum rho_j*((1/n) X_{:j}^T a*)

    @property
    def primal_value(self) -> float:
        return self.loss_sum + self.reg_sum

    @property
    def dual_value(self) -> float:
        return -self.loss_conj_sum - self.reg_conj_sum


@dataclass
class TrainedModel:
    w: np.ndarray
    alpha: np.ndarray
    cache: PrecomputeCache
    relative_gap_at_stop: float
    loss: LossSpec
    reg: RegSpec
    stopped_by: str = "gap"   # "gap" or "predicate"

    @property
    def n(self) -> int:
        return self.alpha.size

    @property
    def d(self) -> int:
        return self.w.size


def primal_objective(ds, loss: LossSpec, reg: RegSpec, w) -> float:
    w = np.asarray(w, dtype=float)
    t = ds.matvec(w)
    vals = convex.loss_value_vec(loss.kind, loss.gamma, ds.y, t)
    return float(vals.mean()) + convex.reg_total(reg, w)


def dual_objective(ds, loss: LossSpec, reg: RegSpec, alpha) -> float:
    """-inf signals an alpha outside the dual domain."""
    alpha = np.asarray(alpha, dtype=float)
    conj = convex.loss_conj_vec(loss.kind, loss.gamma, ds.y, -alpha)
    if np.isinf(conj).any():
        return -np.inf
    v = snap_intercept(ds.rmatvec(alpha) / ds.n, reg)
    rc = convex.reg_conj_total(reg, v)
    if np.isinf(rc):
        return -np.inf
    return -float(conj.mean()) - rc


def duality_gap(ds, loss: LossSpec, reg: RegSpec, w, alpha) -> float:
    return primal_objective(ds, loss, reg, w) - dual_objective(ds, loss, reg, alpha)


def dual_from_primal(ds, loss: LossSpec, w) -> np.ndarray:
    """KKT transfer a_i = -ell'_{y_i}(X_{i:} w); always inside the
    per-instance dual boxes."""
    t = ds.matvec(np.asarray(w, dtype=float))
    return -convex.loss_grad_vec(loss.kind, loss.gamma, ds.y, t)


def project_dual(ds, loss: LossSpec, reg: RegSpec, alpha) -> np.ndarray:
    """Restore full dual feasibility of a candidate.

    The per-instance boxes are enforced by clipping (a no-op for KKT
    candidates). An intercept's equality constraint X_{:d}^T a = 0 is solved
    by shifting along the intercept column and re-clipping, which is monotone
    in the shift; l1 column constraints are then met by uniform scaling
    toward zero. Both corrections vanish at the optimum, so measured gaps
    converge to zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    lo, hi = convex.alpha_box_vec(loss.kind, loss.gamma, ds.y)
    alpha = np.clip(alpha, lo, hi)
    if reg.intercept:
        xd = ds.col_dense(ds.d - 1)
        alpha = _shift_to_equality(alpha, xd, lo, hi)
    if reg.kind == "l1":
        # scale toward zero until the recomputed products clear the bound;
        # the tiny margin absorbs re-evaluation rounding (boxes all contain
        # zero, so scaling preserves feasibility and the intercept equality)
        for _ in range(5):
            v = ds.rmatvec(alpha) / ds.n
            body = np.abs(v[:-1]) if reg.intercept else np.abs(v)
            worst = float(body.max()) if body.size else 0.0
            if worst <= reg.lam:
                break
            alpha = alpha * (reg.lam / worst * (1.0 - 8e-16))
    return alpha


def _shift_to_equality(alpha, xd, lo, hi):
    """Find c with xd . clip(alpha - c xd, lo, hi) = 0 by bisection.

    Each summand is nonincreasing in c whatever the sign of its xd entry,
    and every box contains zero, so the limits bracket zero.
    """
    def g(c):
        return float(xd @ np.clip(alpha - c * xd, lo, hi))

    g0 = g(0.0)
    if g0 == 0.0:
        return np.clip(alpha, lo, hi)
    span = 1.0 + abs(g0) / (float(xd @ xd) + 1e-300)
    a, b = -span, span
    for _ in range(200):
        if g(a) >= 0.0:
            break
        a *= 2.0
    for _ in range(200):
        if g(b) <= 0.0:
            break
        b *= 2.0
    for _ in range(120):
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        if g(m) > 0.0:
            a = m
        else:
            b = m
    c = min((a, b, 0.5 * (a + b)), key=lambda cc: abs(g(cc)))
    return np.clip(alpha - c * xd, lo, hi)


def build_cache(ds, loss: LossSpec, reg: RegSpec, w, alpha) -> PrecomputeCache:
    w = np.asarray(w, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    xw = ds.matvec(w)
    xt_alpha = ds.rmatvec(alpha)
    loss_sum = float(convex.loss_value_vec(loss.kind, loss.gamma, ds.y, xw).mean())
    conj = convex.loss_conj_vec(loss.kind, loss.gamma, ds.y, -alpha)
    v = snap_intercept(xt_alpha / ds.n, reg)
    return PrecomputeCache(
        xw=xw,
        xt_alpha=xt_alpha,
        loss_sum=loss_sum,
        reg_sum=convex.reg_total(reg, w),
        loss_conj_sum=float(conj.mean()),
        reg_conj_sum=convex.reg_conj_total(reg, v),
    )


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def _penalty_vectors(reg: RegSpec):
    """Per-coordinate quadratic and absolute weights."""
    quad = np.zeros(reg.dim)
    absw = np.zeros(reg.dim)
    body = slice(0, reg.dim - 1) if reg.intercept else slice(0, reg.dim)
    if reg.kind == "l1":
        absw[body] = reg.lam
    else:
        quad[body] = reg.lam
        absw[body] = reg.kappa
    return quad, absw


def _newton_step(ds, loss, reg, w, t, quad):
    n = ds.n
    g_loss = convex.loss_grad_vec(loss.kind, loss.gamma, ds.y, t)
    grad = ds.rmatvec(g_loss) / n + quad * w
    curv = convex.loss_curv_vec(loss.kind, loss.gamma, ds.y, t)
    if ds.is_sparse:
        xc = ds.x.multiply(curv[:, None])
        h = np.asarray((xc.T @ ds.x).todense()) / n
    else:
        h = (ds.x * curv[:, None]).T @ ds.x / n
    h[np.diag_indices_from(h)] += quad
    damp = 1e-12 * max(1.0, float(np.trace(h)) / max(1, ds.d))
    h[np.diag_indices_from(h)] += damp
    try:
        p = np.linalg.solve(h, -grad)
    except np.linalg.LinAlgError:
        p = np.linalg.lstsq(h, -grad, rcond=None)[0]
    return p, grad


def _armijo(ds, loss, reg, w, p, grad, f0):
    slope = float(grad @ p)
    if slope >= 0.0:
        p = -grad
        slope = -float(grad @ grad)
        if slope >= 0.0:
            return w, False
    step = 1.0
    for _ in range(60):
        w_try = w + step * p
        f_try = primal_objective(ds, loss, reg, w_try)
        if f_try <= f0 + 1e-4 * step * slope:
            return w_try, True
        step *= 0.5
    return w, False


def _cd_sweeps(ds, loss, reg, w, t, quad, absw, nsweeps):
    """Proximal coordinate descent sweeps; updates w and t in place."""
    n = ds.n
    mu = convex.loss_mu(loss.kind, loss.gamma)
    l_loss = mu / n * ds.feature_norms ** 2
    cols = [ds.col_nonzeros(j) for j in range(ds.d)]
    for _ in range(nsweeps):
        for j in range(ds.d):
            denom = l_loss[j] + quad[j]
            if denom == 0.0:
                if absw[j] > 0.0:
                    w[j] = 0.0
                continue
            idx, vals = cols[j]
            g_loss = float(vals @ convex.loss_grad_vec(
                loss.kind, loss.gamma, ds.y[idx], t[idx])) / n
            numer = l_loss[j] * w[j] - g_loss
            new = np.sign(numer) * max(abs(numer) - absw[j], 0.0) / denom
            delta = new - w[j]
            if delta != 0.0:
                t[idx] += delta * vals
                w[j] = new
    return w, t


def _train_impl(ds, loss, reg, rel_gap_tol, warm_start, stop, max_iter):
    if reg.dim != ds.d:
        raise ConfigError("regularizer covers %d coordinates, data has %d"
                          % (reg.dim, ds.d))
    if not rel_gap_tol > 0.0:
        raise ConfigError("rel_gap_tol must be positive")
    quad, absw = _penalty_vectors(reg)
    smooth = not np.any(absw > 0.0)
    if warm_start is not None:
        w = np.array(warm_start, dtype=float).ravel().copy()
        if w.size != ds.d:
            raise ConfigError("warm start has wrong dimension")
    else:
        w = np.zeros(ds.d)
    t = ds.matvec(w)
    use_newton = smooth
    best_rel = np.inf
    history = []
    stopped_by = None
    alpha = None
    rel = np.inf
    for _ in range(max_iter):
        p_val = float(convex.loss_value_vec(loss.kind, loss.gamma, ds.y, t).mean())
        p_val += convex.reg_total(reg, w)
        alpha = project_dual(ds, loss, reg,
                             -convex.loss_grad_vec(loss.kind, loss.gamma, ds.y, t))
        conj = convex.loss_conj_vec(loss.kind, loss.gamma, ds.y, -alpha)
        v = snap_intercept(ds.rmatvec(alpha) / ds.n, reg)
        d_val = -float(conj.mean()) - convex.reg_conj_total(reg, v)
        gap = p_val - d_val
        rel = gap / p_val if p_val > 0.0 else gap
        best_rel = min(best_rel, rel)
        if rel <= rel_gap_tol:
            stopped_by = "gap"
            break
        if stop is not None and stop(w, alpha, gap):
            stopped_by = "predicate"
            break
        history.append(rel)
        if use_newton and len(history) >= 8 and history[-1] > 0.9 * history[-8]:
            use_newton = False  # stalled on a near-singular curvature; CD still descends
        if use_newton:
            p, grad = _newton_step(ds, loss, reg, w, t, quad)
            w_new, ok = _armijo(ds, loss, reg, w, p, grad, p_val)
            if not ok:
                use_newton = False
                continue
            w = w_new
            t = ds.matvec(w)
        else:
            w, t = _cd_sweeps(ds, loss, reg, w, t, quad, absw, nsweeps=5)
    if stopped_by is None:
        raise ConvergenceError(
            "no convergence in %d iterations (best relative gap %.3e)"
            % (max_iter, best_rel), best_gap=best_rel)
    cache = build_cache(ds, loss, reg, w, alpha)
    return TrainedModel(w=w, alpha=alpha, cache=cache,
                        relative_gap_at_stop=rel, loss=loss, reg=reg,
                        stopped_by=stopped_by)


def train(ds, loss: LossSpec, reg: RegSpec, rel_gap_tol: float = 1e-6,
          warm_start=None, max_iter: int = 5000) -> TrainedModel:
    """Train to a relative duality gap below rel_gap_tol.

    The returned dual comes from `dual_from_primal` followed by the
    feasibility projection, so it is always inside the dual domain.
    """
    return _train_impl(ds, loss, reg, rel_gap_tol, warm_start, None, max_iter)


def train_with_stop_predicate(ds, loss: LossSpec, reg: RegSpec, stop,
                              rel_gap_tol: float = 1e-6, warm_start=None,
                              max_iter: int = 5000) -> TrainedModel:
    """Like train, but also stops as soon as stop(w, alpha, gap) holds.

    The predicate is checked at every gap evaluation (once per outer
    iteration); `stopped_by` on the result says which criterion fired.
    """
    return _train_impl(ds, loss, reg, rel_gap_tol, warm_start, stop, max_iter)
