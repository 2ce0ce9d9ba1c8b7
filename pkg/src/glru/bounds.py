"""Regions certified to contain the retrained optimum, derived from a
duality-gap certificate of the old solution on the modified problem.

With G = P_new(w_hat) - D_new(alpha_hat):

  * lambda-strongly-convex penalties give the primal ball
    ||w*new - w_hat||_2 <= r_P = sqrt(2 G / lambda), and through the loss
    derivative a per-instance box for the new dual;
  * mu-smooth losses give the dual ball
    ||a*new - alpha_hat||_2 <= r_D = sqrt(2 n_new mu G), and through the
    conjugate subgradient of the penalty a per-feature box for the new
    primal, whose argument interval [F_lo, F_hi] can be tightened by the
    dual-domain constraints before the subgradient map is applied.

Prediction intervals follow by optimizing x . w over the ball (primal
strong-convexity bound) or over the coordinate box (dual strong-convexity
bound). Infinite endpoints are genuine IEEE infinities and propagate through
minlin/maxlin under the 0 * inf = 0 rule, so an unbounded coordinate with a
zero test entry costs nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convex
from .convex import Interval, LossSpec, RegSpec
from .errors import AssumptionError

REGION_KINDS = ("primal-ball", "dual-ball", "primal-box", "dual-box")


@dataclass(frozen=True)
class GapCertificate:
    """A nonnegative duality gap of the old solution on the modified problem,
    together with the constants the radii need."""

    gap: float
    n_new: int
    lam: float   # strong-convexity constant of the penalty; 0 if absent
    mu: float    # smoothness constant of the loss

    def __post_init__(self):
        if math.isnan(self.gap) or self.gap < 0.0:
            raise ValueError("certificate gap must be nonnegative, got %r"
                             % (self.gap,))
        if self.n_new < 1:
            raise ValueError("n_new must be at least 1")


@dataclass(frozen=True)
class ParamRegion:
    """A ball (center, radius) or a coordinate box certified to contain the
    retrained primal or dual vector."""

    kind: str
    center: object = None
    radius: float = None
    boxes: object = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError("unknown region kind %r" % (self.kind,))
        if self.kind.endswith("ball"):
            if self.center is None or self.radius is None or self.radius < 0.0:
                raise ValueError("a ball needs a center and radius >= 0")
        elif self.boxes is None:
            raise ValueError("a box region needs boxes")

    def contains(self, v, atol=0.0) -> bool:
        v = np.asarray(v, dtype=float)
        if self.kind.endswith("ball"):
            return bool(np.linalg.norm(v - np.asarray(self.center)) <=
                        self.radius + atol)
        return all(iv.contains(x, atol) for iv, x in zip(self.boxes, v))


def radius_primal(cert: GapCertificate) -> float:
    """sqrt(2 G / lambda); requires a strictly convex penalty."""
    if not cert.lam > 0.0:
        raise AssumptionError(
            "the primal radius needs a strongly convex penalty on every "
            "coordinate (lambda > 0, no unregularized intercept)")
    return math.sqrt(2.0 * cert.gap / cert.lam)


def radius_dual(cert: GapCertificate) -> float:
    """sqrt(2 n_new mu G); requires a smooth loss."""
    if not cert.mu > 0.0:
        raise AssumptionError("the dual radius needs a mu-smooth loss")
    return math.sqrt(2.0 * cert.n_new * cert.mu * cert.gap)


def _shift(r, norms):
    """r * norms with the convention 0 * inf = 0 (a zero row pins its margin
    regardless of the ball size)."""
    out = r * np.asarray(norms, dtype=float)
    if np.isinf(r):
        out = np.where(norms == 0.0, 0.0, out)
    return out


def dual_box_arrays(ds_new, loss: LossSpec, w_hat, r_p):
    """(lo, hi) arrays of the per-instance dual box from a primal ball."""
    if r_p < 0.0:
        raise AssumptionError("r_p must be nonnegative")
    t = ds_new.matvec(np.asarray(w_hat, dtype=float))
    shift = _shift(r_p, ds_new.instance_norms)
    lo = -convex.loss_grad_vec(loss.kind, loss.gamma, ds_new.y, t + shift)
    hi = -convex.loss_grad_vec(loss.kind, loss.gamma, ds_new.y, t - shift)
    return lo, hi


def dual_box_from_primal_ball(ds_new, loss: LossSpec, w_hat, r_p):
    """Per-instance intervals containing the retrained dual coordinates:
    a_i in [-ell'(X_{i:} w_hat + r_p ||X_{i:}||), -ell'(... - r_p ||X_{i:}||)].
    """
    lo, hi = dual_box_arrays(ds_new, loss, w_hat, r_p)
    return [Interval(float(a), float(b)) for a, b in zip(lo, hi)]


class ColumnLinearBounds:
    """Extremes of X_:j^T u over per-instance boxes u_i in [a_i, b_i], for
    every column at once, with O(d) leave-one-out rescoring.

    Since every box contains zero, each entry's minimal contribution
    min(v a_i, v b_i) is <= 0 and the maximal one is >= 0; infinite
    contributions are counted separately so one can be backed out exactly.
    """

    def __init__(self, ds, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = ds.d
        self.sum_min = np.zeros(d)
        self.sum_max = np.zeros(d)
        self.cnt_min = np.zeros(d, dtype=np.int64)
        self.cnt_max = np.zeros(d, dtype=np.int64)
        self._a = a
        self._b = b
        for j in range(d):
            idx, vals = ds.col_nonzeros(j)
            if idx.size == 0:
                continue
            with np.errstate(invalid="ignore"):
                p = vals * a[idx]
                q = vals * b[idx]
            mn = np.minimum(p, q)
            mx = np.maximum(p, q)
            neg = np.isneginf(mn)
            pos = np.isposinf(mx)
            self.cnt_min[j] = int(neg.sum())
            self.cnt_max[j] = int(pos.sum())
            self.sum_min[j] = mn[~neg].sum()
            self.sum_max[j] = mx[~pos].sum()

    def full(self):
        lo = np.where(self.cnt_min > 0, -convex.INF, self.sum_min)
        hi = np.where(self.cnt_max > 0, convex.INF, self.sum_max)
        return lo, hi

    def without_instance(self, i, row_idx, row_vals):
        """(lo, hi) with instance i's row excluded; touches only its support."""
        lo, hi = self.full()
        if row_idx.size == 0:
            return lo, hi
        p = row_vals * self._a[i]
        q = row_vals * self._b[i]
        mn = np.minimum(p, q)
        mx = np.maximum(p, q)
        for k, j in enumerate(row_idx):
            cm = self.cnt_min[j] - (1 if np.isneginf(mn[k]) else 0)
            lo[j] = -convex.INF if cm > 0 else \
                self.sum_min[j] - (mn[k] if np.isfinite(mn[k]) else 0.0)
            cx = self.cnt_max[j] - (1 if np.isposinf(mx[k]) else 0)
            hi[j] = convex.INF if cx > 0 else \
                self.sum_max[j] - (mx[k] if np.isfinite(mx[k]) else 0.0)
        return lo, hi


def f_bounds_arrays(ds_new, loss: LossSpec, reg: RegSpec, alpha_hat, r_d,
                    tighten=True):
    """[F_lo, F_hi] for every feature: the certified range of X_:j^T a*new.

    Untightened this is the Cauchy-Schwarz slab around X_:j^T alpha_hat of
    half-width r_d ||X_:j||; tightening intersects it with the range over the
    dual-domain boxes and with n_new * dom rho_j*.
    """
    if r_d < 0.0:
        raise AssumptionError("r_d must be nonnegative")
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    center = ds_new.rmatvec(alpha_hat)
    width = _shift(r_d, ds_new.feature_norms)
    f_lo = center - width
    f_hi = center + width
    if tighten:
        a, b = convex.alpha_box_vec(loss.kind, loss.gamma, ds_new.y)
        clb = ColumnLinearBounds(ds_new, a, b)
        box_lo, box_hi = clb.full()
        n_new = ds_new.n
        dom_lo = np.empty(ds_new.d)
        dom_hi = np.empty(ds_new.d)
        for j in range(ds_new.d):
            dom = convex.reg_conj_domain(reg, j)
            dom_lo[j] = dom.lo
            dom_hi[j] = dom.hi
        f_lo = np.maximum(f_lo, np.maximum(box_lo, n_new * dom_lo))
        f_hi = np.minimum(f_hi, np.minimum(box_hi, n_new * dom_hi))
        # the constraints all hold at the true value, so a crossing is
        # rounding noise; collapse to the midpoint
        swap = f_lo > f_hi
        if swap.any():
            mid = 0.5 * (f_lo[swap] + f_hi[swap])
            f_lo[swap] = mid
            f_hi[swap] = mid
    return f_lo, f_hi


def f_bounds(ds_new, loss: LossSpec, reg: RegSpec, alpha_hat, r_d, j,
             tighten=True) -> Interval:
    """The feature-j slice of f_bounds_arrays."""
    f_lo, f_hi = f_bounds_arrays(ds_new, loss, reg, alpha_hat, r_d, tighten)
    return Interval(float(f_lo[j]), float(f_hi[j]))


def primal_box_arrays(ds_new, loss: LossSpec, reg: RegSpec, alpha_hat, r_d,
                      tighten=True):
    """(lo, hi) arrays of the per-feature primal box from a dual ball."""
    f_lo, f_hi = f_bounds_arrays(ds_new, loss, reg, alpha_hat, r_d, tighten)
    n_new = ds_new.n
    return convex.reg_conj_subgrad_vec(reg, f_lo / n_new, f_hi / n_new)


def primal_box_from_dual_ball(ds_new, loss: LossSpec, reg: RegSpec,
                              alpha_hat, r_d, tighten=True):
    """Per-feature intervals containing the retrained weights:
    w_j in [inf drho_j*(F_lo/n_new), sup drho_j*(F_hi/n_new)]; endpoints are
    +-inf exactly where the conjugate subgradient is unbounded."""
    lo, hi = primal_box_arrays(ds_new, loss, reg, alpha_hat, r_d, tighten)
    return [Interval(float(a), float(b)) for a, b in zip(lo, hi)]


def predict_bounds_primal_scb(x_test, w_hat, r_p) -> Interval:
    """x . w_hat plus/minus r_p ||x||_2."""
    if r_p < 0.0:
        raise AssumptionError("r_p must be nonnegative")
    x = np.asarray(x_test, dtype=float)
    t = float(x @ np.asarray(w_hat, dtype=float))
    shift = float(_shift(r_p, np.linalg.norm(x)))
    return Interval(t - shift, t + shift)


def predict_bounds_dual_scb(x_test, w_box) -> Interval:
    """Range of x . w over a per-feature box, via minlin/maxlin."""
    x = np.asarray(x_test, dtype=float)
    if isinstance(w_box, tuple) and len(w_box) == 2:
        lo, hi = (np.asarray(w_box[0], dtype=float),
                  np.asarray(w_box[1], dtype=float))
    else:
        lo = np.asarray([iv.lo for iv in w_box])
        hi = np.asarray([iv.hi for iv in w_box])
    return Interval(convex.minlin(lo, hi, x), convex.maxlin(lo, hi, x))


def label_determination(bound: Interval) -> str:
    """positive iff the whole interval is > 0, negative iff < 0, else
    undetermined; exact zero endpoints stay undetermined."""
    if bound.lo > 0.0:
        return "positive"
    if bound.hi < 0.0:
        return "negative"
    return "undetermined"
