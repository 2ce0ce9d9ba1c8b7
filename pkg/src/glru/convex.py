"""Loss and regularizer catalog with values, subgradient intervals, convex
conjugates, and curvature constants.

Losses are univariate functions ``ell_y(t)`` of a prediction t with outcome
y (real for squared/huber, +/-1 for the margin losses). Regularizers are
separable with one shared coordinate penalty, except for an optional
unregularized intercept occupying the last coordinate.

Scalar entry points (`loss_value`, `reg_conj_subgrad`, ...) implement the
per-coordinate contracts; the ``*_vec`` kernels are the vectorized forms used
by the solver and the bound machinery. Both share the same formulas.

Conventions: infinite interval endpoints are IEEE infinities, never clamped;
``0 * inf`` counts as 0 inside `minlin`/`maxlin` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

LOSS_KINDS = ("squared", "huber", "squared_hinge", "smoothed_hinge", "logistic")
REG_KINDS = ("l2", "enet", "l1")

_MARGIN_LOSSES = frozenset(("squared_hinge", "smoothed_hinge", "logistic"))
_GAMMA_LOSSES = frozenset(("huber", "smoothed_hinge"))

INF = math.inf


@dataclass(frozen=True)
class Interval:
    """Closed extended-real interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise ValueError("not an interval: [%r, %r]" % (self.lo, self.hi))

    def contains(self, t, atol=0.0):
        return self.lo - atol <= t <= self.hi + atol

    @property
    def width(self):
        return self.hi - self.lo


def min_abs_element(iv: Interval) -> float:
    """The element of minimum absolute value of a closed interval.

    This is the catalog's selection rule whenever a single element of a
    subgradient interval is needed (KKT-based construction of dual and
    primal candidates).
    """
    if iv.lo > 0.0:
        return iv.lo
    if iv.hi < 0.0:
        return iv.hi
    return 0.0


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossSpec:
    """One catalog loss ell_y with outcome y and shape parameter gamma.

    gamma is read only by the huber and smoothed_hinge kinds. The margin
    losses require y in {-1, +1}.
    """

    kind: str
    y: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError("unknown loss kind %r" % (self.kind,))
        if self.kind in _GAMMA_LOSSES and not self.gamma > 0.0:
            raise ValueError("gamma must be positive for %s" % self.kind)
        if self.kind in _MARGIN_LOSSES and self.y not in (-1.0, 1.0):
            raise ValueError("%s expects y in {-1, +1}" % self.kind)

    @property
    def mu(self) -> float:
        """Smoothness constant of ell_y (Lipschitz constant of its derivative)."""
        return loss_mu(self.kind, self.gamma)

    @property
    def conj_domain(self) -> Interval:
        """dom ell* = closure of the range of the derivative of ell_y."""
        lo, hi = loss_conj_domain_vec(self.kind, self.gamma,
                                      np.asarray([self.y], dtype=float))
        return Interval(float(lo[0]), float(hi[0]))


def loss_mu(kind: str, gamma: float = 1.0) -> float:
    if kind == "squared":
        return 1.0
    if kind == "huber":
        return 1.0
    if kind == "squared_hinge":
        return 2.0
    if kind == "smoothed_hinge":
        # second derivative of the quadratic branch (1 - yt)^2 / (2 gamma)
        return 1.0 / gamma
    if kind == "logistic":
        return 0.25
    raise ValueError("unknown loss kind %r" % (kind,))


def loss_value_vec(kind, gamma, y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind == "squared":
        return 0.5 * (t - y) ** 2
    if kind == "huber":
        r = np.abs(t - y)
        q = np.minimum(r, gamma)
        return q * (r - 0.5 * q)
    if kind == "squared_hinge":
        m = np.maximum(0.0, 1.0 - y * t)
        return m * m
    if kind == "smoothed_hinge":
        z = 1.0 - y * t
        return np.where(z <= 0.0, 0.0,
                        np.where(z <= gamma, z * z / (2.0 * gamma),
                                 z - 0.5 * gamma))
    if kind == "logistic":
        return np.logaddexp(0.0, -y * t)
    raise ValueError("unknown loss kind %r" % (kind,))


def loss_grad_vec(kind, gamma, y, t):
    """Derivative of ell_y at t (every catalog loss is differentiable)."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind == "squared":
        return t - y
    if kind == "huber":
        r = t - y
        return np.sign(r) * np.minimum(np.abs(r), gamma)
    if kind == "squared_hinge":
        return -2.0 * y * np.maximum(0.0, 1.0 - y * t)
    if kind == "smoothed_hinge":
        z = 1.0 - y * t
        return np.where(z <= 0.0, 0.0,
                        np.where(z <= gamma, -y * z / gamma, -y))
    if kind == "logistic":
        return -y * expit(-y * t)
    raise ValueError("unknown loss kind %r" % (kind,))


def loss_curv_vec(kind, gamma, y, t):
    """A weak second derivative of ell_y at t, for Newton-type solvers."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind == "squared":
        return np.ones_like(t)
    if kind == "huber":
        return (np.abs(t - y) <= gamma).astype(float)
    if kind == "squared_hinge":
        return 2.0 * (y * t < 1.0).astype(float)
    if kind == "smoothed_hinge":
        z = 1.0 - y * t
        return ((z > 0.0) & (z < gamma)).astype(float) / gamma
    if kind == "logistic":
        p = expit(y * t)
        return p * (1.0 - p)
    raise ValueError("unknown loss kind %r" % (kind,))


def loss_conj_vec(kind, gamma, y, s):
    """Convex conjugate ell*_y evaluated at s; +inf outside its domain."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    if kind == "squared":
        return 0.5 * s * (s + 2.0 * y)
    if kind == "huber":
        return np.where(np.abs(s) <= gamma, 0.5 * s * (s + 2.0 * y), INF)
    if kind == "squared_hinge":
        return np.where(y * s <= 0.0, 0.25 * s * s + y * s, INF)
    if kind == "smoothed_hinge":
        v = y * s
        return np.where((v >= -1.0) & (v <= 0.0),
                        v + 0.5 * gamma * s * s, INF)
    if kind == "logistic":
        v = y * s
        inside = (v >= -1.0) & (v <= 0.0)
        vv = np.where(inside, np.clip(v, -1.0, 0.0), -0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(vv + 1.0 > 0.0, (vv + 1.0) * np.log(vv + 1.0), 0.0)
            b = np.where(-vv > 0.0, -vv * np.log(-vv), 0.0)
        out = a + b
        return np.where(inside, out, INF)
    raise ValueError("unknown loss kind %r" % (kind,))


def loss_conj_domain_vec(kind, gamma, y):
    """Per-instance endpoints (lo, hi) of dom ell*_y."""
    y = np.asarray(y, dtype=float)
    pos = y > 0.0
    if kind == "squared":
        lo = np.full_like(y, -INF)
        hi = np.full_like(y, INF)
    elif kind == "huber":
        lo = np.full_like(y, -gamma)
        hi = np.full_like(y, gamma)
    elif kind == "squared_hinge":
        lo = np.where(pos, -INF, 0.0)
        hi = np.where(pos, 0.0, INF)
    elif kind in ("smoothed_hinge", "logistic"):
        lo = np.where(pos, -1.0, 0.0)
        hi = np.where(pos, 0.0, 1.0)
    else:
        raise ValueError("unknown loss kind %r" % (kind,))
    return lo, hi


def alpha_box_vec(kind, gamma, y):
    """Per-instance feasibility box for dual coordinates.

    The dual of the training problem is finite only when
    alpha_i in [-hi_i, -lo_i] with (lo, hi) = dom ell*_{y_i}; every box
    contains 0.
    """
    lo, hi = loss_conj_domain_vec(kind, gamma, y)
    return -hi, -lo


def loss_value(spec: LossSpec, t: float) -> float:
    return float(loss_value_vec(spec.kind, spec.gamma, spec.y, float(t)))


def loss_subgrad(spec: LossSpec, t: float) -> Interval:
    """Subgradient interval of ell_y at t (a singleton: catalog losses are
    differentiable everywhere)."""
    g = float(loss_grad_vec(spec.kind, spec.gamma, spec.y, float(t)))
    return Interval(g, g)


def loss_conj(spec: LossSpec, s: float) -> float:
    return float(loss_conj_vec(spec.kind, spec.gamma, spec.y, float(s)))


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegSpec:
    """A separable regularizer: one shared coordinate penalty, optionally an
    unregularized intercept as the last coordinate.

    kind "l2":   rho_j(t) = (lam/2) t^2
    kind "enet": rho_j(t) = (lam/2) t^2 + kappa |t|
    kind "l1":   rho_j(t) = lam |t|

    With ``intercept=True`` the coordinate j = dim-1 has rho_j = 0 instead.
    `lam` is the catalog hyperparameter; the usable strong-convexity constant
    of the whole regularizer is `strong_convexity` (0 for l1 and for any
    regularizer with an intercept, since that coordinate has no curvature).
    """

    kind: str
    lam: float
    kappa: float = 0.0
    intercept: bool = False
    dim: int = 1

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise ValueError("unknown regularizer kind %r" % (self.kind,))
        if not self.lam > 0.0:
            raise ValueError("lam must be positive")
        if self.kappa < 0.0:
            raise ValueError("kappa must be nonnegative")
        if self.kind != "enet" and self.kappa != 0.0:
            raise ValueError("kappa applies to the enet kind only")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.intercept and self.dim < 2:
            raise ValueError("an intercept model needs at least 2 coordinates")

    @property
    def strong_convexity(self) -> float:
        """Largest c such that every coordinate penalty is c-strongly convex."""
        if self.kind == "l1" or self.intercept:
            return 0.0
        return self.lam

    def is_intercept_coord(self, j: int) -> bool:
        return self.intercept and j == self.dim - 1

    def resize(self, dim: int) -> "RegSpec":
        """The same penalty family on a different number of coordinates."""
        return replace(self, dim=dim)

    def _check_coord(self, j: int):
        if not 0 <= j < self.dim:
            raise ValueError("coordinate %d out of range for dim %d"
                             % (j, self.dim))


def reg_value(spec: RegSpec, j: int, t: float) -> float:
    spec._check_coord(j)
    t = float(t)
    if spec.is_intercept_coord(j):
        return 0.0
    if spec.kind == "l1":
        return spec.lam * abs(t)
    return 0.5 * spec.lam * t * t + spec.kappa * abs(t)


def reg_conj(spec: RegSpec, j: int, s: float) -> float:
    spec._check_coord(j)
    s = float(s)
    if spec.is_intercept_coord(j):
        return 0.0 if s == 0.0 else INF
    if spec.kind == "l1":
        return 0.0 if abs(s) <= spec.lam else INF
    r = max(abs(s) - spec.kappa, 0.0)
    return r * r / (2.0 * spec.lam)


def reg_conj_subgrad(spec: RegSpec, j: int, s: float) -> Interval:
    """Subgradient interval of rho_j* at s; endpoints may be infinite."""
    spec._check_coord(j)
    s = float(s)
    if spec.is_intercept_coord(j):
        if s < 0.0:
            return Interval(-INF, -INF)
        if s > 0.0:
            return Interval(INF, INF)
        return Interval(-INF, INF)
    if spec.kind == "l1":
        # the +-lam comparisons get an ulp-scale band: upstream arguments
        # reach the boundary through rounded arithmetic, and widening the
        # verdict there only ever makes the interval safer
        lam_in = spec.lam * (1.0 - 1e-14)
        if s < -spec.lam:
            return Interval(-INF, -INF)
        if s <= -lam_in:
            return Interval(-INF, 0.0)
        if s < lam_in:
            return Interval(0.0, 0.0)
        if s <= spec.lam:
            return Interval(0.0, INF)
        return Interval(INF, INF)
    g = math.copysign(max(abs(s) - spec.kappa, 0.0), s) / spec.lam
    return Interval(g, g)


def reg_conj_domain(spec: RegSpec, j: int) -> Interval:
    """dom rho_j*, which equals the closed range of the subgradients of
    rho_j over the reals."""
    spec._check_coord(j)
    if spec.is_intercept_coord(j):
        return Interval(0.0, 0.0)
    if spec.kind == "l1":
        return Interval(-spec.lam, spec.lam)
    return Interval(-INF, INF)


def reg_total(spec: RegSpec, w) -> float:
    """Sum of rho_j(w_j) over all coordinates."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.dim,):
        raise ValueError("w has length %d, expected %d" % (w.size, spec.dim))
    body = w[:-1] if spec.intercept else w
    if spec.kind == "l1":
        return float(spec.lam * np.abs(body).sum())
    return float(0.5 * spec.lam * body @ body + spec.kappa * np.abs(body).sum())


def reg_conj_total(spec: RegSpec, v) -> float:
    """Sum of rho_j*(v_j); +inf as soon as one coordinate is infeasible."""
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.dim,):
        raise ValueError("v has length %d, expected %d" % (v.size, spec.dim))
    body = v
    if spec.intercept:
        if v[-1] != 0.0:
            return INF
        body = v[:-1]
    if spec.kind == "l1":
        return 0.0 if np.all(np.abs(body) <= spec.lam) else INF
    r = np.maximum(np.abs(body) - spec.kappa, 0.0)
    return float(r @ r / (2.0 * spec.lam))


def reg_conj_subgrad_vec(spec: RegSpec, u_lo, u_hi):
    """Monotone image of per-coordinate argument intervals through the
    conjugate subgradient: returns (lo, hi) arrays with
    lo_j = inf subgrad rho_j*(u_lo_j) and hi_j = sup subgrad rho_j*(u_hi_j).
    """
    u_lo = np.asarray(u_lo, dtype=float)
    u_hi = np.asarray(u_hi, dtype=float)
    if spec.kind == "l1":
        # same ulp-scale boundary band as the scalar map
        lam = spec.lam
        lam_in = lam * (1.0 - 1e-14)
        lo = np.where(u_lo <= -lam_in, -INF, np.where(u_lo > lam, INF, 0.0))
        hi = np.where(u_hi >= lam_in, INF, np.where(u_hi < -lam, -INF, 0.0))
    else:
        with np.errstate(invalid="ignore"):
            lo = np.sign(u_lo) * np.maximum(np.abs(u_lo) - spec.kappa, 0.0) / spec.lam
            hi = np.sign(u_hi) * np.maximum(np.abs(u_hi) - spec.kappa, 0.0) / spec.lam
        # sign(+-inf) is fine, but 0 * inf from sign(0)*inf cannot occur since
        # |u| - kappa <= 0 there
    if spec.intercept:
        j = spec.dim - 1
        lo[j] = -INF if u_lo[j] <= 0.0 else INF
        hi[j] = INF if u_hi[j] >= 0.0 else -INF
    return lo, hi


# ---------------------------------------------------------------------------
# linear optimization over a box
# ---------------------------------------------------------------------------

def _box_linear(a, b, c, minimize):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if not (a.shape == b.shape == c.shape):
        raise ValueError("minlin/maxlin need equally shaped inputs")
    if minimize:
        pick = np.where(c > 0.0, a, b)
    else:
        pick = np.where(c > 0.0, b, a)
    nz = c != 0.0
    contrib = np.zeros_like(c)
    contrib[nz] = c[nz] * pick[nz]
    # An extreme contribution with the "wrong" sign is forced: both endpoints
    # of that coordinate's box yield it, so every well-defined value of c.v
    # carries it and it overrides optional infinities of the other sign.
    if minimize:
        if np.isposinf(contrib).any():
            return INF
        if np.isneginf(contrib).any():
            return -INF
    else:
        if np.isneginf(contrib).any():
            return -INF
        if np.isposinf(contrib).any():
            return INF
    return float(contrib.sum())


def minlin(a, b, c) -> float:
    """inf of c.v over the box a <= v <= b, with 0 * inf treated as 0 and
    sums taken over the points where c.v is well defined."""
    return _box_linear(a, b, c, minimize=True)


def maxlin(a, b, c) -> float:
    """sup of c.v over the box a <= v <= b, with 0 * inf treated as 0 and
    sums taken over the points where c.v is well defined."""
    return _box_linear(a, b, c, minimize=False)
