"""End-to-end procedures built on the fast gap certificates.

Covers screened and naive leave-one-out cross-validation, the one-step
Newton approximation used as a baseline, backward stepwise feature
elimination with safe candidate skipping, and the bound-tightness study
over growing dataset modifications.
"""

import dataclasses
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bounds, convex, data, erm, gapfast
from .bounds import ColumnLinearBounds, radius_dual, radius_primal
from .convex import Interval, LossSpec, RegSpec
from .errors import ConfigError, ConvergenceError, SpecializationError, \
    ValidationError

BOUND_KINDS = ("primal-scb", "dual-scb")


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------

@dataclass
class FoldRecord:
    """Outcome of one leave-one-out fold."""

    status: str               # determined-correct | determined-error |
                              # trained | approximated
    bound: Interval
    train_time: float = 0.0

    def to_dict(self):
        return {"status": self.status,
                "bound": [self.bound.lo, self.bound.hi],
                "train_time": self.train_time}


@dataclass
class LoocvReport:
    error_count: int
    per_instance: list
    trainings_performed: int
    gap_time_total: float

    def to_dict(self):
        return {"error_count": self.error_count,
                "per_instance": [r.to_dict() for r in self.per_instance],
                "trainings_performed": self.trainings_performed,
                "gap_time_total": self.gap_time_total}


@dataclass
class StepRecord:
    """One elimination step: which candidates were screened away, which had
    to be trained, and what was removed."""

    candidates_screened: int
    candidates_trained: int
    e_best: int
    counters: dict            # feature id -> {"C": int, "I": int, "Z": int}
    errors: dict              # feature id -> E[j], trained candidates only
    removed: object           # feature id or None on the final step

    def to_dict(self):
        return {"candidates_screened": self.candidates_screened,
                "candidates_trained": self.candidates_trained,
                "E_best": self.e_best,
                "counters": {str(j): dict(c) for j, c in
                             sorted(self.counters.items())},
                "errors": {str(j): e for j, e in sorted(self.errors.items())},
                "removed": self.removed}


@dataclass
class StepwiseReport:
    selected: list            # removal order, original feature ids
    per_step: list
    final_set: list           # surviving original feature ids

    def to_dict(self):
        return {"selected": self.selected,
                "per_step": [s.to_dict() for s in self.per_step],
                "final_set": self.final_set}


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def predicted_sign(t):
    """Label predictions with sign(0) = +1."""
    t = np.asarray(t, dtype=float)
    return np.where(t < 0.0, -1.0, 1.0)


def validation_errors(t, y) -> int:
    return int(np.count_nonzero(predicted_sign(t) != np.asarray(y)))


def _merge_config(config, defaults, what):
    cfg = dict(defaults)
    if config:
        unknown = sorted(set(config) - set(defaults))
        if unknown:
            raise ConfigError("unknown %s option(s): %s"
                              % (what, ", ".join(unknown)))
        cfg.update(config)
    return cfg


def _require_classification(ds, what):
    if not ds.classification:
        raise ValidationError("%s needs +/-1 labels" % what)


def _parallel_map(fn, items, jobs):
    """Index-ordered map; a thread pool when jobs > 1."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _with_lambda(reg: RegSpec, lam: float) -> RegSpec:
    return dataclasses.replace(reg, lam=lam)


def _retrain_fold(ds, loss, reg, i, warm, tol, stop=None):
    try:
        if stop is None:
            return erm.train(ds, loss, reg, rel_gap_tol=tol, warm_start=warm)
        return erm.train_with_stop_predicate(ds, loss, reg, stop,
                                             rel_gap_tol=tol, warm_start=warm)
    except ConvergenceError as exc:
        raise ConvergenceError("fold %d: %s" % (i, exc),
                               best_gap=exc.best_gap) from exc


def box_prediction_interval(row_idx, row_vals, w_lo, w_hi):
    """Range of x.w over a per-coordinate box, summed over the row support
    (entries outside the support contribute exactly 0)."""
    lo_ends = row_vals * w_lo[row_idx]
    hi_ends = row_vals * w_hi[row_idx]
    return (float(np.minimum(lo_ends, hi_ends).sum()),
            float(np.maximum(lo_ends, hi_ends).sum()))


def box_prediction_bounds(x, w_lo, w_hi):
    """Vectorized box_prediction_interval over the rows of a dense matrix."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        a = x * w_lo[None, :]
        b = x * w_hi[None, :]
    zero = x == 0.0
    if zero.any():
        a = np.where(zero, 0.0, a)
        b = np.where(zero, 0.0, b)
    return (np.minimum(a, b).sum(axis=1), np.maximum(a, b).sum(axis=1))


def determination_rate(lo, hi) -> float:
    """Fraction of prediction intervals that exclude zero."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return float(np.mean((lo > 0.0) | (hi < 0.0)))


# ---------------------------------------------------------------------------
# LOOCV
# ---------------------------------------------------------------------------

_LOOCV_NAIVE_DEFAULTS = {"rel_gap_tol": 1e-8, "warm_start": True, "jobs": 1}


def loocv_naive(ds, loss: LossSpec, reg: RegSpec, config=None) -> LoocvReport:
    """Train every fold and count the misclassified held-out instances."""
    cfg = _merge_config(config, _LOOCV_NAIVE_DEFAULTS, "loocv")
    _require_classification(ds, "LOOCV")
    tol = float(cfg["rel_gap_tol"])
    model = erm.train(ds, loss, reg, rel_gap_tol=tol)
    warm = model.w if cfg["warm_start"] else None

    def fold(i):
        ds_i = ds.remove_instances([i])
        start = time.perf_counter()
        m_i = _retrain_fold(ds_i, loss, reg, i, warm, tol)
        elapsed = time.perf_counter() - start
        ridx, rvals = ds.row_nonzeros(i)
        t = float(rvals @ m_i.w[ridx])
        return FoldRecord("trained", Interval(t, t), elapsed), t

    results = _parallel_map(fold, list(range(ds.n)), int(cfg["jobs"]))
    records = [r for r, _ in results]
    preds = np.array([t for _, t in results])
    e = validation_errors(preds, ds.y)
    return LoocvReport(error_count=e, per_instance=records,
                       trainings_performed=ds.n, gap_time_total=0.0)


_LOOCV_GLRU_DEFAULTS = {"bound": "primal-scb", "early_stop": False,
                        "rel_gap_tol": 1e-8, "jobs": 1}


def loocv_glru(ds, loss: LossSpec, reg: RegSpec, config=None) -> LoocvReport:
    """LOOCV where each fold is first screened with a prediction interval
    around the full-data optimum; only undetermined folds are retrained."""
    cfg = _merge_config(config, _LOOCV_GLRU_DEFAULTS, "loocv")
    bound = cfg["bound"]
    if bound not in BOUND_KINDS:
        raise ConfigError("bound must be one of %s" % (BOUND_KINDS,))
    if bound == "primal-scb" and reg.strong_convexity <= 0.0:
        raise ConfigError("primal-scb needs a strongly convex penalty "
                          "on every coordinate")
    if bound == "dual-scb" and loss.mu <= 0.0:
        raise ConfigError("dual-scb needs a smooth loss")
    early_stop = bool(cfg["early_stop"])
    if early_stop and reg.strong_convexity <= 0.0:
        raise ConfigError("early stopping uses the primal radius and needs "
                          "a strongly convex penalty")
    _require_classification(ds, "LOOCV")
    tol = float(cfg["rel_gap_tol"])

    model = erm.train(ds, loss, reg, rel_gap_tol=tol)
    n = ds.n
    plain_l2 = reg.kind == "l2" and not reg.intercept
    if bound == "dual-scb":
        a_lo, a_hi = convex.alpha_box_vec(loss.kind, loss.gamma, ds.y)
        clb = ColumnLinearBounds(ds, a_lo, a_hi)
        dom_lo = np.empty(ds.d)
        dom_hi = np.empty(ds.d)
        for j in range(ds.d):
            dom = convex.reg_conj_domain(reg, j)
            dom_lo[j] = dom.lo
            dom_hi[j] = dom.hi
        feat_sq = ds.feature_norms ** 2

    gap_time = 0.0
    records = [None] * n
    errs = np.zeros(n, dtype=bool)
    undetermined = []
    for i in range(n):
        start = time.perf_counter()
        if plain_l2:
            cert = gapfast.gap_loocv_l2(model, ds, i)
        else:
            cert, _ = gapfast.gap_instance_removal(model, ds, [i])
        ridx, rvals = ds.row_nonzeros(i)
        if bound == "primal-scb":
            rad = float(bounds._shift(radius_primal(cert),
                                      float(ds.instance_norms[i])))
            center = float(model.cache.xw[i])
            lo, hi = center - rad, center + rad
        else:
            r_d = radius_dual(cert)
            v = model.cache.xt_alpha.copy()
            v[ridx] -= model.alpha[i] * rvals
            loo_sq = feat_sq.copy()
            loo_sq[ridx] = np.maximum(loo_sq[ridx] - rvals ** 2, 0.0)
            width = bounds._shift(r_d, np.sqrt(loo_sq))
            box_lo, box_hi = clb.without_instance(i, ridx, rvals)
            n_new = n - 1
            f_lo = np.maximum(v - width, np.maximum(box_lo, n_new * dom_lo))
            f_hi = np.minimum(v + width, np.minimum(box_hi, n_new * dom_hi))
            swap = f_lo > f_hi
            if swap.any():
                mid = 0.5 * (f_lo[swap] + f_hi[swap])
                f_lo[swap] = mid
                f_hi[swap] = mid
            w_lo, w_hi = convex.reg_conj_subgrad_vec(reg, f_lo / n_new,
                                                     f_hi / n_new)
            lo, hi = box_prediction_interval(ridx, rvals, w_lo, w_hi)
        gap_time += time.perf_counter() - start
        iv = Interval(lo, hi)
        if lo > 0.0:
            wrong = ds.y[i] == -1.0
        elif hi < 0.0:
            wrong = ds.y[i] == 1.0
        else:
            undetermined.append(i)
            records[i] = FoldRecord("trained", iv)
            continue
        errs[i] = wrong
        records[i] = FoldRecord(
            "determined-error" if wrong else "determined-correct", iv)

    def retrain(i):
        ridx, rvals = ds.row_nonzeros(i)
        nrm2 = float(ds.instance_norms[i]) ** 2
        stop = None
        if early_stop and nrm2 > 0.0:
            lam = reg.strong_convexity
            thresh = 2.0 * nrm2 / lam

            def stop(w, alpha, gap, _r=ridx, _v=rvals, _t=thresh):
                margin = float(_v @ w[_r])
                return gap * _t < margin * margin

        ds_i = ds.remove_instances([i])
        start = time.perf_counter()
        m_i = _retrain_fold(ds_i, loss, reg, i, model.w, tol, stop)
        elapsed = time.perf_counter() - start
        return float(rvals @ m_i.w[ridx]), elapsed

    retrained = _parallel_map(retrain, undetermined, int(cfg["jobs"]))
    for i, (t, elapsed) in zip(undetermined, retrained):
        errs[i] = predicted_sign(t) != ds.y[i]
        records[i].train_time = elapsed
    return LoocvReport(error_count=int(errs.sum()), per_instance=records,
                       trainings_performed=len(undetermined),
                       gap_time_total=gap_time)


_APPROX_LOSSES = ("logistic", "squared", "huber")


def sherman_morrison_inverse(h_inv, x, s):
    """Inverse of (H - s x x^T) from the inverse of H by a rank-one update."""
    u = h_inv @ x
    denom = 1.0 - s * float(x @ u)
    return h_inv + (s / denom) * np.outer(u, u)


def loocv_approx(ds, loss: LossSpec, reg: RegSpec, config=None) -> LoocvReport:
    """One-step-Newton approximation of every fold from the full-data
    optimum, with the per-fold Hessian inverted by a rank-one update of the
    precomputed full inverse. Approximate: the report is diagnostic, not a
    certificate."""
    cfg = _merge_config(config, {"rel_gap_tol": 1e-10}, "loocv")
    if loss.kind not in _APPROX_LOSSES:
        raise SpecializationError(
            "the one-step-Newton path needs a twice differentiable loss "
            "(one of %s)" % (_APPROX_LOSSES,))
    if reg.kind != "l2" or reg.intercept:
        raise SpecializationError(
            "the one-step-Newton path needs a plain quadratic penalty")
    _require_classification(ds, "LOOCV")
    model = erm.train(ds, loss, reg, rel_gap_tol=float(cfg["rel_gap_tol"]))
    n, d = ds.n, ds.d
    if n < 2:
        raise ValidationError("cannot remove every instance")
    lam = reg.lam
    x = ds.to_dense()
    curv = convex.loss_curv_vec(loss.kind, loss.gamma, ds.y, model.cache.xw)
    grad = convex.loss_grad_vec(loss.kind, loss.gamma, ds.y, model.cache.xw)
    hess = (x.T * curv) @ x / n + lam * np.eye(d)
    h_tilde = (n * hess - lam * np.eye(d)) / (n - 1)
    try:
        h_inv = np.linalg.inv(h_tilde)
    except np.linalg.LinAlgError:
        warnings.warn("per-fold Hessian is singular; falling back to the "
                      "pseudo-inverse", RuntimeWarning)
        h_inv = np.linalg.pinv(h_tilde)

    records = []
    preds = np.empty(n)
    for i in range(n):
        xi = x[i]
        g = -(grad[i] * xi + lam * model.w) / (n - 1)
        s = curv[i] / (n - 1)
        inv_i = sherman_morrison_inverse(h_inv, xi, s)
        w_i = model.w - inv_i @ g
        t = float(xi @ w_i)
        preds[i] = t
        records.append(FoldRecord("approximated", Interval(t, t)))
    e = validation_errors(preds, ds.y)
    return LoocvReport(error_count=e, per_instance=records,
                       trainings_performed=0, gap_time_total=0.0)


# ---------------------------------------------------------------------------
# stepwise feature elimination
# ---------------------------------------------------------------------------

def _check_stepwise_inputs(train_ds, valid_ds):
    if train_ds.d != valid_ds.d:
        raise ValidationError("training and validation sets disagree on the "
                              "number of features")
    _require_classification(train_ds, "stepwise elimination")
    _require_classification(valid_ds, "stepwise elimination")


def _empty_candidate_errors(valid_ds) -> int:
    # with no features left every prediction is 0, classified positive
    return int(np.count_nonzero(valid_ds.y == -1.0))


class _StepwiseState:
    """Bookkeeping shared by the naive and the screened elimination loops:
    the surviving original feature ids plus the train/validation matrices
    restricted to them."""

    def __init__(self, train_ds, valid_ds, loss, reg, tol):
        self.loss = loss
        self.tol = tol
        self.ids = list(range(train_ds.d))
        self.train = train_ds
        self.valid = valid_ds
        self.reg = reg
        self.intercept_id = train_ds.d - 1 if reg.intercept else None
        self.model = erm.train(train_ds, loss, reg, rel_gap_tol=tol)
        self.e_null = validation_errors(valid_ds.matvec(self.model.w),
                                        valid_ds.y)

    def candidates(self):
        return [j for j in self.ids if j != self.intercept_id]

    def position(self, j) -> int:
        return self.ids.index(j)

    def train_candidate(self, j):
        """(E[j], trained model or None) after removing feature j."""
        p = self.position(j)
        if len(self.ids) == 1:
            return _empty_candidate_errors(self.valid), None
        ds_j = self.train.remove_features([p])
        reg_j = self.reg.resize(len(self.ids) - 1)
        warm = np.delete(self.model.w, p)
        m_j = erm.train(ds_j, self.loss, reg_j, rel_gap_tol=self.tol,
                        warm_start=warm)
        t = self.valid.remove_features([p]).matvec(m_j.w)
        return validation_errors(t, self.valid.y), m_j

    def remove(self, j, trained, e_j):
        p = self.position(j)
        self.ids.pop(p)
        self.e_null = e_j
        if trained is None:      # the empty candidate ended the search space
            self.train = None
            self.model = None
            return
        self.valid = self.valid.remove_features([p])
        self.reg = self.reg.resize(len(self.ids))
        self.train = self.train.remove_features([p])
        self.model = trained


_STEPWISE_DEFAULTS = {"rel_gap_tol": 1e-8, "jobs": 1}


def stepwise_naive(train_ds, valid_ds, loss: LossSpec, reg: RegSpec,
                   config=None) -> StepwiseReport:
    """Backward elimination that trains every candidate removal, drops the
    lowest-validation-error feature (lowest id on ties), and stops when no
    removal strictly improves."""
    cfg = _merge_config(config, _STEPWISE_DEFAULTS, "stepwise")
    _check_stepwise_inputs(train_ds, valid_ds)
    state = _StepwiseState(train_ds, valid_ds, loss, reg,
                           float(cfg["rel_gap_tol"]))
    selected = []
    steps = []
    while True:
        cands = state.candidates()
        if not cands:
            break
        results = _parallel_map(state.train_candidate, cands,
                                int(cfg["jobs"]))
        errors = {j: e for j, (e, _) in zip(cands, results)}
        models = {j: m for j, (_, m) in zip(cands, results)}
        j_best = min(cands, key=lambda j: (errors[j], j))
        improved = errors[j_best] < state.e_null
        steps.append(StepRecord(
            candidates_screened=0, candidates_trained=len(cands),
            e_best=errors[j_best] if improved else state.e_null,
            counters={}, errors=errors,
            removed=j_best if improved else None))
        if not improved:
            break
        selected.append(j_best)
        state.remove(j_best, models[j_best], errors[j_best])
        if state.train is None:
            break
    return StepwiseReport(selected=selected, per_step=steps,
                          final_set=list(state.ids))


_STEPWISE_GLRU_DEFAULTS = {"bound": "primal-scb", "rel_gap_tol": 1e-8,
                           "jobs": 1}


def stepwise_glru(train_ds, valid_ds, loss: LossSpec, reg: RegSpec,
                  config=None) -> StepwiseReport:
    """Backward elimination that lower-bounds each candidate's validation
    error from a feature-removal gap certificate, then trains candidates in
    ascending lower-bound order only while they might still win the step.

    The scan stops at the first candidate that can neither strictly improve
    on the best error found nor tie it with a lower feature id; every later
    candidate is at least as hopeless because they are visited in ascending
    (lower bound, id) order. Skipping on ties this way keeps the removal
    decision identical to the exhaustive loop's lowest-id argmin.
    """
    cfg = _merge_config(config, _STEPWISE_GLRU_DEFAULTS, "stepwise")
    bound = cfg["bound"]
    if bound not in BOUND_KINDS:
        raise ConfigError("bound must be one of %s" % (BOUND_KINDS,))
    if bound == "primal-scb" and reg.strong_convexity <= 0.0:
        raise ConfigError("primal-scb needs a strongly convex penalty "
                          "on every coordinate")
    if bound == "dual-scb" and loss.mu <= 0.0:
        raise ConfigError("dual-scb needs a smooth loss")
    _check_stepwise_inputs(train_ds, valid_ds)
    state = _StepwiseState(train_ds, valid_ds, loss, reg,
                           float(cfg["rel_gap_tol"]))
    selected = []
    steps = []
    while True:
        cands = state.candidates()
        if not cands:
            break
        counters = {}
        order = []
        if len(state.ids) == 1:
            # no screening is possible for the empty candidate
            j = cands[0]
            counters[j] = {"C": 0, "I": 0, "Z": state.valid.n}
            order.append((0, j))
        else:
            valid_x = state.valid.to_dense()
            t_base = valid_x @ state.model.w
            vnorm_sq = (valid_x ** 2).sum(axis=1)
            for j in cands:
                p = state.position(j)
                cert, w_hat = gapfast.gap_feature_removal(
                    state.model, state.train, [p])
                col = valid_x[:, p]
                if bound == "primal-scb":
                    t_j = t_base - state.model.w[p] * col
                    norms = np.sqrt(np.maximum(vnorm_sq - col ** 2, 0.0))
                    rad = bounds._shift(radius_primal(cert), norms)
                    lo, hi = t_j - rad, t_j + rad
                else:
                    ds_j = state.train.remove_features([p])
                    reg_j = state.reg.resize(len(state.ids) - 1)
                    f_lo, f_hi = bounds.f_bounds_arrays(
                        ds_j, loss, reg_j, state.model.alpha,
                        radius_dual(cert))
                    w_lo, w_hi = convex.reg_conj_subgrad_vec(
                        reg_j, f_lo / ds_j.n, f_hi / ds_j.n)
                    lo, hi = box_prediction_bounds(
                        np.delete(valid_x, p, axis=1), w_lo, w_hi)
                pos = lo > 0.0
                neg = hi < 0.0
                y = state.valid.y
                correct = np.count_nonzero((pos & (y == 1.0))
                                           | (neg & (y == -1.0)))
                wrong = np.count_nonzero((pos & (y == -1.0))
                                         | (neg & (y == 1.0)))
                counters[j] = {"C": int(correct), "I": int(wrong),
                               "Z": int(state.valid.n - correct - wrong)}
                order.append((counters[j]["I"], j))
        order.sort()
        e_best = state.e_null
        j_best = None
        errors = {}
        models = {}
        trained = 0
        for i_j, j in order:
            if i_j > e_best or (i_j == e_best
                                and (j_best is None or j > j_best)):
                break
            e_j, m_j = state.train_candidate(j)
            trained += 1
            errors[j] = e_j
            models[j] = m_j
            if e_j < e_best:
                e_best, j_best = e_j, j
            elif e_j == e_best and j_best is not None and j < j_best:
                j_best = j
        steps.append(StepRecord(
            candidates_screened=len(cands) - trained,
            candidates_trained=trained, e_best=e_best,
            counters=counters, errors=errors, removed=j_best))
        if j_best is None:
            break
        selected.append(j_best)
        state.remove(j_best, models[j_best], errors[j_best])
        if state.train is None:
            break
    return StepwiseReport(selected=selected, per_step=steps,
                          final_set=list(state.ids))


# ---------------------------------------------------------------------------
# bound-tightness study
# ---------------------------------------------------------------------------

MODIFICATION_KINDS = ("instance-removal", "instance-addition",
                      "feature-removal", "feature-addition")

_TIGHTNESS_DEFAULTS = {"kinds": MODIFICATION_KINDS, "bounds": BOUND_KINDS,
                       "test_fraction": 0.25, "seed": 0,
                       "rel_gap_tol": 1e-8}


def _dual_rate(ds_new, loss, reg_new, alpha_hat, r_d, test_x):
    f_lo, f_hi = bounds.f_bounds_arrays(ds_new, loss, reg_new, alpha_hat, r_d)
    w_lo, w_hi = convex.reg_conj_subgrad_vec(reg_new, f_lo / ds_new.n,
                                             f_hi / ds_new.n)
    lo, hi = box_prediction_bounds(test_x, w_lo, w_hi)
    return determination_rate(lo, hi)


def _primal_rate(test_x, w_hat, r_p):
    t = test_x @ w_hat
    rad = bounds._shift(r_p, np.sqrt((test_x ** 2).sum(axis=1)))
    return determination_rate(t - rad, t + rad)


def tightness_study(ds, loss: LossSpec, reg: RegSpec, mods, lambdas,
                    config=None):
    """Label determination rates under growing dataset modifications.

    For each penalty weight, modification kind, and nested modification
    count, certifies test-set predictions from the unmodified optimum alone
    and reports the fraction whose sign is pinned down. Returns rows of
    {lambda, kind, count, bound, rate}.
    """
    cfg = _merge_config(config, _TIGHTNESS_DEFAULTS, "tightness")
    _require_classification(ds, "the tightness study")
    counts = sorted(set(int(k) for k in mods))
    if not counts or counts[0] < 1:
        raise ConfigError("modification counts must be positive")
    for b in cfg["bounds"]:
        if b not in BOUND_KINDS:
            raise ConfigError("bound must be one of %s" % (BOUND_KINDS,))
    for kind in cfg["kinds"]:
        if kind not in MODIFICATION_KINDS:
            raise ConfigError("kind must be one of %s"
                              % (MODIFICATION_KINDS,))
    train_ds, test_ds = data.split_dataset(ds, float(cfg["test_fraction"]),
                                           int(cfg["seed"]))
    k_max = counts[-1]
    n, d = train_ds.n, train_ds.d
    if k_max >= n:
        raise ConfigError("more instance modifications than instances")
    body = d - 1 if reg.intercept else d
    rng = np.random.default_rng(int(cfg["seed"]) + 1)
    # one nested pool per kind, shared across the penalty grid so the rate
    # series differ only through the bounds
    rm_rows = rng.choice(n, size=k_max, replace=False)
    add_rows = rng.normal(size=(k_max, d))
    if reg.intercept:
        add_rows[:, -1] = 1.0
    add_labels = rng.choice([-1.0, 1.0], size=k_max)
    k_feat = min(k_max, body - 1)
    rm_cols = rng.choice(body, size=max(k_feat, 0), replace=False)
    add_cols = rng.normal(size=(n, k_max))
    add_cols_test = rng.normal(size=(test_ds.n, k_max))
    test_x = test_ds.to_dense()
    at = d - 1 if reg.intercept else d

    rows = []
    tol = float(cfg["rel_gap_tol"])
    for lam in lambdas:
        reg_lam = _with_lambda(reg, float(lam))
        model = erm.train(train_ds, loss, reg_lam, rel_gap_tol=tol)
        base_gap = max(model.cache.primal_value - model.cache.dual_value, 0.0)
        for kind in cfg["kinds"]:
            for k in [0] + counts:
                if kind == "feature-removal" and k > k_feat:
                    continue
                reg_new = reg_lam
                w_hat = model.w
                alpha_hat = model.alpha
                tx = test_x
                if k == 0:
                    cert = bounds.GapCertificate(
                        gap=base_gap, n_new=n, lam=reg_lam.strong_convexity,
                        mu=loss.mu)
                    ds_new = train_ds
                elif kind == "instance-removal":
                    idx = rm_rows[:k]
                    cert, alpha_hat = gapfast.gap_instance_removal(
                        model, train_ds, idx)
                    ds_new = train_ds.remove_instances(idx)
                elif kind == "instance-addition":
                    cert, alpha_hat = gapfast.gap_instance_addition(
                        model, train_ds, add_rows[:k], add_labels[:k])
                    ds_new = train_ds.add_instances(add_rows[:k],
                                                    add_labels[:k])
                elif kind == "feature-removal":
                    idx = rm_cols[:k]
                    cert, w_hat = gapfast.gap_feature_removal(
                        model, train_ds, idx)
                    ds_new = train_ds.remove_features(idx)
                    reg_new = reg_lam.resize(d - k)
                    tx = np.delete(test_x, idx, axis=1)
                else:
                    cert, w_hat = gapfast.gap_feature_addition(
                        model, train_ds, add_cols[:, :k])
                    ds_new = train_ds.add_features(add_cols[:, :k], at=at)
                    reg_new = reg_lam.resize(d + k)
                    tx = np.insert(test_x, [at] * k, 0.0, axis=1)
                    tx[:, at:at + k] = add_cols_test[:, :k]
                for b in cfg["bounds"]:
                    if b == "primal-scb":
                        if reg_new.strong_convexity <= 0.0:
                            continue
                        rate = _primal_rate(tx, w_hat, radius_primal(cert))
                    else:
                        if loss.mu <= 0.0:
                            continue
                        rate = _dual_rate(ds_new, loss, reg_new, alpha_hat,
                                          radius_dual(cert), tx)
                    rows.append({"lambda": float(lam), "kind": kind,
                                 "count": int(k), "bound": b,
                                 "rate": rate})
    return rows
