import numpy as np
import pytest

from glru import convex, erm
from glru.convex import LossSpec, RegSpec
from glru.data import Dataset
from glru.errors import ConfigError, ConvergenceError
from oracles import LOSS_FAMILIES, random_dataset, reg_family

REG_KINDS = ["l2", "enet", "l1"]


def catalog_cases():
    cases = []
    for loss in LOSS_FAMILIES:
        for kind in REG_KINDS:
            for intercept in (False, True):
                cases.append((loss, kind, intercept))
    return cases


def case_id(case):
    loss, kind, intercept = case
    return "%s_%s%s" % (loss.kind, kind, "_int" if intercept else "")


def test_single_point_closed_form():
    # one instance, one feature, squared loss and unit quadratic penalty:
    # minimize (w - 1)^2 / 2 + w^2 / 2, optimum at 1/2
    ds = Dataset(np.array([[1.0]]), [1.0], classification=False)
    m = erm.train(ds, LossSpec("squared"), RegSpec("l2", lam=1.0),
                  rel_gap_tol=1e-10)
    assert m.w[0] == pytest.approx(0.5, abs=1e-8)
    assert m.relative_gap_at_stop <= 1e-10
    assert m.stopped_by == "gap"


def test_objectives_by_hand():
    ds = Dataset(np.array([[2.0], [-1.0]]), [1.0, 3.0], classification=False)
    loss = LossSpec("squared")
    reg = RegSpec("l2", lam=2.0)
    w = np.array([0.5])
    # losses: (1 - 1)^2/2 = 0 and (-0.5 - 3)^2/2 = 6.125; penalty w^2 = 0.25
    assert erm.primal_objective(ds, loss, reg, w) == pytest.approx(
        0.5 * 6.125 + 0.25)
    alpha = np.array([1.0, -2.0])
    # conjugates at -alpha: 0.5 s (s + 2y) -> s=-1,y=1: -0.5; s=2,y=3: 8
    # v = X^T alpha / n = (2 - (-2)) / 2 = 2; rho*(2) = 4/(2*2) = 1
    assert erm.dual_objective(ds, loss, reg, alpha) == pytest.approx(
        -0.5 * (-0.5 + 8.0) - 1.0)
    assert erm.duality_gap(ds, loss, reg, w, alpha) == pytest.approx(
        (0.5 * 6.125 + 0.25) - (-0.5 * 7.5 - 1.0))


def test_dual_objective_infeasible_is_minus_infinity():
    ds = Dataset(np.array([[1.0], [2.0]]), [1.0, -1.0])
    loss = LossSpec("logistic")
    # alpha outside the loss box [0,1] for y=+1
    assert erm.dual_objective(ds, loss, RegSpec("l2", lam=1.0),
                              np.array([1.5, 0.0])) == -np.inf
    # l1 column constraint violated
    assert erm.dual_objective(ds, loss, RegSpec("l1", lam=1e-4),
                              np.array([1.0, -1.0])) == -np.inf
    # intercept equality violated
    dsb = Dataset(np.array([[1.0, 1.0], [2.0, 1.0]]), [1.0, -1.0])
    regb = RegSpec("l2", lam=1.0, intercept=True, dim=2)
    assert erm.dual_objective(dsb, loss, regb,
                              np.array([0.9, 0.9])) == -np.inf


def test_dual_from_primal_lands_in_boxes():
    rng = np.random.default_rng(0)
    for loss in LOSS_FAMILIES:
        ds = random_dataset(rng, 30, 4, loss)
        alpha = erm.dual_from_primal(ds, loss, rng.normal(size=4))
        lo, hi = convex.alpha_box_vec(loss.kind, loss.gamma, ds.y)
        assert np.all(alpha >= lo - 1e-12) and np.all(alpha <= hi + 1e-12)


@pytest.mark.parametrize("case", catalog_cases(), ids=case_id)
def test_train_reaches_tolerance_across_catalog(case):
    loss, kind, intercept = case
    rng = np.random.default_rng(hash(case_id(case)) % 2 ** 32)
    d = 6
    ds = random_dataset(rng, 40, d, loss, intercept=intercept)
    reg = reg_family(kind, d, lam=0.3, intercept=intercept)
    m = erm.train(ds, loss, reg, rel_gap_tol=1e-8)
    assert m.relative_gap_at_stop <= 1e-8
    # the returned dual is feasible: recomputing the gap reproduces it
    p = erm.primal_objective(ds, loss, reg, m.w)
    dv = erm.dual_objective(ds, loss, reg, m.alpha)
    assert np.isfinite(dv)
    assert (p - dv) / max(p, 1e-300) == pytest.approx(
        m.relative_gap_at_stop, rel=1e-6, abs=1e-12)


def test_train_sparse_matches_dense():
    rng = np.random.default_rng(42)
    loss = LossSpec("smoothed_hinge", gamma=0.8)
    ds = random_dataset(rng, 50, 7, loss, sparse_p=0.6)
    import scipy.sparse as sp
    ds_sp = Dataset(sp.csr_matrix(ds.to_dense()), ds.y)
    reg = RegSpec("l2", lam=0.4, dim=7)
    m1 = erm.train(ds, loss, reg, rel_gap_tol=1e-11)
    m2 = erm.train(ds_sp, loss, reg, rel_gap_tol=1e-11)
    np.testing.assert_allclose(m1.w, m2.w, atol=1e-7)


def test_kkt_consistency_at_optimum():
    rng = np.random.default_rng(8)
    loss = LossSpec("logistic")
    ds = random_dataset(rng, 45, 5, loss)
    for reg in (RegSpec("l2", lam=0.2, dim=5),
                RegSpec("enet", lam=0.2, kappa=0.05, dim=5)):
        m = erm.train(ds, loss, reg, rel_gap_tol=1e-12)
        v = ds.rmatvec(m.alpha) / ds.n
        for j in range(5):
            iv = convex.reg_conj_subgrad(reg, j, float(v[j]))
            assert iv.contains(m.w[j], atol=1e-5)


def test_cache_fields_match_direct_recomputation():
    rng = np.random.default_rng(21)
    loss = LossSpec("squared_hinge")
    ds = random_dataset(rng, 25, 4, loss, sparse_p=0.3)
    reg = RegSpec("enet", lam=0.5, kappa=0.1, dim=4)
    m = erm.train(ds, loss, reg, rel_gap_tol=1e-9)
    c = m.cache
    np.testing.assert_allclose(c.xw, ds.matvec(m.w), rtol=1e-10)
    np.testing.assert_allclose(c.xt_alpha, ds.rmatvec(m.alpha), rtol=1e-10)
    assert c.loss_sum == pytest.approx(float(np.mean(
        convex.loss_value_vec(loss.kind, loss.gamma, ds.y, ds.matvec(m.w)))),
        rel=1e-10)
    assert c.reg_sum == pytest.approx(convex.reg_total(reg, m.w), rel=1e-10)
    assert c.loss_conj_sum == pytest.approx(float(np.mean(
        convex.loss_conj_vec(loss.kind, loss.gamma, ds.y, -m.alpha))),
        rel=1e-10)
    assert c.reg_conj_sum == pytest.approx(
        convex.reg_conj_total(reg, ds.rmatvec(m.alpha) / ds.n), rel=1e-10)
    assert c.primal_value - c.dual_value == pytest.approx(
        m.relative_gap_at_stop * c.primal_value, rel=1e-6, abs=1e-12)


def test_project_dual_restores_feasibility():
    rng = np.random.default_rng(33)
    loss = LossSpec("logistic")
    x = np.hstack([rng.normal(size=(30, 3)), np.ones((30, 1))])
    y = np.where(rng.uniform(size=30) < 0.5, 1.0, -1.0)
    ds = Dataset(x, y)
    reg = RegSpec("l1", lam=0.05, intercept=True, dim=4)
    raw = rng.uniform(-2.0, 2.0, size=30)
    alpha = erm.project_dual(ds, loss, reg, raw)
    lo, hi = convex.alpha_box_vec(loss.kind, loss.gamma, ds.y)
    assert np.all(alpha >= lo) and np.all(alpha <= hi)
    v = ds.rmatvec(alpha) / ds.n
    assert abs(v[-1]) <= 1e-8 * max(1.0, np.abs(v).max())
    assert np.max(np.abs(v[:-1])) <= reg.lam * (1.0 + 1e-12)
    assert np.isfinite(erm.dual_objective(ds, loss, reg, alpha))


def test_warm_start_from_optimum_stops_on_first_check():
    rng = np.random.default_rng(13)
    loss = LossSpec("logistic")
    ds = random_dataset(rng, 40, 5, loss)
    reg = RegSpec("l2", lam=0.3, dim=5)
    m = erm.train(ds, loss, reg, rel_gap_tol=1e-12)
    calls = []
    m2 = erm.train_with_stop_predicate(
        ds, loss, reg, lambda w, a, g: calls.append(g) or False,
        rel_gap_tol=1e-10, warm_start=m.w)
    assert m2.stopped_by == "gap"
    assert len(calls) <= 1  # the entry check already passes


def test_stop_predicate_fires():
    rng = np.random.default_rng(14)
    loss = LossSpec("logistic")
    ds = random_dataset(rng, 40, 5, loss)
    reg = RegSpec("l2", lam=0.3, dim=5)
    m = erm.train_with_stop_predicate(ds, loss, reg,
                                      lambda w, a, g: g < 0.05,
                                      rel_gap_tol=1e-12)
    assert m.stopped_by == "predicate"
    assert m.relative_gap_at_stop > 1e-12


def test_convergence_error_carries_best_gap():
    rng = np.random.default_rng(15)
    loss = LossSpec("logistic")
    ds = random_dataset(rng, 40, 5, loss)
    with pytest.raises(ConvergenceError) as exc:
        erm.train(ds, loss, RegSpec("l1", lam=0.05, dim=5),
                  rel_gap_tol=1e-14, max_iter=2)
    assert exc.value.best_gap > 0.0


def test_train_config_errors():
    ds = Dataset(np.eye(3), [1.0, -1.0, 1.0])
    loss = LossSpec("logistic")
    with pytest.raises(ConfigError):
        erm.train(ds, loss, RegSpec("l2", lam=1.0, dim=2))
    with pytest.raises(ConfigError):
        erm.train(ds, loss, RegSpec("l2", lam=1.0, dim=3), rel_gap_tol=0.0)
    with pytest.raises(ConfigError):
        erm.train(ds, loss, RegSpec("l2", lam=1.0, dim=3),
                  warm_start=np.zeros(7))


def test_zero_primal_uses_absolute_gap():
    # all-zero rows with zero targets: P(0) = 0 and the gap is exactly zero
    ds = Dataset(np.zeros((3, 2)), np.zeros(3), classification=False)
    m = erm.train(ds, LossSpec("squared"), RegSpec("l2", lam=1.0, dim=2))
    assert m.relative_gap_at_stop == 0.0
    np.testing.assert_allclose(m.w, 0.0)


def test_snap_intercept_rules():
    reg = RegSpec("l2", lam=1.0, intercept=True, dim=3)
    v = np.array([1.0, -2.0, 1e-9])
    out = erm.snap_intercept(v, reg)
    assert out[-1] == 0.0 and v[-1] == 1e-9  # input untouched
    big = np.array([1.0, -2.0, 0.5])
    assert erm.snap_intercept(big, reg)[-1] == 0.5
    plain = RegSpec("l2", lam=1.0, dim=3)
    assert erm.snap_intercept(v, plain)[-1] == 1e-9
