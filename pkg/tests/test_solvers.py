import numpy as np
import pytest

import gapscreen as g
from gapscreen.errors import (
    NotConverged,
    UnsupportedAlgorithmForLoss,
    UnsupportedPairing,
)
from gapscreen.losses import ProblemSpec
from gapscreen.solvers import SolverState, cd_step, mu_step, pg_step


def make_model(loss, kind, m, n, s, seed, lam_rel, eps=1e-3):
    ds, _ = g.synth(kind, m, n, s, seed=seed)
    probe = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.0, eps))
    lam = lam_rel * g.lambda_max(probe)
    return g.LossModel(ds.A, ProblemSpec(loss, ds.y, lam, eps))


def fresh_state(model, x=None):
    x = np.zeros(model.A.n) if x is None else np.asarray(x, dtype=np.float64)
    return SolverState(x=x.copy(), Ax=model.A.matvec(x))


# -- cd_step -------------------------------------------------------------------

def test_cd_one_column_lasso_closed_form():
    m = g.build_problem([[1.0], [0.0 + 1e-300]], [2.0, 0.0], "quadratic", 1.0)
    # avoid the zero-row guard with a negligible entry; closed form x = ST(2,1) = 1
    st = fresh_state(m)
    cd_step(m, st, g.ActiveSet.all_active(1))
    assert st.x[0] == pytest.approx(1.0)


def test_cd_empty_active_is_noop():
    m = make_model("quadratic", "gaussian", 6, 10, 3, 0, 0.5)
    st = fresh_state(m, np.zeros(10))
    empty = g.ActiveSet.all_active(10).drop(np.arange(10), iteration=1)
    before = st.x.copy()
    cd_step(m, st, empty)
    assert np.array_equal(st.x, before)


def test_cd_kl_stays_nonnegative():
    m = make_model("kl", "count", 10, 20, 4, 1, 0.1)
    st = fresh_state(m)
    act = g.ActiveSet.all_active(20)
    for _ in range(5):
        cd_step(m, st, act)
        assert (st.x >= 0).all()


def test_cd_rejects_bad_pairing():
    m = make_model("beta15", "pixel_mix", 8, 12, 3, 2, 0.2)
    with pytest.raises(UnsupportedPairing):
        cd_step(m, fresh_state(m), g.ActiveSet.all_active(12))


# -- mu_step -------------------------------------------------------------------

def test_mu_zero_is_absorbing():
    m = make_model("kl", "count", 10, 16, 4, 3, 0.2)
    st = fresh_state(m, np.zeros(16))
    mu_step(m, st, g.ActiveSet.all_active(16))
    assert np.array_equal(st.x, np.zeros(16))


def test_mu_kl_fixed_point_at_data_fit():
    # spec toy uses eps = lam = 0 which ProblemSpec forbids; tiny values instead
    m = g.build_problem([[1.0]], [2.0], "kl", 1e-12, epsilon=1e-12)
    st = fresh_state(m, np.array([1.0]))
    mu_step(m, st, g.ActiveSet.all_active(1))
    assert st.x[0] == pytest.approx(2.0, abs=1e-9)
    mu_step(m, st, g.ActiveSet.all_active(1))
    assert st.x[0] == pytest.approx(2.0, abs=1e-9)


def test_mu_inactive_untouched():
    m = make_model("beta15", "pixel_mix", 8, 12, 3, 4, 0.3)
    st = fresh_state(m, np.full(12, 0.5))
    act = g.ActiveSet.all_active(12).drop(np.array([3, 7]), iteration=1)
    mu_step(m, st, act)
    assert st.x[3] == 0.5 and st.x[7] == 0.5


@pytest.mark.parametrize("loss,kind", [("kl", "count"), ("beta15", "pixel_mix")])
def test_mu_monotone_descent(loss, kind):
    m = make_model(loss, kind, 12, 20, 5, 5, 0.1)
    st = fresh_state(m, np.full(20, 1e-2))
    act = g.ActiveSet.all_active(20)
    prev = g.primal_value(m, st.x, st.Ax)
    for _ in range(60):
        mu_step(m, st, act)
        cur = g.primal_value(m, st.x, st.Ax)
        assert cur <= prev + 1e-10
        prev = cur


# -- pg_step -------------------------------------------------------------------

def test_pg_fixed_point_when_converged():
    m = make_model("kl", "count", 10, 16, 4, 6, 0.3)
    trace = g.run(m, g.RunConfig(algorithm="none", solver="cd", eps_gap=1e-13,
                                 max_iter=50000))
    st = fresh_state(m, trace.x)
    pg_step(m, st, g.ActiveSet.all_active(16))
    assert np.allclose(st.x, trace.x, atol=1e-6)


def test_pg_large_lambda_goes_to_zero():
    ds, _ = g.synth("count", 10, 16, 4, seed=7)
    probe = g.LossModel(ds.A, ProblemSpec("kl", ds.y, 1.0, 1e-3))
    lam = 2.0 * g.lambda_max(probe)
    m = g.LossModel(ds.A, ProblemSpec("kl", ds.y, lam, 1e-3))
    st = fresh_state(m, np.full(16, 0.5))
    act = g.ActiveSet.all_active(16)
    for _ in range(300):
        pg_step(m, st, act)
    assert np.abs(st.x).max() < 1e-6


def test_pg_respects_active_mask():
    m = make_model("beta15", "pixel_mix", 8, 12, 3, 8, 0.2)
    st = fresh_state(m)
    act = g.ActiveSet.all_active(12).drop(np.array([0, 5]), iteration=1)
    for _ in range(3):
        pg_step(m, st, act)
    assert st.x[0] == 0.0 and st.x[5] == 0.0


# -- run -----------------------------------------------------------------------

def test_run_above_lambda_max_instant():
    for loss, kind, solver in [("quadratic", "gaussian", "cd"),
                               ("logistic", "binary", "cd"),
                               ("kl", "count", "cd"),
                               ("beta15", "pixel_mix", "mu")]:
        ds, _ = g.synth(kind, 12, 25, 4, seed=9)
        probe = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.0, 1e-3))
        lam = 1.000001 * g.lambda_max(probe)
        m = g.LossModel(ds.A, ProblemSpec(loss, ds.y, lam, 1e-3))
        tr = g.run(m, g.RunConfig(algorithm="gdgs", solver=solver, eps_gap=1e-7, max_iter=2))
        assert tr.converged and tr.iterations <= 2
        assert np.abs(tr.x).max() <= 1e-10
        if solver == "cd":  # zero gap: everything except (at most) the marginal argmax column
            assert tr.screened_total >= 24
        # wider margin: all columns screened once the radius drops below it
        lam2 = 1.05 * g.lambda_max(probe)
        m2 = g.LossModel(ds.A, ProblemSpec(loss, ds.y, lam2, 1e-3))
        tr2 = g.run(m2, g.RunConfig(algorithm="gdgs", solver=solver, eps_gap=1e-7, max_iter=5))
        assert tr2.screened_total == 25


def test_run_dgs_rejected_for_kl():
    m = make_model("kl", "count", 10, 16, 4, 10, 0.2)
    with pytest.raises(UnsupportedAlgorithmForLoss):
        g.run(m, g.RunConfig(algorithm="dgs", solver="cd"))


def test_run_invalid_pairing_rejected():
    m = make_model("quadratic", "gaussian", 8, 14, 3, 11, 0.3)
    with pytest.raises(UnsupportedPairing):
        g.run(m, g.RunConfig(algorithm="gdgs", solver="mu"))


def test_run_not_converged_carries_trace():
    m = make_model("logistic", "binary", 15, 40, 5, 12, 0.01)
    with pytest.raises(NotConverged) as err:
        g.run(m, g.RunConfig(algorithm="gdgs", solver="cd", eps_gap=1e-12, max_iter=3))
    assert err.value.trace is not None
    assert err.value.trace.iterations == 3


def test_baseline_and_gdgs_agree():
    m = make_model("logistic", "binary", 15, 40, 5, 13, 0.05)
    base = g.run(m, g.RunConfig(algorithm="none", solver="cd", eps_gap=1e-9))
    scr = g.run(m, g.RunConfig(algorithm="gdgs", solver="cd", eps_gap=1e-9))
    assert np.abs(base.x - scr.x).max() < 1e-6
    # identical gap trajectory until the first screening event
    first_screen = next((r.it for r, prev in zip(scr.records[1:], scr.records)
                         if r.active < prev.active), None)
    if first_screen is not None:
        for rb, rs in zip(base.records, scr.records):
            if rs.it >= first_screen:
                break
            assert rb.gap == rs.gap


def test_quadratic_all_algorithms_identical_radii():
    m = make_model("quadratic", "gaussian", 12, 30, 5, 14, 0.1)
    traces = {a: g.run(m, g.RunConfig(algorithm=a, solver="cd", eps_gap=1e-9))
              for a in ("dgs", "gdgs", "rdgs")}
    n_it = {a: t.iterations for a, t in traces.items()}
    assert len(set(n_it.values())) == 1
    for ra, rb, rc in zip(traces["dgs"].records, traces["gdgs"].records,
                          traces["rdgs"].records):
        assert ra.radius == rb.radius == rc.radius
        assert ra.alpha == rb.alpha == rc.alpha


def test_radius_ordering_gdgs_below_dgs():
    m = make_model("logistic", "binary", 15, 40, 5, 15, 0.01)
    assert m.alpha_feasible >= m.alpha_global
    dgs = g.run(m, g.RunConfig(algorithm="dgs", solver="cd", eps_gap=1e-8))
    gdgs = g.run(m, g.RunConfig(algorithm="gdgs", solver="cd", eps_gap=1e-8))
    # before any screening both trajectories coincide; compare those radii
    for rd, rg in zip(dgs.records, gdgs.records):
        if rd.active < 40 or rg.active < 40:
            break
        assert rg.radius <= rd.radius + 1e-15


def test_run_determinism_bit_identical():
    m = make_model("kl", "count", 12, 24, 5, 16, 0.1)
    t1 = g.run(m, g.RunConfig(algorithm="rdgs", solver="cd", eps_gap=1e-8))
    t2 = g.run(m, g.RunConfig(algorithm="rdgs", solver="cd", eps_gap=1e-8))
    assert np.array_equal(t1.x, t2.x)
    assert t1.gap == t2.gap
    assert [r.gap for r in t1.records] == [r.gap for r in t2.records]
    assert [r.active for r in t1.records] == [r.active for r in t2.records]
    assert [r.radius for r in t1.records] == [r.radius for r in t2.records]


def test_final_iterate_respects_constraint():
    for loss, kind, solver in [("kl", "count", "pg"), ("beta15", "pixel_mix", "mu")]:
        m = make_model(loss, kind, 10, 18, 4, 17, 0.2)
        try:
            tr = g.run(m, g.RunConfig(algorithm="rdgs", solver=solver, eps_gap=1e-6,
                                      max_iter=30000))
        except NotConverged as e:
            tr = e.trace
        assert (tr.x >= 0).all()
        screened = np.flatnonzero(~np.isin(np.arange(18), np.flatnonzero(tr.x)))
        assert tr.screened_total <= screened.size  # screened coordinates are exact zeros


def test_weak_duality_along_trajectory():
    m = make_model("beta15", "pixel_mix", 10, 18, 4, 18, 0.1)
    tr = g.run(m, g.RunConfig(algorithm="gdgs", solver="pg", eps_gap=1e-6, max_iter=20000))
    assert all(r.gap >= -1e-9 for r in tr.records)
    assert all(b.active <= a.active for a, b in zip(tr.records, tr.records[1:]))


def test_screen_every_k():
    m = make_model("logistic", "binary", 12, 30, 4, 19, 0.05)
    tr = g.run(m, g.RunConfig(algorithm="gdgs", solver="cd", eps_gap=1e-8, screen_every=5))
    for r in tr.records:
        if r.it % 5 != 0:
            assert r.radius is None
        else:
            assert r.radius is not None
