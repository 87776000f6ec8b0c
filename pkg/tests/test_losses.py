import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gapscreen as g
from gapscreen.errors import (
    EpsilonTooLarge,
    InfeasiblePrimal,
    NonPositiveLambdaMax,
    OutsideDualDomain,
)
from gapscreen.losses import ProblemSpec, _sigma_eigs


def quad_model(A, y, lam):
    return g.build_problem(A, y, "quadratic", lam)


def test_problem_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec("logistic", [0.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        ProblemSpec("kl", [-1.0], 1.0)
    with pytest.raises(ValueError):
        ProblemSpec("quadratic", [1.0], 0.0)
    with pytest.raises(EpsilonTooLarge):
        ProblemSpec("beta15", [1.0], 1.0, epsilon=0.4)
    assert ProblemSpec("beta15", [1.0], 1.0, epsilon=0.1).constraint == "nonneg"


# -- primal values -----------------------------------------------------------

def test_primal_quadratic_at_zero():
    m = quad_model(np.eye(2), [3.0, 4.0], 1.0)
    assert g.primal_value(m, np.zeros(2)) == pytest.approx(12.5)


def test_primal_kl_hand_value():
    m = g.build_problem([[1.0]], [1.0], "kl", 1.0, epsilon=1.0)
    assert g.primal_value(m, np.zeros(1)) == pytest.approx(0.0, abs=1e-15)


def test_primal_logistic_at_zero():
    m = g.build_problem([[1.0]], [1.0], "logistic", 2.0)
    assert g.primal_value(m, np.zeros(1)) == pytest.approx(math.log(2.0))


def test_primal_rejects_infeasible():
    m = g.build_problem([[1.0]], [1.0], "kl", 1.0, epsilon=0.5)
    with pytest.raises(InfeasiblePrimal):
        g.primal_value(m, np.array([-0.25]))


# -- gradients ---------------------------------------------------------------

def test_grad_quadratic_at_fit():
    m = quad_model(np.eye(2), [3.0, 1.0], 1.0)
    assert np.allclose(g.grad_F(m, np.array([3.0, 1.0])), [0.0, 0.0])


def test_grad_kl_hand_value():
    m = g.build_problem([[1.0]], [2.0], "kl", 1.0, epsilon=1.0)
    assert g.grad_F(m, np.array([1.0])) == pytest.approx([0.0])


def test_grad_logistic_sigmoid():
    m = g.build_problem([[1.0]], [0.0], "logistic", 1.0)
    assert g.grad_F(m, np.array([0.0])) == pytest.approx([0.5])


@pytest.mark.parametrize("loss,y,lo", [
    ("quadratic", [0.5, -1.2, 2.0], None),
    ("beta15", [0.7, 0.0, 2.5], 0.0),
    ("kl", [1.5, 0.0, 3.0], 0.0),
    ("logistic", [1.0, 0.0, 1.0], None),
])
def test_gradient_matches_finite_differences(loss, y, lo):
    rng = np.random.default_rng(11)
    M = np.abs(rng.normal(size=(3, 4))) if lo is not None else rng.normal(size=(3, 4))
    m = g.build_problem(M, y, loss, 0.8, epsilon=0.05)
    for _ in range(20):
        z = rng.uniform(0.3, 2.5, size=3) if lo is not None else rng.normal(size=3)
        have = g.grad_F(m, z)
        want = g.fd_gradient(m, z)
        assert np.allclose(have, want, rtol=1e-5, atol=1e-7)


# -- dual values -------------------------------------------------------------

def test_dual_quadratic_zero():
    m = quad_model(np.eye(2), [3.0, 4.0], 2.0)
    assert g.dual_value(m, np.zeros(2)) == 0.0


def test_dual_kl_zero():
    m = g.build_problem(np.eye(2), [1.0, 1.0], "kl", 1.5, epsilon=0.2)
    assert g.dual_value(m, np.zeros(2)) == pytest.approx(0.0)


def test_dual_logistic_entropy():
    m = g.build_problem([[1.0]], [1.0], "logistic", 1.0)
    assert g.dual_value(m, np.array([0.5])) == pytest.approx(math.log(2.0))


def test_dual_kl_boundary_minus_inf():
    m = g.build_problem([[1.0]], [1.0], "kl", 1.0, epsilon=0.3)
    assert g.dual_value(m, np.array([-1.0])) == -math.inf
    with pytest.raises(OutsideDualDomain):
        g.dual_value(m, np.array([-1.0 - 1e-9]))


def test_dual_logistic_domain_error():
    m = g.build_problem([[1.0]], [1.0], "logistic", 1.0)
    with pytest.raises(OutsideDualDomain):
        g.dual_value(m, np.array([1.0 + 1e-9]))
    # closed boundary is legal (0 log 0 = 0)
    assert g.dual_value(m, np.array([1.0])) == pytest.approx(0.0)


# -- lambda_max --------------------------------------------------------------

def test_lambda_max_quadratic():
    m = quad_model(np.eye(2), [3.0, -1.0], 1.0)
    assert g.lambda_max(m) == pytest.approx(3.0)


def test_lambda_max_logistic():
    m = g.build_problem(np.eye(2), [1.0, 0.0], "logistic", 1.0)
    assert g.lambda_max(m) == pytest.approx(0.5)


def test_lambda_max_kl():
    m = g.build_problem([[1.0], [1.0]], [3.0, 1.0], "kl", 1.0, epsilon=1.0)
    assert g.lambda_max(m) == pytest.approx(2.0)


def test_lambda_max_degenerate():
    m = g.build_problem([[1.0], [1.0]], [0.5, 0.5], "kl", 1.0, epsilon=1.0)
    with pytest.raises(NonPositiveLambdaMax):
        g.lambda_max(m)


def test_lambda_max_zero_is_optimal():
    for loss, kind in [("quadratic", "gaussian"), ("logistic", "binary"),
                       ("kl", "count"), ("beta15", "pixel_mix")]:
        ds, _ = g.synth(kind, 12, 30, 4, seed=5)
        probe = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.0, 0.01))
        lam_max = g.lambda_max(probe)
        m = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.000001 * lam_max, 0.01))
        dp = g.dual_update(m, np.zeros(ds.n))
        assert g.gap(m, np.zeros(ds.n), m.A.matvec(np.zeros(ds.n)), dp.theta) < 1e-8


# -- dual scaling and dual update --------------------------------------------

def test_dual_scale_examples():
    m = quad_model(np.eye(2), [1.0, 1.0], 1.0)
    assert np.allclose(g.dual_scale(m, np.array([2.0, 0.0])), [1.0, 0.0])
    z = np.array([0.5, -0.25])
    assert np.array_equal(g.dual_scale(m, z), z)
    mk = g.build_problem(np.eye(2), [1.0, 1.0], "kl", 1.0, epsilon=0.5)
    z2 = np.array([-0.9, 0.5])
    assert np.array_equal(g.dual_scale(mk, z2), z2)  # positive-part norm 0.5 <= 1


def test_dual_update_kl_pins_I0():
    m = g.build_problem([[1.0, 0.2], [0.3, 1.0]], [1.0, 0.0], "kl", 0.7, epsilon=0.1)
    dp = g.dual_update(m, np.zeros(2))
    assert dp.theta[1] == -1.0 / 0.7
    assert dp.theta_test[1] != dp.theta[1] or dp.scale == 1.0


def test_dual_update_quadratic_at_optimum():
    # A = I2, y = [3, 4], lam = 1: x* = [2, 3], theta* = y - x* = [1, 1]
    m = quad_model(np.eye(2), [3.0, 4.0], 1.0)
    x_star = np.array([2.0, 3.0])
    dp = g.dual_update(m, x_star)
    assert np.allclose(dp.theta, [1.0, 1.0])
    assert dp.scale == pytest.approx(1.0)


def test_dual_update_beta15_min_structure():
    # valid epsilon variant of the spec's min(Xi, b/lam, (y-eps)/(lam sqrt(eps))) example
    eps = 0.25
    m = g.build_problem([[1.0]], [4.0], "beta15", 1.0, epsilon=eps)
    dp = g.dual_update(m, np.zeros(1))
    rho = 4.0 / math.sqrt(eps) - math.sqrt(eps)
    assert dp.scale == pytest.approx(1.0 / rho)
    assert dp.theta_test[0] == pytest.approx(1.0)
    b = m.s0.b[0]
    ub_term = (4.0 - eps) / math.sqrt(eps)
    assert m.s0.ub[0] == pytest.approx(min(b, ub_term))
    assert dp.theta[0] == pytest.approx(min(1.0, b, ub_term))


def test_dual_feasibility_of_updates():
    cases = [("quadratic", "gaussian"), ("logistic", "binary"),
             ("kl", "count"), ("beta15", "pixel_mix")]
    rng = np.random.default_rng(7)
    for loss, kind in cases:
        ds, _ = g.synth(kind, 10, 25, 4, seed=13)
        probe = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.0, 0.01))
        lam = 0.1 * g.lambda_max(probe)
        m = g.LossModel(ds.A, ProblemSpec(loss, ds.y, lam, 0.01))
        for _ in range(5):
            x = np.abs(rng.normal(size=ds.n)) if m.spec.constraint == "nonneg" \
                else rng.normal(size=ds.n)
            dp = g.dual_update(m, x)
            v = m.A.rmatvec(dp.theta)
            if m.spec.constraint == "nonneg":
                assert v.max() <= 1.0 + 1e-12
            else:
                assert np.abs(v).max() <= 1.0 + 1e-12
            g.dual_value(m, dp.theta)  # in dom(D): must not raise
            if loss == "kl":
                assert np.all(dp.theta[m.s0.I0] == -1.0 / lam)
            if loss == "beta15":
                assert np.all(dp.theta <= m.s0.ub + 1e-15)


# -- sigma -------------------------------------------------------------------

def test_sigma_quadratic_constant():
    m = quad_model(np.eye(2), [1.0, 1.0], 2.0)
    assert g.sigma(m, 0, 123.4) == -4.0


def test_sigma_kl_hand_value():
    m = g.build_problem([[1.0]], [4.0], "kl", 1.0, epsilon=0.2)
    assert g.sigma(m, 0, 1.0) == pytest.approx(-1.0)


def test_sigma_beta15_hand_value():
    m = g.build_problem([[1.0]], [0.0], "beta15", 1.0, epsilon=0.01)
    assert g.sigma(m, 0, -1.0) == pytest.approx(-2.0)


def test_sigma_beta15_large_positive_no_cancellation():
    m = g.build_problem([[1.0]], [2.0], "beta15", 1.0, epsilon=0.01)
    u = 1e8
    val = g.sigma(m, 0, u)
    # exact rationalized form: -4 y^2 / (s (u^2 + 2y + u s))
    s = math.sqrt(u * u + 4 * 2.0)
    expect = -4.0 * 4.0 / (s * (u * u + 2 * 2.0 + u * s))
    assert val == pytest.approx(expect, rel=1e-12)
    assert val < 0.0


def test_sigma_domain_errors():
    mk = g.build_problem([[1.0]], [1.0], "kl", 1.0, epsilon=0.2)
    with pytest.raises(OutsideDualDomain):
        g.sigma(mk, 0, -1.1)
    ml = g.build_problem([[1.0]], [1.0], "logistic", 1.0)
    with pytest.raises(OutsideDualDomain):
        g.sigma(ml, 0, 1.2)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50.0, 50.0), st.floats(-50.0, 50.0))
def test_sigma_monotone_beta15(a, b):
    m = g.build_problem([[1.0, 0.5]], [1.3], "beta15", 0.9, epsilon=0.05)
    lo, hi = min(a, b), max(a, b)
    assert g.sigma(m, 0, lo) <= g.sigma(m, 0, hi) + 1e-12


def test_sigma_monotone_grids():
    mb = g.build_problem([[1.0, 0.5]], [2.0], "beta15", 1.1, epsilon=0.05)
    grid = np.linspace(-30, 30, 400)
    eigs = np.array([g.sigma(mb, 0, t) for t in grid])
    assert (np.diff(eigs) >= -1e-12).all()
    mk = g.build_problem([[1.0, 0.5]], [2.0], "kl", 1.1, epsilon=0.05)
    gridk = np.linspace(-1.0 / 1.1 + 1e-9, 30, 400)
    eigsk = np.array([g.sigma(mk, 0, t) for t in gridk])
    assert (np.diff(eigsk) >= -1e-12).all()


# -- S0 params ---------------------------------------------------------------

def test_s0_kl_zero_pattern():
    m = g.build_problem(np.ones((3, 2)), [0.0, 2.0, 0.0], "kl", 1.0, epsilon=0.1)
    assert m.s0.kind == "pinned"
    assert list(m.s0.I0) == [0, 2]


def test_s0_quadratic_all_space():
    m = quad_model(np.eye(2), [1.0, 2.0], 1.0)
    assert m.s0.kind == "all_space"


def test_s0_beta15_hand_chain():
    eps = 0.01
    m = g.build_problem([[1.0]], [0.0], "beta15", 1.0, epsilon=eps)
    c = -((0.0 + 0.0 + 3 * eps) / (1 - 3 * eps)) ** (1.0 / 3.0)
    assert m.s0.kind == "upper_bounded"
    assert m.s0.b[0] == pytest.approx((1 - c * 1.0) / 1.0 + c)  # = 1
    assert m.s0.b[0] == pytest.approx(1.0)
    assert m.s0.ub[0] == pytest.approx(min(1.0, (0.0 - eps) / math.sqrt(eps)))
    assert m.s0.ub[0] == pytest.approx(-0.1)


def test_s0_beta15_ub_negative_on_I0():
    ds, _ = g.synth("pixel_mix", 12, 20, 4, seed=3)
    y = ds.y.copy()
    y[[1, 5]] = 0.0
    m = g.build_problem(ds.A.toarray(), y, "beta15", 2.0, epsilon=0.01)
    assert (m.s0.ub[[1, 5]] < 0).all()


# -- alpha bounds ------------------------------------------------------------

def test_alpha_feasible_quadratic():
    m = quad_model(np.eye(2), [1.0, 1.0], 3.0)
    assert m.alpha_feasible == 9.0
    assert m.alpha_global == 9.0


def test_alpha_feasible_kl_hand_value():
    m = g.build_problem(np.eye(2), [1.0, 1.0], "kl", 1.0, epsilon=0.2)
    assert m.alpha_feasible == pytest.approx(0.25)


def test_alpha_feasible_logistic_improvement():
    m = g.build_problem(np.eye(2), [1.0, 0.0], "logistic", 0.1)
    assert m.pinv_norm1 == pytest.approx(1.0)
    assert m.alpha_feasible == pytest.approx(0.04 / 0.36)
    assert m.alpha_feasible > m.alpha_global


def test_alpha_global_never_beats_feasible():
    for loss, kind in [("quadratic", "gaussian"), ("logistic", "binary")]:
        ds, _ = g.synth(kind, 8, 20, 3, seed=21)
        probe = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.0))
        lam = 0.05 * g.lambda_max(probe)
        m = g.LossModel(ds.A, ProblemSpec(loss, ds.y, lam))
        assert m.alpha_global <= m.alpha_feasible + 1e-12


def test_alpha_ball_examples():
    mq = quad_model(np.eye(2), [1.0, 1.0], 1.0)
    assert g.alpha_ball(mq, np.array([5.0, -3.0]), 7.0) == 1.0

    mk = g.build_problem(np.eye(2), [1.0, 1.0], "kl", 1.0, epsilon=0.2)
    assert g.alpha_ball(mk, np.zeros(2), 1.0) == pytest.approx(0.25)

    ml = g.build_problem([[1.0]], [1.0], "logistic", 1.0)
    assert g.alpha_ball(ml, np.array([0.5]), 0.0) == pytest.approx(4.0)


def test_alpha_ordering_nested():
    # B(theta, r) inside Delta_A cap S0 -> alpha_ball >= alpha_feasible
    mk = g.build_problem(np.eye(2), [1.0, 1.0], "kl", 1.0, epsilon=0.2)
    dp = g.dual_update(mk, np.array([0.5, 0.5]))
    a_ball = g.alpha_ball(mk, dp.theta, 1e-3)
    assert mk.alpha_feasible <= a_ball + 1e-12
    ml = g.build_problem(np.eye(2), [1.0, 0.0], "logistic", 0.1)
    dpl = g.dual_update(ml, np.array([0.1, -0.2]))
    center = 0.5 * dpl.theta  # strictly inside Delta_A so a small ball stays nested
    assert ml.alpha_global <= ml.alpha_feasible <= g.alpha_ball(ml, center, 1e-4) + 1e-12


def test_alpha_ball_center_outside_s0():
    mk = g.build_problem(np.eye(2), [1.0, 0.0], "kl", 1.0, epsilon=0.2)
    from gapscreen.errors import CenterOutsideS0

    with pytest.raises(CenterOutsideS0):
        g.alpha_ball(mk, np.array([0.0, 0.0]), 0.5)  # coordinate 1 not pinned


def test_primal_dual_link_at_reference():
    for loss, kind, eps in [("quadratic", "gaussian", 1e-6), ("logistic", "binary", 1e-6),
                            ("kl", "count", 1e-3), ("beta15", "pixel_mix", 1e-3)]:
        ds, _ = g.synth(kind, 10, 24, 4, seed=3)
        probe = g.LossModel(ds.A, ProblemSpec(loss, ds.y, 1.0, eps))
        lam = 0.2 * g.lambda_max(probe)
        m = g.LossModel(ds.A, ProblemSpec(loss, ds.y, lam, eps))
        x_ref, theta_ref = g.reference_solve(m, tol=1e-12, max_iter=100000)
        link = -g.grad_F(m, m.A.matvec(x_ref))
        assert np.abs(lam * theta_ref - link).max() < 1e-6
