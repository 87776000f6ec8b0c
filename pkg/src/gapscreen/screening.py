"""Safe-sphere construction, the per-column screening tests and radius refinement.

A sphere B(theta, r) with r = sqrt(2*gap/alpha) contains the dual optimum
whenever alpha is a strong-concavity bound of the dual on a set holding both
theta and the optimum. Columns j with |phi(a_j^T theta)| + r*||a_j|| < 1 are
provably inactive and can be dropped for the rest of the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import WeakDualityViolated
from .linalg import ActiveSet
from .losses import DualPoint, LossModel, alpha_ball, dual_value, primal_value

# gaps below this magnitude are numerical noise; more negative is a formula bug
GAP_CLAMP = -1e-9
# screening threshold slack: a support column at equicorrelation has
# a_j^T theta* = 1 exactly; dot-product rounding must never push it below the
# strict test while the certified radius is at the float-noise scale
SCREEN_SLACK = 1e-11


@dataclass
class SafeSphere:
    """Ball certified to contain the dual optimum.

    ``alpha_used`` is the strong-concavity constant that produced the radius;
    ``restricted_to_S0`` marks spheres whose screening test may exploit the
    intersection with the restriction set (KL only).
    """

    center: np.ndarray
    radius: float
    alpha_used: float
    restricted_to_S0: bool = False


def gap(model: LossModel, x: np.ndarray, Ax: np.ndarray, theta: np.ndarray) -> float:
    """Duality gap P(x) - D(theta); clamped at 0, negative beyond -1e-9 is an error."""
    return certified_gap(model, x, Ax, theta)[0]


def certified_gap(model: LossModel, x, Ax, theta) -> tuple[float, float]:
    """(gap, gap + its float-evaluation uncertainty).

    Radii built from the certified value stay safe under rounding: the true
    gap never exceeds the computed one by more than the accumulated summation
    error of P and D.
    """
    p = primal_value(model, x, Ax)
    d = dual_value(model, theta)
    g = p - d
    if g < GAP_CLAMP:
        raise WeakDualityViolated(f"gap = {g:.3e} < {GAP_CLAMP}")
    g = max(g, 0.0)
    if not np.isfinite(g):
        return g, g
    u = model.A.m * np.finfo(np.float64).eps * (abs(p) + abs(d) + 1.0)
    return g, g + u


def gap_sphere(model: LossModel, x, Ax, theta, alpha: float) -> SafeSphere:
    """Sphere centered at theta with radius sqrt(2*gap/alpha)."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    _, gc = certified_gap(model, x, Ax, theta)
    r = math.sqrt(2.0 * gc / alpha) if np.isfinite(gc) else np.inf
    return SafeSphere(center=np.asarray(theta, dtype=np.float64), radius=r,
                      alpha_used=alpha, restricted_to_S0=(model.loss == "kl"))


def screening_dots(model: LossModel, dp: DualPoint) -> np.ndarray:
    """Per-column a_j^T(center) values for the screening test, from the solver's A^T rho.

    For the upper-bounded losses the pure rescaled point is a safe surrogate
    (its dots dominate the clamped center's); for KL the exact dots of the
    pinned center follow from the scaling factor and the I0-restricted column
    l1 norms.
    """
    dots = dp.scale * dp.Atz
    if model.loss == "kl":
        dots = dots - (1.0 - dp.scale) / model.lam * model.A.col_norm1_on_I0
    return dots


def _test_lhs(model: LossModel, dots: np.ndarray) -> np.ndarray:
    # Unconstrained losses test |a_j^T theta|; non-negative ones test a_j^T theta
    # directly (the positive part is monotone, so the sup over the ball is exact).
    if model.spec.constraint == "unconstrained":
        return np.abs(dots)
    return dots


def _test_norms(model: LossModel, sphere: SafeSphere) -> np.ndarray:
    if model.loss == "kl" and sphere.restricted_to_S0:
        return model.A.col_norm2_restricted
    return model.A.col_norm2


def sphere_test(model: LossModel, j: int, sphere: SafeSphere, theta_dot_aj: float) -> bool:
    """True when column j is certified inactive (strict inequality)."""
    if not np.isfinite(sphere.radius):
        return False
    lhs = abs(theta_dot_aj) if model.spec.constraint == "unconstrained" else theta_dot_aj
    return bool(lhs + sphere.radius * _test_norms(model, sphere)[j] < 1.0 - SCREEN_SLACK)


def screen(model: LossModel, sphere: SafeSphere, active: ActiveSet,
           theta_dot_A: np.ndarray, iteration: int = 0) -> ActiveSet:
    """Apply the sphere test to every active column; never resurrects a column."""
    if not np.isfinite(sphere.radius):
        return active
    idx = active.indices
    if idx.size == 0:
        return active
    lhs = _test_lhs(model, theta_dot_A[idx])
    out = lhs + sphere.radius * _test_norms(model, sphere)[idx] < 1.0 - SCREEN_SLACK
    if not out.any():
        return active
    return active.drop(idx[out], iteration)


@dataclass
class RefineResult:
    radius: float
    alpha: float
    inner_iters: int


def refine_radius(model: LossModel, x, Ax, theta, theta_old, r_prev: float,
                  alpha_floor: float, eps_r: float = 1e-3, max_inner: int = 20) -> RefineResult:
    """Iteratively shrink the safe radius by re-evaluating the bound on the current sphere.

    Starting from the previous sphere B(theta_old, r_prev), the center is moved
    to theta (radius enlarged by the center shift), the bound is re-evaluated
    on the old-centered sphere, and then the radius is reduced as long as the
    ball-restricted bound improves. ``alpha_floor`` is the constant the run was
    initialized with; the sphere it certifies (same center) is always valid, so
    the refined radius never exceeds it. ``eps_r`` is relative: the loop stops
    once the decrease falls below eps_r * radius.
    """
    _, g = certified_gap(model, x, Ax, theta)
    if g == 0.0:
        return RefineResult(0.0, alpha_floor, 0)
    if not np.isfinite(g):
        return RefineResult(np.inf, alpha_floor, 0)
    shift = float(np.linalg.norm(np.asarray(theta) - np.asarray(theta_old)))
    r = max(r_prev, shift)
    a = alpha_ball(model, theta_old, r)
    if a < alpha_floor:
        a = alpha_floor
    r = math.sqrt(2.0 * g / a)
    inner = 0
    while inner < max_inner:
        inner += 1
        a_new = alpha_ball(model, theta, r)
        r_new = math.sqrt(2.0 * g / a_new)
        if r_new < r:
            a = a_new
            delta = r - r_new
            r = r_new
        else:
            delta = 0.0
        if delta <= eps_r * r:
            break
    return RefineResult(r, a, inner)
