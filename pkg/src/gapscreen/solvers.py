"""Primal update steps (coordinate descent, multiplicative update, proximal
gradient with Barzilai-Borwein steps) restricted to the active set, and the
run driver for the no-screening baseline and the three dynamic screening
algorithms (global bound, feasible-set bound, and per-sphere refinement).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    LineSearchFailed,
    NotConverged,
    UnsupportedAlgorithmForLoss,
    UnsupportedPairing,
)
from .linalg import ActiveSet
from .losses import LossModel, dual_update, grad_F, primal_value
from .screening import SafeSphere, certified_gap, gap, refine_radius, screen, screening_dots

ALGORITHMS = ("none", "dgs", "gdgs", "rdgs")
SOLVERS = ("cd", "mu", "pg")

# valid (solver -> losses) pairings
PAIRINGS = {
    "cd": {"quadratic", "logistic", "kl"},
    "mu": {"beta15", "kl"},
    "pg": {"kl", "beta15"},
}

AX_REFRESH_EVERY = 100        # full recompute of the cached A@x to kill drift
MU_X0_FLOOR = 1e-16           # multiplicative updates cannot leave exact zero
DENOM_FLOOR = 1e-12
CD_MAX_INNER = 50             # per-coordinate Newton iterations (stiff KL subproblems)


@dataclass
class RunConfig:
    algorithm: str = "gdgs"
    solver: str = "cd"
    eps_gap: float = 1e-7
    eps_r: float = 1e-3            # relative refinement tolerance
    max_iter: int = 100000
    screen_every: int = 1
    alpha_init: str = "feasible"   # rdgs initialization: "feasible" or "global"
    max_inner: int = 20
    record_spheres: bool = False

    def validate(self, loss: str) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if not self.eps_gap > 0:
            raise ValueError("eps_gap must be > 0")
        if self.screen_every < 1:
            raise ValueError("screen_every must be >= 1")
        if self.alpha_init not in ("feasible", "global"):
            raise ValueError("alpha_init must be 'feasible' or 'global'")
        if loss not in PAIRINGS[self.solver]:
            raise UnsupportedPairing(f"solver {self.solver!r} does not support loss {loss!r}")


@dataclass
class SolverState:
    x: np.ndarray
    Ax: np.ndarray
    eta: dict = field(default_factory=dict)
    iter: int = 0
    ops: int = 0


@dataclass
class IterRecord:
    it: int
    gap: float
    active: int
    radius: float | None
    alpha: float | None
    t: float


@dataclass
class RunTrace:
    records: list
    x: np.ndarray
    theta: np.ndarray
    gap: float
    iterations: int
    screened_total: int
    converged: bool
    ops: int
    screened_at: np.ndarray = None  # per column, -1 when never screened
    meta: dict = field(default_factory=dict)
    spheres: list | None = None


def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# ---------------------------------------------------------------------------
# primal updates (one pass over the active set each)
# ---------------------------------------------------------------------------

def cd_step(model: LossModel, state: SolverState, active: ActiveSet) -> SolverState:
    """One full cycle of coordinate descent over the active columns (ascending order).

    Quadratic coordinates are minimized exactly; logistic and KL take one
    projected/soft-thresholded Newton step damped by halving until the
    composite objective does not increase (an undamped step can limit-cycle).
    """
    loss = model.loss
    if loss not in PAIRINGS["cd"]:
        raise UnsupportedPairing(f"cd does not support {loss!r}")
    A, y, lam, eps = model.A, model.spec.y, model.lam, model.spec.epsilon
    x, Ax = state.x, state.Ax
    idx = active.indices
    if idx.size == 0:
        return state
    if loss == "quadratic":
        resid = y - Ax
        nrm2 = A.col_norm2 ** 2
        for j in idx:
            if nrm2[j] <= 0.0:
                continue
            z = x[j] * nrm2[j] + A.col_dot(j, resid)
            xj = float(_soft_threshold(z, lam)) / nrm2[j]
            d = xj - x[j]
            if d != 0.0:
                A.add_col(resid, j, -d)
                x[j] = xj
        state.Ax = y - resid
    elif loss == "logistic":
        for j in idx:
            rows, a = A.col_view(j)
            if a.size == 0:
                continue
            z = np.array(Ax[rows], copy=True)
            yc = y[rows]
            ya = float(yc @ a)
            xj = x[j]
            moved = False
            for _ in range(CD_MAX_INNER):
                p = expit(z)
                gj = float(a @ (p - yc))
                h = max(float((a * a) @ (p * (1.0 - p))), DENOM_FLOOR)
                d = float(_soft_threshold(xj - gj / h, lam / h)) - xj
                if d == 0.0:
                    break
                f0 = float(np.logaddexp(0.0, z).sum())
                accepted = False
                for _ in range(30):
                    df = float(np.logaddexp(0.0, z + a * d).sum()) - f0 - d * ya
                    if df + lam * (abs(xj + d) - abs(xj)) <= 1e-12:
                        accepted = True
                        break
                    d *= 0.5
                if not accepted:
                    break
                z = z + a * d
                xj += d
                moved = True
                if abs(d) <= 1e-9 * (abs(xj) + 1e-15):
                    break
            if moved:
                Ax[rows] = z
                x[j] = xj
    else:  # kl
        for j in idx:
            rows, a = A.col_view(j)
            if a.size == 0:
                continue
            v = Ax[rows] + eps
            yc = y[rows]
            asum = float(a.sum())
            xj = x[j]
            moved = False
            for _ in range(CD_MAX_INNER):
                w = yc / v
                gj = float(a @ (1.0 - w)) + lam
                h = max(float((a * a) @ (w / v)), DENOM_FLOOR)
                d = max(xj - gj / h, 0.0) - xj
                if d == 0.0:
                    break
                logv = np.log(v)
                accepted = False
                for _ in range(30):
                    # d_F = sum y (log v - log(v + a d)) + d * sum(a); plus lam * d
                    df = float(yc @ (logv - np.log(v + a * d))) + d * asum
                    if df + lam * d <= 1e-12:
                        accepted = True
                        break
                    d *= 0.5
                if not accepted:
                    break
                v = v + a * d
                xj = max(xj + d, 0.0)
                moved = True
                if abs(d) <= 1e-9 * (abs(xj) + 1e-15):
                    break
            if moved:
                Ax[rows] = v - eps
                x[j] = xj
    state.ops += int(idx.size)
    return state


def mu_step(model: LossModel, state: SolverState, active: ActiveSet) -> SolverState:
    """One multiplicative (majorization-minimization) sweep over the active columns.

    Zero coordinates are absorbing; the primal value is nonincreasing.
    """
    loss = model.loss
    if loss not in PAIRINGS["mu"]:
        raise UnsupportedPairing(f"mu does not support {loss!r}")
    A, y, lam, eps = model.A, model.spec.y, model.lam, model.spec.epsilon
    x = state.x
    v = state.Ax + eps
    if loss == "kl":
        numer = A.rmatvec_masked(y / v, active)
        denom = A.col_sum + lam
    else:  # beta15
        s = np.sqrt(v)
        numer = A.rmatvec_masked(y / s, active)
        denom = A.rmatvec_masked(s, active) + lam
    mask = active.mask
    x[mask] = x[mask] * numer[mask] / np.maximum(denom[mask], DENOM_FLOOR)
    state.Ax = A.matvec_masked(x, active)
    state.ops += active.count
    return state


def pg_step(model: LossModel, state: SolverState, active: ActiveSet) -> SolverState:
    """One proximal gradient step with a Barzilai-Borwein step size and
    monotone halving safeguard, restricted to the active columns."""
    loss = model.loss
    if loss not in PAIRINGS["pg"]:
        raise UnsupportedPairing(f"pg does not support {loss!r}")
    A, lam = model.A, model.lam
    aux = state.eta
    g = A.rmatvec_masked(grad_F(model, state.Ax), active)
    if "eta" not in aux:
        scale = max(A.norm1 * A.norminf, DENOM_FLOOR)
        aux["eta"] = 1.0 / scale
    else:
        dx = state.x - aux["x_prev"]
        dg = g - aux["g_prev"]
        denom = float(dx @ dg)
        eta = float(dx @ dx) / denom if denom > 0 else 1e10
        aux["eta"] = min(max(eta, 1e-10), 1e10)
    aux["x_prev"] = state.x.copy()
    aux["g_prev"] = g
    p_old = primal_value(model, state.x, state.Ax)
    eta = aux["eta"]
    mask = active.mask
    for _ in range(31):
        xc = np.zeros_like(state.x)
        xc[mask] = np.maximum(_soft_threshold(state.x[mask] - eta * g[mask], eta * lam), 0.0)
        Axc = A.matvec_masked(xc, active)
        if primal_value(model, xc, Axc) <= p_old + 1e-12:
            aux["eta"] = eta
            state.x = xc
            state.Ax = Axc
            state.ops += active.count
            return state
        eta *= 0.5
    raise LineSearchFailed("proximal step not accepted after 30 halvings")


_STEP = {"cd": cd_step, "mu": mu_step, "pg": pg_step}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run(model: LossModel, config: RunConfig) -> RunTrace:
    """Solve the l1-regularized problem with the configured solver and screening algorithm.

    Implements the dynamic screening loop: solver update on the preserved set,
    dual update, safe radius (per algorithm), screening test, zeroing of the
    screened coordinates, stop on gap < eps_gap. Raises NotConverged (with the
    partial trace attached) when max_iter is exhausted.
    """
    config.validate(model.loss)
    algo = config.algorithm
    if algo == "dgs" and model.alpha_global is None:
        raise UnsupportedAlgorithmForLoss(
            f"global strong concavity unavailable for loss {model.loss!r}")

    n = model.A.n
    x = np.zeros(n)
    meta = {}
    if config.solver == "mu":
        x[:] = MU_X0_FLOOR
        meta["x0_floor"] = MU_X0_FLOOR
    active = ActiveSet.all_active(n)
    state = SolverState(x=x, Ax=model.A.matvec(x), eta={})
    step = _STEP[config.solver]

    alpha_init = None
    if algo in ("dgs", "gdgs", "rdgs"):
        if algo == "dgs" or (algo == "rdgs" and config.alpha_init == "global"):
            alpha_init = model.alpha_global
            if alpha_init is None:
                raise UnsupportedAlgorithmForLoss(
                    f"global strong concavity unavailable for loss {model.loss!r}")
        else:
            alpha_init = model.alpha_feasible

    theta_prev = None
    r_prev = None
    if algo == "rdgs":
        dp0 = dual_update(model, state.x, state.Ax)
        _, gc0 = certified_gap(model, state.x, state.Ax, dp0.theta)
        theta_prev = dp0.theta
        r_prev = math.sqrt(2.0 * gc0 / alpha_init) if np.isfinite(gc0) else np.inf

    restricted = model.loss == "kl"
    records = []
    spheres = [] if config.record_spheres else None
    t0 = time.monotonic()
    g = np.inf
    dp = None
    converged = False

    for it in range(1, config.max_iter + 1):
        state = step(model, state, active)
        state.iter = it
        if it % AX_REFRESH_EVERY == 0:
            state.Ax = model.A.matvec_masked(state.x, active)
        dp = dual_update(model, state.x, state.Ax)
        g, gc = certified_gap(model, state.x, state.Ax, dp.theta)
        radius = alpha_used = None

        if algo != "none" and it % config.screen_every == 0:
            if algo == "rdgs":
                res = refine_radius(model, state.x, state.Ax, dp.theta, theta_prev,
                                    r_prev, alpha_init, config.eps_r, config.max_inner)
                radius, alpha_used = res.radius, res.alpha
                theta_prev, r_prev = dp.theta, res.radius
            else:
                radius = math.sqrt(2.0 * gc / alpha_init) if np.isfinite(gc) else np.inf
                alpha_used = alpha_init
            sphere = SafeSphere(dp.theta, radius, alpha_used, restricted_to_S0=restricted)
            if spheres is not None:
                spheres.append(sphere)
            dots = screening_dots(model, dp)
            new_active = screen(model, sphere, active, dots, iteration=it)
            if new_active.count < active.count:
                newly = active.mask & ~new_active.mask
                moved = np.flatnonzero(newly & (state.x != 0.0))
                for j in moved:
                    model.A.add_col(state.Ax, int(j), -state.x[j])
                state.x[newly] = 0.0
                active = new_active
                if moved.size:
                    g = gap(model, state.x, state.Ax, dp.theta)
            else:
                active = new_active

        records.append(IterRecord(it=it, gap=g, active=active.count,
                                  radius=radius, alpha=alpha_used,
                                  t=time.monotonic() - t0))
        if g < config.eps_gap:
            converged = True
            break

    trace = RunTrace(
        records=records,
        x=state.x.copy(),
        theta=dp.theta.copy() if dp is not None else np.zeros(model.A.m),
        gap=float(g),
        iterations=len(records),
        screened_total=n - active.count,
        converged=converged,
        ops=state.ops,
        screened_at=active.screened_at.copy(),
        meta=meta,
        spheres=spheres,
    )
    if not converged:
        raise NotConverged(len(records), float(g), trace=trace)
    return trace
