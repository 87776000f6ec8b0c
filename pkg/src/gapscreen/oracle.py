"""Independent brute-force verifiers: numeric Fenchel conjugation, bound
validation by sampling, finite-difference gradients, and a high-precision
reference solver. Desk-scale only; used by the test suite to certify the
closed forms they check, never by the production path.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainViolation, Unbounded
from .losses import LossModel, dual_update
from .solvers import RunConfig, run

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
UNBOUNDED_CUTOFF = 1e12


def _scalar_loss(loss: str, y_i: float, eps: float, z) -> np.ndarray:
    """The scalar data-fidelity term f_i(z), written directly from the problem
    statements (vectorized over z; +inf outside the domain)."""
    z = np.asarray(z, dtype=np.float64)
    if loss == "quadratic":
        return 0.5 * (y_i - z) ** 2
    if loss == "beta15":
        v = z + eps
        ok = v >= 0
        vs = np.where(ok, v, 0.0)
        val = (4.0 / 3.0) * (y_i ** 1.5 + 0.5 * vs ** 1.5 - 1.5 * y_i * np.sqrt(vs))
        return np.where(ok, val, np.inf)
    if loss == "kl":
        v = z + eps
        ok = v >= 0
        vs = np.where(ok, v, 1.0)
        if y_i == 0.0:
            val = vs
        else:
            with np.errstate(divide="ignore"):
                val = np.where(vs > 0, y_i * np.log(y_i / np.where(vs > 0, vs, 1.0)) + vs - y_i,
                               np.inf)
        return np.where(ok, val, np.inf)
    # logistic
    return np.logaddexp(0.0, z) - y_i * z


def _domain_lo(loss: str, eps: float) -> float:
    return -eps if loss in ("beta15", "kl") else -math.inf


def fenchel_numeric(model: LossModel, i: int, u: float, grid: int = 10000) -> float:
    """Numeric conjugate sup_z (z*u - f_i(z)) by grid search plus golden-section refinement.

    The grid spans [-R, R] with R = 10*(||y||_inf + eps + 1), clipped to
    dom(f_i). Raises Unbounded when the supremum escapes (value above 1e12 or
    still increasing at the clipped boundary).
    """
    loss, eps = model.loss, model.spec.epsilon
    y_i = float(model.spec.y[i])
    R = 10.0 * (float(np.abs(model.spec.y).max()) + eps + 1.0)
    lo = max(-R, _domain_lo(loss, eps))
    hi = R

    def phi(z):
        return np.asarray(z) * u - _scalar_loss(loss, y_i, eps, z)

    zs = np.linspace(lo, hi, grid)
    vals = phi(zs)
    k = int(np.argmax(vals))
    best = float(vals[k])
    if best > UNBOUNDED_CUTOFF:
        raise Unbounded(f"conjugate exceeds {UNBOUNDED_CUTOFF:.0e}")
    if k == grid - 1:
        raise Unbounded("maximizer escapes the search interval")
    domain_clipped = _domain_lo(loss, eps) >= -R
    if k == 0 and not domain_clipped:
        raise Unbounded("maximizer escapes the search interval")
    # golden-section on the bracketing interval; a domain-boundary maximum
    # (k == 0 with a clipped grid) refines toward the left endpoint
    a, b = zs[max(k - 1, 0)], zs[k + 1]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = float(phi(c)), float(phi(d))
    while b - a > 1e-10:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = float(phi(c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = float(phi(d))
    return float(max(fc, fd, best))


def alpha_bruteforce(model: LossModel, set_sampler, samples: int = 10000,
                     seed: int = 0) -> float:
    """Upper estimate of the strong-concavity constant on a sampled set.

    ``set_sampler(rng, k)`` must return a (k, m) array of points inside the
    target set. Returns min over non-pinned coordinates of -max over samples
    of sigma_i(theta_i); every closed-form bound must stay at or below this.
    """
    from .losses import _sigma_eigs  # internal eigenvalue kernel, shared ground truth

    rng = np.random.default_rng(seed)
    pts = np.asarray(set_sampler(rng, samples), dtype=np.float64)
    eigs = np.vstack([_sigma_eigs(model, row) for row in pts])
    keep = np.ones(model.A.m, dtype=bool)
    if model.s0.kind == "pinned":
        keep[model.s0.I0] = False
    per_coord_sup = eigs[:, keep].max(axis=0)
    return float((-per_coord_sup).min())


def sample_domain_box(model: LossModel, width: float = 3.0):
    """Sampler over a box inside dom(D) (and S0 for the pinned case)."""
    lam, y, m = model.lam, model.spec.y, model.A.m
    loss = model.loss

    def sampler(rng, k):
        if loss == "logistic":
            pts = (y[None, :] - rng.uniform(0.0, 1.0, size=(k, m))) / lam
        elif loss == "kl":
            pts = rng.uniform(-1.0 / lam, width / lam, size=(k, m))
            pts[:, model.s0.I0] = -1.0 / lam
        elif loss == "beta15":
            ub = model.s0.ub
            pts = ub[None, :] - rng.uniform(0.0, width / lam, size=(k, m))
        else:
            pts = rng.uniform(-width, width, size=(k, m))
        return pts

    return sampler


def sample_feasible(model: LossModel, width: float = 3.0, max_tries: int = 200):
    """Rejection sampler of the dual feasible set (intersected with S0). Small m only."""
    base = sample_domain_box(model, width)
    A = model.A

    def accept(pts):
        vals = pts @ A.toarray()  # (k, n) of a_j^T theta
        if model.spec.constraint == "nonneg":
            ok = (vals <= 1.0 + 1e-12).all(axis=1)
        else:
            ok = (np.abs(vals) <= 1.0 + 1e-12).all(axis=1)
        return pts[ok]

    def sampler(rng, k):
        out = []
        got = 0
        for _ in range(max_tries):
            cand = accept(base(rng, k))
            if cand.shape[0]:
                out.append(cand)
                got += cand.shape[0]
            if got >= k:
                break
        if got == 0:
            # 0 is always feasible; fall back to scaled points toward it
            pts = base(rng, k) * rng.uniform(0.0, 0.05, size=(k, 1))
            if model.s0.kind == "pinned":
                pts[:, model.s0.I0] = -1.0 / model.lam
            return accept(np.vstack([pts, np.zeros((1, model.A.m))]))
        return np.vstack(out)[:k]

    return sampler


def sample_ball(model: LossModel, center: np.ndarray, r: float):
    """Sampler of B(center, r) intersected with S0 and dom(D).

    Includes the per-coordinate extreme points center +/- r e_i (clipped to the
    set) so the estimate is essentially tight for separable eigenvalues.
    """
    center = np.asarray(center, dtype=np.float64)
    m = center.shape[0]
    lam, y = model.lam, model.spec.y
    loss = model.loss

    def clip(pts):
        if loss == "kl":
            pts = np.maximum(pts, -1.0 / lam)
            pts[:, model.s0.I0] = -1.0 / lam
        elif loss == "beta15":
            pts = np.minimum(pts, model.s0.ub[None, :])
        elif loss == "logistic":
            pts = np.clip(pts, (y[None, :] - 1.0) / lam, y[None, :] / lam)
        return pts

    def sampler(rng, k):
        dirs = rng.normal(size=(k, m))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
        radii = r * rng.uniform(0.0, 1.0, size=(k, 1)) ** (1.0 / m)
        pts = center[None, :] + radii * dirs
        extremes = np.vstack([center[None, :] + r * np.eye(m),
                              center[None, :] - r * np.eye(m)])
        return clip(np.vstack([pts, extremes, center[None, :]]))

    return sampler


def fd_gradient(model: LossModel, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the fidelity F at z (h is relative)."""
    from .losses import fidelity

    z = np.asarray(z, dtype=np.float64)
    lo = _domain_lo(model.loss, model.spec.epsilon)
    out = np.zeros_like(z)
    for i in range(z.shape[0]):
        step = h * max(abs(z[i]), 1.0)
        if z[i] - step <= lo:
            raise DomainViolation(i, "too close to the domain boundary for central differences")
        zp, zm = z.copy(), z.copy()
        zp[i] += step
        zm[i] -= step
        out[i] = (fidelity(model, zp) - fidelity(model, zm)) / (2.0 * step)
    return out


def reference_solve(model: LossModel, tol: float = 1e-12, max_iter: int = 200000):
    """Baseline solve (no screening) to gap <= tol; returns (x_ref, theta_ref).

    Coordinate descent everywhere it applies; proximal gradient for the
    beta=1.5 loss. Raises NotConverged when max_iter is exhausted.
    """
    solver = "pg" if model.loss == "beta15" else "cd"
    config = RunConfig(algorithm="none", solver=solver, eps_gap=tol, max_iter=max_iter)
    trace = run(model, config)
    dp = dual_update(model, trace.x)
    return trace.x, dp.theta
