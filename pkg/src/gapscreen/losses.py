"""Loss models for l1-regularized sparse regression.

One model per data-fidelity term (quadratic, beta=1.5 divergence,
Kullback-Leibler, logistic), bundling primal/dual values, gradients, the
maximum useful regularization, the dual rescaling into the feasible set, the
dual update into the restriction set, Hessian eigenvalues of the dual, and
global/feasible/ball strong-concavity bounds. All bound and lambda_max
computations happen once at construction and are cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, xlogy

from .errors import (
    CenterOutsideS0,
    DomainViolation,
    EpsilonTooLarge,
    InfeasiblePrimal,
    NonPositiveLambdaMax,
    NoPositiveBound,
    OutsideDualDomain,
    RankDeficient,
)
from .linalg import DesignMatrix, build_matrix

LOSSES = ("quadratic", "beta15", "kl", "logistic")
NONNEG_LOSSES = frozenset({"beta15", "kl"})

# Dense pseudo-inverse for the logistic local bound only up to this size.
PINV_SIZE_LIMIT = 2000


@dataclass(frozen=True)
class ProblemSpec:
    """Loss kind, observations, regularization and smoothing for one problem."""

    loss: str
    y: np.ndarray
    lam: float
    epsilon: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64).ravel())
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")
        y = self.y
        if self.loss == "logistic":
            if not np.isin(y, (0.0, 1.0)).all():
                raise ValueError("logistic labels must be in {0, 1}")
        if self.loss in NONNEG_LOSSES:
            if (y < 0).any():
                raise ValueError(f"{self.loss} requires y >= 0")
            if not self.epsilon > 0:
                raise ValueError(f"{self.loss} requires epsilon > 0")
        if self.loss == "beta15" and self.epsilon >= 1.0 / 3.0:
            raise EpsilonTooLarge("beta15 requires epsilon < 1/3")

    @property
    def constraint(self) -> str:
        return "nonneg" if self.loss in NONNEG_LOSSES else "unconstrained"

    @property
    def m(self) -> int:
        return self.y.shape[0]


@dataclass
class S0Params:
    """Restriction set known to contain the dual optimum.

    kind: "all_space" (quadratic, logistic), "upper_bounded" (beta15,
    lam*theta <= min(b, (y-eps)/sqrt(eps))) or "pinned" (KL,
    theta restricted to -1/lam on the zero-observation rows I0).
    ``b`` is in lam*theta units; ``ub`` is the combined upper bound in theta
    units, i.e. min(b, (y-eps)/sqrt(eps))/lam.
    """

    kind: str
    b: np.ndarray | None = None
    ub: np.ndarray | None = None
    I0: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))


@dataclass
class DualPoint:
    """Dual update output: feasible center, its cheap screening surrogate and the scaling.

    ``theta`` lies in the dual feasible set intersected with S0. ``theta_test``
    is the pure rescaled residual (used for cheap per-column dot products in
    the screening test). ``scale`` is the multiplicative factor s of the
    rescaling (theta_test = s * rho / lam, s in (0, 1]); ``Atz`` holds
    A.T @ (rho/lam), reused by the screening test.
    """

    theta: np.ndarray
    theta_test: np.ndarray
    scale: float
    Atz: np.ndarray


class LossModel:
    """Immutable bundle of a problem, its design matrix and cached constants."""

    def __init__(self, A: DesignMatrix, spec: ProblemSpec, pinv: str = "auto"):
        if A.m != spec.m:
            raise ValueError(f"A has {A.m} rows but y has {spec.m} entries")
        if spec.loss in NONNEG_LOSSES and not A.nonneg:
            raise ValueError(f"{spec.loss} requires a non-negative design matrix")
        self.A = A
        self.spec = spec
        if spec.loss == "kl":
            I0 = np.flatnonzero(spec.y == 0.0)
            if not np.array_equal(A.I0, I0):
                raise ValueError("design matrix I0 must match the zero pattern of y for KL")
        self.s0 = _compute_s0(A, spec)
        self.pinv_norm1 = _pinv_norm1(A, spec, pinv) if spec.loss == "logistic" else None
        self.alpha_global = _alpha_global(spec)
        self.alpha_feasible = _compute_alpha_feasible(self)
        self._lam_max = _lambda_max_value(A, spec)

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def loss(self) -> str:
        return self.spec.loss


def build_problem(rows, y, loss: str, lam: float, epsilon: float = 1e-6,
                  pinv: str = "auto") -> LossModel:
    """Convenience constructor wiring the I0 row set into the design matrix."""
    y = np.asarray(y, dtype=np.float64).ravel()
    I0 = np.flatnonzero(y == 0.0) if loss in NONNEG_LOSSES else None
    A = build_matrix(rows, require_nonneg=loss in NONNEG_LOSSES, I0=I0)
    return LossModel(A, ProblemSpec(loss, y, lam, epsilon))


# ---------------------------------------------------------------------------
# primal side
# ---------------------------------------------------------------------------

def _check_primal_feasible(model: LossModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (model.A.n,):
        raise InfeasiblePrimal(f"x has length {x.shape[0]}, expected {model.A.n}")
    if not np.isfinite(x).all():
        raise InfeasiblePrimal("x has non-finite entries")
    if model.spec.constraint == "nonneg" and (x < 0).any():
        raise InfeasiblePrimal("x must be non-negative for this loss")
    return x


def fidelity(model: LossModel, z: np.ndarray) -> float:
    """Data-fidelity value F(z) at a reconstruction z (= A x)."""
    y, eps, loss = model.spec.y, model.spec.epsilon, model.loss
    z = np.asarray(z, dtype=np.float64)
    if loss == "quadratic":
        d = y - z
        return 0.5 * float(d @ d)
    if loss == "beta15":
        v = z + eps
        return float((4.0 / 3.0) * np.sum(y ** 1.5) + (2.0 / 3.0) * np.sum(v ** 1.5)
                     - 2.0 * (y @ np.sqrt(v)))
    if loss == "kl":
        v = z + eps
        return float(np.sum(xlogy(y, y / v)) + np.sum(v - y))
    # logistic
    return float(np.logaddexp(0.0, z).sum() - y @ z)


def primal_value(model: LossModel, x: np.ndarray, Ax: np.ndarray | None = None) -> float:
    """P(x) = F(Ax) + lam * ||x||_1 with the epsilon-smoothed fidelities."""
    x = _check_primal_feasible(model, x)
    if Ax is None:
        Ax = model.A.matvec(x)
    return fidelity(model, Ax) + model.lam * float(np.abs(x).sum())


def grad_F(model: LossModel, z: np.ndarray) -> np.ndarray:
    """Componentwise gradient of the fidelity at z."""
    y, eps, loss = model.spec.y, model.spec.epsilon, model.loss
    z = np.asarray(z, dtype=np.float64)
    if loss == "quadratic":
        return z - y
    if loss in NONNEG_LOSSES:
        v = z + eps
        bad = np.flatnonzero(v <= 0.0)
        if bad.size:
            raise DomainViolation(int(bad[0]), f"z[{bad[0]}] + eps <= 0")
        if loss == "beta15":
            s = np.sqrt(v)
            return s - y / s
        return 1.0 - y / v
    return expit(z) - y


# ---------------------------------------------------------------------------
# dual side
# ---------------------------------------------------------------------------

def dual_value(model: LossModel, theta: np.ndarray) -> float:
    """D(theta) = -sum_i f_i*(-lam*theta_i); may be -inf at the KL boundary."""
    y, eps, lam, loss = model.spec.y, model.spec.epsilon, model.lam, model.loss
    theta = np.asarray(theta, dtype=np.float64)
    u = lam * theta
    if loss == "quadratic":
        d = y - u
        return 0.5 * float(y @ y - d @ d)
    if loss == "beta15":
        t = u * u + 4.0 * y
        return float(np.sum(u ** 3 / 6.0 - t ** 1.5 / 6.0 + u * y + (4.0 / 3.0) * y ** 1.5 - eps * u))
    if loss == "kl":
        w = 1.0 + u
        bad = np.flatnonzero(w < 0.0)
        if bad.size:
            raise OutsideDualDomain(int(bad[0]), f"theta[{bad[0]}] < -1/lambda")
        with np.errstate(divide="ignore"):
            terms = xlogy(y, w)
        return float(np.sum(terms) - eps * np.sum(u))
    # logistic: binary entropy of p = y - lam*theta, domain y-1 <= u <= y
    p = y - u
    bad = np.flatnonzero((p < 0.0) | (p > 1.0))
    if bad.size:
        i = int(bad[0])
        raise OutsideDualDomain(i, f"lam*theta[{i}] outside [y-1, y]")
    return float(-(np.sum(xlogy(p, p)) + np.sum(xlogy(1.0 - p, 1.0 - p))))


def _lambda_max_value(A: DesignMatrix, spec: ProblemSpec) -> float:
    y, eps, loss = spec.y, spec.epsilon, spec.loss
    if loss == "quadratic":
        return float(np.abs(A.rmatvec(y)).max())
    if loss == "beta15":
        return float(A.rmatvec(y - eps).max() / np.sqrt(eps))
    if loss == "kl":
        return float(A.rmatvec(y - eps).max() / eps)
    return float(np.abs(A.rmatvec(y - 0.5)).max())


def lambda_max(model: LossModel) -> float:
    """Smallest regularization at which the all-zero vector is optimal."""
    v = model._lam_max
    if not v > 0.0:
        raise NonPositiveLambdaMax(f"lambda_max = {v:.3e} <= 0 (degenerate data)")
    return v


def _phi_sup_norm(model: LossModel, w: np.ndarray) -> float:
    """||phi(w)||_inf: phi is identity (unconstrained) or positive part (non-negative)."""
    if model.spec.constraint == "nonneg":
        return max(float(w.max()) if w.size else 0.0, 0.0)
    return float(np.abs(w).max()) if w.size else 0.0


def _check_dual_domain(model: LossModel, z: np.ndarray) -> None:
    y, lam, loss = model.spec.y, model.lam, model.loss
    if loss == "kl":
        bad = np.flatnonzero(lam * z < -1.0)
        if bad.size:
            raise OutsideDualDomain(int(bad[0]), f"z[{bad[0]}] < -1/lambda")
    elif loss == "logistic":
        u = lam * z
        bad = np.flatnonzero((u < y - 1.0) | (u > y))
        if bad.size:
            i = int(bad[0])
            raise OutsideDualDomain(i, f"lam*z[{i}] outside [y-1, y]")


def dual_scale(model: LossModel, z: np.ndarray) -> np.ndarray:
    """Rescale z into the dual feasible set: z / max(||phi(A.T z)||_inf, 1)."""
    z = np.asarray(z, dtype=np.float64)
    _check_dual_domain(model, z)
    denom = max(_phi_sup_norm(model, model.A.rmatvec(z)), 1.0)
    return z / denom


def dual_update(model: LossModel, x: np.ndarray, Ax: np.ndarray | None = None) -> DualPoint:
    """Map a primal point into the dual feasible set intersected with S0.

    Returns the feasible center theta, the pure rescaled point theta_test kept
    for cheap screening dot products, the scaling factor s, and A.T (rho/lam).
    """
    x = _check_primal_feasible(model, x)
    if Ax is None:
        Ax = model.A.matvec(x)
    lam, loss = model.lam, model.loss
    rho = -grad_F(model, Ax)
    z = rho / lam
    Atz = model.A.rmatvec(z)
    s = 1.0 / max(_phi_sup_norm(model, Atz), 1.0)
    theta_test = s * z
    if loss == "beta15":
        theta = np.minimum(theta_test, model.s0.ub)
    elif loss == "kl":
        theta = theta_test.copy()
        theta[model.s0.I0] = -1.0 / lam
    else:
        theta = theta_test
    return DualPoint(theta=theta, theta_test=theta_test, scale=s, Atz=Atz)


# ---------------------------------------------------------------------------
# Hessian eigenvalues of the dual and strong-concavity bounds
# ---------------------------------------------------------------------------

def _sigma_quadratic(lam: float, u):
    return -(lam * lam) * np.ones_like(np.asarray(u, dtype=np.float64))


def _sigma_beta15(lam: float, y, u):
    """Eigenvalues -lam^2 ((u^2+2y)/sqrt(u^2+4y) - u) at u = lam*theta.

    For u > 0 the direct form cancels catastrophically; the rationalized
    equivalent 4 y^2 / (s (u^2 + 2y + u s)) with s = sqrt(u^2 + 4y) is exact
    there (and only there: it degenerates 0/0 for u < 0, y = 0). The bound
    must remain a valid lower bound under rounding.
    """
    u = np.asarray(u, dtype=np.float64)
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), u.shape)
    s = np.sqrt(u * u + 4.0 * y)
    direct = np.where(s > 0, (u * u + 2.0 * y) / np.where(s > 0, s, 1.0) - u, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = s * (u * u + 2.0 * y + u * s)
        rational = np.where(denom > 0, 4.0 * y * y / np.where(denom > 0, denom, 1.0), 0.0)
    val = np.where(u > 0, rational, direct)
    return -(lam * lam) * val


def _sigma_kl(lam: float, y, u):
    u = np.asarray(u, dtype=np.float64)
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), u.shape)
    w = 1.0 + u
    with np.errstate(divide="ignore"):
        val = np.where(y > 0, np.where(w > 0, y / np.where(w > 0, w, 1.0) ** 2, np.inf), 0.0)
    return -(lam * lam) * val


def _sigma_logistic(lam: float, y, u):
    u = np.asarray(u, dtype=np.float64)
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), u.shape)
    t = u - y + 0.5
    d = 1.0 - 4.0 * t * t
    with np.errstate(divide="ignore"):
        val = np.where(d > 0, 4.0 / np.where(d > 0, d, 1.0), np.inf)
    return -(lam * lam) * val


def _sigma_eigs(model: LossModel, theta) -> np.ndarray:
    """Vector of dual-Hessian eigenvalues at theta (broadcast over coordinates)."""
    lam, y, loss = model.lam, model.spec.y, model.loss
    u = lam * np.asarray(theta, dtype=np.float64)
    if loss == "quadratic":
        return _sigma_quadratic(lam, u)
    if loss == "beta15":
        return _sigma_beta15(lam, y, u)
    if loss == "kl":
        return _sigma_kl(lam, y, u)
    return _sigma_logistic(lam, y, u)


def sigma(model: LossModel, i: int, theta_i: float) -> float:
    """i-th eigenvalue of the dual Hessian at theta_i (always <= 0)."""
    lam, y, loss = model.lam, model.spec.y, model.loss
    u = lam * float(theta_i)
    if loss == "quadratic":
        return -lam * lam
    if loss == "beta15":
        return float(_sigma_beta15(lam, y[i], np.array([u]))[0])
    if loss == "kl":
        if u < -1.0:
            raise OutsideDualDomain(i, "theta_i < -1/lambda")
        return float(_sigma_kl(lam, y[i], np.array([u]))[0])
    t = u - y[i] + 0.5
    if abs(t) > 0.5:
        raise OutsideDualDomain(i, "lam*theta_i outside [y-1, y]")
    return float(_sigma_logistic(lam, y[i], np.array([u]))[0])


def _compute_s0(A: DesignMatrix, spec: ProblemSpec) -> S0Params:
    y, eps, lam, loss = spec.y, spec.epsilon, spec.lam, spec.loss
    if loss == "kl":
        return S0Params(kind="pinned", I0=np.flatnonzero(y == 0.0))
    if loss != "beta15":
        return S0Params(kind="all_space")
    if eps >= 1.0 / 3.0:
        raise EpsilonTooLarge("beta15 requires epsilon < 1/3")
    m = spec.m
    c = -(1.0 / lam) * np.cbrt((4.0 * np.sum(y ** 1.5) + 2.0 * (m - 1) * eps ** 1.5 + 3.0 * eps)
                               / (1.0 - 3.0 * eps))
    b = lam * _rowwise_min_over_support(A, (1.0 - c * A.col_norm1)) + lam * c
    ub = np.minimum(b, (y - eps) / np.sqrt(eps)) / lam
    return S0Params(kind="upper_bounded", b=b, ub=ub, I0=np.flatnonzero(y == 0.0))


def _rowwise_min_over_support(A: DesignMatrix, numer_per_col: np.ndarray) -> np.ndarray:
    """min over {j : a_ij != 0} of numer_per_col[j] / a_ij, for each row i.

    Requires a non-negative matrix with no all-zero row (checked at build).
    """
    m, n = A.m, A.n
    out = np.full(m, np.inf)
    if A.dense:
        M = A.raw()
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(M != 0.0, numer_per_col[None, :] / M, np.inf)
        out = ratios.min(axis=1)
    else:
        mat = A.raw()
        indptr, indices, data = mat.indptr, mat.indices, mat.data
        for j in range(n):
            lo, hi = indptr[j], indptr[j + 1]
            if hi == lo:
                continue
            np.minimum.at(out, indices[lo:hi], numer_per_col[j] / data[lo:hi])
    if not np.isfinite(out).all():
        raise NoPositiveBound("a row has no nonzero entry")
    return out


def _alpha_global(spec: ProblemSpec) -> float | None:
    if spec.loss == "quadratic":
        return spec.lam ** 2
    if spec.loss == "logistic":
        return 4.0 * spec.lam ** 2
    return None


def _pinv_norm1(A: DesignMatrix, spec: ProblemSpec, pinv: str) -> float | None:
    """||A^dagger||_1 for the logistic local bound; needs a right inverse (full row rank)."""
    if pinv == "never":
        return None
    if pinv == "auto" and (min(A.m, A.n) > PINV_SIZE_LIMIT or A.m > A.n):
        return None
    M = A.toarray()
    if np.linalg.matrix_rank(M) < min(A.m, A.n) or A.m > A.n:
        if pinv == "force":
            raise RankDeficient("logistic local bound needs rank(A) = m <= n")
        return None
    P = np.linalg.pinv(M)
    return float(np.abs(P).sum(axis=0).max())  # P is n x m; max abs column sum of A^dagger


def _compute_alpha_feasible(model: LossModel) -> float:
    spec, A = model.spec, model.A
    lam, y, eps = spec.lam, spec.y, spec.epsilon
    if spec.loss == "quadratic":
        return lam ** 2
    if spec.loss == "beta15":
        alpha = float(np.min(-_sigma_eigs(model, model.s0.ub)))
    elif spec.loss == "kl":
        free = np.setdiff1d(np.arange(spec.m), model.s0.I0, assume_unique=False)
        if free.size == 0:
            raise NoPositiveBound("all observations are zero")
        bound = _rowwise_min_over_support(A, lam + A.col_norm1)  # bounds 1 + lam*theta_i
        alpha = lam ** 2 * float(np.min(y[free] / bound[free] ** 2))
    else:  # logistic
        p1 = model.pinv_norm1
        if p1 is None:
            alpha = 4.0 * lam ** 2
        else:
            q = min(lam * p1, 0.5) - 0.5
            alpha = 4.0 * lam ** 2 / (1.0 - 4.0 * q * q)
    if not alpha > 0.0:
        raise NoPositiveBound(f"alpha_feasible = {alpha:.3e} <= 0")
    return alpha


def alpha_feasible(model: LossModel) -> float:
    """Strong-concavity bound of the dual on the feasible set intersected with S0."""
    return model.alpha_feasible


def _check_center_in_s0(model: LossModel, theta: np.ndarray) -> None:
    s0 = model.s0
    if s0.kind == "upper_bounded":
        if (theta > s0.ub + 1e-9).any():
            raise CenterOutsideS0("center violates the upper-bound set")
    elif s0.kind == "pinned":
        if s0.I0.size and not np.allclose(theta[s0.I0], -1.0 / model.lam, rtol=0.0, atol=1e-12):
            raise CenterOutsideS0("center is not pinned to -1/lambda on I0")


def alpha_ball(model: LossModel, theta: np.ndarray, r: float) -> float:
    """Strong-concavity bound of the dual on the ball B(theta, r) intersected with S0."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    theta = np.asarray(theta, dtype=np.float64)
    _check_dual_domain(model, theta)
    _check_center_in_s0(model, theta)
    spec = model.spec
    lam, y = spec.lam, spec.y
    if spec.loss == "quadratic":
        return lam ** 2
    if spec.loss == "beta15":
        d = np.minimum(theta + r, model.s0.ub)  # theta units; equals min(lam(th+r), b, (y-eps)/sqrt(eps))/lam
        return float(np.min(-_sigma_eigs(model, d)))
    if spec.loss == "kl":
        free = np.setdiff1d(np.arange(spec.m), model.s0.I0, assume_unique=False)
        if free.size == 0:
            raise NoPositiveBound("all observations are zero")
        w = 1.0 + lam * (theta[free] + r)
        return lam ** 2 * float(np.min(y[free] / w ** 2))
    # logistic
    t = np.abs(lam * theta - y + 0.5)
    v = max(float(t.min()) - lam * r, 0.0)
    den = 1.0 - 4.0 * v * v
    if den <= 0.0:
        return np.inf
    return 4.0 * lam ** 2 / den


def s0_params(model: LossModel) -> S0Params:
    """The cached restriction-set parameters."""
    return model.s0
