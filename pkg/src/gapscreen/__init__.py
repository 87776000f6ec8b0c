"""l1-regularized sparse regression with dynamic duality-gap safe screening.

Losses: quadratic, beta=1.5 divergence, Kullback-Leibler and logistic.
Screening algorithms: global-bound, feasible-set-bound and per-sphere-refined
dynamic gap-safe screening, on top of coordinate descent, multiplicative
update and proximal gradient solvers.
"""

from . import errors
from .data_io import Dataset, load_csv, load_libsvm, load_triplets, save_libsvm, synth
from .linalg import ActiveSet, DesignMatrix, build_matrix, masked_matvec, preprocess
from .losses import (
    DualPoint,
    LossModel,
    ProblemSpec,
    S0Params,
    alpha_ball,
    alpha_feasible,
    build_problem,
    dual_scale,
    dual_update,
    dual_value,
    grad_F,
    lambda_max,
    primal_value,
    s0_params,
    sigma,
)
from .oracle import alpha_bruteforce, fd_gradient, fenchel_numeric, reference_solve
from .screening import SafeSphere, gap, gap_sphere, refine_radius, screen, sphere_test
from .solvers import RunConfig, RunTrace, cd_step, mu_step, pg_step, run

__all__ = [
    "ActiveSet", "Dataset", "DesignMatrix", "DualPoint", "LossModel",
    "ProblemSpec", "RunConfig", "RunTrace", "S0Params", "SafeSphere",
    "alpha_ball", "alpha_bruteforce", "alpha_feasible", "build_matrix",
    "build_problem", "cd_step", "dual_scale", "dual_update", "dual_value",
    "errors", "fd_gradient", "fenchel_numeric", "gap", "gap_sphere", "grad_F",
    "lambda_max", "load_csv", "load_libsvm", "load_triplets", "masked_matvec",
    "mu_step", "pg_step", "preprocess", "primal_value", "reference_solve",
    "refine_radius", "run", "s0_params", "save_libsvm", "screen", "sigma",
    "sphere_test", "synth",
]

__version__ = "0.1.0"
