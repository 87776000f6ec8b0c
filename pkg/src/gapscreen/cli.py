"""Command-line front end: single solves and regularization-path sweeps.

``gapscreen solve`` runs one (loss, algorithm, solver) cell and writes a
versioned JSON trace; ``gapscreen path`` sweeps a lambda grid over several
algorithms and emits the CSV behind screening-ratio / relative-time plots.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
import time

import numpy as np

from . import data_io
from .errors import GapScreenError, NotConverged
from .linalg import preprocess
from .losses import LossModel, ProblemSpec, primal_value
from .solvers import ALGORITHMS, PAIRINGS, RunConfig, RunTrace, run

TRACE_SCHEMA_VERSION = 1

DEFAULT_SOLVER = {"quadratic": "cd", "logistic": "cd", "kl": "cd", "beta15": "mu"}


# ---------------------------------------------------------------------------
# trace serialization
# ---------------------------------------------------------------------------

def trace_to_json(trace: RunTrace, config: dict, model: LossModel, dump_x: bool = False) -> dict:
    obj = {
        "version": TRACE_SCHEMA_VERSION,
        "config": config,
        "iterations": [
            {"it": r.it, "gap": r.gap, "active": r.active,
             "radius": r.radius, "alpha": r.alpha, "t": r.t}
            for r in trace.records
        ],
        "final": {
            "x_nnz": int(np.count_nonzero(trace.x)),
            "gap": float(trace.gap),
            "objective": float(primal_value(model, trace.x)),
        },
        "meta": dict(trace.meta, converged=trace.converged,
                     screened=trace.screened_total, n=int(trace.x.shape[0])),
    }
    if dump_x:
        obj["final"]["x"] = [float(v) for v in trace.x]
    return obj


def validate_trace(obj: dict) -> None:
    """Schema check for emitted traces; raises ValueError on any violation."""
    if not isinstance(obj, dict) or obj.get("version") != TRACE_SCHEMA_VERSION:
        raise ValueError("bad or missing trace version")
    if not isinstance(obj.get("config"), dict):
        raise ValueError("missing config")
    its = obj.get("iterations")
    if not isinstance(its, list):
        raise ValueError("missing iterations")
    for row in its:
        for key in ("it", "gap", "active", "t"):
            if not isinstance(row.get(key), (int, float)):
                raise ValueError(f"iteration field {key} missing or non-numeric")
        for key in ("radius", "alpha"):
            if row.get(key) is not None and not isinstance(row[key], (int, float)):
                raise ValueError(f"iteration field {key} must be numeric or null")
    fin = obj.get("final")
    if not isinstance(fin, dict):
        raise ValueError("missing final section")
    if not isinstance(fin.get("x_nnz"), int):
        raise ValueError("final.x_nnz must be an int")
    for key in ("gap", "objective"):
        if not isinstance(fin.get(key), (int, float)):
            raise ValueError(f"final.{key} must be numeric")


# ---------------------------------------------------------------------------
# data and model construction
# ---------------------------------------------------------------------------

def _parse_synth_spec(spec: str, seed: int):
    # synth:<kind>:m=..,n=..,support=..
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError("synthetic spec must look like synth:kind:m=50,n=200,support=10")
    kind = parts[1]
    kv = {}
    for tok in parts[2].split(","):
        k, _, v = tok.partition("=")
        kv[k.strip()] = int(v)
    for key in ("m", "n", "support"):
        if key not in kv:
            raise ValueError(f"synthetic spec missing {key}=")
    ds, _ = data_io.synth(kind, kv["m"], kv["n"], kv["support"], seed=seed)
    return ds


def load_dataset(data: str, loss: str, seed: int, fmt: str = "auto",
                 y_col: int = 0) -> data_io.Dataset:
    if data.startswith("synth:"):
        return _parse_synth_spec(data, seed)
    logistic = loss == "logistic"
    if fmt == "auto":
        lower = data.lower()
        if lower.endswith(".csv"):
            fmt = "csv"
        elif lower.endswith((".tri", ".triplet")):
            fmt = "triplet"
        else:
            fmt = "libsvm"
    if fmt == "csv":
        return data_io.load_csv(data, logistic_labels=logistic)
    if fmt == "triplet":
        return data_io.load_triplets(data, y_col=y_col)
    return data_io.load_libsvm(data, logistic_labels=logistic)


def build_model(ds: data_io.Dataset, loss: str, lambda_rel: float, epsilon: float,
                normalize: bool, pinv: str = "auto"):
    A, y = ds.A, ds.y
    if normalize:
        A, y, report = preprocess(A, y)
        ds.meta.setdefault("preprocessing", []).append(
            {"dropped_rows": report.dropped_rows})
    from .losses import _lambda_max_value

    probe = ProblemSpec(loss, y, lam=1.0, epsilon=epsilon)
    lam_max = _lambda_max_value(A, probe)
    if not lam_max > 0:
        raise ValueError(f"lambda_max = {lam_max:.3e} <= 0: degenerate data for this loss")
    lam = lambda_rel * lam_max
    model = LossModel(A, ProblemSpec(loss, y, lam, epsilon), pinv=pinv)
    return model, lam_max


# ---------------------------------------------------------------------------
# solve command
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", required=True, choices=("quadratic", "beta15", "kl", "logistic"))
    p.add_argument("--data", required=True, help="path or synth:kind:m=..,n=..,support=..")
    p.add_argument("--format", default="auto", choices=("auto", "libsvm", "csv", "triplet"))
    p.add_argument("--y-col", type=int, default=0, help="observation column for triplet files")
    p.add_argument("--solver", default=None, choices=("cd", "mu", "pg"))
    p.add_argument("--eps-gap", type=float, default=1e-7)
    p.add_argument("--eps-r", type=float, default=1e-3,
                   help="relative tolerance of the radius refinement loop")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--screen-every", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true",
                   help="drop zero rows and rescale columns to unit norm first")
    p.add_argument("--alpha-init", default="feasible", choices=("feasible", "global"),
                   help="strong-concavity bound the refined algorithm starts from")
    p.add_argument("--pinv", default="auto", choices=("auto", "force", "never"),
                   help="policy for the logistic pseudo-inverse refinement")


def cmd_solve(args) -> int:
    solver = args.solver or DEFAULT_SOLVER[args.loss]
    config = RunConfig(algorithm=args.algorithm, solver=solver, eps_gap=args.eps_gap,
                       eps_r=args.eps_r, max_iter=args.max_iter,
                       screen_every=args.screen_every, alpha_init=args.alpha_init)
    ds = load_dataset(args.data, args.loss, args.seed, fmt=args.format, y_col=args.y_col)
    model, lam_max = build_model(ds, args.loss, args.lambda_rel, args.epsilon,
                                 args.normalize, pinv=args.pinv)
    config.validate(model.loss)

    t0 = time.monotonic()
    code = 0
    try:
        trace = run(model, config)
    except NotConverged as err:
        trace = err.trace
        code = 3
    elapsed = time.monotonic() - t0

    config_dict = {
        "loss": args.loss, "data": args.data, "lambda_rel": args.lambda_rel,
        "lambda": model.lam, "lambda_max": lam_max, "algorithm": args.algorithm,
        "solver": solver, "eps_gap": args.eps_gap, "eps_r": args.eps_r,
        "epsilon": args.epsilon, "screen_every": args.screen_every,
        "seed": args.seed, "alpha_init": args.alpha_init,
    }
    obj = trace_to_json(trace, config_dict, model, dump_x=args.dump_x)
    validate_trace(obj)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(obj, fh)
    n = trace.x.shape[0]
    print(f"loss={args.loss} algo={args.algorithm} iters={trace.iterations} "
          f"gap={trace.gap:.3e} screened={trace.screened_total}/{n} time_s={elapsed:.3f}")
    return code


# ---------------------------------------------------------------------------
# path command
# ---------------------------------------------------------------------------

def parse_lambda_grid(spec: str) -> np.ndarray:
    """Grid specs: 'lo:hi:Nlog' (log-spaced), 'lo:hi:N' (linear) or a single value."""
    if ":" not in spec:
        return np.array([float(spec)])
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be lo:hi:count[log]")
    lo, hi = float(parts[0]), float(parts[1])
    count = parts[2]
    if count.endswith("log"):
        return np.geomspace(lo, hi, int(count[:-3]))
    return np.linspace(lo, hi, int(count))


def _path_cell(payload: dict) -> dict:
    """One (lambda_rel, algorithm) cell; runs in a worker process."""
    args = argparse.Namespace(**payload["args"])
    lam_rel, algorithm = payload["lambda_rel"], payload["algorithm"]
    solver = args.solver or DEFAULT_SOLVER[args.loss]
    out = {"lambda_rel": lam_rel, "algorithm": algorithm, "solver": solver,
           "iters": -1, "time_s": float("nan"), "screen_ratio": float("nan")}
    try:
        ds = load_dataset(args.data, args.loss, args.seed, fmt=args.format, y_col=args.y_col)
        model, _ = build_model(ds, args.loss, lam_rel, args.epsilon, args.normalize,
                               pinv=args.pinv)
        config = RunConfig(algorithm=algorithm, solver=solver, eps_gap=args.eps_gap,
                           eps_r=args.eps_r, max_iter=args.max_iter,
                           screen_every=args.screen_every, alpha_init=args.alpha_init)
        config.validate(model.loss)
        t0 = time.monotonic()
        try:
            trace = run(model, config)
            iters = trace.iterations
        except NotConverged as err:
            trace = err.trace
            iters = -trace.iterations  # ran but did not converge
        out["time_s"] = time.monotonic() - t0
        out["iters"] = iters
        out["screen_ratio"] = trace.screened_total / trace.x.shape[0]
    except (GapScreenError, ValueError) as err:
        out["error"] = str(err)
    return out


def cmd_path(args) -> int:
    grid = parse_lambda_grid(args.lambda_grid)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}")
    solver = args.solver or DEFAULT_SOLVER[args.loss]
    algorithms = [a for a in algorithms
                  if a != "dgs" or args.loss in ("quadratic", "logistic")]
    payload_args = {**vars(args)}
    payload_args.pop("func", None)
    cells = [{"args": payload_args, "lambda_rel": float(lr), "algorithm": a}
             for lr in grid for a in algorithms]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_path_cell, cells))
    else:
        results = [_path_cell(c) for c in cells]

    base_time = {}
    for res in results:
        if res["algorithm"] == "none" and res["iters"] != -1:
            base_time[res["lambda_rel"]] = res["time_s"]
    lines = ["lambda_rel,algorithm,solver,iters,time_s,screen_ratio,rel_time"]
    for res in results:
        bt = base_time.get(res["lambda_rel"])
        rel = res["time_s"] / bt if bt else float("nan")
        lines.append(f"{res['lambda_rel']:.6g},{res['algorithm']},{res['solver']},"
                     f"{res['iters']},{res['time_s']:.6g},{res['screen_ratio']:.6g},{rel:.6g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapscreen",
                                     description="l1 sparse regression with safe screening")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one solve and write a JSON trace")
    _add_common(ps)
    ps.add_argument("--lambda-rel", type=float, required=True,
                    help="regularization as a fraction of lambda_max, in (0, 1]")
    ps.add_argument("--algorithm", default="gdgs", choices=ALGORITHMS)
    ps.add_argument("--out", default=None, help="trace JSON path")
    ps.add_argument("--dump-x", action="store_true", help="include the full solution vector")
    ps.set_defaults(func=cmd_solve)

    pp = sub.add_parser("path", help="sweep a lambda grid and write a CSV report")
    _add_common(pp)
    pp.add_argument("--lambda-grid", required=True, help="e.g. 1e-3:1:30log")
    pp.add_argument("--algorithms", default="none,dgs,gdgs,rdgs",
                    help="comma-separated; dgs is dropped automatically for kl/beta15")
    pp.add_argument("--jobs", type=int, default=1)
    pp.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    pp.set_defaults(func=cmd_path)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except NotConverged:
        return 3
    except (GapScreenError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
