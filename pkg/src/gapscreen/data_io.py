"""Dataset ingestion (libsvm, dense CSV, sparse triplets) and synthetic
problem generators. Loaders build the design matrix with the zero pattern of
y wired in, so restricted column norms are available to every loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFile, ParseError
from .linalg import DesignMatrix, build_matrix


@dataclass
class Dataset:
    A: DesignMatrix
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def n(self) -> int:
        return self.A.n


def _finish(M: np.ndarray, y: np.ndarray, meta: dict, require_nonneg=False) -> Dataset:
    # a zero row makes its observation irrelevant; drop it (and record that)
    keep = np.abs(M).sum(axis=1) > 0.0
    if not keep.all():
        dropped = np.flatnonzero(~keep).tolist()
        meta.setdefault("preprocessing", []).append({"dropped_zero_rows": dropped})
        M, y = M[keep], y[keep]
    I0 = np.flatnonzero(y == 0.0)
    A = build_matrix(M, require_nonneg=require_nonneg, I0=I0)
    meta.update(m=A.m, n=A.n, density=A.density)
    return Dataset(A=A, y=y, meta=meta)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _remap_labels(y: np.ndarray, meta: dict) -> np.ndarray:
    """Map binary label conventions onto {0, 1} for the logistic loss."""
    vals = set(np.unique(y).tolist())
    if vals <= {0.0, 1.0}:
        meta["label_map"] = {0.0: 0.0, 1.0: 1.0}
        return y
    if vals <= {-1.0, 1.0}:
        meta["label_map"] = {-1.0: 0.0, 1.0: 1.0}
        return np.where(y < 0, 0.0, 1.0)
    if vals <= {1.0, 2.0}:
        meta["label_map"] = {1.0: 0.0, 2.0: 1.0}
        return y - 1.0
    raise ValueError(f"cannot map labels {sorted(vals)} onto {{0, 1}}")


def load_libsvm(path, n: int | None = None, logistic_labels: bool = False) -> Dataset:
    """Parse `<label> <idx>:<val> ...` lines with 1-based feature indices.

    The feature count is the largest index seen unless ``n`` is given. With
    ``logistic_labels``, binary label conventions are remapped onto {0, 1} and
    the table recorded in meta.
    """
    labels = []
    rows = []  # list of (indices, values)
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ParseError(lineno, f"bad label {parts[0]!r}")
            idxs, vals = [], []
            for tok in parts[1:]:
                if ":" not in tok:
                    raise ParseError(lineno, f"expected idx:val, got {tok!r}")
                si, sv = tok.split(":", 1)
                try:
                    idx = int(si)
                    val = float(sv)
                except ValueError:
                    raise ParseError(lineno, f"bad pair {tok!r}")
                if idx < 1:
                    raise ParseError(lineno, f"indices are 1-based, got {idx}")
                idxs.append(idx - 1)
                vals.append(val)
            max_idx = max(max_idx, max(idxs) + 1 if idxs else 0)
            labels.append(label)
            rows.append((idxs, vals))
    if not labels:
        raise EmptyFile(str(path))
    ncols = n if n is not None else max_idx
    if ncols < max_idx:
        raise ParseError(0, f"feature index {max_idx} exceeds declared n={ncols}")
    M = np.zeros((len(labels), ncols))
    for i, (idxs, vals) in enumerate(rows):
        M[i, idxs] = vals
    y = np.asarray(labels, dtype=np.float64)
    meta = {"source": str(path), "format": "libsvm", "preprocessing": []}
    if logistic_labels:
        y = _remap_labels(y, meta)
    return _finish(M, y, meta)


def save_libsvm(dataset: Dataset, path) -> None:
    """Write the dataset in libsvm format with round-trip-exact floats."""
    M = dataset.A.toarray()
    with open(path, "w") as fh:
        for i in range(dataset.m):
            toks = [repr(float(dataset.y[i]))]
            nz = np.flatnonzero(M[i])
            toks += [f"{j + 1}:{repr(float(M[i, j]))}" for j in nz]
            fh.write(" ".join(toks) + "\n")


def load_csv(path, logistic_labels: bool = False) -> Dataset:
    """Dense CSV with a header row; the first column is the observation y."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(str(path))
        data = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                data.append([float(v) for v in row])
            except ValueError as e:
                raise ParseError(lineno, str(e))
    if not data:
        raise EmptyFile(str(path))
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape[1] < 2:
        raise ParseError(1, "need at least the label column and one feature")
    y, M = arr[:, 0], arr[:, 1:]
    meta = {"source": str(path), "format": "csv", "header": header, "preprocessing": []}
    if logistic_labels:
        y = _remap_labels(y, meta)
    return _finish(M, y, meta)


def load_triplets(path, y_col: int = 0) -> Dataset:
    """Whitespace triplets `row col value` with a header `m n nnz` (1-based indices).

    Column ``y_col`` (0-based) of the stored matrix becomes the observation
    vector; the remaining columns form the design matrix.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise EmptyFile(str(path))
    head = lines[0].split()
    if len(head) != 3:
        raise ParseError(1, "header must be 'm n nnz'")
    try:
        m, ncols, nnz = (int(v) for v in head)
    except ValueError:
        raise ParseError(1, "header must be integer 'm n nnz'")
    M = np.zeros((m, ncols))
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 3:
            raise ParseError(lineno, "expected 'row col value'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(lineno, "expected 'row col value'")
        if not (1 <= i <= m and 1 <= j <= ncols):
            raise ParseError(lineno, f"index ({i},{j}) out of bounds")
        M[i - 1, j - 1] = v
    if len(lines) - 1 != nnz:
        raise ParseError(1, f"header declares {nnz} entries, file has {len(lines) - 1}")
    if not (0 <= y_col < ncols):
        raise ParseError(1, f"y column {y_col} out of range")
    y = M[:, y_col].copy()
    keep = [j for j in range(ncols) if j != y_col]
    meta = {"source": str(path), "format": "triplet", "y_col": y_col, "preprocessing": []}
    return _finish(M[:, keep], y, meta)


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------

def synth(kind: str, m: int, n: int, support_size: int, seed: int = 0):
    """Deterministic synthetic problems; returns (Dataset, planted x).

    kinds: "gaussian" (unit-norm normal design, y = A x + noise), "count"
    (Poisson design and observations, planted zero rows give a nonempty I0),
    "pixel_mix" (correlated non-negative columns, noiseless y = A x), and
    "binary" (Bernoulli labels over a gaussian design, for the logistic loss).
    """
    if support_size > n:
        raise ValueError("support_size must be <= n")
    rng = np.random.default_rng(seed)
    if kind in ("gaussian", "binary"):
        M = rng.normal(size=(m, n))
        M /= np.sqrt((M * M).sum(axis=0))
        support = rng.choice(n, size=support_size, replace=False)
        x_true = np.zeros(n)
        x_true[support] = rng.normal(size=support_size)
        z = M @ x_true
        if kind == "gaussian":
            noise = rng.normal(size=m)
            y = z + 0.1 * (np.linalg.norm(z) / max(np.linalg.norm(noise), 1e-12)) * noise
        else:
            scale = 3.0 / max(np.abs(z).max(), 1e-12)
            y = (rng.uniform(size=m) < 1.0 / (1.0 + np.exp(-scale * z))).astype(np.float64)
        ds = _finish(M, y, {"source": f"synth:{kind}", "seed": seed, "preprocessing": []})
        return ds, x_true
    if kind == "count":
        M = rng.poisson(0.12, size=(m, n)).astype(np.float64)
        support = rng.choice(n, size=support_size, replace=False)
        nonsupport = np.setdiff1d(np.arange(n), support)
        # keep every row nonzero without covering it by the support
        zero_rows = np.flatnonzero(np.abs(M).sum(axis=1) == 0)
        for i in zero_rows:
            j = nonsupport[int(rng.integers(nonsupport.size))] if nonsupport.size else int(rng.integers(n))
            M[i, j] = 1.0
        zero_cols = np.flatnonzero(np.abs(M).sum(axis=0) == 0)
        for j in zero_cols:
            M[int(rng.integers(m)), j] = 1.0
        x_true = np.zeros(n)
        x_true[support] = rng.uniform(0.5, 2.0, size=support_size)
        rate = M @ x_true
        y = rng.poisson(rate).astype(np.float64)
        ds = _finish(M, y, {"source": "synth:count", "seed": seed, "preprocessing": []},
                     require_nonneg=True)
        return ds, x_true
    if kind == "pixel_mix":
        k = max(3, m // 8)
        centers = rng.uniform(0, m, size=k)
        widths = rng.uniform(m / 20.0, m / 5.0, size=k)
        t = np.arange(m)[:, None]
        B = np.exp(-0.5 * ((t - centers[None, :]) / widths[None, :]) ** 2)
        W = rng.dirichlet(np.ones(k), size=n).T
        M = B @ W + 1e-3 * rng.uniform(size=(m, n))
        support = rng.choice(n, size=support_size, replace=False)
        x_true = np.zeros(n)
        x_true[support] = rng.uniform(0.5, 2.0, size=support_size)
        y = M @ x_true
        ds = _finish(M, y, {"source": "synth:pixel_mix", "seed": seed, "preprocessing": []},
                     require_nonneg=True)
        return ds, x_true
    raise ValueError(f"unknown synthetic kind {kind!r}")
