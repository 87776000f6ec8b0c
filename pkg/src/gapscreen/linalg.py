"""Design matrix with cached column norms, active-set masking and preprocessing.

Matrices are stored column-accessible, either dense (Fortran order) or in
compressed-sparse-column form; the choice is made at build time from the
density of the input. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyMatrix, NegativeEntry, ZeroRow

# nnz fraction at or below which sparse column storage is used
SPARSE_DENSITY_THRESHOLD = 0.25


@dataclass
class ActiveSet:
    """Boolean column mask with the iteration at which each column was screened.

    Screening is monotone: columns leave the set and never return.
    ``screened_at`` is -1 for columns that were never screened.
    """

    mask: np.ndarray
    screened_at: np.ndarray

    @classmethod
    def all_active(cls, n: int) -> "ActiveSet":
        return cls(np.ones(n, dtype=bool), np.full(n, -1, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.mask.shape[0]

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def drop(self, drop_idx: np.ndarray, iteration: int) -> "ActiveSet":
        """Return a new set with ``drop_idx`` removed; inactive columns stay inactive."""
        drop_idx = np.asarray(drop_idx, dtype=np.int64)
        if drop_idx.size and not self.mask[drop_idx].all():
            raise ValueError("cannot screen a column that is already inactive")
        mask = self.mask.copy()
        mask[drop_idx] = False
        screened_at = self.screened_at.copy()
        screened_at[drop_idx] = iteration
        return ActiveSet(mask, screened_at)


class DesignMatrix:
    """Immutable column-major matrix with cached plain and I0-restricted norms.

    ``I0`` is a fixed set of row indices (the zero pattern of the observation
    vector for the losses that use it); restricted norms are precomputed once.
    """

    def __init__(self, mat, I0: np.ndarray):
        if sp.issparse(mat):
            self._mat = sp.csc_array(mat, dtype=np.float64)
            self.dense = False
        else:
            self._mat = np.asfortranarray(np.asarray(mat, dtype=np.float64))
            self.dense = True
        self.m, self.n = self._mat.shape
        self.I0 = np.asarray(sorted(set(int(i) for i in np.asarray(I0, dtype=np.int64))), dtype=np.int64)
        if self.I0.size and (self.I0[0] < 0 or self.I0[-1] >= self.m):
            raise DimensionMismatch(f"I0 indices out of range for m={self.m}")
        self._compute_norms()
        self._norminf = None

    def _compute_norms(self):
        keep = np.ones(self.m, dtype=bool)
        keep[self.I0] = False
        if self.dense:
            A = self._mat
            absA = np.abs(A)
            self.col_norm2 = np.sqrt((A * A).sum(axis=0))
            self.col_norm1 = absA.sum(axis=0)
            self.col_norm2_restricted = np.sqrt((A[keep] ** 2).sum(axis=0))
            self.col_norm1_on_I0 = absA[~keep].sum(axis=0)
            self.col_sum = A.sum(axis=0)
            self.nonneg = bool((A >= 0).all())
        else:
            A = self._mat
            sq = A.multiply(A)
            self.col_norm2 = np.sqrt(np.asarray(sq.sum(axis=0)).ravel())
            self.col_norm1 = np.asarray(abs(A).sum(axis=0)).ravel()
            Ar = A[keep]
            self.col_norm2_restricted = np.sqrt(np.asarray(Ar.multiply(Ar).sum(axis=0)).ravel())
            self.col_norm1_on_I0 = np.asarray(abs(A[~keep]).sum(axis=0)).ravel()
            self.col_sum = np.asarray(A.sum(axis=0)).ravel()
            self.nonneg = bool((A.data >= 0).all()) if A.nnz else True

    # -- products ---------------------------------------------------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"expected length {self.n}, got {x.shape}")
        return np.asarray(self._mat @ x, dtype=np.float64)

    def matvec_masked(self, x: np.ndarray, active: ActiveSet) -> np.ndarray:
        """A @ x touching only active coefficients.

        Inactive coefficients are forced to exact zero before the product, so
        the result is bit-identical to the full product whenever x already
        vanishes off the active set (identical reduction order).
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,) or active.n != self.n:
            raise DimensionMismatch(f"expected length {self.n}")
        if active.count == self.n or not np.any(x[~active.mask]):
            return self.matvec(x)
        w = np.where(active.mask, x, 0.0)
        return self.matvec(w)

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.m,):
            raise DimensionMismatch(f"expected length {self.m}, got {v.shape}")
        return np.asarray(self._mat.T @ v, dtype=np.float64)

    def rmatvec_masked(self, v: np.ndarray, active: ActiveSet) -> np.ndarray:
        """A.T @ v evaluated on active columns only; zeros elsewhere."""
        if active.count == self.n:
            return self.rmatvec(v)
        out = np.zeros(self.n)
        idx = active.indices
        if idx.size == 0:
            return out
        if self.dense:
            out[idx] = self._mat[:, idx].T @ v
        else:
            out[idx] = np.asarray(self._mat[:, idx].T @ v).ravel()
        return out

    # -- single-column access (coordinate solvers) -------------------------

    def col_dot(self, j: int, v: np.ndarray) -> float:
        if self.dense:
            return float(self._mat[:, j] @ v)
        lo, hi = self._mat.indptr[j], self._mat.indptr[j + 1]
        return float(self._mat.data[lo:hi] @ v[self._mat.indices[lo:hi]])

    def col_sq_dot(self, j: int, v: np.ndarray) -> float:
        if self.dense:
            c = self._mat[:, j]
            return float((c * c) @ v)
        lo, hi = self._mat.indptr[j], self._mat.indptr[j + 1]
        d = self._mat.data[lo:hi]
        return float((d * d) @ v[self._mat.indices[lo:hi]])

    def add_col(self, out: np.ndarray, j: int, coef: float) -> None:
        """In-place out += coef * a_j."""
        if self.dense:
            out += coef * self._mat[:, j]
        else:
            lo, hi = self._mat.indptr[j], self._mat.indptr[j + 1]
            out[self._mat.indices[lo:hi]] += coef * self._mat.data[lo:hi]

    def col_view(self, j: int):
        """(rows, values) of column j; rows is slice(None) for dense storage."""
        if self.dense:
            return slice(None), self._mat[:, j]
        lo, hi = self._mat.indptr[j], self._mat.indptr[j + 1]
        return self._mat.indices[lo:hi], self._mat.data[lo:hi]

    # -- misc ---------------------------------------------------------------

    @property
    def norm1(self) -> float:
        """Max absolute column sum."""
        return float(self.col_norm1.max()) if self.n else 0.0

    @property
    def norminf(self) -> float:
        """Max absolute row sum (computed lazily)."""
        if self._norminf is None:
            if self.dense:
                self._norminf = float(np.abs(self._mat).sum(axis=1).max())
            else:
                self._norminf = float(np.asarray(abs(self._mat).sum(axis=1)).max())
        return self._norminf

    @property
    def density(self) -> float:
        nnz = np.count_nonzero(self._mat) if self.dense else self._mat.nnz
        return nnz / (self.m * self.n)

    def toarray(self) -> np.ndarray:
        return np.asarray(self._mat.toarray() if not self.dense else self._mat)

    def raw(self):
        return self._mat


def build_matrix(rows, require_nonneg: bool = False, I0=None) -> DesignMatrix:
    """Validate a numeric grid and wrap it as a DesignMatrix.

    Rejects all-zero rows (ZeroRow) and, when ``require_nonneg`` is set,
    negative entries (NegativeEntry). Storage is chosen by density:
    at most 25% nonzeros selects compressed sparse columns.
    """
    if sp.issparse(rows):
        dense_view = np.asarray(sp.csc_array(rows, dtype=np.float64).toarray())
    else:
        dense_view = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if dense_view.size == 0 or dense_view.shape[0] < 1 or dense_view.shape[1] < 1:
        raise EmptyMatrix("matrix must have m, n >= 1")
    row_abs = np.abs(dense_view).sum(axis=1)
    zero_rows = np.flatnonzero(row_abs == 0.0)
    if zero_rows.size:
        raise ZeroRow(int(zero_rows[0]))
    if require_nonneg:
        neg = np.argwhere(dense_view < 0.0)
        if neg.size:
            i, j = neg[0]
            raise NegativeEntry(int(i), int(j))
    density = np.count_nonzero(dense_view) / dense_view.size
    storage = sp.csc_array(dense_view) if density <= SPARSE_DENSITY_THRESHOLD else dense_view
    return DesignMatrix(storage, I0 if I0 is not None else np.array([], dtype=np.int64))


def masked_matvec(A: DesignMatrix, x: np.ndarray, active: ActiveSet) -> np.ndarray:
    """A @ x restricted to the active columns (see DesignMatrix.matvec_masked)."""
    return A.matvec_masked(x, active)


@dataclass
class PreprocessReport:
    dropped_rows: list = field(default_factory=list)
    col_scales: np.ndarray = None


def preprocess(A: DesignMatrix, y: np.ndarray):
    """Drop all-zero rows (with the matching y entries) and rescale columns to unit l2 norm.

    Returns (DesignMatrix, y, PreprocessReport). Idempotent: unit columns are
    left untouched (norms within 1e-12 of 1 are snapped), and a second pass
    drops nothing. Zero columns keep scale 1. The rebuilt matrix recomputes
    I0 from the filtered y.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.m,):
        raise DimensionMismatch(f"y has length {y.shape}, expected {A.m}")
    M = A.toarray()
    row_abs = np.abs(M).sum(axis=1)
    keep = row_abs > 0.0
    dropped = np.flatnonzero(~keep).tolist()
    if not keep.any():
        raise EmptyMatrix("all rows are zero")
    M = M[keep]
    y2 = y[keep]
    norms = np.sqrt((M * M).sum(axis=0))
    scales = np.where(np.abs(norms - 1.0) <= 1e-12, 1.0, norms)
    scales = np.where(scales == 0.0, 1.0, scales)
    M = M / scales
    I0 = np.flatnonzero(y2 == 0.0)
    out = build_matrix(M, require_nonneg=A.nonneg, I0=I0)
    return out, y2, PreprocessReport(dropped_rows=dropped, col_scales=scales)
