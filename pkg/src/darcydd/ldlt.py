"""Symmetric indefinite factorization with a dense and a sparse path.

The saddle-point systems solved here are symmetric but indefinite, so plain
Cholesky does not apply. Small matrices take the dense route: a Bunch-Kaufman
LDL^T with 1x1 and 2x2 pivot blocks, whose block diagonal also yields the
inertia (used to certify definiteness of reduced operators). Large matrices
take a sparse LU with partial pivoting; it gives no inertia, so callers that
need one force the dense path.

Both paths meet the same accuracy contract: ``solve`` measures the normwise
backward error and applies one step of iterative refinement whenever it
exceeds 1e-12.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import SingularSystemError

DENSE_THRESHOLD = 500
_REFINE_TRIGGER = 1e-12


def _block_structure(d: np.ndarray) -> list[tuple[int, int]]:
    """Split the LDL block diagonal into (offset, size) runs of 1 or 2."""
    n = d.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


class IndefiniteFactorization:
    """Factored symmetric matrix exposing ``solve`` and optional inertia.

    ``inertia`` is ``(n_positive, n_negative, n_zero)`` on the dense path and
    ``None`` on the sparse path. ``solve`` accepts one right-hand side or a
    matrix of stacked right-hand sides.
    """

    def __init__(self, matrix, force_dense: bool = False,
                 dense_threshold: int = DENSE_THRESHOLD):
        if sps.issparse(matrix):
            self._mat = matrix.tocsr()
            n = matrix.shape[0]
            symmetric = (
                matrix.shape[0] == matrix.shape[1]
                and (self._mat != self._mat.T).nnz == 0
            )
        else:
            mat = np.asarray(matrix, dtype=float)
            self._mat = mat
            n = mat.shape[0]
            symmetric = mat.ndim == 2 and mat.shape[0] == mat.shape[1] and np.array_equal(mat, mat.T)
        if not symmetric:
            raise ValueError("matrix must be square and symmetric")
        self.n = n
        self.inertia: tuple[int, int, int] | None = None
        if force_dense or n <= dense_threshold:
            self.mode = "dense"
            self._factor_dense()
        else:
            self.mode = "sparse"
            self._factor_sparse()
        self._norm_inf = self._matrix_norm_inf()

    # -- dense Bunch-Kaufman path ----------------------------------------

    def _factor_dense(self) -> None:
        a = self._mat.toarray() if sps.issparse(self._mat) else self._mat
        self._dense = np.asarray(a, dtype=float)
        lu, d, perm = scipy.linalg.ldl(self._dense, lower=True)
        self._lu_perm = lu[perm]
        self._perm = perm
        self._d = d
        self._blocks = _block_structure(d)
        scale = max(1.0, float(np.abs(d).max(initial=0.0)))
        zero_tol = self.n * np.finfo(float).eps * scale
        n_pos = n_neg = n_zero = 0
        for off, size in self._blocks:
            if size == 1:
                piv = d[off, off]
                if abs(piv) <= zero_tol:
                    n_zero += 1
                elif piv > 0:
                    n_pos += 1
                else:
                    n_neg += 1
            else:
                blk = d[off : off + 2, off : off + 2]
                eigs = np.linalg.eigvalsh(blk)
                for ev in eigs:
                    if abs(ev) <= zero_tol:
                        n_zero += 1
                    elif ev > 0:
                        n_pos += 1
                    else:
                        n_neg += 1
        self.inertia = (n_pos, n_neg, n_zero)
        if n_zero:
            raise SingularSystemError(
                f"matrix is singular: inertia ({n_pos} positive, {n_neg} "
                f"negative, {n_zero} zero pivots)"
            )

    def _solve_dense_raw(self, b: np.ndarray) -> np.ndarray:
        z = scipy.linalg.solve_triangular(
            self._lu_perm, b[self._perm], lower=True, unit_diagonal=True
        )
        w = np.empty_like(z)
        for off, size in self._blocks:
            if size == 1:
                w[off] = z[off] / self._d[off, off]
            else:
                blk = self._d[off : off + 2, off : off + 2]
                w[off : off + 2] = np.linalg.solve(blk, z[off : off + 2])
        y = scipy.linalg.solve_triangular(
            self._lu_perm.T, w, lower=False, unit_diagonal=True
        )
        x = np.empty_like(y)
        x[self._perm] = y
        return x

    # -- sparse LU path ---------------------------------------------------

    def _factor_sparse(self) -> None:
        try:
            self._splu = spla.splu(self._mat.tocsc())
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SingularSystemError(f"matrix is singular: {exc}") from exc

    # -- shared solve with refinement -------------------------------------

    def _matrix_norm_inf(self) -> float:
        if sps.issparse(self._mat):
            return float(abs(self._mat).sum(axis=1).max())
        return float(np.abs(self._mat).sum(axis=1).max(initial=0.0))

    def _raw_solve(self, b: np.ndarray) -> np.ndarray:
        if self.mode == "dense":
            return self._solve_dense_raw(b)
        return self._splu.solve(b)

    def backward_error(self, b: np.ndarray, x: np.ndarray) -> float:
        r = b - self._mat @ x
        denom = self._norm_inf * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
        if denom == 0.0:
            return 0.0
        return float(np.abs(r).max() / denom)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve against one vector or a matrix of stacked right-hand sides."""
        b = np.asarray(b, dtype=float)
        x = self._raw_solve(b)
        if self.backward_error(b, x) > _REFINE_TRIGGER:
            x = x + self._raw_solve(b - self._mat @ x)
        return x


def factor_symmetric_indefinite(
    matrix, force_dense: bool = False, dense_threshold: int = DENSE_THRESHOLD
) -> IndefiniteFactorization:
    """Factor a symmetric (possibly indefinite, sparse) matrix.

    Raises :class:`SingularSystemError` on exact singularity; the dense-path
    message includes the inertia. ``force_dense`` guarantees the inertia is
    available regardless of size.
    """
    return IndefiniteFactorization(matrix, force_dense, dense_threshold)
