"""Symmetric positive definite CSR storage and the Jacobi-preconditioned CG solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NotSpd, NumericalBreakdown

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SparseSpd:
    """CSR matrix meant to be symmetric positive definite.

    Symmetry is checked on construction; positivity of the diagonal is
    checked by :func:`pcg_solve`, which is where it matters.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_scipy(cls, matrix, check=True):
        m = sp.csr_matrix(matrix, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise NotSpd(f"matrix is not square: {m.shape}")
        out = cls(m.shape[0], m.indptr, m.indices, m.data)
        if check:
            out.check_symmetric()
        return out

    @property
    def csr(self):
        # Cached view; frozen dataclass, so store through object.__setattr__.
        cached = self.__dict__.get("_csr")
        if cached is None:
            cached = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
            )
            object.__setattr__(self, "_csr", cached)
        return cached

    def matvec(self, x):
        return self.csr @ x

    def __matmul__(self, x):
        return self.csr @ x

    def diagonal(self):
        return self.csr.diagonal()

    def to_dense(self):
        return self.csr.toarray()

    def asymmetry(self):
        """max |L - L^T| relative to max |L|."""
        diff = abs(self.csr - self.csr.T)
        scale = abs(self.csr).max() if self.csr.nnz else 0.0
        worst = diff.max() if diff.nnz else 0.0
        return float(worst / scale) if scale > 0 else 0.0

    def check_symmetric(self, rtol=SYMMETRY_RTOL):
        asym = self.asymmetry()
        if asym > rtol:
            raise NotSpd(f"matrix is not symmetric (relative asymmetry {asym:.3e})")


@dataclass(frozen=True)
class CgReport:
    iterations: int
    final_residual_norm: float
    converged: bool


def pcg_solve(A, rhs, x0=None, tol=1e-9, max_iters=5000):
    """Solve ``A x = rhs`` by conjugate gradients with a Jacobi preconditioner.

    The stopping test uses the relative residual ``||A x - rhs|| / ||rhs||``.
    When the recursively updated residual passes the test the true residual
    is recomputed, and the iteration restarts from the current iterate if the
    two have drifted apart, so a converged report always reflects ``A x``.
    """
    if not isinstance(A, SparseSpd):
        A = SparseSpd.from_scipy(A)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (A.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({A.n},)")
    diag = A.diagonal()
    if not np.all(diag > 0):
        i = int(np.argmin(diag))
        raise NotSpd(f"diagonal entry {i} is {diag[i]!r}; Jacobi preconditioner needs > 0")
    inv_diag = 1.0 / diag

    mat = A.csr
    b_norm = float(np.linalg.norm(rhs))
    if not np.isfinite(b_norm):
        raise NumericalBreakdown("right-hand side is not finite")
    if b_norm == 0.0:
        return np.zeros(A.n), CgReport(0, 0.0, True)

    x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - mat @ x
    rel = float(np.linalg.norm(r)) / b_norm
    iterations = 0
    while True:
        if not np.isfinite(rel):
            raise NumericalBreakdown(f"residual became non-finite after {iterations} iterations")
        if rel <= tol:
            return x, CgReport(iterations, rel, True)
        if iterations >= max_iters:
            return x, CgReport(iterations, rel, False)

        z = inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        while iterations < max_iters:
            q = mat @ p
            pq = float(p @ q)
            if not pq > 0.0:
                if not np.isfinite(pq):
                    raise NumericalBreakdown(f"p.Ap is {pq} at iteration {iterations}")
                raise NotSpd(f"non-positive curvature p.Ap={pq:.3e} at iteration {iterations}")
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            iterations += 1
            rel = float(np.linalg.norm(r)) / b_norm
            if not np.isfinite(rel):
                raise NumericalBreakdown(f"residual became non-finite after {iterations} iterations")
            if rel <= tol:
                break
            z = inv_diag * r
            rz_new = float(r @ z)
            p *= rz_new / rz
            p += z
            rz = rz_new
        # Replace the recursive residual by the true one before deciding.
        r = rhs - mat @ x
        rel = float(np.linalg.norm(r)) / b_norm
