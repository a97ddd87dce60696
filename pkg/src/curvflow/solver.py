"""Sparse symmetric positive-definite solves with explicit non-SPD signaling.

The direct path is an LDL^T-style factorization (SuperLU in symmetric
mode with diagonal pivoting and a fill-reducing ordering). With symmetric
pivoting, Sylvester's law makes the pivot signs the matrix inertia, so a
non-positive pivot is a sound "not positive definite" signal. The flow
engine treats that signal as singularity formation, never as a crash.

No automatic regularization happens here: regularizing would hide exactly
the blow-up the flow is meant to detect.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import (
    BreakdownError,
    DimensionMismatchError,
    MaxIterationsError,
    NotPositiveDefiniteError,
)

# pivot <= PIVOT_RTOL * max(diag(A)) counts as numerically non-positive
PIVOT_RTOL = 1e-13


@dataclass
class Factorization:
    """Cholesky-type factorization of an SPD matrix.

    Only produced for matrices that passed the positive-definiteness
    check; keep it around and call :meth:`solve` as many times as needed
    (concurrent solves against one factorization are fine).
    """

    n: int
    _lu: object = field(repr=False)
    perm_r: np.ndarray = field(repr=False)
    perm_c: np.ndarray = field(repr=False)
    pivots: np.ndarray = field(repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.n:
            raise DimensionMismatchError(f"rhs has {rhs.shape[0]} rows, expected {self.n}")
        return self._lu.solve(rhs)

    def reconstruct(self) -> sparse.csc_matrix:
        """P_r^T (L U) P_c^T; equals the factored matrix up to roundoff."""
        one = np.ones(self.n)
        pr = sparse.csc_matrix((one, (self.perm_r, np.arange(self.n))))
        pc = sparse.csc_matrix((one, (np.arange(self.n), self.perm_c)))
        return (pr.T @ (self._lu.L @ self._lu.U) @ pc.T).tocsc()


def factorize(A: sparse.spmatrix) -> Factorization:
    """Factor a symmetric matrix, succeeding iff it is numerically SPD.

    Raises
    ------
    NotPositiveDefiniteError
        On a non-positive (or below-tolerance) pivot, on non-finite
        entries, or when symmetric diagonal pivoting had to be abandoned
        (which cannot happen for an SPD matrix). ``pivot_index`` carries
        the offending vertex index when identifiable.
    """
    A = A.tocsc()
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"matrix is {A.shape}, expected square")
    if not np.isfinite(A.data).all():
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    diag = A.diagonal()
    max_diag = diag.max() if diag.size else 0.0
    if max_diag <= 0.0:
        raise NotPositiveDefiniteError(
            "no positive diagonal entry", pivot_index=int(np.argmax(diag))
        )
    try:
        lu = splu(
            A,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as e:  # "Factor is exactly singular"
        raise NotPositiveDefiniteError(str(e)) from e
    if not np.array_equal(lu.perm_r, lu.perm_c):
        # SuperLU only leaves the diagonal when a diagonal pivot vanished.
        raise NotPositiveDefiniteError("symmetric pivoting abandoned (zero pivot)")
    pivots = lu.U.diagonal()
    tol = PIVOT_RTOL * max_diag
    bad = pivots <= tol
    if bad.any():
        k = int(np.argmax(bad))
        raise NotPositiveDefiniteError(
            f"pivot {pivots[k]:.3e} at elimination step {k} "
            f"(tolerance {tol:.3e})",
            pivot_index=int(lu.perm_c[k]),
        )
    return Factorization(n=A.shape[0], _lu=lu, perm_r=lu.perm_r, perm_c=lu.perm_c, pivots=pivots)


def solve(F: Factorization, rhs: np.ndarray) -> np.ndarray:
    """Solve against a prior factorization; columns of ``rhs`` are independent."""
    return F.solve(rhs)


def solve_cg(
    A: sparse.spmatrix,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 0,
) -> np.ndarray:
    """Conjugate gradients for SPD systems, one column at a time.

    ``max_iter=0`` defaults to ``10 * n``. A direction of non-positive
    curvature raises :class:`BreakdownError` (the matrix is not SPD),
    which the flow engine also reads as the singularity signal.
    """
    A = A.tocsc()
    b = np.asarray(rhs, dtype=np.float64)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatchError(f"rhs has {b.shape[0]} rows, expected {A.shape[0]}")
    if max_iter <= 0:
        max_iter = 10 * A.shape[0]
    x = np.zeros_like(b)
    for c in range(b.shape[1]):
        x[:, c] = _cg_single(A, b[:, c], tol, max_iter)
    return x[:, 0] if squeeze else x


def _cg_single(A, b, tol, max_iter):
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for _ in range(max_iter):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise BreakdownError(
                f"non-positive curvature p^T A p = {pAp:.3e}: matrix is not SPD"
            )
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * bnorm:
        return x
    raise MaxIterationsError(
        f"CG did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {np.sqrt(rs) / bnorm:.3e})"
    )
