"""Direct and iterative solvers for the SPD systems of the scheme.

Factorization is Cholesky: dense below a size threshold, otherwise banded
after a reverse Cuthill-McKee reordering.  A non-positive (or numerically
vanishing) pivot raises NotPositiveDefinite carrying the pivot index; this
is the mechanical detector behind the NI classification of unstable
element combinations.  For time marches the factorization can additionally
hold a sparse LU of the same matrix, whose triangular solves are much
faster per step; the Cholesky stage still performs the definiteness check.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

__all__ = [
    "NotPositiveDefinite",
    "MaxIterations",
    "Factorization",
    "factorize",
    "cg_solve",
]

DENSE_LIMIT = 2000

# relative square-pivot floor below which a matrix counts as singular
_PIVOT_RTOL = 1e-12


def debug_checks_enabled() -> bool:
    return os.environ.get("WG_DEBUG", "") not in ("", "0")


class NotPositiveDefinite(Exception):
    """Factorization hit a non-positive pivot; ``pivot`` is the DOF index."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix not positive definite (pivot {pivot})")


class MaxIterations(Exception):
    """Iterative solver failed to reach the requested tolerance."""


def _as_csr(A) -> sp.csr_matrix:
    matrix = getattr(A, "matrix", A)
    if sp.issparse(matrix):
        return matrix.tocsr()
    return sp.csr_matrix(np.asarray(matrix, dtype=float))


class Factorization:
    """Reusable Cholesky factorization of an SPD operator."""

    def __init__(self, A, repeated: bool = False):
        csr = _as_csr(A)
        n = csr.shape[0]
        if csr.shape[0] != csr.shape[1]:
            raise ValueError("matrix must be square")
        self._csr = csr
        self.dimension = n
        self._lu = None

        if n <= DENSE_LIMIT:
            self._dense = True
            self.permutation = np.arange(n)
            c, info = lapack.dpotrf(csr.toarray(), lower=0)
            self._check_info(info, np.diagonal(c))
            self._chol = c
        else:
            self._dense = False
            perm = np.asarray(reverse_cuthill_mckee(csr, symmetric_mode=True))
            self.permutation = perm
            ap = csr[perm][:, perm].tocoo()
            mask = ap.row <= ap.col
            r, cc, v = ap.row[mask], ap.col[mask], ap.data[mask]
            u = int((cc - r).max()) if len(r) else 0
            ab = np.zeros((u + 1, n))
            ab[u + r - cc, cc] = v
            c, info = lapack.dpbtrf(ab, lower=0)
            self._check_info(info, c[u] if u >= 0 else c[0], perm)
            self._band = u
            self._chol = c

        if repeated:
            # LU triangular solves are much cheaper per step on large systems
            self._lu = splu(
                csr.tocsc(),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )

    def _check_info(self, info: int, diag, perm=None):
        if info < 0:
            raise ValueError(f"illegal LAPACK argument {-info}")
        if info > 0:
            pivot = info - 1 if perm is None else int(perm[info - 1])
            raise NotPositiveDefinite(pivot)
        d = np.asarray(diag, dtype=float) ** 2
        if d.min() <= _PIVOT_RTOL * d.max():
            i = int(np.argmin(d))
            pivot = i if perm is None else int(perm[i])
            raise NotPositiveDefinite(pivot, f"numerically singular (pivot {pivot})")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self._lu is not None:
            x = self._lu.solve(b)
        elif self._dense:
            x, info = lapack.dpotrs(self._chol, b, lower=0)
            if info != 0:
                raise RuntimeError(f"dpotrs failed with info {info}")
        else:
            perm = self.permutation
            xp, info = lapack.dpbtrs(self._chol, b[perm], lower=0)
            if info != 0:
                raise RuntimeError(f"dpbtrs failed with info {info}")
            x = np.empty_like(xp)
            x[perm] = xp
        if debug_checks_enabled():
            r = np.linalg.norm(self._csr @ x - b)
            if r > 1e-10 * max(np.linalg.norm(b), 1e-300):
                raise RuntimeError(f"solve residual {r:.3e} exceeds tolerance")
        return x


def factorize(A, repeated: bool = False) -> Factorization:
    """Cholesky-factorize an SPD operator; see Factorization."""
    return Factorization(A, repeated=repeated)


def cg_solve(A, b, tol: float = 1e-12, max_iter: int | None = None) -> np.ndarray:
    """Plain conjugate gradients; independent cross-check of the direct path."""
    csr = _as_csr(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x
    for _ in range(max_iter):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        Ap = csr @ p
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * bnorm:
        return x
    raise MaxIterations(f"cg did not reach tol {tol:g} in {max_iter} iterations")
