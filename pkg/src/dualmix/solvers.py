"""Direct factorizations, saddle-point solves and generalized eigenproblems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy import sparse
from scipy.sparse import linalg as spla

# dense Schur complement up to this many multipliers
DENSE_LIMIT = 5000


class SolverError(RuntimeError):
    pass


class InfSupFailure(SolverError):
    """B is rank deficient: the Schur complement is singular."""


class CholeskyFactor:
    """Symmetric factorization of a sparse SPD matrix.

    SuperLU is run with a symmetric fill-reducing ordering and no numerical
    pivoting, so U = D L^T and the matrix is SPD exactly when every pivot is
    positive.
    """

    def __init__(self, K):
        K = sparse.csc_matrix(K, dtype=float)
        n = K.shape[0]
        if K.shape != (n, n):
            raise ValueError(f"matrix must be square, got {K.shape}")
        self.shape = K.shape
        self.norm = spla.norm(K, np.inf) if K.nnz else 0.0
        try:
            self._lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from None
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise SolverError("factorization used off-diagonal pivoting; matrix is not SPD")
        pivots = self._lu.U.diagonal()
        tol = 1e-14 * max(self.norm, 1.0)
        bad = np.flatnonzero(~(pivots > tol))
        if bad.size:
            # perm_c[j] is the original column of the j-th eliminated unknown
            original = int(np.flatnonzero(self._lu.perm_c == bad[0])[0])
            raise SolverError(f"matrix is not positive definite: pivot {pivots[bad[0]]:.3e} "
                              f"at index {original}")

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))


def cholesky(K) -> CholeskyFactor:
    return CholeskyFactor(K)


def solve(factor: CholeskyFactor, rhs) -> np.ndarray:
    return factor.solve(rhs)


def schur_complement(A_factor: CholeskyFactor, B, block: int = 512) -> np.ndarray:
    """Dense S = B A^-1 B^T, formed column block by column block."""
    B = sparse.csr_matrix(B)
    BT = sparse.csc_matrix(B.T)
    nq = B.shape[0]
    S = np.empty((nq, nq))
    for start in range(0, nq, block):
        stop = min(start + block, nq)
        Z = A_factor.solve(BT[:, start:stop].toarray())
        S[:, start:stop] = B @ Z
    return 0.5 * (S + S.T)


@dataclass
class SaddleSystem:
    A: sparse.spmatrix
    B: sparse.spmatrix
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        nq, nv = self.B.shape
        if self.A.shape != (nv, nv):
            raise ValueError(f"A has shape {self.A.shape}, expected {(nv, nv)}")
        self.f = np.zeros(nv) if self.f is None else np.asarray(self.f, dtype=float)
        self.g = np.zeros(nq) if self.g is None else np.asarray(self.g, dtype=float)
        if self.f.shape != (nv,) or self.g.shape != (nq,):
            raise ValueError("right-hand side sizes do not match the blocks")

    def kkt(self) -> sparse.csr_matrix:
        return sparse.bmat([[self.A, self.B.T], [self.B, None]], format="csr")

    def residuals(self, y, x) -> tuple[float, float]:
        r1 = self.A @ y + self.B.T @ x - self.f
        r2 = self.B @ y - self.g
        s1 = max(np.linalg.norm(self.f), spla.norm(self.A) * np.linalg.norm(y), 1e-300)
        s2 = max(np.linalg.norm(self.g), spla.norm(self.B) * np.linalg.norm(y), 1e-300)
        return float(np.linalg.norm(r1) / s1), float(np.linalg.norm(r2) / s2)


def solve_saddle(sys: SaddleSystem, method: str = "auto", tol: float = 1e-9):
    """Solve [[A, B^T], [B, 0]] [y; x] = [f; g].

    ``schur``: factor A, form S = B A^-1 B^T densely and solve
    S x = B A^-1 f - g.  ``kkt``: sparse LU of the whole block matrix, used
    automatically when the number of multipliers exceeds DENSE_LIMIT.
    """
    nq = sys.B.shape[0]
    if method == "auto":
        method = "schur" if nq <= DENSE_LIMIT else "kkt"
    if nq == 0:
        y = cholesky(sys.A).solve(sys.f) if sys.A.shape[0] else np.zeros(0)
        return y, np.zeros(0)
    if method == "schur":
        Af = cholesky(sys.A)
        S = schur_complement(Af, sys.B)
        Ainv_f = Af.solve(sys.f)
        try:
            cf = la.cho_factor(S)
        except la.LinAlgError:
            raise InfSupFailure("inf-sup failure: singular Schur complement") from None
        d = np.diag(cf[0])
        if d.min() <= 1e-10 * d.max():
            raise InfSupFailure("inf-sup failure: singular Schur complement")
        x = la.cho_solve(cf, sys.B @ Ainv_f - sys.g)
        y = Af.solve(sys.f - sys.B.T @ x)
    elif method == "kkt":
        K = sparse.csc_matrix(sys.kkt())
        try:
            lu = spla.splu(K)
        except RuntimeError:
            raise InfSupFailure("inf-sup failure: singular Schur complement") from None
        sol = lu.solve(np.concatenate([sys.f, sys.g]))
        y, x = sol[:sys.A.shape[0]], sol[sys.A.shape[0]:]
    else:
        raise ValueError(f"unknown method {method!r}")
    r1, r2 = sys.residuals(y, x)
    if not (r1 <= tol and r2 <= tol):
        raise InfSupFailure(f"inf-sup failure: saddle residuals {r1:.2e}, {r2:.2e} exceed {tol:g}")
    return y, x


@dataclass
class EigenResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray


def _as_dense(K):
    return K.toarray() if sparse.issparse(K) else np.asarray(K, dtype=float)


def gen_eig(S, M, k=None, which: str = "smallest", vectors: bool = True,
            shift_solve=None) -> EigenResult:
    """Eigenpairs of S x = mu M x with S symmetric and M SPD.

    Dense path (dimension <= DENSE_LIMIT or ``k`` is None): Cholesky-of-M
    reduction through LAPACK.  Otherwise ARPACK in shift-invert mode around
    zero, which needs ``shift_solve(b)`` returning S^-1 b (or a dense S).
    Eigenvalues are always returned in descending order.
    """
    n = M.shape[0]
    if k is None:
        k = n
    if not 0 < k <= n:
        raise ValueError(f"requested {k} eigenpairs of a problem of size {n}")
    if which not in ("smallest", "largest"):
        raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")
    dense = n <= DENSE_LIMIT or k == n or (shift_solve is None and which == "smallest")
    if dense:
        Sd, Md = _as_dense(S), _as_dense(M)
        sub = [0, k - 1] if which == "smallest" else [n - k, n - 1]
        if vectors:
            mu, X = la.eigh(Sd, Md, subset_by_index=sub)
        else:
            mu = la.eigh(Sd, Md, subset_by_index=sub, eigvals_only=True)
            X = None
    else:
        Mop = sparse.csc_matrix(M)
        Sop = S if not isinstance(S, np.ndarray) else spla.aslinearoperator(S)
        if which == "largest":
            mu, X = spla.eigsh(Sop, k=k, M=Mop, Minv=spla.factorized(Mop), which="LA")
        else:
            OPinv = spla.LinearOperator((n, n), matvec=shift_solve)
            mu, X = spla.eigsh(Sop, k=k, M=Mop, sigma=0.0, OPinv=OPinv, which="LM")
        order = np.argsort(mu)
        mu, X = mu[order], X[:, order]
        # M-normalize
        X = X / np.sqrt(np.einsum("ij,ij->j", X, Mop @ X))
    order = np.argsort(mu)[::-1]
    mu = mu[order]
    if X is None:
        return EigenResult(mu, np.zeros((n, 0)), np.zeros(0))
    X = X[:, order]
    SX = S @ X
    MX = M @ X
    res = np.linalg.norm(SX - MX * mu, axis=0)
    snorm = np.abs(_as_dense(S)).sum(axis=1).max() if n <= DENSE_LIMIT else 1.0
    if (res > 1e-9 * max(snorm, 1.0)).any():
        raise SolverError(f"eigen solve did not converge: max residual {res.max():.2e}")
    return EigenResult(mu, X, res)


def gen_eig_smallest(S, M, k=None, **kw) -> EigenResult:
    return gen_eig(S, M, k, which="smallest", **kw)


def gen_eig_largest(S, M, k=None, **kw) -> EigenResult:
    return gen_eig(S, M, k, which="largest", **kw)
