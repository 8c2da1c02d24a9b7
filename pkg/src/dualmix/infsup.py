"""Discrete inf-sup constants, their eigenfunctions and the spectral splitting.

The inf-sup constant of the pairing (tau, grad v) on V_h x Q_h is
sqrt(mu_min) for the generalized eigenproblem B A^-1 B^T x = mu K x, where
K is the Dirichlet stiffness matrix on Q_h.  Eigenvalues are numbered from
the largest, mu_1 >= ... >= mu_N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy import sparse
from scipy.sparse import linalg as spla

from . import assembly
from .fespace import QUAD5, FeSpace, l2_project_p0, p1_values
from .mesh import Mesh, family
from .problems import DualMixed
from .solvers import DENSE_LIMIT, SaddleSystem, SolverError, gen_eig, solve_saddle


@dataclass
class InfSupSpectrum:
    mu: np.ndarray  # descending
    U: np.ndarray  # Q_h coefficients, columns K-orthonormal
    Sigma: np.ndarray  # V_h coefficients, A y + B^T x = 0
    problem: DualMixed = field(repr=False)
    complete: bool = True

    @property
    def beta(self) -> float:
        return float(np.sqrt(self.mu[-1]))

    @property
    def n(self) -> int:
        return len(self.mu)


def _fix_sign(X: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    if X.size == 0:
        return X
    idx = np.argmax(np.abs(X), axis=0)
    return X * np.sign(X[idx, np.arange(X.shape[1])])


def _kkt_shift_solver(problem: DualMixed):
    nv = problem.V.dof_count
    lu = spla.splu(sparse.csc_matrix(SaddleSystem(problem.A, problem.B, None, None).kkt()))

    def solve(b):
        # x = S^-1 b from A y + B^T x = 0, B y = -b
        return lu.solve(np.concatenate([np.zeros(nv), -np.asarray(b).ravel()]))[nv:]

    return solve


def infsup_spectrum(mesh: Mesh | DualMixed, v_kind: str = "RT0C", k="all",
                    vectors: bool = True) -> InfSupSpectrum:
    """Eigenpairs of the inf-sup problem.

    With ``k="all"`` the full spectrum is computed; an integer ``k`` returns
    the ``k`` smallest eigenvalues (still in descending order).
    """
    problem = mesh if isinstance(mesh, DualMixed) else DualMixed(mesh, v_kind)
    nq = problem.Q.dof_count
    kk = nq if k == "all" else int(k)
    if not 0 < kk <= nq:
        raise ValueError(f"cannot request {k} eigenpairs with dim Q_h = {nq}")
    if nq <= DENSE_LIMIT:
        res = gen_eig(problem.schur, problem.K, kk, vectors=vectors)
    else:
        Af = problem.A_factor
        B = problem.B
        S = spla.LinearOperator((nq, nq), matvec=lambda v: B @ Af.solve(B.T @ v))
        res = gen_eig(S, problem.K, kk, shift_solve=_kkt_shift_solver(problem))
    mu = res.eigenvalues
    if mu[-1] <= 1e-12:
        raise SolverError(f"smallest inf-sup eigenvalue {mu[-1]:.3e} is not positive")
    if vectors:
        U = _fix_sign(res.eigenvectors)
        Sigma = -problem.A_factor.solve(problem.B.T @ U)
        Sigma = Sigma.reshape(problem.V.dof_count, -1)
    else:
        U = Sigma = np.zeros((0, 0))
    return InfSupSpectrum(mu, U, Sigma, problem, complete=(kk == nq))


def infsup_rows(meshes, v_kind: str = "RT0C"):
    """Rows (level, h, n_label, last four mu, beta_h) for (mesh, h) pairs.

    ``n_label`` is the total vertex count of the mesh.
    """
    rows = []
    for level, (mesh, h) in enumerate(meshes, start=1):
        nq = FeSpace(mesh, "P1C0").dof_count
        spec = infsup_spectrum(mesh, v_kind, k=min(4, nq), vectors=False)
        last = np.full(4, np.nan)
        last[4 - len(spec.mu):] = spec.mu
        rows.append({"level": level, "h": h, "n_label": mesh.n_vertices,
                     "mu": last, "beta_h": spec.beta})
    return rows


def infsup_table(family_name: str, ns, v_kind: str = "RT0C"):
    """Inf-sup rows for a structured family at resolutions ``ns``."""
    return infsup_rows(((family(family_name, n), 1.0 / n) for n in ns), v_kind)


def fit_slope(h, values) -> float:
    """Least-squares slope of log(values) against log(h)."""
    h = np.asarray(h, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(h) < 3:
        raise ValueError("need at least three points to fit a rate")
    return float(np.polyfit(np.log(h), np.log(values), 1)[0])


def infsup_decay_rate(family_name: str, ns, v_kind: str = "RT0C") -> float:
    """Fitted exponent p in beta_h ~ h^p over a structured family."""
    if len(ns) < 3:
        raise ValueError("need at least three levels")
    rows = infsup_table(family_name, ns, v_kind)
    return fit_slope([r["h"] for r in rows], [r["beta_h"] for r in rows])


# -- splitting -------------------------------------------------------------


@dataclass
class Splitting:
    threshold: float
    n_stable: int  # number of eigenvalues >= threshold
    spectrum: InfSupSpectrum = field(repr=False)

    @property
    def V1(self):
        return self.spectrum.Sigma[:, :self.n_stable]

    @property
    def V2(self):
        return self.spectrum.Sigma[:, self.n_stable:]

    @property
    def Q1(self):
        return self.spectrum.U[:, :self.n_stable]

    @property
    def Q2(self):
        return self.spectrum.U[:, self.n_stable:]


@dataclass
class SplitSolution:
    sigma1: np.ndarray
    u1: np.ndarray
    sigma2: np.ndarray
    u2: np.ndarray
    blocks: dict  # subproblem matrices in the spectral bases


def split(spectrum: InfSupSpectrum, threshold: float = 0.5) -> Splitting:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if not spectrum.complete:
        raise ValueError("splitting needs the full spectrum")
    n_stable = int(np.count_nonzero(spectrum.mu >= threshold))
    return Splitting(threshold, n_stable, spectrum)


def _subproblem(problem: DualMixed, Vb, Qb, F):
    k = Vb.shape[1]
    if k == 0:
        return np.zeros(problem.V.dof_count), np.zeros(problem.Q.dof_count), np.zeros((0, 0)), np.zeros((0, 0))
    A_sub = Vb.T @ (problem.A @ Vb)
    B_sub = Qb.T @ (problem.B @ Vb)
    A_sub = 0.5 * (A_sub + A_sub.T)
    system = SaddleSystem(sparse.csr_matrix(A_sub), sparse.csr_matrix(B_sub), np.zeros(k), -(Qb.T @ F))
    y, x = solve_saddle(system, method="kkt")
    return Vb @ y, Qb @ x, A_sub, B_sub


def solve_split(splitting: Splitting, f) -> SplitSolution:
    """Solve the stable and unstable subproblems separately."""
    problem = splitting.spectrum.problem
    F = problem.load(f)
    s1, u1, A11, B11 = _subproblem(problem, splitting.V1, splitting.Q1, F)
    s2, u2, A22, B22 = _subproblem(problem, splitting.V2, splitting.Q2, F)
    return SplitSolution(s1, u1, s2, u2, {"A11": A11, "B11": B11, "A22": A22, "B22": B22})


# -- representation --------------------------------------------------------


@dataclass
class Representation:
    alpha: np.ndarray
    u_h: np.ndarray  # Q_h coefficients, sum alpha_i / mu_i u_i
    u_G: np.ndarray  # Q_h coefficients, sum alpha_i u_i


def representation(spectrum: InfSupSpectrum, f) -> Representation:
    if not spectrum.complete:
        raise ValueError("representation needs the full spectrum")
    F = spectrum.problem.load(f)
    alpha = spectrum.U.T @ F
    return Representation(alpha, spectrum.U @ (alpha / spectrum.mu), spectrum.U @ alpha)


# -- P1-P0 pairing ---------------------------------------------------------


@dataclass
class P1P0Result:
    nu_min: float
    w: np.ndarray  # worst function, Q_h coefficients, unit L2 norm

    @property
    def zeta(self) -> float:
        return float(np.sqrt(self.nu_min))


def p1p0_matrices(mesh: Mesh):
    Q = FeSpace(mesh, "P1C0")
    P = FeSpace(mesh, "P0")
    C = assembly.p1_p0_coupling(Q, P)
    M1 = assembly.mass_p1(Q)
    G = C @ sparse.diags(1.0 / mesh.areas) @ C.T
    return Q, P, C, M1, G


def p1p0_infsup(mesh: Mesh) -> P1P0Result:
    """Smallest eigenvalue of C M0^-1 C^T w = nu M1 w and its eigenfunction."""
    _, _, _, M1, G = p1p0_matrices(mesh)
    res = gen_eig(G, M1, 1, which="smallest")
    w = _fix_sign(res.eigenvectors)[:, 0]
    return P1P0Result(float(res.eigenvalues[0]), w)


# -- discrete Laplace eigenpairs and the stable subspace --------------------


def laplace_eigenpairs(mesh: Mesh, count: int):
    """Smallest Dirichlet eigenpairs (grad w, grad v) = lam (w, v), lam ascending.

    Eigenvectors are L2-orthonormal, so (grad w_k, grad w_k) = lam_k.
    """
    Q = FeSpace(mesh, "P1C0")
    if not 0 < count <= Q.dof_count:
        raise ValueError(f"cannot request {count} eigenpairs with dim Q_h = {Q.dof_count}")
    K = assembly.stiffness_p1(Q)
    M = assembly.mass_p1(Q)
    if Q.dof_count <= DENSE_LIMIT:
        lam, W = la.eigh(K.toarray(), M.toarray(), subset_by_index=[0, count - 1])
    else:
        lam, W = spla.eigsh(K.tocsc(), k=count, M=M.tocsc(), sigma=0.0, which="LM")
        order = np.argsort(lam)
        lam, W = lam[order], W[:, order]
        W = W / np.sqrt(np.einsum("ij,ij->j", W, M @ W))
    return lam, _fix_sign(W)


def _darcy_witness(mesh: Mesh, g_p1: np.ndarray):
    """RT0C field with div = -Pi_0 g for a P1C0 function g."""
    from .equilibration import darcy_solve

    Q = FeSpace(mesh, "P1C0")
    full = np.zeros(mesh.n_vertices)
    full[Q.vertex_dof >= 0] = g_p1[Q.vertex_dof[Q.vertex_dof >= 0]]
    g0 = p1_values(mesh, full, QUAD5) @ QUAD5.weights
    sigma, _ = darcy_solve(mesh, g0)
    return sigma


def witness_ratio(problem: DualMixed, w: np.ndarray) -> dict:
    """Ratio (s, grad w)/(|s| |grad w|) for the Darcy witness s of ``w``.

    The witness solves the mixed Darcy problem with load -Delta_h w, the
    discrete Laplacian of w.  Also reported: the exact supremum over V_h,
    sqrt(w^T S w) / |grad w|.
    """
    mesh = problem.mesh
    M = assembly.mass_p1(problem.Q)
    Kw = problem.K @ w
    g = spla.spsolve(M.tocsc(), Kw)
    sigma = _darcy_witness(mesh, np.atleast_1d(g))
    grad_norm = float(np.sqrt(w @ Kw))
    pairing = float(problem.B.T @ w @ sigma)
    sigma_norm = float(np.sqrt(sigma @ (problem.A @ sigma)))
    y = problem.A_factor.solve(problem.B.T @ w)
    sup = float(np.sqrt(max(w @ (problem.B @ y), 0.0))) / grad_norm
    return {"ratio": pairing / (sigma_norm * grad_norm), "sup": sup,
            "sigma_norm": sigma_norm, "grad_norm": grad_norm}


def stable_subspace_check(family_name: str, ns, k: int = 1, combination=None,
                          v_kind: str = "RT0C") -> list[dict]:
    """Witness ratios for the k-th discrete Laplace eigenfunction per level.

    ``combination`` (a list of indices) uses the sum of those eigenfunctions
    instead; ``combination="worst"`` uses the eigenfunction of the smallest
    inf-sup eigenvalue.  Each row also carries the measured constants C_Pi
    (P0 projection) and C_sigma (Darcy stability) and the resulting lower
    bound (1 - C_Pi^2 h^2 lam_k) / (C_sigma lam_k^1/2); these three are only
    reported for a single eigenfunction.
    """
    if len(ns) < 3:
        raise ValueError("need at least three levels")
    rows = []
    for n in ns:
        mesh = family(family_name, n)
        problem = DualMixed(mesh, v_kind)
        h = 1.0 / n
        row = {"n": n, "h": h}
        if combination == "worst":
            spec = infsup_spectrum(problem, k=1)
            w = spec.U[:, 0]
            row["beta_h"] = spec.beta
        else:
            idx = [k] if combination is None else list(combination)
            lam, W = laplace_eigenpairs(mesh, max(idx))
            w = W[:, [i - 1 for i in idx]].sum(axis=1)
            lam_k = lam[max(idx) - 1]
            row["lambda"] = float(lam_k)
        row.update(witness_ratio(problem, w))
        if combination is None:
            # measured constants of the analytic lower bound, valid for one eigenfunction
            full = np.zeros(mesh.n_vertices)
            full[problem.Q.vertex_dof >= 0] = w[problem.Q.vertex_dof[problem.Q.vertex_dof >= 0]]
            vals = p1_values(mesh, full, QUAD5)
            means = vals @ QUAD5.weights
            wq = mesh.areas[:, None] * QUAD5.weights[None, :]
            proj_err = float(np.sqrt(((vals - means[:, None]) ** 2 * wq).sum()))
            w_l2 = float(np.sqrt((vals ** 2 * wq).sum()))
            c_pi = proj_err / (h * row["grad_norm"])
            c_sigma = row["sigma_norm"] / (lam_k * w_l2)
            row["C_Pi"] = c_pi
            row["C_sigma"] = float(c_sigma)
            row["bound"] = float((1.0 - c_pi ** 2 * h ** 2 * lam_k) / (c_sigma * np.sqrt(lam_k)))
        rows.append(row)
    return rows
