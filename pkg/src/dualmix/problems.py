"""Dual mixed and Galerkin discretizations of the Dirichlet Poisson problem.

Find sigma_h in V_h and u_h in Q_h with

    (sigma_h, tau) + (tau, grad u_h) = 0        for all tau in V_h
    (sigma_h, grad v)                = -<f, v>  for all v in Q_h

so that sigma_h approximates -grad u.  In matrix form A y + B^T x = 0,
B y = -F.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import linalg as spla

from . import assembly
from .fespace import FeSpace, to_vertex_values
from .mesh import Mesh
from .solvers import SaddleSystem, cholesky, schur_complement, solve_saddle


@dataclass
class MixedSolution:
    sigma: np.ndarray  # V_h coefficients
    u: np.ndarray  # one value per vertex (boundary values included)
    u_dofs: np.ndarray  # Q_h coefficients
    residuals: tuple


class DualMixed:
    """Matrices of the dual mixed problem on one mesh, assembled once."""

    def __init__(self, mesh: Mesh, v_kind: str = "RT0C"):
        v_kind = v_kind.upper()
        if v_kind not in ("RT0C", "DRT0"):
            raise ValueError(f"velocity space must be RT0C or DRT0, got {v_kind!r}")
        self.mesh = mesh
        self.v_kind = v_kind
        self.V = FeSpace(mesh, v_kind)
        self.Q = FeSpace(mesh, "P1C0")
        self.A = assembly.mass_rt0(self.V)
        self.B = assembly.coupling_b(self.V, self.Q)
        self.K = assembly.stiffness_p1(self.Q)

    @cached_property
    def A_factor(self):
        return cholesky(self.A)

    @cached_property
    def K_factor(self):
        return cholesky(self.K)

    @cached_property
    def schur(self) -> np.ndarray:
        """Dense B A^-1 B^T."""
        return schur_complement(self.A_factor, self.B)

    @cached_property
    def _full(self):
        P = FeSpace(self.mesh, "P1C")
        return P, assembly.coupling_b(self.V, P), assembly.stiffness_p1(P)

    def load(self, f) -> np.ndarray:
        return assembly.load_vector(self.Q, f)

    def _boundary_values(self, dirichlet) -> np.ndarray:
        full = np.zeros(self.mesh.n_vertices)
        if dirichlet is not None:
            b = self.mesh.boundary_vertex
            xy = self.mesh.vertices[b]
            full[b] = dirichlet(xy[:, 0], xy[:, 1])
        return full

    def solve(self, f=0.0, dirichlet=None, method: str = "auto") -> MixedSolution:
        """Mixed solve; ``dirichlet(x, y)`` gives nonzero boundary data by nodal lifting."""
        F = self.load(f)
        g_full = self._boundary_values(dirichlet)
        rhs_v = np.zeros(self.V.dof_count)
        if dirichlet is not None:
            _, B_full, _ = self._full
            rhs_v = -(B_full.T @ np.where(self.mesh.boundary_vertex, g_full, 0.0))
        system = SaddleSystem(self.A, self.B, rhs_v, -F)
        y, x = solve_saddle(system, method=method)
        u = to_vertex_values(self.Q, x, g_full)
        return MixedSolution(y, u, x, system.residuals(y, x))

    def galerkin(self, f=0.0, dirichlet=None) -> np.ndarray:
        """Standard P1 solution, one value per vertex."""
        F = self.load(f)
        g_full = self._boundary_values(dirichlet)
        if dirichlet is not None:
            _, _, K_full = self._full
            inner = self.mesh.interior_vertices
            F = F - K_full[inner] @ np.where(self.mesh.boundary_vertex, g_full, 0.0)
        x = self.K_factor.solve(F) if self.Q.dof_count else np.zeros(0)
        return to_vertex_values(self.Q, x, g_full)


def galerkin_solve(mesh: Mesh, f, dirichlet=None) -> np.ndarray:
    Q = FeSpace(mesh, "P1C0")
    K = assembly.stiffness_p1(Q)
    F = assembly.load_vector(Q, f)
    g_full = np.zeros(mesh.n_vertices)
    if dirichlet is not None:
        P = FeSpace(mesh, "P1C")
        b = mesh.boundary_vertex
        g_full[b] = dirichlet(mesh.vertices[b, 0], mesh.vertices[b, 1])
        F = F - assembly.stiffness_p1(P)[mesh.interior_vertices] @ g_full
    x = spla.spsolve(K.tocsc(), F) if Q.dof_count else np.zeros(0)
    return to_vertex_values(Q, np.atleast_1d(x), g_full)
