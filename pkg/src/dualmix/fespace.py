"""Lowest-order finite element spaces on triangles.

Kinds
-----
P1C   continuous piecewise linears, one DOF per vertex
P1C0  P1C without boundary vertices (homogeneous Dirichlet)
P0    piecewise constants, one DOF per triangle
RT0C  H(div)-conforming Raviart-Thomas, one DOF per edge
DRT0  discontinuous Raviart-Thomas, three DOFs per triangle

RT0 DOFs are total normal fluxes.  On a triangle with vertices ``P_i`` the
local function attached to the edge opposite ``P_i`` is
``s_i / (2|T|) * (x - P_i)``, with ``s_i`` the global edge sign for RT0C and
+1 (outward) for DRT0, so that its flux through that edge is ``s_i`` and its
divergence is ``s_i / |T|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, barycentric

KINDS = ("P1C", "P1C0", "P0", "RT0C", "DRT0")


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric, (nq, 3)
    weights: np.ndarray  # sum to 1
    degree: int


def _perm3(a, b):
    return [[a, b, b], [b, a, b], [b, b, a]]


QUAD2 = QuadratureRule(np.array(_perm3(2 / 3, 1 / 6)), np.full(3, 1 / 3), 2)

_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
_w1, _w2 = 0.132394152788506, 0.125939180544827
QUAD5 = QuadratureRule(
    np.array([[1 / 3, 1 / 3, 1 / 3]] + _perm3(_a1, _b1) + _perm3(_a2, _b2)),
    np.array([0.225] + [_w1] * 3 + [_w2] * 3),
    5,
)

# 3-point Gauss-Legendre on [0, 1], exact to degree 5
GAUSS_1D = (
    0.5 + 0.5 * np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)]),
    np.array([5 / 18, 8 / 18, 5 / 18]),
)


def quad_points(mesh: Mesh, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """Physical quadrature points, shape (nt, nq, 2)."""
    return np.einsum("qi,tid->tqd", rule.points, mesh.vertices[mesh.triangles])


def quad_weights(mesh: Mesh, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """Physical weights, shape (nt, nq)."""
    return mesh.areas[:, None] * rule.weights[None, :]


class FeSpace:
    """DOF layout of one of the five supported spaces on a mesh."""

    def __init__(self, mesh: Mesh, kind: str):
        if kind not in KINDS:
            raise ValueError(f"unknown space kind {kind!r}; expected one of {KINDS}")
        self.mesh = mesh
        self.kind = kind
        nt = mesh.n_triangles
        if kind == "P1C":
            self.dof_count = mesh.n_vertices
            self.dof_map = mesh.triangles.copy()
            self.vertex_dof = np.arange(mesh.n_vertices)
        elif kind == "P1C0":
            interior = mesh.interior_vertices
            self.vertex_dof = -np.ones(mesh.n_vertices, dtype=np.int64)
            self.vertex_dof[interior] = np.arange(len(interior))
            self.dof_count = len(interior)
            self.dof_map = self.vertex_dof[mesh.triangles]
        elif kind == "P0":
            self.dof_count = nt
            self.dof_map = np.arange(nt)[:, None]
        elif kind == "RT0C":
            self.dof_count = mesh.n_edges
            self.dof_map = mesh.tri_edges.copy()
        else:
            self.dof_count = 3 * nt
            self.dof_map = np.arange(3 * nt).reshape(nt, 3)
        self.dof_map.setflags(write=False)

    def __repr__(self):
        return f"FeSpace({self.kind}, dofs={self.dof_count})"

    @property
    def is_vector(self) -> bool:
        return self.kind in ("RT0C", "DRT0")

    @property
    def local_signs(self) -> np.ndarray:
        """Orientation factor of each local RT0 function, shape (nt, 3)."""
        if self.kind == "RT0C":
            return self.mesh.tri_edge_signs.astype(float)
        if self.kind == "DRT0":
            return np.ones((self.mesh.n_triangles, 3))
        raise ValueError(f"{self.kind} is not a vector space")

    def eval_basis(self, triangle: int, point, tol: float = 1e-12) -> np.ndarray:
        """Local shape function values at ``point``.

        Returns (3,) for P1 kinds, (1,) for P0 and (3, 2) for RT0 kinds.
        Local functions whose DOF is eliminated (P1C0 boundary vertices) are
        still returned; the dof_map marks them with -1.
        """
        mesh = self.mesh
        point = np.asarray(point, dtype=float)
        lam = barycentric(mesh, point)[triangle]
        if (lam < -tol).any():
            raise ValueError(f"point {tuple(point)} is outside triangle {triangle}")
        if self.kind in ("P1C", "P1C0"):
            return lam
        if self.kind == "P0":
            return np.ones(1)
        p = mesh.vertices[mesh.triangles[triangle]]
        scale = self.local_signs[triangle] / (2.0 * mesh.areas[triangle])
        return scale[:, None] * (point[None, :] - p)

    def eval_div(self, triangle: int) -> np.ndarray:
        """Divergence of the local RT0 functions (constant on the triangle)."""
        return self.local_signs[triangle] / self.mesh.areas[triangle]


def p1_values(mesh: Mesh, coeffs: np.ndarray, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """Values of a vertex-indexed P1 field at quadrature points, shape (nt, nq)."""
    return coeffs[mesh.triangles] @ rule.points.T


def p1_gradients(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    """Elementwise gradient of a P1C field, shape (nt, 2)."""
    return np.einsum("ti,tid->td", coeffs[mesh.triangles], mesh.bary_gradients())


def to_vertex_values(space: FeSpace, coeffs: np.ndarray, boundary=None) -> np.ndarray:
    """Expand P1C0 coefficients to one value per vertex (boundary values default 0)."""
    if space.kind == "P1C":
        return np.asarray(coeffs, dtype=float)
    full = np.zeros(space.mesh.n_vertices) if boundary is None else np.array(boundary, dtype=float)
    inner = space.vertex_dof >= 0
    full[inner] = coeffs[space.vertex_dof[inner]]
    return full


def rt0_local_weights(space: FeSpace, coeffs: np.ndarray) -> np.ndarray:
    """Signed local flux coefficients of an RT0 field, shape (nt, 3)."""
    return coeffs[space.dof_map] * space.local_signs


def rt0_values(space: FeSpace, coeffs: np.ndarray, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """Values of an RT0 field at quadrature points, shape (nt, nq, 2)."""
    mesh = space.mesh
    w = rt0_local_weights(space, coeffs)
    p = mesh.vertices[mesh.triangles]
    x = quad_points(mesh, rule)
    wsum = w.sum(axis=1)
    wp = np.einsum("ti,tid->td", w, p)
    return (wsum[:, None, None] * x - wp[:, None, :]) / (2.0 * mesh.areas)[:, None, None]


def rt0_divergence(space: FeSpace, coeffs: np.ndarray) -> np.ndarray:
    """Elementwise (constant) divergence of an RT0 field."""
    return rt0_local_weights(space, coeffs).sum(axis=1) / space.mesh.areas


def edge_flux(mesh: Mesh, field) -> np.ndarray:
    """Integral of ``field . n_E`` over every edge (global orientation).

    ``field(x, y)`` returns a pair of arrays.
    """
    s, w = GAUSS_1D
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    fx, fy = field(pts[..., 0], pts[..., 1])
    n = mesh.edge_normals
    fn = np.asarray(fx) * n[:, 0, None] + np.asarray(fy) * n[:, 1, None]
    return mesh.edge_lengths * (fn @ w)


def interpolate_rt0(space: FeSpace, field) -> np.ndarray:
    """Canonical RT0 interpolant: DOFs are the edge normal fluxes.

    ``field`` is either a callable vector field or an array of edge fluxes
    in the global orientation.
    """
    if space.kind not in ("RT0C", "DRT0"):
        raise ValueError("interpolate_rt0 needs an RT0C or DRT0 space")
    mesh = space.mesh
    if callable(field):
        flux = edge_flux(mesh, field)
    else:
        flux = np.asarray(field, dtype=float)
        if flux.shape != (mesh.n_edges,):
            raise ValueError(f"expected {mesh.n_edges} edge fluxes, got shape {flux.shape}")
    if space.kind == "RT0C":
        return flux
    # outward flux per triangle-local edge
    return (flux[mesh.tri_edges] * mesh.tri_edge_signs).ravel()


def l2_project_p0(mesh: Mesh, f, rule: QuadratureRule = QUAD5) -> np.ndarray:
    """Elementwise mean of ``f(x, y)``."""
    x = quad_points(mesh, rule)
    vals = np.broadcast_to(f(x[..., 0], x[..., 1]), x.shape[:2])
    return vals @ rule.weights


def conforming_to_discontinuous(space_c: FeSpace, space_d: FeSpace):
    """Sparse map P with x_DRT0 = P x_RT0C (same mesh)."""
    from scipy import sparse

    mesh = space_c.mesh
    rows = space_d.dof_map.ravel()
    cols = space_c.dof_map.ravel()
    vals = mesh.tri_edge_signs.ravel().astype(float)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(space_d.dof_count, space_c.dof_count))
