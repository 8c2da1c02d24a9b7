"""Sparse assembly of the matrices and load vectors of the mixed problems.

Matrices are returned as ``scipy.sparse.csr_matrix`` with sorted, summed
indices.  Element contributions are generated in triangle order, so the
result is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .fespace import QUAD2, FeSpace, QuadratureRule, quad_points, quad_weights
from .mesh import Mesh


@dataclass(frozen=True)
class Dirac:
    """Unit-mass P0 approximation of a point load."""
    point: tuple


@dataclass(frozen=True)
class PiecewiseConstant:
    values: np.ndarray


def _csr(rows, cols, vals, shape) -> sparse.csr_matrix:
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    keep = (rows >= 0) & (cols >= 0)
    K = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K


def _element_matrix(space_r: FeSpace, space_c: FeSpace, local: np.ndarray) -> sparse.csr_matrix:
    rows = np.broadcast_to(space_r.dof_map[:, :, None], local.shape)
    cols = np.broadcast_to(space_c.dof_map[:, None, :], local.shape)
    return _csr(rows, cols, local, (space_r.dof_count, space_c.dof_count))


def _same_mesh(a: FeSpace, b: FeSpace) -> None:
    if a.mesh is not b.mesh:
        raise ValueError("spaces live on different meshes")


def is_symmetric(K, tol: float = 1e-12) -> bool:
    K = sparse.csr_matrix(K)
    scale = abs(K).max() if K.nnz else 0.0
    diff = K - K.T
    return (abs(diff).max() if diff.nnz else 0.0) <= tol * scale


def _rt0_shape_values(space: FeSpace, rule: QuadratureRule):
    """Local RT0 function values at quadrature points, shape (nt, 3, nq, 2)."""
    mesh = space.mesh
    x = quad_points(mesh, rule)
    p = mesh.vertices[mesh.triangles]
    scale = space.local_signs / (2.0 * mesh.areas[:, None])
    return scale[:, :, None, None] * (x[:, None, :, :] - p[:, :, None, :])


def mass_rt0(space: FeSpace, rule: QuadratureRule = QUAD2) -> sparse.csr_matrix:
    """L2 Gram matrix of an RT0C or DRT0 basis."""
    if not space.is_vector:
        raise ValueError("mass_rt0 needs an RT0C or DRT0 space")
    psi = _rt0_shape_values(space, rule)
    w = quad_weights(space.mesh, rule)
    local = np.einsum("tiqd,tjqd,tq->tij", psi, psi, w)
    return _element_matrix(space, space, local)


def coupling_b(v_space: FeSpace, q_space: FeSpace, via: str = "gradient") -> sparse.csr_matrix:
    """B[i, j] = (psi_j, grad phi_i), shape (dim Q, dim V).

    ``via="divergence"`` assembles ``-(div psi_j, phi_i)`` instead; the two
    coincide for RT0C against P1C0 because normal traces are continuous and
    the hats vanish on the boundary.
    """
    _same_mesh(v_space, q_space)
    if not v_space.is_vector or q_space.kind not in ("P1C", "P1C0"):
        raise ValueError("coupling_b needs an RT0 velocity space and a P1 space")
    mesh = v_space.mesh
    s = v_space.local_signs
    if via == "gradient":
        # integral of (x - P_j) over T is |T| (c - P_j); the 1/(2|T|) cancels |T|
        p = mesh.vertices[mesh.triangles]
        c = mesh.centroids
        moment = 0.5 * s[:, :, None] * (c[:, None, :] - p)  # (nt, j, 2)
        local = np.einsum("tid,tjd->tij", mesh.bary_gradients(), moment)
    elif via == "divergence":
        if v_space.kind != "RT0C":
            raise ValueError("divergence route is only valid for RT0C")
        # div psi_j = s_j/|T| and the hat integrates to |T|/3
        local = np.broadcast_to(-s[:, None, :] / 3.0, (mesh.n_triangles, 3, 3))
    else:
        raise ValueError(f"unknown route {via!r}")
    return _element_matrix(q_space, v_space, local)


def stiffness_p1(space: FeSpace) -> sparse.csr_matrix:
    if space.kind not in ("P1C", "P1C0"):
        raise ValueError("stiffness_p1 needs a P1 space")
    g = space.mesh.bary_gradients()
    local = np.einsum("tid,tjd->tij", g, g) * space.mesh.areas[:, None, None]
    return _element_matrix(space, space, local)


_P1_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def mass_p1(space: FeSpace) -> sparse.csr_matrix:
    if space.kind not in ("P1C", "P1C0"):
        raise ValueError("mass_p1 needs a P1 space")
    local = space.mesh.areas[:, None, None] * _P1_MASS[None]
    return _element_matrix(space, space, local)


def mass_p0(space: FeSpace) -> sparse.csr_matrix:
    if space.kind != "P0":
        raise ValueError("mass_p0 needs a P0 space")
    return sparse.diags(space.mesh.areas).tocsr()


def div_rt0_p0(v_space: FeSpace, q_space: FeSpace) -> sparse.csr_matrix:
    """D[T, E] = (div psi_E, 1)_T, shape (dim P0, dim RT0)."""
    _same_mesh(v_space, q_space)
    if not v_space.is_vector or q_space.kind != "P0":
        raise ValueError("div_rt0_p0 needs an RT0 space and a P0 space")
    local = v_space.local_signs[:, None, :]
    return _element_matrix(q_space, v_space, local)


def p1_p0_coupling(q_space: FeSpace, p0_space: FeSpace) -> sparse.csr_matrix:
    """C[i, T] = (chi_T, phi_i) = |T|/3 for vertices i of T."""
    _same_mesh(q_space, p0_space)
    local = np.broadcast_to(q_space.mesh.areas[:, None, None] / 3.0,
                            (q_space.mesh.n_triangles, 3, 1))
    return _element_matrix(q_space, p0_space, local)


def source_p0(mesh: Mesh, f) -> np.ndarray | None:
    """Piecewise constant values of a descriptor, or None for analytic sources."""
    if isinstance(f, Dirac):
        t = mesh.locate(f.point)
        vals = np.zeros(mesh.n_triangles)
        vals[t] = 1.0 / mesh.areas[t]
        return vals
    if isinstance(f, PiecewiseConstant):
        vals = np.asarray(f.values, dtype=float)
        if vals.shape != (mesh.n_triangles,):
            raise ValueError(f"expected {mesh.n_triangles} element values, got {vals.shape}")
        return vals
    if np.isscalar(f):
        return np.full(mesh.n_triangles, float(f))
    return None


def load_vector(space: FeSpace, f, rule: QuadratureRule = QUAD2) -> np.ndarray:
    """Entries (f, phi_i) for a P1 space or (f, 1)_T for P0.

    ``f`` is a callable ``f(x, y)``, a scalar, a :class:`PiecewiseConstant`
    or a :class:`Dirac`.
    """
    mesh = space.mesh
    p0 = source_p0(mesh, f)
    if space.kind == "P0":
        if p0 is not None:
            return p0 * mesh.areas
        x = quad_points(mesh, rule)
        return (f(x[..., 0], x[..., 1]) * quad_weights(mesh, rule)).sum(axis=1)
    if space.kind not in ("P1C", "P1C0"):
        raise ValueError(f"no load vector for {space.kind}")
    if p0 is not None:
        local = np.repeat((p0 * mesh.areas / 3.0)[:, None], 3, axis=1)
    else:
        x = quad_points(mesh, rule)
        fw = f(x[..., 0], x[..., 1]) * quad_weights(mesh, rule)  # (nt, nq)
        local = fw @ rule.points  # (nt, 3)
    rows = space.dof_map.ravel()
    keep = rows >= 0
    return np.bincount(rows[keep], weights=local.ravel()[keep], minlength=space.dof_count)


def dump_coo(K, path) -> None:
    """Write ``row col value`` lines."""
    K = sparse.coo_matrix(K)
    with Path(path).open("w") as fh:
        for r, c, v in zip(K.row, K.col, K.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
