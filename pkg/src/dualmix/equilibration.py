"""Patchwise flux equilibration into the conforming RT0 space.

Given u_h in P1C0 and g0 in P0 with (grad u_h, grad v) = (g0, v) for all
v in P1C0, build sigma_h in RT0C with div sigma_h = -g0 and
(grad u_h - sigma_h, grad v) = 0 for all v in P1C0.  sigma_h is grad u_h
plus one discontinuous RT0 correction per vertex patch; the correction
coefficients follow from a recursion around the patch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la
from scipy import sparse
from scipy.sparse import linalg as spla

from . import assembly
from .fespace import FeSpace, p1_gradients, to_vertex_values
from .mesh import Mesh
from .solvers import SaddleSystem, solve_saddle


class EquilibrationError(RuntimeError):
    pass


def darcy_solve(mesh: Mesh, g, flux_bc: bool = False):
    """Mixed RT0C-P0 problem: (s, t) + (div t, p) = 0, (div s, q) = -(g, q).

    ``g`` holds one value per triangle.  With ``flux_bc`` the normal flux
    vanishes on the boundary, the data must have zero mean, and the pressure
    is fixed by a zero-mean gauge.
    """
    g = np.asarray(g, dtype=float)
    V = FeSpace(mesh, "RT0C")
    P = FeSpace(mesh, "P0")
    A = assembly.mass_rt0(V)
    D = assembly.div_rt0_p0(V, P)
    rhs_q = -g * mesh.areas
    if not flux_bc:
        y, x = solve_saddle(SaddleSystem(A, D, None, rhs_q), method="kkt")
        return y, x
    free = np.flatnonzero(~mesh.boundary_edge)
    if abs(rhs_q.sum()) > 1e-12 * max(np.abs(rhs_q).sum(), 1.0):
        raise ValueError("flux_bc needs data with zero mean")
    Af = A[free][:, free]
    Df = D[:, free]
    # zero-mean gauge enters as an extra multiplier row on the pressure
    gauge = sparse.csr_matrix(mesh.areas[None, :])
    K = sparse.bmat([[Af, Df.T, None], [Df, None, gauge.T], [None, gauge, None]], format="csc")
    rhs = np.concatenate([np.zeros(len(free)), rhs_q, [0.0]])
    sol = spla.splu(K).solve(rhs)
    sigma = np.zeros(mesh.n_edges)
    sigma[free] = sol[:len(free)]
    return sigma, sol[len(free):len(free) + mesh.n_triangles]


@dataclass
class EquilibratedFlux:
    sigma: np.ndarray  # RT0C coefficients
    divergence: np.ndarray  # per triangle
    jumps: np.ndarray  # per edge normal jump |(flux_a + flux_b)| / |E|, 0 on boundary
    g0: np.ndarray
    local_flux: np.ndarray  # outward fluxes per triangle-local edge

    def report(self) -> dict:
        div_err = np.abs(self.divergence + self.g0)
        return {"max_div_error": float(div_err.max()), "mean_div_error": float(div_err.mean()),
                "max_jump": float(self.jumps.max(initial=0.0))}


def vertex_patches(mesh: Mesh) -> list[tuple[list[int], list[int], bool]]:
    """For each vertex the fan (triangles, exit edges, is_interior).

    Triangles are ordered counter-clockwise around the vertex and edge ``i``
    is the edge through which the fan leaves triangle ``i``: it joins
    triangle ``i`` to triangle ``i + 1`` (cyclically for interior vertices).
    For a boundary vertex the fan starts on a boundary edge and its last
    exit edge lies on the boundary.
    """
    tris = mesh.triangles
    nt = mesh.n_triangles
    # around z = tris[t, k] the triangle is entered through edge (z, a) and
    # left through edge (z, b), with a = tris[t, k+1] and b = tris[t, k+2]
    z = tris.ravel()
    t = np.repeat(np.arange(nt), 3)
    k = np.tile(np.arange(3), nt)
    a = tris[t, (k + 1) % 3]
    b = tris[t, (k + 2) % 3]
    leave_edge = mesh.tri_edges[t, (k + 1) % 3]
    order = np.argsort(z, kind="stable")
    starts = np.searchsorted(z[order], np.arange(mesh.n_vertices + 1))
    patches = []
    for v in range(mesh.n_vertices):
        sel = order[starts[v]:starts[v + 1]]
        if sel.size == 0:
            patches.append(([], [], False))
            continue
        by_entry = {int(a[s]): s for s in sel}
        exits = {int(b[s]) for s in sel}
        interior = not mesh.boundary_vertex[v]
        if interior:
            first = sel[0]
        else:
            heads = [s for s in sel if int(a[s]) not in exits]
            if len(heads) != 1:
                raise EquilibrationError(f"vertex {v}: patch is not a single fan")
            first = heads[0]
        fan, edges = [], []
        s = first
        while True:
            fan.append(int(t[s]))
            edges.append(int(leave_edge[s]))
            s = by_entry.get(int(b[s]))
            if s is None or s == first:
                break
        if len(fan) != sel.size:
            raise EquilibrationError(f"vertex {v}: patch is not a single fan")
        patches.append((fan, edges, interior))
    return patches


def _local_index(mesh: Mesh, t: int, e: int) -> int:
    return int(np.flatnonzero(mesh.tri_edges[t] == e)[0])


def reconstruct(mesh: Mesh, u_h, g0, tol: float = 1e-9) -> EquilibratedFlux:
    """Equilibrated RT0C flux for u_h (P1C0 coefficients) and g0 (per triangle).

    Interior patches use the cyclic recursion seeded with a zero flux on
    the closing edge; boundary patches run the same recursion as an open
    chain starting on a boundary edge, and the last boundary edge carries
    whatever flux the divergence condition requires.
    """
    Q = FeSpace(mesh, "P1C0")
    u_h = np.asarray(u_h, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    if u_h.shape != (Q.dof_count,) or g0.shape != (mesh.n_triangles,):
        raise ValueError("u_h must be P1C0 coefficients and g0 one value per triangle")
    K = assembly.stiffness_p1(Q)
    G = assembly.load_vector(Q, assembly.PiecewiseConstant(g0))
    Ku = K @ u_h
    scale = max(np.abs(G).max(initial=0.0), np.abs(Ku).max(initial=0.0), 1e-300)
    mismatch = np.abs(Ku - G)
    if mismatch.max(initial=0.0) > tol * scale:
        raise EquilibrationError(
            f"u_h is not the Galerkin solution for g0 (residual {mismatch.max():.2e})")

    u = to_vertex_values(Q, u_h)
    grad = p1_gradients(mesh, u)
    area = mesh.areas
    normals = mesh.edge_normals
    lengths = mesh.edge_lengths
    verts = mesh.vertices[mesh.triangles]

    # outward fluxes of the constant field grad u_h through each local edge
    local = np.empty((mesh.n_triangles, 3))
    for i in range(3):
        d = verts[:, (i + 2) % 3] - verts[:, (i + 1) % 3]
        local[:, i] = grad[:, 0] * d[:, 1] - grad[:, 1] * d[:, 0]

    # (g0, phi_z)_T = g0 |T| / 3 for every vertex of T
    g_phi = g0 * area / 3.0
    for zi, (fan, edges, interior) in enumerate(vertex_patches(mesh)):
        n = len(fan)
        tau_plus = 0.0  # seed: no flux through the entry edge of T_1
        for i in range(n):
            ti, e = fan[i], edges[i]
            tau_minus = g_phi[ti] + tau_plus
            local[ti, _local_index(mesh, ti, e)] -= tau_minus
            if not interior and i == n - 1:
                break
            tn = fan[(i + 1) % n]
            l_plus = _local_index(mesh, tn, e)
            # n_E is the outward normal of T_{i+1} (plus side) on E
            n_e = mesh.tri_edge_signs[tn, l_plus] * normals[e]
            tau_plus = tau_minus - 0.5 * lengths[e] * ((grad[tn] - grad[ti]) @ n_e)
            if i < n - 1:
                local[tn, l_plus] += tau_plus
        if interior and abs(tau_plus) > tol * scale:
            # tau_plus on the closing edge must return to the zero seed
            raise EquilibrationError(f"patch of vertex {zi} does not close "
                                     f"(defect {tau_plus:.2e})")

    sigma, jumps = _assemble_conforming(mesh, local)
    divergence = local.sum(axis=1) / area
    return EquilibratedFlux(sigma, divergence, jumps, g0, local)


def patch_closure_defects(mesh: Mesh, u_h, g0) -> np.ndarray:
    """Per interior vertex: sum over the fan of (g0, phi_z)_T - |E|/2 [grad u_h . n]_E."""
    Q = FeSpace(mesh, "P1C0")
    grad = p1_gradients(mesh, to_vertex_values(Q, np.asarray(u_h, dtype=float)))
    g_phi = np.asarray(g0) * mesh.areas / 3.0
    out = []
    for fan, edges, interior in vertex_patches(mesh):
        if not interior:
            continue
        total = 0.0
        for i, (ti, e) in enumerate(zip(fan, edges)):
            tn = fan[(i + 1) % len(fan)]
            n_e = mesh.tri_edge_signs[tn, _local_index(mesh, tn, e)] * mesh.edge_normals[e]
            total += g_phi[ti] - 0.5 * mesh.edge_lengths[e] * ((grad[tn] - grad[ti]) @ n_e)
        out.append(total)
    return np.array(out)


def _assemble_conforming(mesh: Mesh, local: np.ndarray):
    """RT0C coefficients (signed average of the two sides) and normal jumps."""
    signed = local * mesh.tri_edge_signs
    flat_e = mesh.tri_edges.ravel()
    total = np.bincount(flat_e, weights=signed.ravel(), minlength=mesh.n_edges)
    count = np.bincount(flat_e, minlength=mesh.n_edges)
    sigma = total / count
    # on an interior edge the two outward fluxes must cancel
    outward_sum = np.bincount(flat_e, weights=local.ravel(), minlength=mesh.n_edges)
    jumps = np.where(mesh.boundary_edge, 0.0, np.abs(outward_sum) / mesh.edge_lengths)
    return sigma, jumps


def fortin_defect(mesh: Mesh, u_h, flux: EquilibratedFlux) -> float:
    """max_v |(grad u_h - sigma_h, grad phi_v)| over interior hats."""
    V = FeSpace(mesh, "RT0C")
    Q = FeSpace(mesh, "P1C0")
    B = assembly.coupling_b(V, Q)
    K = assembly.stiffness_p1(Q)
    return float(np.abs(K @ u_h - B @ flux.sigma).max(initial=0.0))


def flux_norm(mesh: Mesh, sigma) -> float:
    V = FeSpace(mesh, "RT0C")
    return float(np.sqrt(sigma @ (assembly.mass_rt0(V) @ sigma)))


def inverse_constant(mesh: Mesh) -> float:
    """rho(h) = sqrt(lambda_max(K, M)) on P1C0, so |grad v| <= rho |v|."""
    Q = FeSpace(mesh, "P1C0")
    K = assembly.stiffness_p1(Q).tocsc()
    M = assembly.mass_p1(Q).tocsc()
    if Q.dof_count <= 2:
        return float(np.sqrt(la.eigh(K.toarray(), M.toarray(), eigvals_only=True)[-1]))
    lam = spla.eigsh(K, k=1, M=M, which="LA", return_eigenvectors=False)
    return float(np.sqrt(lam[0]))


def galerkin_p0(mesh: Mesh, g0) -> np.ndarray:
    """P1C0 solution of (grad u, grad v) = (g0, v)."""
    Q = FeSpace(mesh, "P1C0")
    K = assembly.stiffness_p1(Q).tocsc()
    G = assembly.load_vector(Q, assembly.PiecewiseConstant(g0))
    return np.atleast_1d(spla.spsolve(K, G))


def fortin_constant(meshes, loads) -> list[dict]:
    """Per mesh: C_Pi = max over loads of |sigma_h| / |grad u_h| and h rho / zeta.

    ``loads`` is a list of callables ``load(mesh) -> g0``.
    """
    from .infsup import p1p0_infsup

    rows = []
    for mesh in meshes:
        Q = FeSpace(mesh, "P1C0")
        K = assembly.stiffness_p1(Q)
        ratios = []
        for load in loads:
            g0 = np.asarray(load(mesh), dtype=float)
            u_h = galerkin_p0(mesh, g0)
            flux = reconstruct(mesh, u_h, g0)
            grad_norm = float(np.sqrt(u_h @ (K @ u_h)))
            ratios.append(flux_norm(mesh, flux.sigma) / grad_norm)
        h = mesh.h
        rho = inverse_constant(mesh)
        zeta = p1p0_infsup(mesh).zeta
        rows.append({"h": h, "C_Pi": max(ratios), "ratios": ratios, "rho": rho,
                     "zeta": zeta, "h_rho": h * rho, "bound": h * rho / zeta})
    return rows


def worst_p1p0_load(mesh: Mesh) -> np.ndarray:
    """P0 projection of the worst P1-P0 function."""
    from .infsup import p1p0_infsup

    Q = FeSpace(mesh, "P1C0")
    w = to_vertex_values(Q, p1p0_infsup(mesh).w)
    return w[mesh.triangles].mean(axis=1)


def write_flux_csv(flux: EquilibratedFlux, path) -> None:
    with Path(path).open("w") as fh:
        fh.write("edge,coefficient\n")
        for i, c in enumerate(flux.sigma):
            fh.write(f"{i},{c:.12e}\n")


def write_residual_json(flux: EquilibratedFlux, path, extra=None) -> None:
    report = flux.report()
    if extra:
        report.update(extra)
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
