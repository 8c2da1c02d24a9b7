"""Shared fixtures and independent brute-force oracles.

The oracles rebuild every basis function from its defining degrees of
freedom (nodal values for P1, edge fluxes for RT0) by a small linear solve
per triangle and integrate with a collapsed Gauss rule, so they share no
code with the library's closed-form assembly.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from dualmix import mesh as M

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tools"))


def jittered(mesh: M.Mesh, amp: float, seed: int) -> M.Mesh:
    """Move interior vertices by up to ``amp`` times the shortest edge."""
    rng = np.random.default_rng(seed)
    v = np.array(mesh.vertices)
    inner = ~mesh.boundary_vertex
    v[inner] += rng.uniform(-amp, amp, (np.count_nonzero(inner), 2)) * mesh.edge_lengths.min()
    return M.build_mesh(v, np.array(mesh.triangles), mesh.domain_tag)


SMALL_MESHES = {
    "right2": lambda: M.gen_right(2),
    "right3-jitter": lambda: jittered(M.gen_right(3), 0.15, 1),
    "crossed2": lambda: M.gen_crossed(2),
    "crossed2-jitter": lambda: jittered(M.gen_crossed(2), 0.1, 2),
    "lshape2": lambda: M.gen_lshape(2),
    "right4-jitter": lambda: jittered(M.gen_right(4), 0.15, 3),
}


@pytest.fixture(params=sorted(SMALL_MESHES))
def small_mesh(request):
    return SMALL_MESHES[request.param]()


# -- quadrature independent of the library rules ---------------------------

def _collapsed_gauss(order: int = 6):
    x, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    pts, wts = [], []
    for a, wa in zip(s, ws):
        for b, wb in zip(s, ws):
            # Duffy map of the unit square onto the reference triangle
            pts.append((a, b * (1.0 - a)))
            wts.append(wa * wb * (1.0 - a))
    return np.array(pts), np.array(wts)


_REF_PTS, _REF_W = _collapsed_gauss()


def triangle_quadrature(p):
    """Physical points and weights on the triangle with vertex rows ``p``."""
    p = np.asarray(p, dtype=float)
    J = np.column_stack([p[1] - p[0], p[2] - p[0]])
    area = 0.5 * abs(np.linalg.det(J))
    return p[0] + _REF_PTS @ J.T, _REF_W * 2.0 * area


# -- basis functions from their degrees of freedom ---------------------------

def hat_coefficients(p):
    """Columns (a, b, c) with a + b x + c y equal to 1 at one vertex, 0 at the others."""
    V = np.column_stack([np.ones(3), p])
    return np.linalg.solve(V, np.eye(3))


def rt_functions(p, normals):
    """RT0 fields v = a + b x on a triangle with unit flux through one edge.

    Edge k is the edge opposite vertex k with unit normal ``normals[k]``.
    Returns coefficients (3, 3): column k holds (a_x, a_y, b) of the field with
    flux 1 through edge k (along normals[k]) and 0 through the other edges.
    """
    rows = []
    for k in range(3):
        a, b = p[(k + 1) % 3], p[(k + 2) % 3]
        length = np.linalg.norm(b - a)
        mid = 0.5 * (a + b)
        n = normals[k]
        # flux of a + b x through a straight edge equals length * value at midpoint . n
        rows.append(length * np.array([n[0], n[1], mid @ n]))
    return np.linalg.solve(np.array(rows), np.eye(3))


def _outward(p, k):
    a, b = p[(k + 1) % 3], p[(k + 2) % 3]
    t = b - a
    n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
    if n @ (a - p[k]) < 0:
        n = -n
    return n


def oracle_local_fields(mesh: M.Mesh, t: int, kind: str):
    """List of (dof, callable value(x), divergence) for the RT0 functions on triangle t."""
    p = mesh.vertices[mesh.triangles[t]]
    normals = []
    for k in range(3):
        e = mesh.tri_edges[t, k]
        if kind == "RT0C":
            a, b = mesh.vertices[mesh.edges[e, 0]], mesh.vertices[mesh.edges[e, 1]]
            d = b - a
            normals.append(np.array([d[1], -d[0]]) / np.linalg.norm(d))
        else:
            normals.append(_outward(p, k))
    coef = rt_functions(p, normals)
    out = []
    for k in range(3):
        ax, ay, b = coef[:, k]
        dof = mesh.tri_edges[t, k] if kind == "RT0C" else 3 * t + k
        out.append((dof, (lambda x, ax=ax, ay=ay, b=b: np.column_stack([ax + b * x[:, 0], ay + b * x[:, 1]])),
                    2.0 * b))
    return out


def oracle_matrices(mesh: M.Mesh, kind: str = "RT0C") -> dict:
    """Dense A, B, K, M1 (interior hats), M0, D and C by brute force."""
    interior = {int(v): i for i, v in enumerate(mesh.interior_vertices)}
    nq = len(interior)
    nv = mesh.n_edges if kind == "RT0C" else 3 * mesh.n_triangles
    nt = mesh.n_triangles
    A = np.zeros((nv, nv))
    B = np.zeros((nq, nv))
    K = np.zeros((nq, nq))
    M1 = np.zeros((nq, nq))
    D = np.zeros((nt, nv))
    C = np.zeros((nq, nt))
    for t in range(nt):
        tri = mesh.triangles[t]
        p = mesh.vertices[tri]
        x, w = triangle_quadrature(p)
        hc = hat_coefficients(p)
        hats = [(interior.get(int(v)), hc[:, k]) for k, v in enumerate(tri)]
        fields = oracle_local_fields(mesh, t, kind)
        vals = [(dof, f(x), div) for dof, f, div in fields]
        for di, vi, _ in vals:
            for dj, vj, _ in vals:
                A[di, dj] += w @ (vi * vj).sum(axis=1)
        for dj, vj, divj in vals:
            D[t, dj] += divj * w.sum()
        for i, ci in hats:
            if i is None:
                continue
            phi_i = ci[0] + x @ ci[1:]
            C[i, t] += w @ phi_i
            for dj, vj, _ in vals:
                B[i, dj] += w @ (vj @ ci[1:])
            for j, cj in hats:
                if j is None:
                    continue
                K[i, j] += w.sum() * (ci[1:] @ cj[1:])
                M1[i, j] += w @ (phi_i * (cj[0] + x @ cj[1:]))
    return {"A": A, "B": B, "K": K, "M1": M1, "M0": np.diag(mesh.areas), "D": D, "C": C}


def svd_path(problem) -> np.ndarray:
    """Singular values of K^-1/2 B A^-1/2 from dense symmetric eigendecompositions."""
    a, Ua = np.linalg.eigh(problem.A.toarray())
    k, Uk = np.linalg.eigh(problem.K.toarray())
    A_mhalf = Ua @ np.diag(a ** -0.5) @ Ua.T
    K_mhalf = Uk @ np.diag(k ** -0.5) @ Uk.T
    return np.linalg.svd(K_mhalf @ problem.B.toarray() @ A_mhalf, compute_uv=False)


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
