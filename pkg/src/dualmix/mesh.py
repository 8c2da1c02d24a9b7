"""Triangular meshes with a global edge orientation.

Triangles are stored counter-clockwise.  Local edge ``i`` of a triangle is the
edge opposite its local vertex ``i``.  Every edge ``(a, b)`` is stored with
``a < b`` and carries the global unit normal obtained by rotating ``b - a``
by 90 degrees clockwise.  ``tri_edge_signs[t, i]`` is +1 when the outward
normal of triangle ``t`` on its local edge ``i`` coincides with that global
normal and -1 otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid or unreadable meshes."""


DOMAIN_AREA = {"unit_square": 1.0, "l_shape": 3.0}


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counter-clockwise
    edges: np.ndarray  # (ne, 2), a < b
    tri_edges: np.ndarray  # (nt, 3), local edge i is opposite local vertex i
    tri_edge_signs: np.ndarray  # (nt, 3) in {+1, -1}
    edge_tris: np.ndarray  # (ne, 2), second entry -1 on the boundary
    boundary_vertex: np.ndarray  # (nv,) bool
    boundary_edge: np.ndarray  # (ne,) bool
    domain_tag: str = "imported"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex)

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_normals(self) -> np.ndarray:
        """Global unit normals, clockwise rotation of the a -> b direction."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        d /= np.hypot(d[:, 0], d[:, 1])[:, None]
        return np.column_stack([d[:, 1], -d[:, 0]])

    @property
    def h(self) -> float:
        """Largest edge length."""
        return float(self.edge_lengths.max())

    def bary_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        area2 = 2.0 * self.areas
        grads = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / area2
            grads[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / area2
        return grads

    def locate(self, point, tol: float = 1e-12) -> int:
        """Index of the lowest-numbered triangle containing ``point``."""
        lam = barycentric(self, np.asarray(point, dtype=float))
        inside = np.flatnonzero((lam >= -tol).all(axis=1))
        if inside.size == 0:
            raise MeshError(f"point {tuple(point)} lies outside the mesh")
        return int(inside[0])


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def barycentric(mesh: Mesh, point: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of one point with respect to every triangle."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.areas
    lam = np.empty((mesh.n_triangles, 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        a, b = p[:, j], p[:, k]
        lam[:, i] = ((b[:, 0] - a[:, 0]) * (point[1] - a[:, 1])
                     - (b[:, 1] - a[:, 1]) * (point[0] - a[:, 0])) / area2
    return lam


def build_mesh(vertices, triangles, domain_tag: str = "imported",
               boundary_vertices=None) -> Mesh:
    """Assemble edge topology for a vertex/triangle table.

    Clockwise triangles are flipped.  Degenerate triangles and dangling
    vertex indices are rejected.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    nv = len(vertices)
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        bad = int(np.flatnonzero(((triangles < 0) | (triangles >= nv)).any(axis=1))[0])
        raise MeshError(f"triangle {bad}: vertex index out of range "
                        f"({triangles[bad].tolist()} with {nv} vertices)")

    area = signed_areas(vertices, triangles)
    scale = max(float(np.ptp(vertices, axis=0).max()), 1.0) ** 2 if nv else 1.0
    degenerate = np.flatnonzero(np.abs(area) <= 1e-14 * scale)
    if degenerate.size:
        t = int(degenerate[0])
        raise MeshError(f"triangle {t} has zero area ({triangles[t].tolist()})")
    cw = area < 0
    triangles[cw] = triangles[cw][:, [0, 2, 1]]

    # local edge i joins local vertices i+1 -> i+2
    start = triangles[:, [1, 2, 0]]
    end = triangles[:, [2, 0, 1]]
    lo = np.minimum(start, end).ravel()
    hi = np.maximum(start, end).ravel()
    edges, inverse, counts = np.unique(np.column_stack([lo, hi]), axis=0,
                                       return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if (counts > 2).any():
        e = int(np.flatnonzero(counts > 2)[0])
        raise MeshError(f"edge {edges[e].tolist()} is shared by more than two triangles")
    tri_edges = inverse.reshape(-1, 3)
    tri_edge_signs = np.where(start < end, 1, -1).astype(np.int8)

    ne = len(edges)
    edge_tris = -np.ones((ne, 2), dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    slot = np.zeros(len(inverse), dtype=np.int64)
    sorted_e = inverse[order]
    first = np.r_[True, sorted_e[1:] != sorted_e[:-1]]
    slot[order[~first]] = 1
    edge_tris[inverse, slot] = np.repeat(np.arange(len(triangles)), 3)

    boundary_edge = edge_tris[:, 1] < 0
    if boundary_vertices is None:
        boundary_vertex = np.zeros(nv, dtype=bool)
        boundary_vertex[edges[boundary_edge].ravel()] = True
    else:
        boundary_vertex = np.zeros(nv, dtype=bool)
        idx = np.asarray(boundary_vertices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= nv):
            raise MeshError("boundary_vertices: vertex index out of range")
        boundary_vertex[idx] = True

    arrays = [vertices, triangles, edges, tri_edges, tri_edge_signs,
              edge_tris, boundary_vertex, boundary_edge]
    for a in arrays:
        a.setflags(write=False)
    return Mesh(*arrays, domain_tag=domain_tag)


def validate(mesh: Mesh, simply_connected: bool = True) -> None:
    """Check the structural invariants; raise MeshError on the first failure."""
    area = mesh.areas
    if (area <= 0).any():
        raise MeshError(f"triangle {int(np.argmin(area))} is not counter-clockwise")
    et = mesh.edge_tris
    interior = et[:, 1] >= 0
    if not np.array_equal(~interior, mesh.boundary_edge):
        raise MeshError("boundary_edge flags disagree with edge incidence")
    # opposite signs on interior edges
    sign = np.zeros((mesh.n_edges, 2))
    for col in range(2):
        t = et[interior, col]
        local = np.argmax(mesh.tri_edges[t] == np.flatnonzero(interior)[:, None], axis=1)
        sign[interior, col] = mesh.tri_edge_signs[t, local]
    bad = np.flatnonzero(interior & (sign[:, 0] + sign[:, 1] != 0))
    if bad.size:
        raise MeshError(f"edge {int(bad[0])}: incident signs are not opposite")
    if simply_connected:
        euler = mesh.n_vertices - mesh.n_edges + mesh.n_triangles
        if euler != 1:
            raise MeshError(f"Euler characteristic {euler} != 1")
    if mesh.domain_tag in DOMAIN_AREA:
        target = DOMAIN_AREA[mesh.domain_tag]
        if abs(area.sum() - target) > 1e-13 * target:
            raise MeshError(f"total area {area.sum()!r} differs from {target}")


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise MeshError(f"number of subdivisions must be a positive integer, got {n!r}")


def _grid(n: int, x0: float = 0.0, y0: float = 0.0, size: float = 1.0):
    t = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(x0 + size * t, y0 + size * t)
    return np.column_stack([x.ravel(), y.ravel()])


def gen_crossed(n: int) -> Mesh:
    """Unit square, n x n cells, each cut into four triangles through its center."""
    _check_n(n)
    grid = _grid(n)
    h = 1.0 / n
    cx, cy = np.meshgrid((np.arange(n) + 0.5) * h, (np.arange(n) + 0.5) * h)
    vertices = np.vstack([grid, np.column_stack([cx.ravel(), cy.ravel()])])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    ll = j * (n + 1) + i
    lr, ul = ll + 1, ll + n + 1
    ur = ul + 1
    c = (n + 1) ** 2 + j * n + i
    tris = np.stack([np.column_stack([ll, lr, c]), np.column_stack([lr, ur, c]),
                     np.column_stack([ur, ul, c]), np.column_stack([ul, ll, c])], axis=1)
    return build_mesh(vertices, tris.reshape(-1, 3), "unit_square")


def _right_cells(n_side: int, keep) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.meshgrid(np.arange(n_side), np.arange(n_side))
    i, j = i.ravel(), j.ravel()
    mask = keep(i, j)
    i, j = i[mask], j[mask]
    ll = j * (n_side + 1) + i
    lr, ul = ll + 1, ll + n_side + 1
    ur = ul + 1
    tris = np.stack([np.column_stack([ll, lr, ur]), np.column_stack([ll, ur, ul])], axis=1)
    return tris.reshape(-1, 3)


def gen_right(n: int) -> Mesh:
    """Unit square, n x n cells, each cut by its lower-left to upper-right diagonal."""
    _check_n(n)
    tris = _right_cells(n, lambda i, j: np.ones_like(i, dtype=bool))
    return build_mesh(_grid(n), tris, "unit_square")


def gen_lshape(n: int) -> Mesh:
    """(-1,1)^2 minus (0,1)x(-1,0), right pattern with n cells per unit length."""
    _check_n(n)
    m = 2 * n
    grid = _grid(m, -1.0, -1.0, 2.0)
    # drop cells in the removed quadrant (x > 0, y < 0)
    tris = _right_cells(m, lambda i, j: ~((i >= n) & (j < n)))
    used = np.unique(tris)
    renumber = -np.ones(len(grid), dtype=np.int64)
    renumber[used] = np.arange(len(used))
    return build_mesh(grid[used], renumber[tris], "l_shape")


def uniform_refine(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle split into four through edge midpoints."""
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    v = mesh.triangles
    m = nv + mesh.tri_edges  # m[:, i] is the midpoint opposite vertex i
    children = np.stack([
        np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([v[:, 1], m[:, 0], m[:, 2]]),
        np.column_stack([v[:, 2], m[:, 1], m[:, 0]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ], axis=1)
    return build_mesh(vertices, children.reshape(-1, 3), mesh.domain_tag)


def import_mesh(path, format: str | None = None) -> Mesh:
    """Read a mesh in ``internal_json`` or ``triangle_pair`` format.

    For ``triangle_pair`` the path may name the ``.node`` file, the ``.ele``
    file, or their common stem.
    """
    path = Path(path)
    if format is None:
        format = "internal_json" if path.suffix == ".json" else "triangle_pair"
    if format == "internal_json":
        return _read_json(path)
    if format == "triangle_pair":
        return _read_triangle(path)
    raise MeshError(f"unknown mesh format {format!r}; use internal_json or triangle_pair")


def _read_json(path: Path) -> Mesh:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise MeshError(f"mesh file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: invalid JSON ({exc})") from None
    try:
        vertices = np.array(data["vertices"], dtype=float)
        triangles = np.array(data["triangles"], dtype=np.int64)
    except KeyError as exc:
        raise MeshError(f"{path}: missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise MeshError(f"{path}: malformed vertex or triangle table ({exc})") from None
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError(f"{path}: vertices must be [x, y] pairs")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError(f"{path}: triangles must be [i, j, k] triples")
    return build_mesh(vertices, triangles, "imported", data.get("boundary_vertices"))


def _numeric_lines(path: Path) -> list[list[str]]:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise MeshError(f"mesh file not found: {path}") from None
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise MeshError(f"{path}: empty file")
    return rows


def _read_triangle(path: Path) -> Mesh:
    stem = path.with_suffix("") if path.suffix in (".node", ".ele") else path
    node_rows = _numeric_lines(stem.with_suffix(".node"))
    ele_rows = _numeric_lines(stem.with_suffix(".ele"))
    try:
        n_points = int(node_rows[0][0])
        n_tris = int(ele_rows[0][0])
        nodes = node_rows[1:1 + n_points]
        eles = ele_rows[1:1 + n_tris]
        if len(nodes) != n_points or len(eles) != n_tris:
            raise MeshError(f"{stem}: header counts do not match the number of rows")
        ids = [int(r[0]) for r in nodes]
        vertices = np.array([[float(r[1]), float(r[2])] for r in nodes])
        base = min(ids) if ids else 1
        triangles = np.array([[int(v) - base for v in r[1:4]] for r in eles], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{stem}: cannot parse node/element tables ({exc})") from None
    return build_mesh(vertices, triangles, "imported")


def write_json(mesh: Mesh, path) -> None:
    data = {"vertices": mesh.vertices.tolist(), "triangles": mesh.triangles.tolist()}
    Path(path).write_text(json.dumps(data))


def family(name: str, n: int) -> Mesh:
    """Structured mesh by family name."""
    makers = {"crossed": gen_crossed, "right": gen_right, "lshape": gen_lshape}
    try:
        return makers[name](n)
    except KeyError:
        raise MeshError(f"unknown mesh family {name!r}; expected one of {sorted(makers)}") from None


FAMILY_START = {"crossed": 2, "right": 4, "lshape": 2}


def nominal_h(mesh: Mesh) -> float:
    """sqrt(2 * mean triangle area); equals 1/n on the right-pattern meshes."""
    return float(np.sqrt(2.0 * mesh.areas.mean()))


def mesh_sequence(spec: str, levels: int | None = None, ns=None):
    """Meshes and nominal sizes for a family name or a ``file:`` source.

    Family names give n = start * 2**k (or the explicit ``ns``) with h = 1/n.
    ``file:path`` with a ``{level}`` placeholder reads one file per level
    (levels counted from 1); without the placeholder the file is read once
    and uniformly refined ``levels - 1`` times.  Imported meshes use
    ``nominal_h`` as their size.
    """
    if spec.startswith("file:"):
        path = spec[len("file:"):]
        if not path:
            raise MeshError("empty path in 'file:' mesh source")
        if ns is not None:
            raise MeshError("file: mesh sources take a level count, not resolutions n")
        count = 1 if levels is None else int(levels)
        if count < 1:
            raise MeshError(f"levels must be at least 1, got {levels}")
        if "{level}" in path:
            meshes = [import_mesh(path.format(level=k)) for k in range(1, count + 1)]
        else:
            meshes = [import_mesh(path)]
            for _ in range(count - 1):
                meshes.append(uniform_refine(meshes[-1]))
        return [(m, nominal_h(m)) for m in meshes]
    if spec not in FAMILY_START:
        raise MeshError(f"unknown mesh {spec!r}; expected crossed, right, lshape or file:<path>")
    if ns is None:
        count = 5 if levels is None else int(levels)
        if count < 1:
            raise MeshError(f"levels must be at least 1, got {levels}")
        ns = [FAMILY_START[spec] * 2 ** k for k in range(count)]
    return [(family(spec, int(n)), 1.0 / int(n)) for n in ns]
