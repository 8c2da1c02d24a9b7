"""Write unstructured triangle meshes in the Triangle .node/.ele format.

Vertices are the structured grid points with every interior point moved by a
random offset of up to 0.35 h in each direction; the triangulation is the
Delaunay triangulation of that point cloud, clipped to the L-shaped domain
when needed.  The files are meant to be read back with ``import_mesh``.

    python tools/scatter_mesh.py --domain lshape --n 8 16 32 --seed 0 --out meshes/l
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from dualmix.mesh import build_mesh, gen_lshape, gen_right, signed_areas, validate

JITTER = 0.35


def scatter_points(domain: str, n: int, seed: int) -> np.ndarray:
    grid = {"square": gen_right, "lshape": gen_lshape}[domain](n)
    rng = np.random.default_rng(seed)
    v = np.array(grid.vertices)
    inner = ~grid.boundary_vertex
    v[inner] += rng.uniform(-JITTER, JITTER, (np.count_nonzero(inner), 2)) / n
    return v


def triangulate(domain: str, n: int, seed: int):
    v = scatter_points(domain, n, seed)
    tri = Delaunay(v).simplices
    if domain == "lshape":
        c = v[tri].mean(axis=1)
        tri = tri[~((c[:, 0] > 0) & (c[:, 1] < 0))]
    tri = tri[np.abs(signed_areas(v, tri)) > 1e-14]
    mesh = build_mesh(v, tri, "l_shape" if domain == "lshape" else "unit_square")
    validate(mesh)
    return mesh


def write_triangle(mesh, stem) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    with stem.with_suffix(".node").open("w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 1\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i} {x:.17g} {y:.17g} {int(mesh.boundary_vertex[i])}\n")
    with stem.with_suffix(".ele").open("w") as fh:
        fh.write(f"{mesh.n_triangles} 3 0\n")
        for t, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{t} {a} {b} {c}\n")


def write_sequence(domain: str, ns, seed: int, out) -> list[Path]:
    """One independent mesh per n, written to ``{out}_{level}.node/.ele``."""
    stems = []
    for level, n in enumerate(ns, start=1):
        stem = Path(f"{out}_{level}")
        write_triangle(triangulate(domain, n, 1000 * seed + n), stem)
        stems.append(stem)
    return stems


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domain", choices=["square", "lshape"], default="lshape")
    ap.add_argument("--n", type=int, nargs="+", required=True, help="grid resolutions")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="output stem; files are {out}_{level}.node/.ele")
    args = ap.parse_args(argv)
    for stem in write_sequence(args.domain, args.n, args.seed, args.out):
        print(stem)
    return 0


if __name__ == "__main__":
    sys.exit(main())
