"""Error norms, convergence studies and the reproduction drivers."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import Dirac
from .fespace import QUAD5, FeSpace, p1_gradients, p1_values, quad_points, rt0_values
from .infsup import fit_slope
from .mesh import Mesh, mesh_sequence
from .problems import DualMixed


@dataclass(frozen=True)
class ExactSolution:
    name: str
    u: Callable
    grad: Callable  # returns (ux, uy)
    f: Callable
    dirichlet: bool = False  # nonzero boundary data

    def check_pde(self, points, step: float = 1e-4, rtol: float = 1e-4) -> float:
        """Largest relative defect of -Laplace(u) = f by central differences."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        lap = (self.u(x + step, y) + self.u(x - step, y) + self.u(x, y + step)
               + self.u(x, y - step) - 4.0 * self.u(x, y)) / step ** 2
        f = self.f(x, y)
        scale = max(np.abs(f).max(), np.abs(lap).max(), 1.0)
        defect = float(np.abs(-lap - f).max() / scale)
        if defect > rtol:
            raise AssertionError(f"{self.name}: -Laplace(u) != f (relative defect {defect:.2e})")
        return defect


def smooth_square() -> ExactSolution:
    pi = np.pi
    return ExactSolution(
        "smooth-square",
        lambda x, y: np.sin(pi * x) * np.sin(2 * pi * y),
        lambda x, y: (pi * np.cos(pi * x) * np.sin(2 * pi * y),
                      2 * pi * np.sin(pi * x) * np.cos(2 * pi * y)),
        lambda x, y: 5 * pi ** 2 * np.sin(pi * x) * np.sin(2 * pi * y),
    )


def _theta(x, y):
    # angle in [0, 2 pi); the L-shaped domain occupies [0, 3 pi / 2]
    return np.mod(np.arctan2(y, x), 2 * np.pi)


def singular_lshape() -> ExactSolution:
    def u(x, y):
        return np.hypot(x, y) ** (2 / 3) * np.sin(2 / 3 * _theta(x, y))

    def grad(x, y):
        r = np.hypot(x, y)
        th = _theta(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(r > 0, 2 / 3 * r ** (-1 / 3), 0.0)
        ur = c * np.sin(2 / 3 * th)
        ut = c * np.cos(2 / 3 * th)
        return (ur * np.cos(th) - ut * np.sin(th), ur * np.sin(th) + ut * np.cos(th))

    return ExactSolution("singular-lshape", u, grad, lambda x, y: np.zeros_like(x), dirichlet=True)


CASES = {"smooth-square": (smooth_square, "crossed"), "singular-lshape": (singular_lshape, "lshape")}


def error_norms(mesh: Mesh, sigma_h, u_h, exact: ExactSolution, v_kind: str = "RT0C"):
    """(|sigma - sigma_h|_0, |u - u_h|_0, |grad(u - u_h)|_0) with sigma = -grad u.

    ``u_h`` has one value per vertex; ``sigma_h`` is an RT0 coefficient
    vector, or None for sigma_h = -grad u_h.
    """
    x = quad_points(mesh, QUAD5)
    w = mesh.areas[:, None] * QUAD5.weights[None, :]
    ux, uy = exact.grad(x[..., 0], x[..., 1])
    gh = p1_gradients(mesh, np.asarray(u_h, dtype=float))
    if sigma_h is None:
        sx, sy = -gh[:, None, 0], -gh[:, None, 1]
    else:
        s = rt0_values(FeSpace(mesh, v_kind), np.asarray(sigma_h), QUAD5)
        sx, sy = s[..., 0], s[..., 1]
    e_sigma = np.sqrt((((-ux - sx) ** 2 + (-uy - sy) ** 2) * w).sum())
    e_u = np.sqrt((((exact.u(x[..., 0], x[..., 1]) - p1_values(mesh, u_h, QUAD5)) ** 2) * w).sum())
    e_grad = np.sqrt((((ux - gh[:, None, 0]) ** 2 + (uy - gh[:, None, 1]) ** 2) * w).sum())
    return float(e_sigma), float(e_u), float(e_grad)


@dataclass
class ConvergenceRow:
    dofs: int
    h: float
    sigma_err: float
    u_l2_err: float
    u_h1_err: float
    sigma_rate: float | None = None
    u_l2_rate: float | None = None
    u_h1_rate: float | None = None


@dataclass
class ConvergenceConfig:
    case: str = "smooth-square"
    mesh: str | None = None  # family name or file: source; defaults to the case's family
    levels: list | int = field(default_factory=lambda: [8, 16, 32, 64, 128])
    element: str = "RT0C"
    fit: str = "tail"  # "tail": slope of the last three rows, "all": every row

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {sorted(CASES)}")
        if self.fit not in ("tail", "all"):
            raise ValueError(f"fit must be 'tail' or 'all', got {self.fit!r}")
        if self.mesh is None:
            self.mesh = CASES[self.case][1]

    def meshes(self):
        if isinstance(self.levels, int):
            return mesh_sequence(self.mesh, levels=self.levels)
        if self.mesh.startswith("file:"):
            raise ValueError("file: mesh sources take a level count, not a list of n")
        return mesh_sequence(self.mesh, ns=list(self.levels))


def _rate(e0, e1, h0, h1):
    return float(np.log(e0 / e1) / np.log(h0 / h1))


def convergence_study(config: ConvergenceConfig):
    """Rows per level and the asymptotic rates (None with fewer than three rows)."""
    exact = CASES[config.case][0]()
    rows: list[ConvergenceRow] = []
    for mesh, h in config.meshes():
        problem = DualMixed(mesh, config.element)
        sol = problem.solve(exact.f, dirichlet=exact.u if exact.dirichlet else None)
        errs = error_norms(mesh, sol.sigma, sol.u, exact, config.element)
        row = ConvergenceRow(mesh.n_vertices, h, *errs)
        if rows:
            prev = rows[-1]
            row.sigma_rate = _rate(prev.sigma_err, row.sigma_err, prev.h, row.h)
            row.u_l2_rate = _rate(prev.u_l2_err, row.u_l2_err, prev.h, row.h)
            row.u_h1_rate = _rate(prev.u_h1_err, row.u_h1_err, prev.h, row.h)
        rows.append(row)
    return rows, fitted_rates(rows, config.fit)


def fitted_rates(rows: list[ConvergenceRow], fit: str = "tail"):
    """Least-squares slopes for (sigma, u L2, u energy) errors against h."""
    if len(rows) < 3:
        return None
    used = rows[-3:] if fit == "tail" else rows
    hs = [r.h for r in used]
    return tuple(fit_slope(hs, [getattr(r, c) for r in used])
                 for c in ("sigma_err", "u_l2_err", "u_h1_err"))


CONVERGENCE_COLUMNS = ["dofs", "sigma_err", "u_l2_err", "u_h1_err",
                       "sigma_rate", "u_l2_rate", "u_h1_rate"]
INFSUP_COLUMNS = ["level", "h", "n_label", "mu_m3", "mu_m2", "mu_m1", "mu_min", "beta_h"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if np.isnan(v):
        return ""
    return f"{float(v):.10g}"


def write_csv(path_or_buf, columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path_or_buf is not None:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
    return text


def convergence_csv(rows: list[ConvergenceRow], path=None) -> str:
    return write_csv(path, CONVERGENCE_COLUMNS,
                     [[getattr(r, c) for c in CONVERGENCE_COLUMNS] for r in rows])


def infsup_csv(table_rows, path=None) -> str:
    return write_csv(path, INFSUP_COLUMNS,
                     [[r["level"], r["h"], r["n_label"], *r["mu"], r["beta_h"]] for r in table_rows])


# -- spurious oscillations -------------------------------------------------

DEMO_LOADS = {
    "dirac-1/3-1/5": Dirac((1 / 3, 1 / 5)),
    "dirac-center": Dirac((0.5, 0.5)),
    "smooth": lambda x, y: x - 3 * y + np.sin(x),
}


def h1_norm(mesh: Mesh, u) -> float:
    """Full H1 norm of a vertex-indexed P1 field."""
    g = p1_gradients(mesh, u)
    vals = p1_values(mesh, u, QUAD5)
    l2 = (vals ** 2 * mesh.areas[:, None] * QUAD5.weights).sum()
    return float(np.sqrt(l2 + ((g ** 2).sum(axis=1) * mesh.areas).sum()))


def spurious_solution_demo(source: str, load: str, levels, element: str = "RT0C"):
    """Mixed and Galerkin solutions per level with the oscillation index

    |u_h - u_G|_H1 / |u_G|_H1.

    ``source`` is a family name or ``file:`` source; ``levels`` is a list of
    resolutions n for a family, or a level count.
    """
    if load not in DEMO_LOADS:
        raise ValueError(f"unknown load {load!r}; expected one of {sorted(DEMO_LOADS)}")
    f = DEMO_LOADS[load]
    if isinstance(levels, int):
        meshes = mesh_sequence(source, levels=levels)
    else:
        meshes = mesh_sequence(source, ns=list(levels))
    out = []
    for level, (mesh, h) in enumerate(meshes, start=1):
        problem = DualMixed(mesh, element)
        u_h = problem.solve(f).u
        u_G = problem.galerkin(f)
        index = h1_norm(mesh, u_h - u_G) / h1_norm(mesh, u_G)
        out.append({"level": level, "h": h, "mesh": mesh, "u_h": u_h, "u_G": u_G, "index": index})
    return out
