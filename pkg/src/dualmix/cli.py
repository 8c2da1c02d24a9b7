"""Command line driver: every subcommand writes CSV/JSON into an output directory.

Options can come from flags or from a JSON object given with ``--config``;
keys are the long flag names with dashes replaced by underscores, and flags
given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as X
from .assembly import PiecewiseConstant, source_p0
from .equilibration import (EquilibrationError, fortin_defect, galerkin_p0, patch_closure_defects,
                            reconstruct, write_flux_csv, write_residual_json)
from .fespace import l2_project_p0
from .infsup import (infsup_rows, infsup_spectrum, p1p0_infsup, representation, solve_split,
                     split)
from .mesh import MeshError, mesh_sequence, write_json
from .problems import DualMixed
from .solvers import SolverError

LOADS = sorted(X.DEMO_LOADS) + ["random"]

# per-subcommand defaults; the common keys apply everywhere
COMMON = {"out": "out", "seed": 0, "mesh": "crossed", "levels": None, "start": None,
          "ns": None, "element": "rt0c"}
DEFAULTS = {
    "mesh": {"levels": 3},
    "solve": {"start": 8, "levels": 1, "load": "smooth"},
    "infsup": {"levels": 5},
    "split": {"start": 8, "levels": 1, "load": "smooth", "threshold": 0.5},
    "alpha": {"start": 8, "levels": 1, "load": "dirac-center"},
    "p1p0": {"mesh": "right", "start": 2, "levels": 6},
    "equilibrate": {"start": 8, "levels": 1, "load": "random"},
    "convergence": {"case": "smooth-square", "mesh": None, "start": 8, "levels": 5, "fit": "tail"},
    "demo": {"start": 10, "levels": 3, "load": "dirac-center"},
}


class CliError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="seed for randomized loads (default: 0)")
    common.add_argument("--mesh", help="crossed, right, lshape or file:<path>; "
                        "a {level} placeholder in the path reads one file per level")
    common.add_argument("--levels", type=int, help="number of mesh levels")
    common.add_argument("--start", type=int, help="resolution n of the first level; n doubles per level")
    common.add_argument("--ns", type=int, nargs="+", help="explicit resolutions n (overrides --start/--levels)")
    common.add_argument("--element", choices=["rt0c", "drt0"], help="velocity space (default: rt0c)")

    ap = argparse.ArgumentParser(prog="dualmix", description="Dual mixed RT0-P1 experiments.")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.add_parser("mesh", parents=[common], argument_default=argparse.SUPPRESS, help="write meshes as JSON and a size summary")
    p = sub.add_parser("solve", parents=[common], argument_default=argparse.SUPPRESS, help="mixed and Galerkin solutions on one mesh")
    p.add_argument("--load", choices=LOADS)
    sub.add_parser("infsup", parents=[common], argument_default=argparse.SUPPRESS, help="smallest inf-sup eigenvalues per level")
    p = sub.add_parser("split", parents=[common], argument_default=argparse.SUPPRESS, help="stable/unstable splitting of the solution")
    p.add_argument("--load", choices=LOADS)
    p.add_argument("--threshold", type=float, help="eigenvalue threshold in (0, 1) (default: 0.5)")
    p = sub.add_parser("alpha", parents=[common], argument_default=argparse.SUPPRESS, help="load coefficients in the inf-sup eigenbasis")
    p.add_argument("--load", choices=LOADS)
    sub.add_parser("p1p0", parents=[common], argument_default=argparse.SUPPRESS, help="P1-P0 inf-sup eigenvalue per level")
    p = sub.add_parser("equilibrate", parents=[common], argument_default=argparse.SUPPRESS, help="equilibrated flux of a Galerkin solution")
    p.add_argument("--load", choices=LOADS)
    p = sub.add_parser("convergence", parents=[common], argument_default=argparse.SUPPRESS, help="error table against an exact solution")
    p.add_argument("--case", choices=sorted(X.CASES))
    p.add_argument("--fit", choices=["tail", "all"], help="rows used for the fitted rates (default: tail)")
    p = sub.add_parser("demo", parents=[common], argument_default=argparse.SUPPRESS, help="oscillation index of mixed vs Galerkin solutions")
    p.add_argument("--load", choices=sorted(X.DEMO_LOADS))
    return ap


def _options(ap: argparse.ArgumentParser, argv) -> dict:
    args = vars(ap.parse_args(argv))
    command = args.pop("command")
    if command is None:
        raise CliError("missing command")
    opts = {**COMMON, **DEFAULTS[command]}
    config = args.pop("config", None)
    if config is not None:
        try:
            data = json.loads(Path(config).read_text())
        except FileNotFoundError:
            raise CliError(f"config file not found: {config}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config {config}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise CliError(f"config {config}: expected a JSON object")
        unknown = sorted(set(data) - set(opts) - {"command"})
        if unknown:
            raise CliError(f"config {config}: unknown key {unknown[0]!r} for {command}; "
                           f"allowed: {', '.join(sorted(opts))}")
        if data.get("command", command) != command:
            raise CliError(f"config {config} is for {data['command']!r}, not {command!r}")
        data.pop("command", None)
        opts.update(data)
    opts.update(args)
    opts["command"] = command
    return opts


def _meshes(opts):
    spec = opts["mesh"]
    if opts["ns"] is not None:
        if spec.startswith("file:"):
            raise CliError("--ns applies to mesh families; use --levels with file: sources")
        return mesh_sequence(spec, ns=opts["ns"])
    if spec.startswith("file:") or opts["start"] is None:
        return mesh_sequence(spec, levels=opts["levels"])
    start, levels = int(opts["start"]), int(opts["levels"])
    if start < 1 or levels < 1:
        raise CliError("--start and --levels must be positive")
    return mesh_sequence(spec, ns=[start * 2 ** k for k in range(levels)])


def _load(name: str, mesh, seed: int):
    if name == "random":
        rng = np.random.default_rng(seed)
        return PiecewiseConstant(rng.uniform(-1.0, 1.0, mesh.n_triangles))
    if name not in X.DEMO_LOADS:
        raise CliError(f"unknown load {name!r}; expected one of {', '.join(LOADS)}")
    return X.DEMO_LOADS[name]


def _element(opts) -> str:
    return str(opts["element"]).upper()


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_mesh(opts, out: Path):
    rows = []
    for level, (mesh, h) in enumerate(_meshes(opts), start=1):
        write_json(mesh, out / f"mesh_{level}.json")
        rows.append([level, h, mesh.n_vertices, mesh.n_triangles, mesh.n_edges, mesh.h])
    X.write_csv(out / "meshes.csv", ["level", "h", "n_vertices", "n_triangles", "n_edges", "max_edge"], rows)


def cmd_solve(opts, out: Path):
    mesh, _ = _meshes(opts)[-1]
    problem = DualMixed(mesh, _element(opts))
    f = _load(opts["load"], mesh, opts["seed"])
    sol = problem.solve(f)
    u_G = problem.galerkin(f)
    rows = [[i, x, y, a, b] for i, ((x, y), a, b) in enumerate(zip(mesh.vertices, sol.u, u_G))]
    X.write_csv(out / "solution.csv", ["vertex", "x", "y", "u_h", "u_G"], rows)
    X.write_csv(out / "sigma.csv", ["dof", "coefficient"], list(enumerate(sol.sigma)))
    _write_json(out / "residual.json", {"residual_v": sol.residuals[0], "residual_q": sol.residuals[1],
                                        "oscillation_index": X.h1_norm(mesh, sol.u - u_G) / X.h1_norm(mesh, u_G)})


def cmd_infsup(opts, out: Path):
    X.infsup_csv(infsup_rows(_meshes(opts), _element(opts)), out / "infsup.csv")


def cmd_split(opts, out: Path):
    mesh, _ = _meshes(opts)[-1]
    problem = DualMixed(mesh, _element(opts))
    f = _load(opts["load"], mesh, opts["seed"])
    spectrum = infsup_spectrum(problem)
    parts = solve_split(split(spectrum, float(opts["threshold"])), f)
    sol = problem.solve(f)
    ds = sol.sigma - parts.sigma1 - parts.sigma2
    du = sol.u_dofs - parts.u1 - parts.u2
    _write_json(out / "split.json", {
        "threshold": float(opts["threshold"]), "n_stable": int(parts.blocks["A11"].shape[0]),
        "n_total": spectrum.n, "sigma_defect": float(np.sqrt(ds @ (problem.A @ ds))),
        "u_defect": float(np.sqrt(du @ (problem.K @ du)))})


def cmd_alpha(opts, out: Path):
    mesh, _ = _meshes(opts)[-1]
    spectrum = infsup_spectrum(mesh, _element(opts))
    rep = representation(spectrum, _load(opts["load"], mesh, opts["seed"]))
    rows = [[i, m, a] for i, (m, a) in enumerate(zip(spectrum.mu, rep.alpha), start=1)]
    X.write_csv(out / "alpha.csv", ["i", "mu", "alpha"], rows)


def cmd_p1p0(opts, out: Path):
    rows = []
    for level, (mesh, h) in enumerate(_meshes(opts), start=1):
        res = p1p0_infsup(mesh)
        rows.append([level, h, mesh.n_vertices, res.nu_min, res.zeta])
    X.write_csv(out / "p1p0.csv", ["level", "h", "n_label", "nu_min", "zeta"], rows)


def cmd_equilibrate(opts, out: Path):
    mesh, _ = _meshes(opts)[-1]
    f = _load(opts["load"], mesh, opts["seed"])
    g0 = source_p0(mesh, f)
    if g0 is None:
        g0 = l2_project_p0(mesh, f)
    u_h = galerkin_p0(mesh, g0)
    flux = reconstruct(mesh, u_h, g0)
    write_flux_csv(flux, out / "flux.csv")
    closure = patch_closure_defects(mesh, u_h, g0)
    write_residual_json(flux, out / "residual.json", {
        "fortin_defect": fortin_defect(mesh, u_h, flux),
        "max_closure_defect": float(np.abs(closure).max(initial=0.0))})


def cmd_convergence(opts, out: Path):
    levels = opts["levels"]
    kw = {"case": opts["case"], "mesh": opts["mesh"], "element": _element(opts), "fit": opts["fit"]}
    if opts["ns"] is not None:
        kw["levels"] = list(opts["ns"])
    elif opts["mesh"] is not None and opts["mesh"].startswith("file:"):
        kw["levels"] = int(levels)
    else:
        kw["levels"] = [int(opts["start"]) * 2 ** k for k in range(int(levels))]
    rows, rates = X.convergence_study(X.ConvergenceConfig(**kw))
    X.convergence_csv(rows, out / "convergence.csv")
    names = ("sigma", "u_l2", "u_h1")
    _write_json(out / "rates.json", None if rates is None else dict(zip(names, rates)))


def cmd_demo(opts, out: Path):
    if opts["ns"] is not None:
        levels = list(opts["ns"])
    elif opts["mesh"].startswith("file:"):
        levels = int(opts["levels"])
    else:
        levels = [int(opts["start"]) * 2 ** k for k in range(int(opts["levels"]))]
    results = X.spurious_solution_demo(opts["mesh"], opts["load"], levels, _element(opts))
    X.write_csv(out / "demo.csv", ["level", "h", "n_vertices", "index"],
                [[r["level"], r["h"], r["mesh"].n_vertices, r["index"]] for r in results])
    for r in results:
        rows = [[i, x, y, a, b] for i, ((x, y), a, b) in enumerate(zip(r["mesh"].vertices, r["u_h"], r["u_G"]))]
        X.write_csv(out / f"demo_{r['level']}.csv", ["vertex", "x", "y", "u_h", "u_G"], rows)


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "infsup": cmd_infsup, "split": cmd_split,
            "alpha": cmd_alpha, "p1p0": cmd_p1p0, "equilibrate": cmd_equilibrate,
            "convergence": cmd_convergence, "demo": cmd_demo}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = _parser()
    if not argv:
        ap.print_usage(sys.stderr)
        return 2
    try:
        opts = _options(ap, argv)
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[opts["command"]](opts, out)
    except SystemExit as exc:  # argparse reports its own one-line error
        return int(exc.code or 0)
    except (CliError, MeshError, SolverError, EquilibrationError, ValueError, OSError) as exc:
        print(f"dualmix {argv[0]}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
