import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dualmix.cli import main
from dualmix.experiments import CONVERGENCE_COLUMNS, INFSUP_COLUMNS

from scatter_mesh import write_sequence

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = sorted((ROOT / "configs").glob("*.json"))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_empty_argv_prints_usage(capsys):
    assert main([]) == 2
    assert capsys.readouterr().err.startswith("usage: dualmix")


def test_unknown_flag(capsys):
    assert main(["infsup", "--bogus"]) == 2
    err = capsys.readouterr().err
    assert "unrecognized arguments: --bogus" in err


def test_unknown_command(capsys):
    assert main(["frobnicate"]) == 2


@pytest.mark.parametrize("text,match", [
    ("{", "invalid JSON"),
    ("[1, 2]", "expected a JSON object"),
    ('{"levls": 3}', "unknown key 'levls'"),
    ('{"command": "p1p0"}', "is for 'p1p0'"),
])
def test_malformed_config(tmp_path, capsys, text, match):
    cfg = tmp_path / "c.json"
    cfg.write_text(text)
    assert main(["infsup", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert match in err and len(err.splitlines()) == 1


def test_missing_files(tmp_path, capsys):
    assert main(["infsup", "--config", str(tmp_path / "none.json")]) == 1
    assert "config file not found" in capsys.readouterr().err
    assert main(["infsup", "--mesh", f"file:{tmp_path}/none.json", "--out", str(tmp_path)]) == 1
    assert "not found" in capsys.readouterr().err


def test_bad_mesh_name(tmp_path, capsys):
    assert main(["mesh", "--mesh", "hexagon", "--out", str(tmp_path)]) == 1
    assert "unknown mesh" in capsys.readouterr().err


def test_infsup_crossed_table_shape(tmp_path):
    assert main(["infsup", "--mesh", "crossed", "--levels", "5", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "infsup.csv")
    assert rows[0] == INFSUP_COLUMNS
    assert len(rows) == 6
    assert [int(r[2]) for r in rows[1:]] == [13, 41, 145, 545, 2113]
    assert rows[1][3:7] == ["0.6666666667", "0.5", "0.5", "0.2222222222"]


def test_convergence_header(tmp_path):
    assert main(["convergence", "--case", "smooth-square", "--levels", "3", "--start", "4",
                 "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "convergence.csv")
    assert rows[0] == CONVERGENCE_COLUMNS and len(rows) == 4
    rates = json.loads((tmp_path / "rates.json").read_text())
    assert set(rates) == {"sigma", "u_l2", "u_h1"}


def test_single_level_convergence_has_null_rates(tmp_path):
    assert main(["convergence", "--ns", "4", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "rates.json").read_text()) is None


def test_every_subcommand_writes_outputs(tmp_path):
    expected = {
        "mesh": ["mesh_1.json", "mesh_2.json", "meshes.csv"],
        "solve": ["solution.csv", "sigma.csv", "residual.json"],
        "infsup": ["infsup.csv"],
        "split": ["split.json"],
        "alpha": ["alpha.csv"],
        "p1p0": ["p1p0.csv"],
        "equilibrate": ["flux.csv", "residual.json"],
        "convergence": ["convergence.csv", "rates.json"],
        "demo": ["demo.csv", "demo_1.csv", "demo_2.csv"],
    }
    for cmd, files in expected.items():
        out = tmp_path / cmd
        assert main([cmd, "--ns", "2", "4", "--out", str(out)]) == 0, cmd
        for name in files:
            assert (out / name).stat().st_size > 0, (cmd, name)


def test_solver_outputs_are_consistent(tmp_path):
    assert main(["split", "--ns", "4", "--load", "random", "--seed", "3", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "split.json").read_text())
    assert report["sigma_defect"] <= 1e-8 and report["u_defect"] <= 1e-8
    assert main(["equilibrate", "--mesh", "lshape", "--ns", "3", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "residual.json").read_text())
    assert report["max_div_error"] <= 1e-10 and report["max_jump"] <= 1e-10
    assert report["fortin_defect"] <= 1e-9
    assert main(["solve", "--element", "drt0", "--ns", "4", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "residual.json").read_text())["oscillation_index"] <= 1e-9


def test_seed_changes_random_load(tmp_path):
    for seed in (1, 2):
        assert main(["alpha", "--ns", "3", "--load", "random", "--seed", str(seed),
                     "--out", str(tmp_path / str(seed))]) == 0
    a = (tmp_path / "1" / "alpha.csv").read_bytes()
    b = (tmp_path / "2" / "alpha.csv").read_bytes()
    assert a != b


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mesh": "right", "levels": 2, "out": str(tmp_path / "cfg")}))
    assert main(["p1p0", "--config", str(cfg), "--levels", "3"]) == 0
    rows = _rows(tmp_path / "cfg" / "p1p0.csv")
    assert len(rows) == 4
    assert float(rows[1][3]) == pytest.approx(0.66666667, abs=1e-8)


def test_file_mesh_source(tmp_path):
    write_sequence("lshape", [4, 8], 0, tmp_path / "l")
    src = f"file:{tmp_path}/l_{{level}}"
    assert main(["infsup", "--mesh", src, "--levels", "2", "--out", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "infsup.csv")
    assert len(rows) == 3 and all(float(r[6]) > 0 for r in rows[1:])
    assert main(["demo", "--mesh", src, "--ns", "4", "--out", str(tmp_path)]) == 1


def test_repeated_runs_byte_identical(tmp_path):
    for run in ("a", "b"):
        for cmd in (["infsup", "--levels", "3"], ["alpha", "--ns", "4", "--load", "random"],
                    ["demo", "--ns", "4", "8"], ["convergence", "--ns", "4", "8", "16"]):
            assert main(cmd + ["--out", str(tmp_path / run / cmd[0])]) == 0
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_file():
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()


@pytest.mark.parametrize("config", CONFIGS, ids=[c.stem for c in CONFIGS])
def test_example_configs_run(tmp_path, monkeypatch, config):
    data = json.loads(config.read_text())
    monkeypatch.chdir(tmp_path)
    if data["mesh"].startswith("file:"):
        write_sequence("lshape", [8, 16, 32, 64, 128], 0, tmp_path / "meshes" / "lshape")
    assert main([data["command"], "--config", str(config)]) == 0
    assert any((tmp_path / data["out"]).iterdir())
    if data["command"] == "infsup":
        mins = np.array([float(r[6]) for r in _rows(tmp_path / data["out"] / "infsup.csv")[1:]])
        np.testing.assert_allclose(mins[:3], [0.22222222, 0.06604647, 0.01698587], atol=1e-6)
