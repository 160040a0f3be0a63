import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from perfpred.cli import default_start, main
from perfpred.domain import Hypercube
from perfpred.sweep import CSV_COLUMNS, SweepSpec, make_instance, rows_to_csv, run_sweep, start_point


def strip_wall(text):
    return [row[:-1] for row in csv.reader(io.StringIO(text))]


# sweep ---------------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(rho_min=2, rho_max=1)
    with pytest.raises(ValueError):
        SweepSpec(steps=0)
    with pytest.raises(ValueError):
        SweepSpec(eps=0)
    with pytest.raises(ValueError):
        SweepSpec(family="sine")
    with pytest.raises(ValueError):
        SweepSpec(solvers=("newton",))


def test_rho_grid_hits_one_exactly():
    assert 1.0 in SweepSpec().rho_grid()
    assert SweepSpec(rho_min=0.7, rho_max=0.7, steps=1).rho_grid() == [0.7]


@pytest.mark.parametrize("family", ["negation-scaled", "affine-random"])
@pytest.mark.parametrize("rho", [0.5, 1.0, 1.3])
def test_instance_lipschitz_is_rho(family, rho):
    inst = make_instance(family, rho, 3, seed=4)
    assert inst.rho == pytest.approx(rho, abs=1e-9)


def test_rrm_iteration_count_at_rho_09():
    spec = SweepSpec(rho_min=0.9, rho_max=0.9, steps=1, solvers=("rrm",), eps=1e-6)
    row = run_sweep(spec)[0]
    x0 = start_point(2, 0)
    # ||x_t - G(x_t)|| = 1.9 * 0.9^t ||x0|| on the interior
    expected = math.ceil(math.log(1e-6 / (1.9 * np.linalg.norm(x0))) / math.log(0.9))
    assert row["status"] == "converged"
    assert int(row["iterations"]) == expected
    assert int(row["erm_queries"]) == expected + 1


def test_regimes_at_rho_one():
    spec = SweepSpec(rho_min=1.0, rho_max=1.0, steps=1, solvers=("rrm", "halpern"))
    rrm, halpern = run_sweep(spec)
    assert rrm["status"] == "cycling"
    assert halpern["status"] == "converged"


def test_csv_schema_and_determinism():
    spec = SweepSpec(steps=5, solvers=("rrm", "halpern", "ellipsoid"), repeats=2, max_iter=300)
    a = rows_to_csv(run_sweep(spec))
    b = rows_to_csv(run_sweep(spec, threads=4))
    assert a.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert strip_wall(a) == strip_wall(b)
    keys = [(float(r[1]), spec.solvers.index(r[2]), int(r[3])) for r in strip_wall(a)[1:]]
    assert keys == sorted(keys)


def test_affine_family_deterministic():
    spec = SweepSpec(family="affine-random", d=3, steps=3, seed=7)
    assert strip_wall(rows_to_csv(run_sweep(spec))) == strip_wall(rows_to_csv(run_sweep(spec)))


# CLI ---------------------------------------------------------------------------------------

@pytest.fixture
def example_instance(tmp_path):
    path = tmp_path / "example.json"
    path.write_text(json.dumps({"domain": {"type": "hypercube", "lower": [-1, -1],
                                           "upper": [1, 1]},
                                "shift": {"type": "negation"}}))
    return path


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    return code, capsys.readouterr()


def test_solve_cycling_exit_code(capsys, example_instance):
    code, out = run_cli(capsys, "solve", "--instance", example_instance, "--solver", "rrm")
    assert code == 3
    assert json.loads(out.out)["status"] == "cycling"


def test_solve_halpern_converges(capsys, example_instance, tmp_path):
    out_file = tmp_path / "rep.json"
    code, _ = run_cli(capsys, "solve", "--instance", example_instance, "--solver", "halpern",
                      "--eps", 1e-6, "--out", out_file)
    assert code == 0
    rep = json.loads(out_file.read_text())
    assert rep["status"] == "converged" and rep["ermQueries"] == rep["iters"] + 1


def test_default_start_is_inside_and_off_center():
    dom = Hypercube.symmetric(3)
    x = default_start(dom)
    assert dom.contains(x) and np.linalg.norm(x - dom.center) > 0


def test_bad_input_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli(capsys, "solve", "--instance", bad)[0] == 2
    assert run_cli(capsys, "solve", "--instance", tmp_path / "missing.json")[0] == 2
    bad.write_text(json.dumps({"domain": {"type": "cone"}, "shift": {"type": "negation"}}))
    assert run_cli(capsys, "solve", "--instance", bad)[0] == 2
    assert run_cli(capsys, "frobnicate")[0] == 2


def test_solve_rejects_start_outside(capsys, example_instance):
    code, out = run_cli(capsys, "solve", "--instance", example_instance, "--x0", "3,0")
    assert code == 2 and "outside" in out.err


def test_reduce_vi(capsys, tmp_path):
    src = tmp_path / "vi.json"
    src.write_text(json.dumps({"A": [[0.5, 0], [0, 0.5]], "b": [0.1, -0.2]}))
    code, out = run_cli(capsys, "reduce", "--from", "vi", "--input", src, "--eps", 0.001,
                        "--eps-prime", 0.01)
    assert code == 0
    prov = json.loads(out.out)["provenance"]
    assert prov["lambda"] == pytest.approx(0.1) and prov["epsPrime"] == 0.01
    assert run_cli(capsys, "reduce", "--from", "vi", "--input", src)[0] == 2


def test_reduce_fp_round_trips_to_solve(capsys, tmp_path):
    src = tmp_path / "fp.json"
    src.write_text(json.dumps({"domain": {"type": "ball", "center": [0, 0], "radius": 1},
                               "map": {"type": "negation"}}))
    inst_file = tmp_path / "inst.json"
    code, _ = run_cli(capsys, "reduce", "--from", "fp", "--input", src, "--eps", 0.05,
                      "--eps-prime", 0.1, "--out", inst_file)
    assert code == 0
    code, out = run_cli(capsys, "solve", "--instance", inst_file, "--solver", "rrm")
    assert code == 0 and json.loads(out.out)["status"] == "converged"


def test_reduce_game(capsys, tmp_path):
    src = tmp_path / "game.json"
    src.write_text(json.dumps({"A": [[1, 0], [0, 1]], "B": [[0, 1], [1, 0]]}))
    code, out = run_cli(capsys, "reduce", "--from", "game", "--input", src, "--M", 10)
    assert code == 0
    res = json.loads(out.out)
    assert res["starCosts"] == [[10, 20], [20, 10]]
    assert res["provenance"]["M"] == 10
    assert all(e["verified"] for e in res["equilibria"])


def test_sperner_planted(capsys, tmp_path):
    col = tmp_path / "planted.json"
    col.write_text(json.dumps({"type": "planted", "q0": 5, "r0": 4}))
    code, out = run_cli(capsys, "sperner", "--n", 4, "--coloring", col)
    assert code == 0
    res = json.loads(out.out)
    assert res["triangle"] == [[5, 4], [5, 5], [6, 4]]
    assert res["bruteForce"] == [res["triangle"]]


def test_sperner_inadmissible(capsys, tmp_path):
    table = np.ones((9, 9), dtype=int).tolist()
    col = tmp_path / "table.json"
    col.write_text(json.dumps({"type": "table", "table": table}))
    code, out = run_cli(capsys, "sperner", "--n", 3, "--coloring", col)
    assert code == 1 and json.loads(out.out)["admissible"] is False


def test_stratclass_k3(capsys, tmp_path):
    g = tmp_path / "k3.json"
    g.write_text(json.dumps({"vertices": ["a", "b", "c"],
                             "edges": [{"u": "a", "v": "b", "w": 1}, {"u": "b", "v": "c", "w": 1},
                                       {"u": "a", "v": "c", "w": 1}]}))
    code, out = run_cli(capsys, "stratclass", "--graph", g, "--starts", 6)
    assert code == 0
    res = json.loads(out.out)
    assert res["bestCutWeight"] == 2 and res["allLocalMaxCut"]
    assert len(res["runs"]) == 6


def test_sweep_cli_uses_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("PERFPRED_OUTPUT_DIR", str(tmp_path / "out"))
    code, _ = run_cli(capsys, "sweep", "--steps", 3, "--out", "s.csv", "--threads", 2)
    assert code == 0
    text = (tmp_path / "out" / "s.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    meta = json.loads((tmp_path / "out" / "s.csv.meta.json").read_text())
    assert meta["generator"].startswith("numpy")


def test_module_entry_point(example_instance):
    proc = subprocess.run([sys.executable, "-m", "perfpred", "solve", "--instance",
                           str(example_instance)], capture_output=True, text=True)
    assert proc.returncode == 3
    assert json.loads(proc.stdout)["status"] == "cycling"
