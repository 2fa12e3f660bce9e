import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from drmdp.bench.machine import MachineReplacementConfig, generate_machine_problem
from drmdp.cli import EXIT_INPUT, EXIT_NONCONVERGED, EXIT_OK, main
from drmdp.io import dump_problem

DATA = Path(__file__).parent / "data"


def overlapping_problem():
    obj = json.loads((DATA / "point_chain.json").read_text())
    obj["states"][2]["ambiguity"] = {"type": "boxes", "boxes": [
        {"lo": [1, 1, 2.0, 1.0], "hi": [1, 1, 2.0, 2.5], "prob_lo": 0.2, "prob_hi": 0.5},
        {"lo": [1, 1, 2.0, 2.0], "hi": [1, 1, 2.0, 3.5], "prob_lo": 0.2, "prob_hi": 0.5},
        {"lo": [1, 1, 2.0, 0.0], "hi": [1, 1, 2.0, 4.0]}]}
    return obj


def test_solve_point_problem(tmp_path, capsys):
    out = tmp_path / "sol.json"
    assert main(["solve", "--problem", str(DATA / "point_chain.json"), "--out", str(out)]) == EXIT_OK
    sol = json.loads(out.read_text())
    assert sol["converged"] and sol["values"]["s2b"] == pytest.approx(2.0, abs=1e-7)
    man = json.loads((tmp_path / "sol.json.manifest.json").read_text())
    assert man["subcommand"] == "solve" and man["version"] and len(man["inputs"]) == 1
    assert "tolerances" in man and "timestamp" in man


def test_solve_machine_dr_nested(tmp_path):
    prob = tmp_path / "machine.json"
    dump_problem(generate_machine_problem(MachineReplacementConfig(variant="dr_nested")).problem, prob)
    out = tmp_path / "sol.json"
    assert main(["solve", "--problem", str(prob), "--out", str(out)]) == EXIT_OK
    pol = json.loads(out.read_text())["policy"]
    repairs = [i for i in range(1, 51) if pol[str(i)][0] > 0.5]
    assert repairs and repairs[0] == 50


def test_solve_reports_nonconvergence(tmp_path):
    prob = tmp_path / "p.json"
    from drmdp.bench.maze import MazeConfig, generate_maze_problem
    dump_problem(generate_maze_problem(MazeConfig(layout="S.E")).problem, prob)
    code = main(["solve", "--problem", str(prob), "--out", str(tmp_path / "s.json"), "--max-iter", "1"])
    assert code == EXIT_NONCONVERGED


def test_malformed_cone_exit_1(tmp_path, capsys):
    code = main(["solve", "--problem", str(DATA / "bad_cone.json"), "--out", str(tmp_path / "s.json")])
    assert code == EXIT_INPUT
    assert "/states/1/ambiguity/sets/0/cone" in capsys.readouterr().err


def test_verify(tmp_path, capsys):
    assert main(["verify", "--problem", str(DATA / "point_chain.json")]) == EXIT_OK
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(overlapping_problem()))
    assert main(["verify", "--problem", str(bad)]) == EXIT_INPUT
    err = capsys.readouterr().out
    assert "FAIL" in err and "0" in err and "1" in err


def test_verify_disjoint_benchmark(tmp_path):
    prob = tmp_path / "dis.json"
    dump_problem(generate_machine_problem(MachineReplacementConfig(case="mixed", variant="dr_disjoint",
                                                                   n_states=4)).problem, prob)
    assert main(["verify", "--problem", str(prob)]) == EXIT_OK


def test_bench_machine_and_simulate(tmp_path):
    out = tmp_path / "m"
    assert main(["bench", "machine", "--runs", "200", "--seed", "3", "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert [v["variant"] for v in summary["variants"]] == ["nominal", "robust", "dr_nested"]
    rows = list(csv.reader(open(out / "runs.csv")))
    assert rows[0] == ["variant", "run", "return", "steps", "capped"] and len(rows) == 1 + 3 * 200
    assert float(rows[1][2]) == pytest.approx(float(repr(float(rows[1][2]))))
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["kernel"] in ("python", "compiled")
    # replaying a stored policy reproduces the benchmark runs bit for bit
    sim = tmp_path / "s"
    assert main(["simulate", "machine", "--solution", str(out / "policies.json"), "--key", "dr_nested",
                 "--runs", "200", "--seed", "3", "--out", str(sim)]) == EXIT_OK
    replay = [r[1] for r in list(csv.reader(open(sim / "runs.csv")))[1:]]
    assert replay == [r[2] for r in rows[1:] if r[0] == "dr_nested"]


def test_bench_maze(tmp_path):
    layout = tmp_path / "maze.txt"
    layout.write_text("S.#.E\n.....\n")
    out = tmp_path / "z"
    assert main(["bench", "maze", "--layout", str(layout), "--lambda", "0.3", "0.7", "--runs", "50",
                 "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["variants"]) == 8
    assert all(v["metric"] == "exit_time" for v in summary["variants"])


@pytest.mark.parametrize("argv", [
    ["bench", "machine", "--runs", "0", "--out", "x"],
    ["bench", "machine", "--case", "gaussian", "--variant", "dr_disjoint", "--runs", "5", "--out", "x"],
    ["solve", "--problem", "does/not/exist.json", "--out", "x.json"],
    ["frobnicate"],
])
def test_input_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_INPUT


def test_simulate_rejects_foreign_policy(tmp_path):
    sol = tmp_path / "p.json"
    sol.write_text(json.dumps({"policy": {"1": [1.0, 0.0]}}))
    assert main(["simulate", "machine", "--solution", str(sol), "--runs", "5", "--out", str(tmp_path / "o")]) \
        == EXIT_INPUT


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "drmdp.cli", "verify", "--problem", str(DATA / "point_chain.json")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "states pass" in r.stdout
