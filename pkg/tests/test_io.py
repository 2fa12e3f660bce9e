import json
from pathlib import Path

import numpy as np
import pytest

from drmdp.bench.machine import MachineReplacementConfig, generate_machine_problem
from drmdp.dp import backward_induction
from drmdp.io import (ProblemError, build_ambiguity, dump_problem, load_problem, problem_from_json,
                      problem_to_json, validate_problem)

DATA = Path(__file__).parent / "data"


def test_load_point_chain_and_solve():
    problem = load_problem(DATA / "point_chain.json")
    sol = backward_induction(problem)
    # s2b: go pays 2, gamble pays at worst 1 -> 2; s2a pays 0
    assert sol.value("s2b") == pytest.approx(2.0, abs=1e-7)
    assert sol.value("s1") == pytest.approx(max(1 + 0.9 * 0.2 * 2, 0.5 + 0.9 * 0.9 * 2), abs=1e-7)


def test_malformed_cone_pointer():
    obj = json.loads((DATA / "bad_cone.json").read_text())
    with pytest.raises(ProblemError) as err:
        problem_from_json(obj)
    assert err.value.pointer.startswith("/states/1/ambiguity/sets/0/cone")


@pytest.mark.parametrize("mutate,pointer", [
    (lambda o: o["horizon"].update(gamma=1.5), "/horizon/gamma"),
    (lambda o: o["states"][0].update(stage="one"), "/states/0/stage"),
    (lambda o: o.pop("states"), "/"),
    (lambda o: o["states"][0]["ambiguity"].update(p=[[0.8, 0.2]]), "/states/0/ambiguity"),
    (lambda o: o["states"][2].pop("ambiguity"), "/states/2"),
    (lambda o: o["states"][0].update(successors=["nowhere"]), "/states"),
    (lambda o: o.update(extra=1), "/"),
])
def test_error_pointers(mutate, pointer):
    obj = json.loads((DATA / "point_chain.json").read_text())
    mutate(obj)
    with pytest.raises(ProblemError) as err:
        problem_from_json(obj)
    assert err.value.pointer == pointer, str(err.value)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ProblemError):
        load_problem(p)


def test_roundtrip_machine(tmp_path):
    inst = generate_machine_problem(MachineReplacementConfig(n_states=6, variant="dr_nested"))
    path = tmp_path / "m.json"
    dump_problem(inst.problem, path, meta={"source": "machine"})
    again = load_problem(path)
    a = backward_induction(inst.problem, fast_point=True)
    b = backward_induction(again, fast_point=True)
    assert np.allclose(a.values, b.values, atol=1e-12)
    assert not validate_problem(json.loads(path.read_text()))


def test_shorthands():
    p = [[1.0], [1.0]]
    mad = build_ambiguity({"type": "mad", "p": p, "m": [0.0, 1.0], "f": [0.5, 0.5], "lo": [-3, -2], "hi": [3, 4]},
                          2, 1)
    assert mad.Q == 2
    hub = build_ambiguity({"type": "huber", "p": p, "f": [1.0, 1.0], "g": 0.5, "delta": 1.0}, 2, 1)
    assert hub.Q == 5
    cov = build_ambiguity({"type": "mean_cov", "p": p, "Sigma": [[1, 0], [0, 1]], "m": [0, 0]}, 2, 1)
    assert cov.moments.k == 4 + 2
    mean = build_ambiguity({"type": "mean", "G": {"shape": [1, 2], "data": [1, 0]}, "f": [0.5],
                            "cone": {"kind": "nonneg", "dim": 1}, "r": [1.0, 2.0]}, 2, 1)
    assert mean.Q == 1
    boxes = build_ambiguity({"type": "boxes", "boxes": [
        {"lo": [1, 0.4], "hi": [1, 0.6], "prob_lo": 0.5, "prob_hi": 1.0},
        {"lo": [1, 0], "hi": [1, 1]}]}, 1, 1)
    assert boxes.n_sets == 2
    dis = build_ambiguity({"type": "intervals", "structure": "disjoint", "p": [[1.0]],
                           "levels": [{"lo": [0.1], "hi": [0.2], "prob_lo": 0.2, "prob_hi": 0.3}],
                           "support": {"lo": [0], "hi": [1]}}, 1, 1)
    assert dis.n_sets == 2


def test_full_form_dimension_mismatch():
    inst = generate_machine_problem(MachineReplacementConfig(n_states=3))
    block = inst.problem.ambiguity[1].to_json()
    with pytest.raises(Exception):
        build_ambiguity(block, 3, 2)


def test_to_json_stringifies_tuple_ids():
    from drmdp.bench.maze import MazeConfig, generate_maze_problem
    obj = problem_to_json(generate_maze_problem(MazeConfig(layout="S.E")).problem)
    assert obj["initial_state"] == "(0, 0)"
    assert problem_from_json(json.loads(json.dumps(obj))).mdp.n_states == 3
