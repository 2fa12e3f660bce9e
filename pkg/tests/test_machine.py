import numpy as np
import pytest

from drmdp.ambiguity import certify
from drmdp.bench.machine import (DONE, REPAIR, MachineReplacementConfig, closed_form_value,
                                 generate_machine_problem, repair_state)
from drmdp.dp import backward_induction
from drmdp.mdp import Policy, evaluate_policy


def solve(**kw):
    inst = generate_machine_problem(MachineReplacementConfig(**kw))
    return inst, backward_induction(inst.problem, fast_point=True)


@pytest.mark.parametrize("kw", [dict(case="uniform"), dict(variant="minimax"), dict(variant="dr_disjoint"),
                                dict(n_states=1), dict(gamma=1.0), dict(estimation="guess"),
                                dict(sample_size=1), dict(repair_var=0.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        MachineReplacementConfig(**kw)


def test_skeleton_shape():
    inst = generate_machine_problem(MachineReplacementConfig(n_states=5))
    mdp = inst.problem.mdp
    assert mdp.states[-1] == DONE and mdp.horizon.T == 6
    assert mdp.succ(3) == (4, DONE) and mdp.succ(5) == (DONE,)


def test_nominal_never_repairs_and_matches_closed_form():
    inst, sol = solve(variant="nominal")
    assert repair_state(sol.policy, 50) is None
    cfg = MachineReplacementConfig()
    exact = evaluate_policy(inst.problem.mdp, inst.truth.mean_parameters(), sol.policy)
    assert exact == pytest.approx(closed_form_value(cfg, None), rel=1e-12)
    assert sol.value(1) == pytest.approx(exact, rel=1e-9)


def test_robust_repairs_and_value_matches_closed_form():
    inst, sol = solve(variant="robust")
    k = repair_state(sol.policy, 50)
    assert k is not None
    exact = evaluate_policy(inst.problem.mdp, inst.truth.mean_parameters(), sol.policy)
    assert exact == pytest.approx(closed_form_value(MachineReplacementConfig(), k), rel=1e-12)


def test_dr_nested_gaussian_repairs_at_last_state():
    _, sol = solve(variant="dr_nested")
    assert repair_state(sol.policy, 50) == 50


def test_all_sets_certify():
    for case, variant in [("gaussian", "dr_nested"), ("mixed", "dr_nested"), ("mixed", "dr_disjoint")]:
        inst = generate_machine_problem(MachineReplacementConfig(case=case, variant=variant))
        assert certify(inst.problem.ambiguity[50]).ok


def test_sample_estimation_is_seeded():
    a = generate_machine_problem(MachineReplacementConfig(case="mixed", estimation="sample", sample_size=500, seed=3))
    b = generate_machine_problem(MachineReplacementConfig(case="mixed", estimation="sample", sample_size=500, seed=3))
    assert np.allclose(a.estimated["wait"].means, b.estimated["wait"].means)
    assert a.estimated["wait"].K == 2


def test_closed_form_for_fixed_repair_state():
    cfg = MachineReplacementConfig()
    inst = generate_machine_problem(cfg)
    mdp = inst.problem.mdp
    pol = Policy.deterministic(mdp, {i: (REPAIR if i >= 20 else 1) for i in range(1, 51)})
    assert evaluate_policy(mdp, inst.truth.mean_parameters(), pol) == pytest.approx(closed_form_value(cfg, 20))
