import numpy as np
import pytest

from drmdp.ambiguity import from_point
from drmdp.bench.instances import random_uncertain_mdp
from drmdp.bench.oracles import robust_vertex_value_iteration
from drmdp.dp import (UncertainMdp, backward_induction, bellman_apply, iteration_bound, value_iteration)
from drmdp.ambiguity import AmbiguityError, from_boxes
from drmdp.mdp import (ActionSpace, FixedParameters, Horizon, MdpSkeleton, Policy, StateSpace, classical_dp,
                       evaluate_policy)


def random_point_problem(rng, n=4, na=3, horizon=None):
    states = tuple(range(n))
    if horizon is None:
        mdp = MdpSkeleton(StateSpace(states, {s: 1 for s in states}, 0),
                          ActionSpace({s: tuple(range(na)) for s in states}), Horizon("infinite", 0.85),
                          {s: states for s in states})
    else:
        # layered: stage t holds state t-1 only, T = n
        stage = {s: s + 1 for s in states}
        succ = {s: (s + 1,) for s in states[:-1]}
        mdp = MdpSkeleton(StateSpace(states, stage, 0), ActionSpace({s: tuple(range(na)) for s in states}),
                          Horizon("finite", 0.95, n), succ)
    P, R, amb = {}, {}, {}
    for s in states:
        ns = len(mdp.succ(s))
        p = rng.dirichlet(np.ones(max(ns, 1)), size=na) if ns else np.zeros((na, 0))
        r = rng.normal(size=na)
        P[s], R[s] = p, r
        if not mdp.is_terminal(s):
            amb[s] = from_point(p, r, s)
    return UncertainMdp(mdp, amb), FixedParameters(P, R)


def test_point_ambiguity_matches_classical_value_iteration(rng):
    problem, params = random_point_problem(rng)
    sol = value_iteration(problem, eps=1e-10)
    v, greedy = classical_dp(problem.mdp, params)
    assert sol.converged
    assert np.max(np.abs(sol.values - v)) <= 1e-8
    assert all(sol.policy.action(s) == greedy[s] for s in problem.mdp.states)


def test_point_ambiguity_matches_classical_backward_induction(rng):
    problem, params = random_point_problem(rng, horizon=True)
    sol = backward_induction(problem)
    v, _ = classical_dp(problem.mdp, params)
    assert np.max(np.abs(sol.values - v)) <= 1e-8
    assert evaluate_policy(problem.mdp, params, sol.policy) == pytest.approx(v[0], abs=1e-8)
    assert set(sol.stage_values) == set(range(1, problem.mdp.horizon.T))


def test_fast_point_path_agrees(rng):
    problem, _ = random_point_problem(rng)
    a = value_iteration(problem, eps=1e-9)
    b = value_iteration(problem, eps=1e-9, fast_point=True)
    assert np.max(np.abs(a.values - b.values)) <= 1e-8


def test_support_only_matches_vertex_oracle():
    rng = np.random.default_rng(4)
    problem = random_uncertain_mdp(rng, n_states=2, support_only=True)
    v, _ = robust_vertex_value_iteration(problem, eps=1e-10)
    sol = value_iteration(problem, eps=1e-10)
    assert np.max(np.abs(v - sol.values)) <= 1e-6


def test_contraction(rng):
    problem = random_uncertain_mdp(rng, n_states=3)
    g = problem.mdp.gamma
    for _ in range(5):
        v1, v2 = 5 * rng.normal(size=3), 5 * rng.normal(size=3)
        l1, _ = bellman_apply(problem, v1)
        l2, _ = bellman_apply(problem, v2)
        assert np.max(np.abs(l1 - l2)) <= g * np.max(np.abs(v1 - v2)) + 1e-8


def test_stopping_rule_gives_eps_accuracy(rng):
    problem = random_uncertain_mdp(rng, n_states=3)
    exact = value_iteration(problem, eps=1e-10)
    rough = value_iteration(problem, eps=1e-2)
    assert np.max(np.abs(rough.values - exact.values)) <= 1e-2
    assert rough.iterations <= iteration_bound(1e-2, problem.mdp.gamma, rough.history[0])


def test_nonconvergence_is_reported(rng):
    problem, _ = random_point_problem(rng)
    sol = value_iteration(problem, eps=1e-12, max_iter=2)
    assert not sol.converged and sol.iterations == 2


def test_argument_validation(rng):
    problem, _ = random_point_problem(rng)
    with pytest.raises(ValueError):
        value_iteration(problem, eps=0)
    with pytest.raises(ValueError):
        backward_induction(problem)


def test_missing_or_mismatched_ambiguity():
    states = (0, 1)
    mdp = MdpSkeleton(StateSpace(states, {0: 1, 1: 1}, 0), ActionSpace({0: (0, 1), 1: (0,)}),
                      Horizon("infinite", 0.9), {0: states, 1: states})
    with pytest.raises(AmbiguityError):
        UncertainMdp(mdp, {0: from_point([[1, 0], [0, 1]], [0, 1])})
    with pytest.raises(AmbiguityError):
        UncertainMdp(mdp, {0: from_point([[1, 0]], [0]), 1: from_point([[1, 0]], [0])})


def test_bad_set_fails_before_solving():
    states = (0,)
    mdp = MdpSkeleton(StateSpace(states, {0: 1}, 0), ActionSpace({0: (0,)}), Horizon("infinite", 0.9), {0: states})
    bad = from_boxes(1, 1, [([1, 0.0], [1, 2.0], 0.6, 0.7, None), ([1, 0.0], [1, 2.0], 1, 1, None)])
    with pytest.raises(AmbiguityError):
        value_iteration(UncertainMdp(mdp, {0: bad}))


def test_solution_json(rng):
    problem, _ = random_point_problem(rng)
    sol = value_iteration(problem, eps=1e-6)
    js = sol.to_json()
    assert set(js["policy"]) == {str(s) for s in problem.mdp.states}
    assert js["converged"] is True
    assert isinstance(sol.policy, Policy)
