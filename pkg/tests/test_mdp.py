import numpy as np
import pytest

from drmdp.mdp import (ActionSpace, FixedParameters, Horizon, MdpError, MdpSkeleton, Policy, StateSpace,
                       build_continuation_matrix, classical_dp, evaluate_policy, policy_values)


def two_state(gamma=0.9):
    states = ("a", "b")
    return MdpSkeleton(StateSpace(states, {"a": 1, "b": 1}, "a"), ActionSpace({"a": (0, 1), "b": (0,)}),
                       Horizon("infinite", gamma), {"a": states, "b": states})


def params():
    P = {"a": np.array([[1.0, 0.0], [0.0, 1.0]]), "b": np.array([[0.5, 0.5]])}
    R = {"a": np.array([1.0, 0.0]), "b": np.array([3.0])}
    return FixedParameters(P, R)


def test_horizon_validation():
    with pytest.raises(MdpError):
        Horizon("infinite", 1.0)
    with pytest.raises(MdpError):
        Horizon("finite", 0.9)
    with pytest.raises(MdpError):
        Horizon("circular", 0.9)


def test_state_space_validation():
    with pytest.raises(MdpError):
        StateSpace(("a", "a"), {"a": 1}, "a")
    with pytest.raises(MdpError):
        StateSpace(("a", "b"), {"a": 1, "b": 3}, "a")
    with pytest.raises(MdpError):
        StateSpace(("a",), {"a": 1}, "z")


def test_finite_horizon_structure_checks():
    sp = StateSpace(("a", "b"), {"a": 1, "b": 2}, "a")
    acts = ActionSpace({"a": (0,), "b": (0,)})
    with pytest.raises(MdpError):
        MdpSkeleton(sp, acts, Horizon("finite", 1.0, 2), {"a": ("a",)})
    with pytest.raises(MdpError):
        MdpSkeleton(sp, acts, Horizon("finite", 1.0, 3), {"a": ("b",)})
    mdp = MdpSkeleton(sp, acts, Horizon("finite", 1.0, 2), {"a": ("b",)})
    assert mdp.is_terminal("b") and not mdp.is_terminal("a")


def test_policy_evaluation_closed_form():
    mdp = two_state()
    pol = Policy({"a": np.array([0.0, 1.0]), "b": np.array([1.0])})
    # a -> b with reward 0; b stays/returns with reward 3
    v = policy_values(mdp, params(), pol)
    g = 0.9
    # v_b = 3 + g (0.5 v_a + 0.5 v_b), v_a = g v_b
    vb = 3 / (1 - g * 0.5 * g - g * 0.5)
    assert v[1] == pytest.approx(vb)
    assert v[0] == pytest.approx(g * vb)
    assert evaluate_policy(mdp, params(), pol) == pytest.approx(g * vb)


def test_classical_dp_picks_better_action():
    mdp = two_state()
    v, greedy = classical_dp(mdp, params())
    best = max(((policy_values(mdp, params(), Policy({"a": np.eye(2)[k], "b": np.ones(1)})).tolist(), k) for k in (0, 1)))
    assert greedy["a"] == best[1] == 1
    assert np.allclose(v, best[0], atol=1e-9)


def test_continuation_matrix_blocks():
    V = build_continuation_matrix([1.0, 2.0], 2, 0.5)
    assert V.shape == (4, 2)
    assert np.allclose(V[:, 0], [0.5, 1.0, 0, 0]) and np.allclose(V[:, 1], [0, 0, 0.5, 1.0])
    with pytest.raises(MdpError):
        build_continuation_matrix([np.inf], 1, 0.5)


def test_policy_rows_must_be_distributions():
    with pytest.raises(MdpError):
        Policy({"a": np.array([0.7, 0.7])})
    assert Policy({"a": np.array([0.0, 1.0])}).action("a") == 1
    assert Policy({"a": np.array([0.5, 0.5])}).action("a") is None


def test_invalid_transition_rejected():
    bad = FixedParameters({"a": np.array([[0.5, 0.6], [0, 1]]), "b": np.array([[1.0, 0]])},
                          params().reward)
    with pytest.raises(MdpError):
        bad.validated(two_state())
