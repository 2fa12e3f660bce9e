import numpy as np
import pytest

from drmdp.bench.gmm import GaussianMixture1D
from drmdp.bench.machine import MachineReplacementConfig, generate_machine_problem
from drmdp.bench.maze import MazeConfig, generate_maze_problem
from drmdp.bench.simulate import (ActionLaw, GroundTruth, clean_row, clipped_mean, expected_steps,
                                  mean_reduction_check, simulate)
from drmdp.dp import value_iteration
from drmdp.kernels import BACKEND, get_kernel
from drmdp.mdp import ActionSpace, Horizon, MdpSkeleton, Policy, StateSpace

compiled_only = pytest.mark.skipif(BACKEND != "compiled", reason="compiled kernel not built")


@pytest.fixture(scope="module")
def machine():
    inst = generate_machine_problem(MachineReplacementConfig(case="mixed", variant="nominal"))
    sol = value_iteration(inst.problem, eps=1e-6, fast_point=True, check=False)
    return inst, sol.policy


@pytest.fixture(scope="module")
def maze():
    inst = generate_maze_problem(MazeConfig(variant="dr_nested"))
    sol = value_iteration(inst.problem, eps=1e-6, fast_point=True, check=False)
    return inst, sol.policy


def random_policy(mdp, rng):
    return Policy({s: rng.dirichlet(np.ones(mdp.n_actions(s))) for s in mdp.states})


@compiled_only
@pytest.mark.parametrize("which", ["machine", "maze"])
def test_kernels_bit_identical(which, machine, maze, rng):
    inst, pol = machine if which == "machine" else maze
    pol = random_policy(inst.problem.mdp, rng)   # randomized rows exercise the action draw
    a = simulate(inst.truth, pol, 300, seed=3, kernel="python")
    b = simulate(inst.truth, pol, 300, seed=3, kernel="compiled")
    assert np.array_equal(a.returns, b.returns)
    assert np.array_equal(a.steps, b.steps)


def test_reproducible_and_chunk_independent(machine):
    inst, pol = machine
    a = simulate(inst.truth, pol, 1000, seed=9)
    b = simulate(inst.truth, pol, 1000, seed=9, chunk=137, workers=3)
    assert np.array_equal(a.returns, b.returns)
    c = simulate(inst.truth, pol, 1000, seed=10)
    assert not np.array_equal(a.returns, c.returns)
    # run k depends only on (seed, k)
    d = simulate(inst.truth, pol, 10, seed=9)
    assert np.array_equal(d.returns, a.returns[:10])


def test_mean_reduction_machine_and_maze(machine, maze):
    inst, pol = machine
    rep = mean_reduction_check(inst.truth, pol, runs=4000, seed=2)
    assert rep.within, (rep.mc_mean, rep.exact, rep.stderr)
    inst, pol = maze
    rep = mean_reduction_check(inst.truth, pol, runs=1000, seed=2, metric="exit_time")
    assert rep.within, (rep.mc_mean, rep.exact, rep.stderr)


def test_report_summary(machine):
    inst, pol = machine
    rep = simulate(inst.truth, pol, 50, seed=1)
    s = rep.summary()
    assert s["runs"] == 50 and s["seed"] == 1 and s["kernel"] in ("python", "compiled")
    assert sum(s["histogram"]["counts"]) == 50
    with pytest.raises(ValueError):
        simulate(inst.truth, pol, 0)


def test_step_cap():
    states = (0,)
    mdp = MdpSkeleton(StateSpace(states, {0: 1}, 0), ActionSpace({0: (0,)}), Horizon("infinite", 0.5), {0: states})
    truth = GroundTruth(mdp, {0: [ActionLaw(1.0, np.array([1.0]))]}, frozenset())
    rep = simulate(truth, Policy({0: np.ones(1)}), 5, cap=7)
    assert rep.n_capped == 5 and np.all(rep.steps == 7)
    assert rep.returns[0] == pytest.approx(sum(0.5 ** k for k in range(7)))


def test_clipped_mean_matches_monte_carlo():
    law = GaussianMixture1D([0.5, 0.5], [0.1, 0.9], [0.04, 0.09])
    x = np.clip(law.sample(400_000, np.random.default_rng(0)), 0, 1)
    assert clipped_mean(law) == pytest.approx(x.mean(), abs=3e-3)
    assert clipped_mean(1.7) == 1.0


def test_clean_row():
    assert np.array_equal(clean_row([1e-11, 1 - 1e-11]), [0.0, 1.0])


def test_expected_steps_simple_chain():
    states = ("a", "b")
    mdp = MdpSkeleton(StateSpace(states, {"a": 1, "b": 1}, "a"), ActionSpace({"a": (0,), "b": (0,)}),
                      Horizon("infinite", 0.9), {"a": states, "b": ("b",)})
    truth = GroundTruth(mdp, {"a": [ActionLaw(-1.0, np.array([0.75, 0.25]))]}, frozenset(["b"]))
    pol = Policy({"a": np.ones(1), "b": np.ones(1)})
    assert expected_steps(truth, truth.mean_parameters(), pol) == pytest.approx(4.0)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        get_kernel("fortran")
