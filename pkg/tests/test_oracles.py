import numpy as np
import pytest

from drmdp.ambiguity import from_boxes
from drmdp.bench.instances import random_box_ambiguity, random_continuation
from drmdp.bench.oracles import (OracleError, brute_force_worst_case, enumerate_srobust, polytope_vertices,
                                 region_mass_lp, simplex_grid, two_point_value)
from drmdp.cones import NonNegative, Product, SecondOrder, Zero
from drmdp.srobust import SRobustInstance, solve_srobust, worst_case_value


def test_vertices_of_square_and_triangle():
    M = np.vstack([np.eye(2), -np.eye(2)])
    b = np.array([1.0, 1.0, 0.0, 0.0])
    V = polytope_vertices(M, b, NonNegative(4))
    assert {tuple(v) for v in np.round(V, 9)} == {(0, 0), (0, 1), (1, 0), (1, 1)}
    # x + y = 1 inside the square: a segment
    M2 = np.vstack([[1.0, 1.0], M])
    V2 = polytope_vertices(M2, np.r_[1.0, b], Product(Zero(1), NonNegative(4)))
    assert {tuple(v) for v in np.round(V2, 9)} == {(0, 1), (1, 0)}


def test_non_polyhedral_rejected():
    with pytest.raises(OracleError):
        polytope_vertices(np.eye(3), np.zeros(3), SecondOrder(3))


def test_simplex_grid():
    G = simplex_grid(3, 4)
    assert len(G) == 15 and np.allclose(G.sum(axis=1), 1)


def test_interval_example_by_hand():
    amb = from_boxes(2, 1, [([1, 1, 0.9, 0.7], [1, 1, 1.1, 0.7], 0.9, 1.0, None),
                            ([1, 1, 0.0, 0.7], [1, 1, 2.0, 0.7], 1.0, 1.0, None)])
    V = np.zeros((2, 2))
    assert brute_force_worst_case(amb, [1, 0], V) == pytest.approx(0.81)
    assert region_mass_lp(amb, [1, 0], V) == pytest.approx(0.81)
    assert two_point_value(amb, [1, 0], V) == pytest.approx(0.81)
    val, pi = enumerate_srobust(amb, V)
    assert val == pytest.approx(0.81) and pi[0] == 1


@pytest.mark.parametrize("seed", range(6))
def test_oracles_agree_with_solver(seed):
    rng = np.random.default_rng(100 + seed)
    amb = random_box_ambiguity(rng)
    V = random_continuation(rng, amb)
    inst = SRobustInstance(amb, V)
    sol = solve_srobust(inst)
    bf, _ = enumerate_srobust(amb, V)
    assert bf == pytest.approx(sol.value, abs=1e-2 * abs(sol.value) + 1e-9)
    assert region_mass_lp(amb, sol.policy, V) == pytest.approx(worst_case_value(inst, sol.policy).value, abs=1e-6)
