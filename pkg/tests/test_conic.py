import json

import numpy as np
import pytest

from drmdp.cones import NonNegative, PositiveSemidefinite, RotatedSecondOrder, SecondOrder, Zero
from drmdp.conic import ConicProgramIR, IRError, SolveStatus, Tolerances, solve


def lp():
    # min x0 + 2 x1  s.t.  x0 + x1 = 1, x >= 0
    ir = ConicProgramIR()
    ir.add_block("x", 2, NonNegative(2))
    ir.set_objective({"x": [1.0, 2.0]})
    ir.add_equality("sum", {"x": np.ones((1, 2))}, 1.0)
    return ir


def test_lp_optimum():
    out = solve(lp())
    assert out.status is SolveStatus.OPTIMAL
    assert out.objective == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(out.values["x"], [1, 0], atol=1e-7)
    assert out.residuals["primal"] <= 1e-8


def test_socp_and_rsoc():
    # min t s.t. t >= ||(1, 2)||
    ir = ConicProgramIR()
    ir.add_block("t", 1)
    ir.set_objective({"t": [1.0]})
    ir.add_membership("norm", {"t": -np.array([[1.0], [0], [0]])}, [0.0, -1.0, -2.0], SecondOrder(3))
    assert solve(ir).objective == pytest.approx(np.sqrt(5), abs=1e-7)
    # min u s.t. 2 u * 1 >= 3^2  ->  u = 4.5
    ir = ConicProgramIR()
    ir.add_block("u", 1)
    ir.set_objective({"u": [1.0]})
    ir.add_membership("rot", {"u": -np.array([[1.0], [0], [0]])}, [0.0, 1.0, 3.0], RotatedSecondOrder(3))
    assert solve(ir).objective == pytest.approx(4.5, abs=1e-6)


def test_sdp_smallest_eigenvalue():
    # max t s.t. A - t I psd  -> lambda_min(A)
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    ir = ConicProgramIR()
    ir.add_block("t", 1)
    ir.set_objective({"t": [-1.0]})
    s2 = np.sqrt(2)
    ir.add_membership("psd", {"t": np.array([[1.0], [0.0], [1.0]])}, [A[0, 0], s2 * A[1, 0], A[1, 1]],
                      PositiveSemidefinite(2))
    out = solve(ir)
    assert -out.objective == pytest.approx(np.linalg.eigvalsh(A)[0], abs=1e-6)


def test_infeasible_and_unbounded():
    ir = lp()
    ir.add_equality("clash", {"x": np.array([[1.0, 1.0]])}, 2.0)
    assert solve(ir).status is SolveStatus.INFEASIBLE
    ir = ConicProgramIR()
    ir.add_block("x", 1)
    ir.set_objective({"x": [1.0]})
    ir.add_membership("upper", {"x": np.ones((1, 1))}, [0.0], NonNegative(1))
    assert solve(ir).status is SolveStatus.UNBOUNDED


def test_ir_errors():
    ir = ConicProgramIR()
    ir.add_block("x", 2)
    with pytest.raises(IRError):
        ir.add_block("x", 1)
    with pytest.raises(IRError):
        ir.add_equality("e", {"y": np.ones((1, 1))}, 0.0)
    with pytest.raises(IRError):
        ir.add_equality("e", {"x": np.ones((1, 3))}, 0.0)
    with pytest.raises(IRError):
        ir.add_membership("m", {"x": np.ones((2, 2))}, [0.0, 0.0], Zero(3))
    ir.add_equality("e", {"x": np.ones((1, 2))}, 0.0)
    ir.add_equality("e", {"x": np.ones((1, 2))}, 0.0)
    with pytest.raises(IRError):
        ir.validate()


def test_json_roundtrip_solves_identically():
    ir = lp()
    again = ConicProgramIR.from_json(json.loads(ir.dumps()))
    assert solve(again).objective == pytest.approx(solve(ir).objective, abs=1e-12)
    assert again.labels() == ir.labels()


def test_tolerances_from_env(monkeypatch):
    monkeypatch.setenv("DRMDP_SOLVER_TOL", "primal_residual=1e-6, max_iter=50")
    t = Tolerances.from_env()
    assert t.primal_residual == 1e-6 and t.max_iter == 50 and t.relative_gap == Tolerances().relative_gap
    monkeypatch.setenv("DRMDP_SOLVER_TOL", "bogus=1")
    with pytest.raises(ValueError):
        Tolerances.from_env()


def test_cvxpy_backend_agrees():
    pytest.importorskip("cvxpy")
    assert solve(lp(), backend="cvxpy:CLARABEL").objective == pytest.approx(1.0, abs=1e-7)


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve(lp(), backend="nope")
