import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from epsconsensus.lp import Constraint, LinearProgram, solve_lp


def test_bounded():
    res = solve_lp(LinearProgram([1.0], [Constraint([1.0], 0.0, 1.0)]))
    assert res.status == "optimal" and res.value == pytest.approx(1.0) and res.x == pytest.approx([1.0])


def test_unbounded():
    assert solve_lp(LinearProgram([1.0], [Constraint([1.0], 0.0, None)])).status == "unbounded"


def test_infeasible():
    lp = LinearProgram([1.0], [Constraint([1.0], None, 0.0), Constraint([1.0], 1.0, None)])
    assert solve_lp(lp).status == "infeasible"


def test_equality_and_free_variables():
    # max x - y with x + y = 2, -5 <= x - 2y <= 1, free signs
    lp = LinearProgram.from_rows([1, -1], [[1, 1], [1, -2]], [2, -5], [2, 1])
    res = solve_lp(lp)
    ref = linprog([-1, 1], A_ub=[[1, -2], [-1, 2]], b_ub=[1, 5], A_eq=[[1, 1]], b_eq=[2],
                  bounds=[(None, None)] * 2)
    assert res.value == pytest.approx(-ref.fun, abs=1e-9)


def test_degenerate_cycling_example():
    # a classic program on which the largest-coefficient rule cycles
    c = [0.75, -150, 0.02, -6]
    rows = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    cons = [Constraint(r, None, b) for r, b in zip(rows, [0, 0, 1])]
    cons += [Constraint(e, 0.0, None) for e in np.eye(4)]
    res = solve_lp(LinearProgram(c, cons))
    assert res.status == "optimal" and res.value == pytest.approx(0.05, abs=1e-9)


def _scipy_status(c, A, lo, hi):
    A_ub = np.vstack([A, -A])
    b_ub = np.concatenate([hi, -lo])
    ref = linprog(-c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * len(c), method="highs")
    if ref.status == 0:
        return "optimal", -ref.fun
    # HiGHS can report an unbounded program as infeasible; decide feasibility separately
    feas = linprog(np.zeros(len(c)), A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * len(c), method="highs")
    return ("unbounded" if feas.status == 0 else "infeasible"), None


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(1, 6))
def test_matches_scipy(seed, n, m):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    lo = rng.normal(size=m) - rng.uniform(0, 2, size=m)
    hi = lo + rng.uniform(0, 3, size=m)
    res = solve_lp(LinearProgram.from_rows(c, A, lo, hi))
    status, value = _scipy_status(c, A, lo, hi)
    assert res.status == status
    if status == "optimal":
        assert res.value == pytest.approx(value, abs=1e-7 * max(1, abs(value)))
        g = A @ res.x
        assert np.all(g >= lo - 1e-8) and np.all(g <= hi + 1e-8)
