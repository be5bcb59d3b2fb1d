import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from bikeplan.milp import (LinearProgram, LpStatus, MilpProblem,
                           NumericalError, dual_objective, solve_lp,
                           solve_milp)


def test_single_variable_max():
    lp = LinearProgram(sense="max")
    lp.add_variable("x", 0.0, math.inf)
    lp.objective = {"x": 1.0}
    lp.add_constraint({"x": 1.0}, "<=", 3.0, name="cap")
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(3.0)
    assert sol.values["x"] == pytest.approx(3.0)
    assert sol.duals[0] == pytest.approx(1.0)


def test_infeasible():
    lp = LinearProgram(sense="min")
    lp.add_variable("x", 0.0, math.inf)
    lp.add_constraint({"x": 1.0}, "<=", -1.0)
    assert solve_lp(lp).status is LpStatus.INFEASIBLE


def test_unbounded():
    lp = LinearProgram(sense="max")
    lp.add_variable("x", 0.0, math.inf)
    lp.objective = {"x": 1.0}
    assert solve_lp(lp).status is LpStatus.UNBOUNDED


def test_free_variable_and_equality():
    lp = LinearProgram(sense="min")
    lp.add_variable("x", -math.inf, math.inf)
    lp.add_variable("y", 0.0, 2.0)
    lp.objective = {"x": 1.0, "y": -1.0}
    lp.add_constraint({"x": 1.0, "y": 1.0}, "=", 1.0)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-3.0)  # y=2, x=-1


def test_two_item_knapsack():
    lp = LinearProgram(sense="max")
    lp.add_variable("a", 0.0, 1.0)
    lp.add_variable("b", 0.0, 1.0)
    lp.objective = {"a": 3.0, "b": 2.0}
    lp.add_constraint({"a": 1.0, "b": 1.0}, "<=", 1.0)
    sol = solve_milp(MilpProblem(lp, {"a", "b"}))
    assert sol.objective == pytest.approx(3.0)
    assert sol.values["a"] == pytest.approx(1.0)


def _random_lp(rng, n_binary=0):
    nv = rng.randint(2, 6)
    lp = LinearProgram(sense="min")
    for i in range(nv):
        ub = 1.0 if i < n_binary else rng.choice([1.0, 4.0, math.inf])
        lp.add_variable(f"x{i}", 0.0, ub)
    lp.objective = {f"x{i}": float(rng.randint(-5, 5)) for i in range(nv)}
    for _ in range(rng.randint(1, 4)):
        coeffs = {f"x{i}": float(rng.randint(-3, 3))
                  for i in rng.sample(range(nv), rng.randint(1, nv))}
        coeffs = {k: v for k, v in coeffs.items() if v}
        if coeffs:
            lp.add_constraint(coeffs, rng.choice(["<=", ">="]),
                              float(rng.randint(-4, 6)))
    return lp, nv


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_strong_duality_on_random_lps(seed):
    rng = random.Random(seed)
    lp, _ = _random_lp(rng)
    sol = solve_lp(lp)
    if sol.status is LpStatus.OPTIMAL:
        gap = abs(dual_objective(lp, sol) - sol.objective)
        assert gap <= 1e-6 * max(1.0, abs(sol.objective))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_milp_matches_enumeration(seed):
    rng = random.Random(seed)
    nb = rng.randint(1, 4)
    lp, nv = _random_lp(rng, n_binary=nb)
    nb = min(nb, nv)
    binaries = {f"x{i}" for i in range(nb)}

    best = None
    for assign in itertools.product([0, 1], repeat=nb):
        sub = LinearProgram(sense="min")
        for v in lp.variables:
            if v.name in binaries:
                i = int(v.name[1:])
                sub.add_variable(v.name, float(assign[i]), float(assign[i]))
            else:
                sub.add_variable(v.name, v.lb, v.ub)
        sub.objective = dict(lp.objective)
        for con in lp.constraints:
            sub.add_constraint(dict(con.coeffs), con.sense, con.rhs)
        s = solve_lp(sub)
        if s.status is LpStatus.OPTIMAL:
            best = s.objective if best is None else min(best, s.objective)

    try:
        msol = solve_milp(MilpProblem(lp, binaries))
    except NumericalError:
        pytest.skip("degenerate random problem")
    if best is None:
        assert msol.status is not LpStatus.OPTIMAL
    elif msol.status is LpStatus.OPTIMAL:
        assert msol.objective == pytest.approx(best, abs=1e-6)
        for name in binaries:
            assert abs(msol.values[name] - round(msol.values[name])) <= 1e-9
    else:
        assert msol.status is LpStatus.UNBOUNDED


def test_milp_without_binaries_degenerates_to_lp():
    lp = LinearProgram(sense="min")
    lp.add_variable("x", 0.0, 5.0)
    lp.objective = {"x": 1.0}
    lp.add_constraint({"x": 1.0}, ">=", 2.0)
    sol = solve_milp(MilpProblem(lp, set()))
    assert sol.objective == pytest.approx(2.0)
    assert sol.gap == pytest.approx(0.0)


def test_unknown_variable_rejected():
    lp = LinearProgram(sense="min")
    lp.add_variable("x", 0.0, 1.0)
    lp.add_constraint({"ghost": 1.0}, "<=", 1.0)
    with pytest.raises(ValueError):
        solve_lp(lp)
