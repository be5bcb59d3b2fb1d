"""Self-contained LP and MILP engine.

The LP solver is a dense two-phase primal simplex with bounded variables,
switching to Bland-style pricing after a stretch of non-improving
iterations.  The MILP solver is depth-first branch and bound on declared
binary variables with most-fractional branching and a best-bound restart
every 500 nodes.

Minimization is the internal convention; maximization is handled by
negating the objective.  Constraint duals follow the marginal convention:
the dual of row ``i`` is the change of the objective (in its original
sense) per unit increase of the right-hand side.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

import numpy as np


class NumericalError(Exception):
    """The solver could not certify a result; never silently wrong."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf


@dataclass(frozen=True)
class Constraint:
    coeffs: Dict[str, float]
    sense: str                      # one of "<=", "=", ">="
    rhs: float
    name: Optional[str] = None


@dataclass
class LinearProgram:
    variables: List[Variable] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)
    sense: str = "min"

    def add_variable(self, name: str, lb: float = 0.0, ub: float = math.inf) -> None:
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb {lb} > ub {ub}")
        self.variables.append(Variable(name, lb, ub))

    def add_constraint(self, coeffs: Dict[str, float], sense: str, rhs: float,
                       name: Optional[str] = None) -> None:
        if sense not in ("<=", "=", ">="):
            raise ValueError(f"bad sense {sense!r}")
        self.constraints.append(Constraint(dict(coeffs), sense, rhs, name))

    def var_index(self) -> Dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}


@dataclass
class LpSolution:
    status: LpStatus
    values: Dict[str, float]
    duals: List[float]
    objective: float


@dataclass
class MilpProblem:
    lp: LinearProgram
    binary_vars: Set[str] = field(default_factory=set)


@dataclass
class MilpSolution(LpSolution):
    bound: float = math.nan
    gap: float = math.nan
    nodes: int = 0
    bound_history: List[Tuple[float, float]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Simplex core

_PIV_TOL = 1e-7  # smaller tableau entries are treated as zero when pivoting
_MAX_ITERS = 200_000
_BLAND_AFTER = 400  # non-improving iterations before switching pricing rule
_REFACTOR_EVERY = 60  # pivots between tableau rebuilds from the basis


class _Simplex:
    """Bounded-variable simplex over shifted columns in ``[0, U_j]``.

    Original variables map to internal columns via ``x = shift + scale *
    col`` so every column has lower bound zero; free variables are split
    into a positive and a negative part.
    """

    def __init__(self, lp: LinearProgram, tol_feas: float):
        self.lp = lp
        self.tol = max(tol_feas, 1e-12)
        self.minimize = lp.sense == "min"
        vidx = lp.var_index()
        for con in lp.constraints:
            for name in con.coeffs:
                if name not in vidx:
                    raise ValueError(f"constraint references unknown variable {name!r}")
        for name in lp.objective:
            if name not in vidx:
                raise ValueError(f"objective references unknown variable {name!r}")

        m = len(lp.constraints)
        obj_sign = 1.0 if self.minimize else -1.0
        cols: List[Tuple[int, float, float]] = []  # (var index, scale, shift)
        ub: List[float] = []
        cost: List[float] = []
        for i, var in enumerate(lp.variables):
            c = obj_sign * lp.objective.get(var.name, 0.0)
            if var.lb == -math.inf and var.ub == math.inf:
                cols.append((i, 1.0, 0.0)); ub.append(math.inf); cost.append(c)
                cols.append((i, -1.0, 0.0)); ub.append(math.inf); cost.append(-c)
            elif var.lb == -math.inf:
                cols.append((i, -1.0, var.ub)); ub.append(math.inf); cost.append(-c)
            else:
                cols.append((i, 1.0, var.lb))
                ub.append(var.ub - var.lb)
                cost.append(c)
        self.cols = cols
        nstruct = len(cols)
        cols_of_var: Dict[int, List[int]] = {}
        for j, (vi, _, _) in enumerate(cols):
            cols_of_var.setdefault(vi, []).append(j)

        nslack = sum(1 for con in lp.constraints if con.sense != "=")
        A = np.zeros((m, nstruct + nslack))
        b = np.zeros(m)
        s = nstruct
        for r, con in enumerate(lp.constraints):
            b[r] = con.rhs
            for name, a in con.coeffs.items():
                vi = vidx[name]
                for j in cols_of_var[vi]:
                    _, scale, _ = cols[j]
                    A[r, j] += a * scale
                # the shift applies once per original variable
                shift = cols[cols_of_var[vi][0]][2]
                if shift:
                    b[r] -= a * shift
        for r, con in enumerate(lp.constraints):
            if con.sense == "=":
                continue
            A[r, s] = 1.0 if con.sense == "<=" else -1.0
            ub.append(math.inf)
            cost.append(0.0)
            s += 1

        self.A0 = A
        self.b0 = b
        self.n = nstruct + nslack
        self.m = m
        self.U = np.array(ub, dtype=float)
        self.c = np.array(cost, dtype=float)

    def solve(self) -> Tuple[LpStatus, Optional[np.ndarray], Optional[np.ndarray]]:
        """Returns (status, internal column values, duals in min convention)."""
        m, n = self.m, self.n
        sign = np.where(self.b0 >= 0, 1.0, -1.0)  # phase-1 rhs nonnegative
        self.row_sign = sign
        self.T = np.hstack([self.A0 * sign[:, None], np.eye(m)])
        self.xb = self.b0 * sign
        ntot = n + m
        self.basis = np.arange(n, ntot)
        self.in_basis = np.zeros(ntot, dtype=bool)
        self.in_basis[self.basis] = True
        self.at_upper = np.zeros(ntot, dtype=bool)
        self.forbidden = np.zeros(ntot, dtype=bool)
        self.U = np.concatenate([self.U, np.full(m, math.inf)])

        c1 = np.zeros(ntot)
        c1[n:] = 1.0
        status = self._iterate(c1)
        if status is LpStatus.UNBOUNDED:
            raise NumericalError("phase-1 problem reported unbounded")

        def residual() -> float:
            art_rows = self.basis >= n
            return float(np.abs(self.xb[art_rows]).sum()) if art_rows.any() \
                else 0.0

        art_sum = residual()
        if art_sum > max(self.tol, 1e-7):
            # badly scaled rows can leave a feasible problem stuck behind a
            # reduced cost just inside the pricing tolerance; retry the
            # feasibility phase with near-exact pricing before giving up
            saved_tol = self.tol
            self.tol = 1e-11
            try:
                status = self._iterate(c1)
            finally:
                self.tol = saved_tol
            if status is LpStatus.UNBOUNDED:
                raise NumericalError("phase-1 problem reported unbounded")
            art_sum = residual()
        if art_sum > max(self.tol, 1e-7):
            return LpStatus.INFEASIBLE, None, None
        self._purge_artificials()

        c2 = np.concatenate([self.c, np.zeros(m)])
        self.forbidden[n:] = True
        self.U[n:] = 0.0
        status = self._iterate(c2)
        if status is LpStatus.UNBOUNDED:
            return LpStatus.UNBOUNDED, None, None

        values = np.zeros(ntot)
        up = self.at_upper & ~self.in_basis
        values[up] = self.U[up]
        self._refine(values)
        values[self.basis] = self.xb
        duals = self._duals(c2)
        return LpStatus.OPTIMAL, values[:n], duals

    # -- mechanics ---------------------------------------------------------

    def _iterate(self, c: np.ndarray) -> LpStatus:
        bland = False
        stall = 0
        last_obj = math.inf
        pivots = 0
        clean = True   # tableau freshly consistent with the basis
        for _ in range(_MAX_ITERS):
            y = c[self.basis] @ self.T
            red = c - y
            free = (~self.in_basis) & (~self.forbidden)
            cand_mask = (free & ~self.at_upper & (red < -self.tol)) \
                | (free & self.at_upper & (red > self.tol))
            cand = np.where(cand_mask)[0]
            if cand.size == 0:
                if clean:
                    return LpStatus.OPTIMAL
                # rebuild before trusting convergence; accumulated drift can
                # hide eligible columns or fake optimality
                self._refactorize()
                clean = True
                continue
            if bland:
                e = int(cand[0])
            else:
                e = int(cand[np.argmax(np.abs(red[cand]))])
            direction = -1.0 if self.at_upper[e] else 1.0
            col = self.T[:, e] * direction

            # ratio test: find the tightest step, then among rows within a
            # hair of it pivot on the largest element (keeps the tableau
            # numerically sane through degenerate stretches)
            # two-pass ratio test with per-row feasibility slack: pass one
            # finds the step allowed when every basic bound is relaxed by a
            # hair, pass two picks the numerically largest pivot among the
            # rows whose exact ratio fits that step.  The slack lives in
            # bound units, so a huge column entry cannot turn a tiny step
            # window into a large bound violation.  Tiny entries still
            # block (a long move along a 1e-8 entry adds up); they are just
            # unattractive pivots.
            col_scale = float(np.max(np.abs(col))) if col.size else 0.0
            zero_tol = max(1e-10, 1e-12 * col_scale)
            t_max = self.U[e]           # bound-flip limit of the entering column
            rows: List[Tuple[float, int, bool]] = []
            for i in range(self.m):
                ci = col[i]
                delta = 1e-9 * (1.0 + abs(self.xb[i]))
                if ci > zero_tol:
                    room = max(self.xb[i], 0.0)
                    t, t_relax = room / ci, (room + delta) / ci
                    to_upper = False
                elif ci < -zero_tol:
                    ub_i = self.U[self.basis[i]]
                    if math.isinf(ub_i):
                        continue
                    room = max(ub_i - self.xb[i], 0.0)
                    t, t_relax = room / (-ci), (room + delta) / (-ci)
                    to_upper = True
                else:
                    continue
                rows.append((t, i, to_upper))
                if t_relax < t_max:
                    t_max = t_relax
            if math.isinf(t_max):
                if clean:
                    return LpStatus.UNBOUNDED
                self._refactorize()
                clean = True
                continue

            near = [(t, i, up_) for t, i, up_ in rows if t <= t_max]
            if not near:
                # flip the entering variable to its other bound
                self.xb -= col * self.U[e]
                self.at_upper[e] = not self.at_upper[e]
                clean = False
            else:
                if bland:
                    t_step, r, to_up = min(near,
                                           key=lambda x: self.basis[x[1]])
                else:
                    t_step, r, to_up = max(near,
                                           key=lambda x: abs(col[x[1]]))
                risky = abs(col[r]) < _PIV_TOL
                if risky and not clean:
                    # the only blocking entries may be elimination noise;
                    # rebuild the tableau and re-price before committing
                    self._refactorize()
                    clean = True
                    continue
                self._pivot(e, r, min(t_step, self.U[e]), col, to_up)
                pivots += 1
                clean = False
                if risky or pivots % _REFACTOR_EVERY == 0:
                    # a small pivot element amplifies row noise; rebuild at
                    # once so the error cannot propagate
                    self._refactorize()
                    clean = True

            up = self.at_upper & ~self.in_basis
            obj = float(c[self.basis] @ self.xb + c[up] @ self.U[up])
            if obj < last_obj - 1e-10:
                stall = 0
            else:
                stall += 1
                if stall > _BLAND_AFTER:
                    bland = True
            last_obj = obj
        raise NumericalError("simplex iteration limit exceeded")

    def _refactorize(self) -> None:
        """Rebuild the tableau and basic values from the original matrix."""
        A = np.hstack([self.A0 * self.row_sign[:, None], np.eye(self.m)])
        B = A[:, self.basis]
        try:
            self.T = np.linalg.solve(B, A)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular basis during refactorization") from exc
        rhs = self.b0 * self.row_sign
        up = np.where(self.at_upper & ~self.in_basis)[0]
        finite_up = up[np.isfinite(self.U[up])]
        if finite_up.size:
            rhs = rhs - A[:, finite_up] @ self.U[finite_up]
        self.xb = np.linalg.solve(B, rhs)

    def _pivot(self, e: int, r: int, t: float, col: np.ndarray,
               leave_to_upper: bool) -> None:
        leaving = self.basis[r]
        self.xb -= col * t
        entering_val = (self.U[e] - t) if self.at_upper[e] else t
        piv = self.T[r, e]
        if abs(piv) < 1e-11:
            raise NumericalError("pivot element too small")
        self.T[r, :] /= piv
        factor = self.T[:, e].copy()
        factor[r] = 0.0
        self.T -= np.outer(factor, self.T[r, :])
        self.basis[r] = e
        self.in_basis[e] = True
        self.in_basis[leaving] = False
        self.at_upper[e] = False
        self.at_upper[leaving] = leave_to_upper
        self.xb[r] = entering_val

    def _purge_artificials(self) -> None:
        n = self.n
        for r in range(self.m):
            if self.basis[r] < n:
                continue
            row = self.T[r, :n]
            floor = max(1e-7, 1e-9 * float(np.max(np.abs(row))))
            eligible = np.where((np.abs(row) > floor)
                                & (~self.in_basis[:n]) & (~self.at_upper[:n]))[0]
            if eligible.size == 0:
                continue  # redundant row; artificial stays basic at zero
            e = int(eligible[0])
            art = self.basis[r]
            piv = self.T[r, e]
            self.T[r, :] /= piv
            factor = self.T[:, e].copy()
            factor[r] = 0.0
            self.T -= np.outer(factor, self.T[r, :])
            self.basis[r] = e
            self.in_basis[e] = True
            self.in_basis[art] = False

    def _refine(self, values: np.ndarray) -> None:
        """Re-solve the basic values against the original matrix."""
        A = np.hstack([self.A0 * self.row_sign[:, None], np.eye(self.m)])
        rhs = self.b0 * self.row_sign
        up = np.where(self.at_upper & ~self.in_basis)[0]
        finite_up = up[np.isfinite(self.U[up])]
        if finite_up.size:
            rhs = rhs - A[:, finite_up] @ self.U[finite_up]
        try:
            self.xb = np.linalg.solve(A[:, self.basis], rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular basis at termination") from exc

    def _duals(self, c: np.ndarray) -> np.ndarray:
        A = np.hstack([self.A0 * self.row_sign[:, None], np.eye(self.m)])
        try:
            y = np.linalg.solve(A[:, self.basis].T, c[self.basis])
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular basis at termination") from exc
        return y * self.row_sign  # undo row scaling


def solve_lp(lp: LinearProgram, tol_feas: float = 1e-7) -> LpSolution:
    """Solve an LP to a vertex optimum with constraint duals.

    Duals are marginal values of the right-hand sides in the original
    objective sense.  Raises :class:`NumericalError` rather than returning a
    wrong optimum when the result cannot be certified.
    """
    sx = _Simplex(lp, tol_feas)
    status, colvals, duals = sx.solve()
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, {}, [], math.nan)
    assert colvals is not None and duals is not None
    values = {v.name: 0.0 for v in lp.variables}
    for j, (vi, scale, _) in enumerate(sx.cols):
        values[lp.variables[vi].name] += scale * float(colvals[j])
    for vi, shift in _shift_of_var(sx.cols).items():  # shifts once per variable
        values[lp.variables[vi].name] += shift
    obj = sum(lp.objective.get(name, 0.0) * val for name, val in values.items())
    obj_sign = 1.0 if lp.sense == "min" else -1.0
    dual_list = [obj_sign * float(d) for d in duals]
    _check_feasible(lp, values, tol_feas)
    return LpSolution(LpStatus.OPTIMAL, values, dual_list, obj)


def _shift_of_var(cols) -> Dict[int, float]:
    out: Dict[int, float] = {}
    for vi, _, shift in cols:
        out.setdefault(vi, shift)
    return out


def _check_feasible(lp: LinearProgram, values: Dict[str, float], tol: float) -> None:
    scale_tol = max(tol, 1e-7) * 100
    for var in lp.variables:
        v = values[var.name]
        if v < var.lb - scale_tol or v > var.ub + scale_tol:
            raise NumericalError(f"variable {var.name!r} out of bounds: {v}")
    for con in lp.constraints:
        lhs = sum(a * values[n] for n, a in con.coeffs.items())
        slack = con.rhs - lhs
        mag = 1.0 + abs(con.rhs) + sum(abs(a) for a in con.coeffs.values())
        bad = (con.sense == "<=" and slack < -scale_tol * mag) \
            or (con.sense == ">=" and slack > scale_tol * mag) \
            or (con.sense == "=" and abs(slack) > scale_tol * mag)
        if bad:
            raise NumericalError(
                f"constraint {con.name or con.coeffs} violated by {abs(slack)}")


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Dual objective of an optimal solution, for strong-duality checks.

    ``y b`` plus the reduced-cost contributions of variables at their finite
    bounds, reported in the original objective sense.
    """
    obj_sign = 1.0 if lp.sense == "min" else -1.0
    y = [obj_sign * d for d in sol.duals]
    val = sum(yi * con.rhs for yi, con in zip(y, lp.constraints))
    rc = {v.name: obj_sign * lp.objective.get(v.name, 0.0) for v in lp.variables}
    for yi, con in zip(y, lp.constraints):
        if yi == 0.0:
            continue
        for name, a in con.coeffs.items():
            rc[name] -= yi * a
    for var in lp.variables:
        r = rc[var.name]
        if abs(r) <= 1e-9:
            continue
        val += r * (var.lb if r > 0 else var.ub)
    return obj_sign * val


# ---------------------------------------------------------------------------
# Branch and bound


def _fix_binary(lp: LinearProgram, fixes: Dict[str, int]) -> LinearProgram:
    variables = []
    for var in lp.variables:
        if var.name in fixes:
            v = float(fixes[var.name])
            variables.append(Variable(var.name, v, v))
        else:
            variables.append(var)
    return LinearProgram(variables, lp.constraints, lp.objective, lp.sense)


def solve_milp(problem: MilpProblem, gap_tol: float = 1e-6,
               time_limit: Optional[float] = None,
               int_tol: float = 1e-6) -> MilpSolution:
    """Branch and bound on the binary variables of ``problem``.

    Depth-first with most-fractional branching (ties by declaration order)
    and a best-bound restart every 500 nodes.  Returns an incumbent with
    proven relative gap below ``gap_tol``, or the best incumbent and bound
    when the time limit expires.
    """
    lp = problem.lp
    binaries = [v.name for v in lp.variables if v.name in problem.binary_vars]
    for var in lp.variables:
        if var.name in problem.binary_vars and (var.lb < -1e-12 or var.ub > 1 + 1e-12):
            raise ValueError(f"binary variable {var.name!r} must have bounds in [0,1]")
    if not binaries:
        sol = solve_lp(lp)
        return MilpSolution(sol.status, sol.values, sol.duals, sol.objective,
                            bound=sol.objective, gap=0.0, nodes=1)

    sign = 1.0 if lp.sense == "min" else -1.0  # work in min convention
    start = time.monotonic()
    incumbent: Optional[LpSolution] = None
    inc_obj = math.inf
    open_nodes: List[Tuple[float, Dict[str, int]]] = [(-math.inf, {})]
    nodes = 0
    history: List[Tuple[float, float]] = []
    timed_out = False

    def rel_gap(best: float, bound: float) -> float:
        if math.isinf(bound) or math.isinf(best):
            return math.inf
        return (best - bound) / max(1.0, abs(best))

    while open_nodes:
        if time_limit is not None and time.monotonic() - start > time_limit:
            timed_out = True
            break
        global_bound = min(bnd for bnd, _ in open_nodes)
        if incumbent is not None and rel_gap(inc_obj, global_bound) <= gap_tol:
            break
        if nodes and nodes % 500 == 0:
            idx = min(range(len(open_nodes)), key=lambda i: open_nodes[i][0])
        else:
            idx = len(open_nodes) - 1
        parent_bound, fixes = open_nodes.pop(idx)
        if incumbent is not None and parent_bound >= inc_obj - 1e-12:
            continue
        nodes += 1
        sol = solve_lp(_fix_binary(lp, fixes))
        if sol.status is not LpStatus.OPTIMAL:
            if sol.status is LpStatus.UNBOUNDED and not fixes:
                return MilpSolution(LpStatus.UNBOUNDED, {}, [], math.nan,
                                    bound=-sign * math.inf, gap=math.inf, nodes=nodes)
            continue
        node_obj = sign * sol.objective
        if incumbent is not None and node_obj >= inc_obj - 1e-12:
            continue
        frac = {b: abs(sol.values[b] - round(sol.values[b])) for b in binaries}
        worst = max(binaries, key=lambda b: frac[b])
        if frac[worst] <= int_tol:
            snapped = dict(sol.values)
            for b in binaries:
                snapped[b] = float(round(snapped[b]))
            incumbent = LpSolution(sol.status, snapped, sol.duals, sol.objective)
            inc_obj = node_obj
        else:
            # "down" child on top of the stack, explored first
            open_nodes.append((node_obj, {**fixes, worst: 1}))
            open_nodes.append((node_obj, {**fixes, worst: 0}))
        bound_now = min([bnd for bnd, _ in open_nodes] + [inc_obj])
        history.append((sign * bound_now,
                        sign * inc_obj if incumbent is not None else math.nan))

    if incumbent is None:
        if timed_out:
            raise NumericalError("time limit reached before any incumbent was found")
        return MilpSolution(LpStatus.INFEASIBLE, {}, [], math.nan, bound=math.nan,
                            gap=math.inf, nodes=nodes)
    final_bound = min([bnd for bnd, _ in open_nodes] + [inc_obj])
    return MilpSolution(LpStatus.OPTIMAL, incumbent.values, incumbent.duals,
                        incumbent.objective, bound=sign * final_bound,
                        gap=max(rel_gap(inc_obj, final_bound), 0.0),
                        nodes=nodes, bound_history=history)


def lp_to_text(lp: LinearProgram) -> str:
    """Debug dump in a simple LP-like text format."""
    lines = [f"{lp.sense}:"]
    lines.append("  " + " + ".join(f"{c}*{n}" for n, c in sorted(lp.objective.items())))
    lines.append("subject to:")
    for con in lp.constraints:
        body = " + ".join(f"{a}*{n}" for n, a in sorted(con.coeffs.items()))
        lines.append(f"  {con.name or ''}: {body} {con.sense} {con.rhs}")
    lines.append("bounds:")
    for var in lp.variables:
        lines.append(f"  {var.lb} <= {var.name} <= {var.ub}")
    return "\n".join(lines)
