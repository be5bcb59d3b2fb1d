"""Solve orchestration: Benders loops, exact monolithic MIP, evaluation.

The master problem selects upgrades under the budget (and road-linking)
constraints; each iteration prices the proposed network by per-trip
subproblems and adds the violated optimality cuts.  Three loop variants are
provided: standard cuts (TB), non-dominated cuts through a core point (MW),
and the latter warm-started by a first phase on the relaxed master
(MW-McD).  The exact monolithic MIP serves as a ground-truth oracle for
desk-scale instances.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Set, Tuple

from . import milp, penalty as pen, subproblem as sub
from .model import ImprovementPlan, Instance, PathMode, Safety, Trip, shortest_path
from .penalty import PenaltyKind, PenaltyModel, epi_var, u_var, z_var

# consecutive relaxed-master iterations without bound movement before the
# cut-seeding phase is abandoned
_PHASE1_STALL_LIMIT = 15


class Algo(Enum):
    TB = "tb"
    MW = "mw"
    MW_MCD = "mw-mcd"
    EXACT = "exact"
    GREEDY = "greedy"


@dataclass
class SolveConfig:
    variant: Algo = Algo.MW_MCD
    penalty: PenaltyModel = field(default_factory=PenaltyModel)
    gap_tol: float = 1e-6
    phase1_time_limit: float = 1200.0
    total_time_limit: Optional[float] = None
    master_gap_tol: float = 0.0
    seed: int = 0
    exact_cap: int = 50_000        # refuse the monolithic MIP past |W|*|T|
    max_iterations: int = 2000
    violation_tol: float = 1e-7

    def __post_init__(self):
        if self.gap_tol <= 0 or self.violation_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    phase: int
    lower: float
    upper: float
    gap: float
    cuts_added: int
    wall: float


@dataclass(frozen=True)
class TripOutcome:
    trip_id: str
    deviation: float               # u_k, capped at L_k - s_k when outside
    outside: bool
    penalty: float                 # scalar penalty (pre rider weighting)
    route: Optional[Tuple[str, ...]]


@dataclass
class Solution:
    plan: ImprovementPlan
    objective: float
    per_trip: Dict[str, TripOutcome]
    variant: str
    lower_bound: float = math.nan
    gap: float = 0.0
    log: List[IterationRecord] = field(default_factory=list)
    # (penalty kind value, cut, bypass big-M or None) for every cut emitted
    # during the solve; empty for the monolithic and greedy paths
    cuts: List[Tuple[str, sub.BendersCut, Optional[float]]] = \
        field(default_factory=list)


@dataclass
class GapReport:
    rows: List[IterationRecord]
    phase_switch_index: Optional[int]   # first phase-2 row, when present
    final_gap: float


def bound_report(log: List[IterationRecord]) -> GapReport:
    if not log:
        raise ValueError("empty iteration log")
    switch = next((i for i, r in enumerate(log) if r.phase == 2), None)
    if switch == 0:
        switch = None
    return GapReport(list(log), switch, log[-1].gap)


# ---------------------------------------------------------------------------
# Master problem


@dataclass
class MasterState:
    lp: milp.LinearProgram
    y_vars: Dict[str, str]          # unsafe way id -> master variable name
    binaries: Set[str]
    cut_pool: List[sub.BendersCut] = field(default_factory=list)

    def add_cut(self, cut: sub.BendersCut, model: PenaltyModel,
                trip: Trip, big_m: Optional[float]) -> None:
        self.cut_pool.append(cut)
        if model.kind is PenaltyKind.OUTSIDE:
            # constant + sum(coeffs y) <= cap + M z
            row = {self.y_vars[w]: c for w, c in cut.coeffs.items()}
            row[z_var(trip.id)] = row.get(z_var(trip.id), 0.0) - big_m
            self.lp.add_constraint(row, "<=", trip.cost_cap - cut.constant,
                                   name=f"cut{len(self.cut_pool)}[{trip.id}]")
        else:
            # u >= constant + sum(coeffs y)
            row = {u_var(trip.id): 1.0}
            for w, c in cut.coeffs.items():
                row[self.y_vars[w]] = row.get(self.y_vars[w], 0.0) - c
            self.lp.add_constraint(row, ">=", cut.constant,
                                   name=f"cut{len(self.cut_pool)}[{trip.id}]")


def build_master(instance: Instance, config: SolveConfig) -> MasterState:
    """Budget row, linking rows, penalty objective, empty cut pool."""
    lp = milp.LinearProgram(sense="min")
    y_vars: Dict[str, str] = {}
    budget_row: Dict[str, float] = {}
    for way in instance.unsafe_ways:
        name = f"y[{way.id}]"
        y_vars[way.id] = name
        lp.add_variable(name, 0.0, 1.0)
        budget_row[name] = way.cost
    lp.add_constraint(budget_row, "<=", instance.budget, name="budget")
    if instance.road_level:
        for rid in sorted(instance.roads):
            ways = sorted(instance.roads[rid].way_ids)
            first = y_vars[ways[0]]
            for other in ways[1:]:
                lp.add_constraint({first: 1.0, y_vars[other]: -1.0}, "=", 0.0,
                                  name=f"link[{rid},{other}]")
    mo = pen.master_objective_rows(config.penalty, instance.trips)
    if config.penalty.kind is not PenaltyKind.OUTSIDE:
        for trip in instance.trips:
            lp.add_variable(u_var(trip.id), 0.0, math.inf)
    for name in mo.extra_continuous:
        lp.add_variable(name, 0.0, math.inf)
    for name in mo.extra_binaries:
        lp.add_variable(name, 0.0, 1.0)
    for row in mo.rows:
        lp.add_constraint(row.coeffs, row.sense, row.rhs, name=row.name)
    lp.objective = mo.objective
    binaries = set(y_vars.values()) | set(mo.extra_binaries)
    return MasterState(lp, y_vars, binaries)


# ---------------------------------------------------------------------------
# Plan evaluation (shared by every algorithm)


def evaluate_plan(instance: Instance, plan: ImprovementPlan,
                  model: PenaltyModel, variant: str = "eval") -> Solution:
    """Price a plan with fresh subproblem solves and extract routes."""
    per_trip: Dict[str, TripOutcome] = {}
    objective = 0.0
    for trip in instance.trips:
        # decide served/outside from the best safe-or-upgraded path against
        # the threshold; a path costing exactly the threshold still serves
        # the trip, which flow routing can miss when the bypass ties
        pr = shortest_path(instance, trip.origin, trip.dest,
                           PathMode.SAFE_AND_UPGRADED, plan, trip=trip)
        served = pr is not None and \
            pr.cost <= trip.cost_cap + 1e-9 * max(1.0, abs(trip.cost_cap))
        if served:
            dev = min(pr.cost, trip.cost_cap) + trip.cost_offset
            route = pr.arcs
        else:
            dev = _dev_cap(trip)
            route = None
        p = pen.evaluate(model, trip, dev, outside=not served)
        per_trip[trip.id] = TripOutcome(trip.id, dev, not served, p, route)
        objective += trip.riders * p
    return Solution(plan, objective, per_trip, variant)


def _dev_cap(trip: Trip) -> float:
    return trip.cost_cap + trip.cost_offset  # L - s in the distance model


def _true_objective(instance: Instance, model: PenaltyModel,
                    phis: Mapping[str, float],
                    outside: Mapping[str, bool]) -> float:
    total = 0.0
    for trip in instance.trips:
        total += trip.riders * pen.evaluate(
            model, trip, min(phis[trip.id], _dev_cap(trip)),
            outside=outside[trip.id])
    return total


# ---------------------------------------------------------------------------
# Benders loop


def run(instance: Instance, config: SolveConfig) -> Solution:
    """Iterate master and subproblems until the optimality gap closes.

    TB adds standard cuts, MW non-dominated cuts; MW-McD prepends a phase on
    the LP-relaxed master (keeping its cuts) before restoring integrality.
    """
    if config.variant not in (Algo.TB, Algo.MW, Algo.MW_MCD):
        raise ValueError(f"run() does not handle {config.variant}")
    model = config.penalty
    state = build_master(instance, config)
    use_pareto = config.variant in (Algo.MW, Algo.MW_MCD)
    core: Optional[Dict[str, float]] = None
    if use_pareto and instance.budget > 0 and instance.unsafe_ways:
        core = sub.core_point(instance)  # no interior point exists at B = 0
    big_m = {t.id: sub.default_big_m(instance, t) for t in instance.trips} \
        if model.kind is PenaltyKind.OUTSIDE else {}

    start = time.monotonic()
    log: List[IterationRecord] = []
    emitted: List[Tuple[str, sub.BendersCut, Optional[float]]] = []
    lb = -math.inf
    ub = math.inf
    best_plan: Optional[ImprovementPlan] = None
    iteration = 0
    trips = instance.trips

    def remaining_time() -> Optional[float]:
        if config.total_time_limit is None:
            return None
        return max(config.total_time_limit - (time.monotonic() - start), 0.1)

    def gap_of(u: float, l: float) -> float:
        if math.isinf(u) or math.isinf(l):
            return math.inf
        return max(u - l, 0.0) / max(1.0, abs(u))

    phases = [1, 2] if config.variant is Algo.MW_MCD else [2]
    for phase in phases:
        phase_start = time.monotonic()
        phase1_best = -math.inf
        phase1_stall = 0
        while True:
            iteration += 1
            if iteration > config.max_iterations:
                raise RuntimeError("Benders loop failed to converge "
                                   f"within {config.max_iterations} iterations")
            if phase == 1:
                msol = milp.solve_milp(milp.MilpProblem(state.lp, set()))
            else:
                msol = milp.solve_milp(
                    milp.MilpProblem(state.lp, state.binaries),
                    gap_tol=max(config.master_gap_tol, 1e-9),
                    time_limit=remaining_time())
            if msol.status is not milp.LpStatus.OPTIMAL:
                raise RuntimeError(f"master problem is {msol.status.value}")
            y_now = {w: msol.values[name] for w, name in state.y_vars.items()}
            lb = max(lb, msol.objective)

            cuts_added = 0
            phis: Dict[str, float] = {}
            outside: Dict[str, bool] = {}
            for trip in trips:
                if model.kind is PenaltyKind.OUTSIDE:
                    zres = sub.solve_z_variant(instance, trip, y_now,
                                               big_m[trip.id])
                    phis[trip.id] = min(zres.psi, trip.cost_cap) + trip.cost_offset
                    outside[trip.id] = zres.psi > trip.cost_cap + 1e-9
                    z_val = msol.values[z_var(trip.id)]
                    violated = zres.psi > trip.cost_cap \
                        + big_m[trip.id] * z_val + config.violation_tol
                    if violated:
                        cut = None
                        if use_pareto and core is not None:
                            try:
                                cut = sub.pareto_cut(
                                    instance, trip, y_now, zres.psi, core,
                                    bypass_cost=trip.cost_cap + big_m[trip.id])
                            except (RuntimeError, milp.NumericalError):
                                cut = None   # fall back to the plain cut
                        if cut is None:
                            cut = sub.z_cut(trip, zres)
                        state.add_cut(cut, model, trip, big_m[trip.id])
                        emitted.append((model.kind.value, cut, big_m[trip.id]))
                        cuts_added += 1
                else:
                    res = sub.solve_fractional(instance, trip, y_now) \
                        if phase == 1 else sub.solve_integral(
                            instance, trip, _plan_of(instance, y_now))
                    phis[trip.id] = res.phi
                    outside[trip.id] = res.used_outside
                    if res.phi > msol.values[u_var(trip.id)] + config.violation_tol:
                        cut = None
                        if use_pareto and core is not None:
                            try:
                                cut = sub.pareto_cut(instance, trip, y_now,
                                                     res.phi, core)
                            except (RuntimeError, milp.NumericalError):
                                cut = None   # fall back to the plain cut
                        if cut is None:
                            cut = sub.standard_cut(trip, res)
                        state.add_cut(cut, model, trip, None)
                        emitted.append((model.kind.value, cut, None))
                        cuts_added += 1

            if phase == 2:
                cand = _true_objective(instance, model, phis, outside)
                plan = _plan_of(instance, y_now)
                if cand < ub - 1e-9 or (
                        best_plan is not None and abs(cand - ub) <= 1e-9
                        and sorted(plan.upgraded_ways)
                        < sorted(best_plan.upgraded_ways)):
                    ub = min(ub, cand)
                    best_plan = plan
            g = gap_of(ub, lb)
            log.append(IterationRecord(iteration, phase, lb, ub, g,
                                       cuts_added, time.monotonic() - start))
            if phase == 2 and (cuts_added == 0 or g <= config.gap_tol):
                break
            if phase == 1:
                if cuts_added == 0:
                    break
                # the relaxed phase only seeds cuts; once its bound stops
                # moving, further relaxed iterations add nothing (the
                # outside-option relaxation in particular can absorb any
                # violation with a sliver of z, so its bound never moves)
                if msol.objective > phase1_best + 1e-9 * max(
                        1.0, abs(phase1_best)):
                    phase1_best = msol.objective
                    phase1_stall = 0
                else:
                    phase1_stall += 1
                    if phase1_stall >= _PHASE1_STALL_LIMIT:
                        break
                if time.monotonic() - phase_start > config.phase1_time_limit:
                    break
            if config.total_time_limit is not None and \
                    time.monotonic() - start > config.total_time_limit:
                break
        if config.total_time_limit is not None and \
                time.monotonic() - start > config.total_time_limit:
            break

    if best_plan is None:
        raise RuntimeError("time limit reached before any incumbent was found")
    solution = evaluate_plan(instance, best_plan, model,
                             variant=config.variant.value)
    if abs(solution.objective - ub) > 1e-6 * max(1.0, abs(ub)):
        raise RuntimeError(
            f"self-check failed: re-evaluated objective {solution.objective} "
            f"!= incumbent {ub}")
    solution.lower_bound = lb
    solution.gap = gap_of(ub, lb)
    solution.log = log
    solution.cuts = emitted
    return solution


def _plan_of(instance: Instance, y: Mapping[str, float]) -> ImprovementPlan:
    return instance.plan_from_ways({w for w, v in y.items() if v > 0.5})


# ---------------------------------------------------------------------------
# Exact monolithic MIP (oracle)


def solve_exact_mip(instance: Instance, config: SolveConfig) -> Solution:
    """One MIP over upgrades, per-trip flows and deviations.

    Flow variables stay continuous: with upgrades fixed each trip's polytope
    is integral, so only upgrade (and, for the cyclist-count objective,
    outside-option) variables are branched on.  Refuses oversized instances;
    use the Benders variants there.
    """
    n_ways, n_trips = len(instance.ways), len(instance.trips)
    if n_ways * n_trips > config.exact_cap:
        raise ValueError(
            f"exact MIP refused: |W|*|T| = {n_ways * n_trips} exceeds "
            f"{config.exact_cap}; use a Benders variant (tb, mw, mw-mcd)")
    model = config.penalty
    outside_kind = model.kind is PenaltyKind.OUTSIDE
    lp = milp.LinearProgram(sense="min")
    ways = sorted(instance.ways.values(), key=lambda w: w.id)

    y_vars: Dict[str, str] = {}
    budget_row: Dict[str, float] = {}
    for way in instance.unsafe_ways:
        y_vars[way.id] = f"y[{way.id}]"
        lp.add_variable(y_vars[way.id], 0.0, 1.0)
        budget_row[y_vars[way.id]] = way.cost
    lp.add_constraint(budget_row, "<=", instance.budget, name="budget")
    if instance.road_level:
        for rid in sorted(instance.roads):
            ids = sorted(instance.roads[rid].way_ids)
            for other in ids[1:]:
                lp.add_constraint({y_vars[ids[0]]: 1.0, y_vars[other]: -1.0},
                                  "=", 0.0, name=f"link[{rid},{other}]")

    mo = pen.master_objective_rows(model, instance.trips)
    # any positive M is exact here (z=0 still forces a path within cap and
    # the bypass always satisfies the row at z=1); a small value keeps the
    # LP relaxation tight, unlike the cut-generating subproblems where M
    # must admit every simple path
    big_m = {t.id: 1.0 for t in instance.trips} if outside_kind else {}
    for trip in instance.trips:
        tid = trip.id
        for way in ways:
            lp.add_variable(f"x[{tid},{way.id}]", 0.0, 1.0)
        # bypass flow variable: z for the deviation models, f for the
        # cyclist-count model (whose z only appears in the big-M row)
        lp.add_variable(f"f[{tid}]", 0.0, 1.0)
        if not outside_kind:
            lp.add_variable(u_var(tid), 0.0, math.inf)
        for node in sorted(instance.nodes):
            row: Dict[str, float] = {}
            for way in ways:
                if way.tail == node:
                    row[f"x[{tid},{way.id}]"] = row.get(f"x[{tid},{way.id}]", 0.0) + 1
                if way.head == node:
                    row[f"x[{tid},{way.id}]"] = row.get(f"x[{tid},{way.id}]", 0.0) - 1
            rhs = 0.0
            if node == trip.origin:
                row[f"f[{tid}]"] = row.get(f"f[{tid}]", 0.0) + 1
                rhs = 1.0
            elif node == trip.dest:
                row[f"f[{tid}]"] = row.get(f"f[{tid}]", 0.0) - 1
                rhs = -1.0
            lp.add_constraint(row, "=", rhs, name=f"flow[{tid},{node}]")
        for way in instance.unsafe_ways:
            lp.add_constraint({f"x[{tid},{way.id}]": 1.0, y_vars[way.id]: -1.0},
                              "<=", 0.0, name=f"avail[{tid},{way.id}]")
        if outside_kind:
            row = {f"x[{tid},{w.id}]": trip.arc_cost(w) for w in ways}
            row[f"f[{tid}]"] = trip.cost_cap + big_m[tid]
            row[z_var(tid)] = -big_m[tid]
            lp.add_constraint(row, "<=", trip.cost_cap, name=f"admit[{tid}]")
        else:
            row = {u_var(tid): 1.0}
            for w in ways:
                row[f"x[{tid},{w.id}]"] = -trip.arc_cost(w)
            row[f"f[{tid}]"] = -trip.cost_cap
            lp.add_constraint(row, ">=", trip.cost_offset, name=f"dev[{tid}]")

    for name in mo.extra_continuous:
        lp.add_variable(name, 0.0, math.inf)
    for name in mo.extra_binaries:
        lp.add_variable(name, 0.0, 1.0)
    for row_ in mo.rows:
        lp.add_constraint(row_.coeffs, row_.sense, row_.rhs, name=row_.name)
    lp.objective = mo.objective

    binaries = set(y_vars.values()) | set(mo.extra_binaries)
    msol = milp.solve_milp(milp.MilpProblem(lp, binaries),
                           gap_tol=config.gap_tol,
                           time_limit=config.total_time_limit)
    if msol.status is not milp.LpStatus.OPTIMAL:
        raise RuntimeError(f"exact MIP is {msol.status.value}")
    plan = _plan_of(instance, {w: msol.values[n] for w, n in y_vars.items()})
    solution = evaluate_plan(instance, plan, model, variant=Algo.EXACT.value)
    if abs(solution.objective - msol.objective) > 1e-6 * max(1.0, abs(msol.objective)):
        raise RuntimeError(
            f"exact MIP self-check failed: {solution.objective} vs "
            f"{msol.objective}")
    solution.lower_bound = msol.bound
    solution.gap = msol.gap
    solution.log = [IterationRecord(1, 2, msol.bound, solution.objective,
                                    msol.gap, 0, 0.0)]
    return solution


def solve(instance: Instance, config: SolveConfig) -> Solution:
    """Dispatch on the configured algorithm."""
    if config.variant is Algo.EXACT:
        return solve_exact_mip(instance, config)
    if config.variant is Algo.GREEDY:
        from .heuristic import greedy_plan
        return greedy_plan(instance, config)
    return run(instance, config)
