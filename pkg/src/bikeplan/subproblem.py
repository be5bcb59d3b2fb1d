"""Per-trip evaluation of an upgrade vector and Benders cut generation.

Each trip's problem is a unit min-cost flow from origin to destination with
arc capacities 1 on safe ways, the upgrade value on unsafe ways, and a
bypass arc priced at the trip's acceptance threshold (the outside option).
Integral upgrade vectors reduce to a single shortest-path computation; the
same successive-shortest-path machinery covers fractional vectors produced
by the relaxed master in phase one.

Duals: ``lam`` holds node potentials (feasible for the dual of the flow
LP), ``mu`` the nonnegative multipliers on unavailable or saturated unsafe
ways.  Cut coefficients are ``-mu`` so a cut reads
``u >= constant + sum(coeffs[w] * y[w])``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from . import milp
from .model import ImprovementPlan, Instance, Safety, Trip, Way

_CAP_TOL = 1e-12
_EQ_RELAX = 1e-7  # slack allowed on the dual-objective pin in the Pareto LP


@dataclass(frozen=True)
class SubproblemResult:
    trip_id: str
    phi: float                      # deviation value for this upgrade vector
    lam: Dict[str, float]           # node potentials
    mu: Dict[str, float]            # multipliers on unsafe ways (sparse, >= 0)
    used_outside: bool


@dataclass(frozen=True)
class BendersCut:
    trip_id: str
    constant: float
    coeffs: Dict[str, float]        # unsafe way -> nonpositive coefficient

    def value_at(self, y: Mapping[str, float]) -> float:
        return self.constant + sum(c * y.get(w, 0.0) for w, c in self.coeffs.items())


@dataclass(frozen=True)
class ZResult:
    """Result of the cyclist-count variant: path value with a big-M bypass."""
    trip_id: str
    psi: float
    lam: Dict[str, float]
    mu: Dict[str, float]
    bypass: bool


def upgrade_vector(instance: Instance, plan: ImprovementPlan) -> Dict[str, float]:
    return {w.id: (1.0 if w.id in plan.upgraded_ways else 0.0)
            for w in instance.unsafe_ways}


# ---------------------------------------------------------------------------
# Min-cost flow with potentials


def _flow_solve(
    instance: Instance,
    trip: Trip,
    capacities: Mapping[str, float],
    bypass_cost: float,
) -> Tuple[float, Dict[str, float], Dict[str, float], float]:
    """Unit min-cost flow; returns (cost, potentials g, mu, bypass flow).

    ``g`` are shortest-distance style potentials with ``g[origin] = 0``;
    the dual potentials are ``lam = -g``.  Unreachable nodes are clamped to
    the running bypass distance so dual feasibility holds everywhere.
    """
    nodes = sorted(instance.nodes)
    arcs: List[Tuple[str, str, float, float, Optional[str]]] = []
    # safe ways and the bypass are uncapacitated (their duals carry no
    # capacity multiplier); unit demand keeps flows in [0, 1] regardless
    for way in sorted(instance.ways.values(), key=lambda w: w.id):
        cap = math.inf if way.safety is Safety.SAFE \
            else float(capacities.get(way.id, 0.0))
        arcs.append((way.tail, way.head, trip.arc_cost(way), cap, way.id))
    arcs.append((trip.origin, trip.dest, bypass_cost, math.inf, None))

    nof = {n: i for i, n in enumerate(nodes)}
    adj: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(len(nodes))}
    for a, (u, v, _, _, _) in enumerate(arcs):
        adj[nof[u]].append((a, +1))
        adj[nof[v]].append((a, -1))
    flow = [0.0] * len(arcs)
    pi = [0.0] * len(nodes)  # potentials; reduced costs stay nonnegative
    src, dst = nof[trip.origin], nof[trip.dest]
    remaining = 1.0

    while remaining > _CAP_TOL:
        dist = [math.inf] * len(nodes)
        parent: List[Optional[Tuple[int, int]]] = [None] * len(nodes)
        dist[src] = 0.0
        heap = [(0.0, src)]
        done = [False] * len(nodes)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for a, direction in adj[u]:
                tail, head, cost, cap, _ = arcs[a]
                if direction > 0:
                    if cap - flow[a] <= _CAP_TOL:
                        continue
                    v, rc = nof[head], cost + pi[u] - pi[nof[head]]
                else:
                    if flow[a] <= _CAP_TOL:
                        continue
                    v, rc = nof[tail], -cost + pi[u] - pi[nof[tail]]
                rc = max(rc, 0.0)
                if d + rc < dist[v] - 1e-15:
                    dist[v] = d + rc
                    parent[v] = (a, direction)
                    heapq.heappush(heap, (dist[v], v))
        if math.isinf(dist[dst]):
            raise RuntimeError("bypass arc missing: subproblem must have recourse")
        for i in range(len(nodes)):
            pi[i] += min(dist[i], dist[dst])
        # trace the augmenting path and push flow
        bottleneck = remaining
        v = dst
        while v != src:
            a, direction = parent[v]  # type: ignore[misc]
            tail, head, _, cap, _ = arcs[a]
            bottleneck = min(bottleneck,
                             cap - flow[a] if direction > 0 else flow[a])
            v = nof[tail] if direction > 0 else nof[head]
        v = dst
        while v != src:
            a, direction = parent[v]  # type: ignore[misc]
            tail, head, _, _, _ = arcs[a]
            flow[a] += direction * bottleneck
            v = nof[tail] if direction > 0 else nof[head]
        remaining -= bottleneck

    total_cost = sum(arcs[a][2] * flow[a] for a in range(len(arcs)))
    g = {n: pi[nof[n]] - pi[src] for n in nodes}
    mu: Dict[str, float] = {}
    for a, (u, v, cost, cap, wid) in enumerate(arcs):
        if wid is None or instance.ways[wid].safety is not Safety.UNSAFE:
            continue
        if cap - flow[a] <= _CAP_TOL:  # unavailable or saturated
            excess = g[v] - g[u] - cost
            if excess > 1e-12:
                mu[wid] = excess
    bypass_flow = flow[-1]
    return total_cost, g, mu, bypass_flow


def _result(instance: Instance, trip: Trip, capacities: Mapping[str, float],
            ) -> SubproblemResult:
    cost, g, mu, bypass = _flow_solve(instance, trip, capacities, trip.cost_cap)
    lam = {n: -v for n, v in g.items()}
    return SubproblemResult(
        trip_id=trip.id,
        phi=cost + trip.cost_offset,
        lam=lam,
        mu=mu,
        used_outside=bypass > 1e-9,
    )


def solve_integral(instance: Instance, trip: Trip,
                   plan: ImprovementPlan) -> SubproblemResult:
    """Evaluate a 0/1 plan: deviation of the best safe-or-upgraded path."""
    caps = {w: 1.0 for w in plan.upgraded_ways}
    return _result(instance, trip, caps)


def solve_fractional(instance: Instance, trip: Trip,
                     y: Mapping[str, float]) -> SubproblemResult:
    """Evaluate a fractional upgrade vector (phase-one master solutions)."""
    return _result(instance, trip, y)


def solve_z_variant(instance: Instance, trip: Trip,
                    y: Mapping[str, float], big_m: float) -> ZResult:
    """Path value with the bypass priced at threshold + big_m.

    Serves the cyclist-count objective, where the master links the value to
    the outside-option variable via ``psi <= threshold + big_m * z``.
    """
    if big_m <= 0:
        raise ValueError("big_m must be positive")
    cost, g, mu, bypass = _flow_solve(instance, trip, y, trip.cost_cap + big_m)
    lam = {n: -v for n, v in g.items()}
    return ZResult(trip.id, cost, lam, mu, bypass > 1e-9)


def default_big_m(instance: Instance, trip: Trip) -> float:
    """Smallest safe big-M without path enumeration: total arc cost minus
    the threshold, clamped to stay positive."""
    total = sum(trip.arc_cost(w) for w in instance.ways.values())
    return max(total - trip.cost_cap, 1.0)


# ---------------------------------------------------------------------------
# Cuts


def _clean(trip_id: str, constant: float,
           coeffs: Dict[str, float]) -> BendersCut:
    """Fold negligible coefficients into the constant.

    Dropping a term -mu*y and lowering the constant by mu can only weaken
    the cut (y <= 1), so validity is preserved while the master LP is kept
    free of near-zero entries that destabilize pivoting.
    """
    floor = 1e-7 * max(1.0, abs(constant))
    kept = {}
    for w, c in coeffs.items():
        if abs(c) >= floor:
            kept[w] = c
        elif c < 0:
            constant += c
    return BendersCut(trip_id, constant, kept)


def standard_cut(trip: Trip, result: SubproblemResult) -> BendersCut:
    """Affine lower bound on the deviation from optimal subproblem duals."""
    constant = result.lam[trip.origin] - result.lam[trip.dest] + trip.cost_offset
    coeffs = {w: -m for w, m in result.mu.items() if m > 1e-12}
    return _clean(trip.id, constant, coeffs)


def z_cut(trip: Trip, result: ZResult) -> BendersCut:
    """Affine lower bound on the big-M path value (no deviation offset)."""
    constant = result.lam[trip.origin] - result.lam[trip.dest]
    coeffs = {w: -m for w, m in result.mu.items() if m > 1e-12}
    return _clean(trip.id, constant, coeffs)


def core_point(instance: Instance) -> Dict[str, float]:
    """Strictly interior upgrade vector; spends at most half the budget."""
    unsafe = instance.unsafe_ways
    if instance.budget <= 0:
        raise ValueError("no interior point exists with a zero budget")
    for way in unsafe:
        if way.cost <= 0:
            raise ValueError(f"way {way.id!r} has zero improvement cost")
    n = len(unsafe)
    core = {w.id: 0.5 * min(instance.budget / (n * w.cost), 1.0) for w in unsafe}
    spent = sum(w.cost * core[w.id] for w in unsafe)
    assert spent <= instance.budget / 2 + 1e-9
    return core


def pareto_cut(
    instance: Instance,
    trip: Trip,
    y: Mapping[str, float],
    phi: float,
    core: Mapping[str, float],
    bypass_cost: Optional[float] = None,
) -> BendersCut:
    """Non-dominated cut: maximize the cut value at the core point among
    dual solutions that remain optimal at ``y``.

    ``phi`` must be the subproblem value at ``y`` (deviation for the
    standard model; raw path value when ``bypass_cost`` overrides the
    threshold for the cyclist-count variant).  Solved as an explicit LP over
    the dual variables.
    """
    offset = trip.cost_offset if bypass_cost is None else 0.0
    cap = trip.cost_cap if bypass_cost is None else bypass_cost
    unsafe = instance.unsafe_ways

    lp = milp.LinearProgram(sense="max")
    for n in sorted(instance.nodes):
        if n == trip.dest:
            lp.add_variable(f"lam[{n}]", 0.0, 0.0)  # pin the dual's free shift
        else:
            lp.add_variable(f"lam[{n}]", -math.inf, math.inf)
    for way in unsafe:
        lp.add_variable(f"mu[{way.id}]", 0.0, math.inf)

    obj = {f"lam[{trip.origin}]": 1.0, f"lam[{trip.dest}]": -1.0}
    for way in unsafe:
        cval = core.get(way.id, 0.0)
        if cval:
            obj[f"mu[{way.id}]"] = obj.get(f"mu[{way.id}]", 0.0) - cval
    lp.objective = obj

    for way in sorted(instance.ways.values(), key=lambda w: w.id):
        row = {f"lam[{way.tail}]": 1.0}
        row[f"lam[{way.head}]"] = row.get(f"lam[{way.head}]", 0.0) - 1.0
        if way.safety is Safety.UNSAFE:
            row[f"mu[{way.id}]"] = -1.0
        lp.add_constraint(row, "<=", trip.arc_cost(way), name=f"arc[{way.id}]")
    lp.add_constraint({f"lam[{trip.origin}]": 1.0, f"lam[{trip.dest}]": -1.0},
                      "<=", cap, name="bypass")

    # pin the dual objective at y to the known optimum, with a small relaxation
    pin = {f"lam[{trip.origin}]": 1.0, f"lam[{trip.dest}]": -1.0}
    for way in unsafe:
        yval = y.get(way.id, 0.0)
        if yval:
            pin[f"mu[{way.id}]"] = pin.get(f"mu[{way.id}]", 0.0) - yval
    target = phi - offset
    relax = _EQ_RELAX * max(1.0, abs(target))
    lp.add_constraint(pin, "<=", target + relax, name="pin_hi")
    lp.add_constraint(pin, ">=", target - relax, name="pin_lo")

    sol = milp.solve_lp(lp)
    if sol.status is not milp.LpStatus.OPTIMAL:
        raise RuntimeError(
            f"pareto subproblem for trip {trip.id!r} is {sol.status.value}; "
            "the pinned value disagrees with the subproblem solve")
    lam_o = sol.values[f"lam[{trip.origin}]"]
    lam_d = sol.values[f"lam[{trip.dest}]"]
    coeffs = {}
    for way in unsafe:
        m = sol.values[f"mu[{way.id}]"]
        if m > 1e-9:
            coeffs[way.id] = -m
    return _clean(trip.id, lam_o - lam_d + offset, coeffs)


# ---------------------------------------------------------------------------
# LP cross-check route (the flow solver is the primary route)


def flow_lp(instance: Instance, trip: Trip, capacities: Mapping[str, float],
            bypass_cost: float) -> milp.LinearProgram:
    """The subproblem as an explicit LP, for cross-checking the flow solver."""
    lp = milp.LinearProgram(sense="min")
    ways = sorted(instance.ways.values(), key=lambda w: w.id)
    for way in ways:
        cap = math.inf if way.safety is Safety.SAFE \
            else float(capacities.get(way.id, 0.0))
        lp.add_variable(f"x[{way.id}]", 0.0, cap)
    lp.add_variable("z", 0.0, math.inf)
    lp.objective = {f"x[{w.id}]": trip.arc_cost(w) for w in ways}
    lp.objective["z"] = bypass_cost
    for node in sorted(instance.nodes):
        row: Dict[str, float] = {}
        for way in ways:
            if way.tail == node:
                row[f"x[{way.id}]"] = row.get(f"x[{way.id}]", 0.0) + 1.0
            if way.head == node:
                row[f"x[{way.id}]"] = row.get(f"x[{way.id}]", 0.0) - 1.0
        rhs = 0.0
        if node == trip.origin:
            row["z"] = row.get("z", 0.0) + 1.0
            rhs = 1.0
        elif node == trip.dest:
            row["z"] = row.get("z", 0.0) - 1.0
            rhs = -1.0
        if row or rhs:
            lp.add_constraint(row, "=", rhs, name=f"flow[{node}]")
    return lp


def solve_fractional_lp(instance: Instance, trip: Trip,
                        y: Mapping[str, float]) -> float:
    """Subproblem value via the LP route; must agree with the flow solver."""
    lp = flow_lp(instance, trip, y, trip.cost_cap)
    sol = milp.solve_lp(lp)
    if sol.status is not milp.LpStatus.OPTIMAL:
        raise RuntimeError(f"flow LP for trip {trip.id!r} is {sol.status.value}")
    return sol.objective + trip.cost_offset
