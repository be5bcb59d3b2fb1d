"""Synthetic instances, metrics, sequential driver, comparisons, GeoJSON."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .model import (ImprovementPlan, Instance, Node, Road, Safety, Trip, Way,
                    apply_plan, validate)


@dataclass(frozen=True)
class Metrics:
    potential_cyclists_pct: float   # riders with a safe route within cap
    avg_additional_distance_m: float
    deviation_histogram: Tuple[Tuple[float, float, int], ...]  # (lo, hi, n)


@dataclass
class SequentialStep:
    step: int
    cumulative_budget: float
    plan: ImprovementPlan
    objective: float
    metrics: Metrics


@dataclass
class SequentialResult:
    steps: List[SequentialStep]
    strategic_objective: float
    strategic_plan: ImprovementPlan
    final_difference_pct: float     # relative objective excess vs one-shot


# ---------------------------------------------------------------------------
# Synthetic grids


def generate_synthetic(rows: int, cols: int, block_len_m: float = 100.0,
                       unsafe_frac: float = 0.5, safe_corridors: int = 1,
                       n_trips: int = 4, rider_range: Tuple[int, int] = (1, 20),
                       seed: int = 0, budget: float = 0.0,
                       deviation_factor: float = 1.5,
                       road_level: bool = False) -> Instance:
    """Seeded planar grid with paired directed ways and random trips.

    Both directions of a street segment share one safety class and one
    road id.  A few whole rows are kept safe as corridors so the safe
    subgraph is never empty; other segments flip a weighted coin.
    """
    if rows < 2 or cols < 2 or n_trips < 1 or block_len_m <= 0:
        raise ValueError("degenerate grid parameters")
    if not 0.0 <= unsafe_frac <= 1.0:
        raise ValueError("unsafe_frac must lie in [0, 1]")
    rng = random.Random(seed)
    nodes: Dict[str, Node] = {}
    for r in range(rows):
        for c in range(cols):
            nid = f"n{r}_{c}"
            nodes[nid] = Node(nid, coord=(c * block_len_m, r * block_len_m))

    corridor_rows = set(range(0, rows, max(rows // max(safe_corridors, 1), 1))) \
        if safe_corridors > 0 else set()
    ways: Dict[str, Way] = {}
    roads: Dict[str, Road] = {}

    def add_pair(a: str, b: str, horizontal: bool, r: int) -> None:
        if horizontal and r in corridor_rows:
            safety = Safety.SAFE
        else:
            safety = Safety.UNSAFE if rng.random() < unsafe_frac else Safety.SAFE
        rid = f"r{len(roads)}" if safety is Safety.UNSAFE else None
        fwd = Way(f"w{len(ways)}", a, b, block_len_m, safety, road_id=rid)
        ways[fwd.id] = fwd
        bwd = Way(f"w{len(ways)}", b, a, block_len_m, safety, road_id=rid)
        ways[bwd.id] = bwd
        if rid is not None:
            roads[rid] = Road(rid, (fwd.id, bwd.id))

    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                add_pair(f"n{r}_{c}", f"n{r}_{c + 1}", True, r)
            if r + 1 < rows:
                add_pair(f"n{r}_{c}", f"n{r + 1}_{c}", False, r)

    node_ids = sorted(nodes)
    trips: List[Trip] = []
    for k in range(n_trips):
        origin, dest = rng.sample(node_ids, 2)
        riders = float(rng.randint(*rider_range))
        trips.append(Trip(f"t{k}", origin, dest, riders=riders))
    inst = Instance(nodes=nodes, ways=ways, roads=roads, trips=trips,
                    budget=budget, road_level=road_level,
                    deviation_factor=deviation_factor)
    return validate(inst)


# ---------------------------------------------------------------------------
# Metrics


def compute_metrics(instance: Instance, solution, bins: int = 10) -> Metrics:
    """Rider share with a safe route within cap, mean extra distance, bins."""
    total_riders = sum(t.riders for t in instance.trips)
    served_riders = 0.0
    weighted_dev = 0.0
    served_devs: List[Tuple[float, float]] = []
    for trip in instance.trips:
        out = solution.per_trip[trip.id]
        dev = trip.max_len_m - trip.shortest_len_m if out.outside \
            else out.deviation
        weighted_dev += trip.riders * dev
        if not out.outside:
            served_riders += trip.riders
            served_devs.append((out.deviation, trip.riders))
    pct = 100.0 * served_riders / total_riders if total_riders else 0.0
    avg = weighted_dev / total_riders if total_riders else 0.0

    hist: Tuple[Tuple[float, float, int], ...] = ()
    if served_devs:
        top = max(d for d, _ in served_devs)
        width = top / bins if top > 0 else 1.0
        counts = [0] * bins
        for d, _ in served_devs:
            idx = min(int(d / width), bins - 1)
            counts[idx] += 1
        hist = tuple((i * width, (i + 1) * width, counts[i])
                     for i in range(bins))
    return Metrics(pct, avg, hist)


# ---------------------------------------------------------------------------
# Sequential improvement


def sequential_driver(instance: Instance, step_budget: float,
                      total_budget: float, config) -> SequentialResult:
    """Solve in budget increments, freezing each step's upgrades as safe."""
    from .benders import solve

    if step_budget <= 0 or total_budget <= 0:
        raise ValueError("budgets must be positive")
    strategic = solve(_with_budget(instance, total_budget), config)

    steps: List[SequentialStep] = []
    upgraded: frozenset = frozenset()
    current = instance
    spent = 0.0
    step_no = 0
    while spent < total_budget - 1e-9:
        step_no += 1
        inc = min(step_budget, total_budget - spent)
        sol = solve(_with_budget(current, inc), config)
        spent += inc
        upgraded = upgraded | sol.plan.upgraded_ways
        cumulative = instance.plan_from_ways(set(upgraded))
        full_sol = _reprice(instance, cumulative, config)
        steps.append(SequentialStep(step_no, spent, cumulative,
                                    full_sol.objective,
                                    compute_metrics(instance, full_sol)))
        current = apply_plan(current, sol.plan)

    final_obj = steps[-1].objective if steps else math.inf
    base = max(abs(strategic.objective), 1e-12)
    diff = 100.0 * (final_obj - strategic.objective) / base
    return SequentialResult(steps, strategic.objective, strategic.plan,
                            max(diff, 0.0))


def _with_budget(instance: Instance, budget: float) -> Instance:
    from dataclasses import replace
    return replace(instance, budget=budget)


def _reprice(instance: Instance, plan: ImprovementPlan, config):
    from .benders import evaluate_plan
    return evaluate_plan(instance, plan, config.penalty)


# ---------------------------------------------------------------------------
# Comparison


@dataclass(frozen=True)
class Comparison:
    a_better: int
    b_better: int
    equal: int
    network_difference_pct: float


def compare_solutions(a, b, instance: Instance,
                      tol: float = 1e-9) -> Comparison:
    """Per-trip penalty counts plus share of upgrades unique to each plan."""
    if set(a.per_trip) != set(b.per_trip):
        raise ValueError("solutions cover different trip sets")
    a_better = b_better = equal = 0
    for tid in a.per_trip:
        pa, pb = a.per_trip[tid].penalty, b.per_trip[tid].penalty
        if abs(pa - pb) <= tol:
            equal += 1
        elif pa < pb:
            a_better += 1
        else:
            b_better += 1
    wa, wb = a.plan.upgraded_ways, b.plan.upgraded_ways
    total_len = sum(instance.ways[w].length_m for w in wa | wb)
    if total_len > 0:
        unique = sum(instance.ways[w].length_m for w in wa - wb) \
            + sum(instance.ways[w].length_m for w in wb - wa)
        diff_pct = 100.0 * unique / total_len
    else:
        diff_pct = 0.0
    return Comparison(a_better, b_better, equal, diff_pct)


# ---------------------------------------------------------------------------
# GeoJSON


def emit_geojson(instance: Instance, plan: ImprovementPlan, path: str,
                 routes: Optional[Dict[str, Tuple[str, ...]]] = None) -> None:
    """Way overlay (and optional routes) as a GeoJSON FeatureCollection."""
    missing = [n.id for n in instance.nodes.values() if n.coord is None]
    if missing:
        raise ValueError(
            f"cannot emit GeoJSON: nodes without coordinates: "
            f"{', '.join(sorted(missing)[:5])}")

    def coords(nid: str) -> List[float]:
        return list(instance.nodes[nid].coord)

    features = []
    for wid in sorted(instance.ways):
        way = instance.ways[wid]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString",
                         "coordinates": [coords(way.tail), coords(way.head)]},
            "properties": {"way": way.id, "safety": way.safety.value,
                           "upgraded": wid in plan.upgraded_ways},
        })
    if routes:
        for tid in sorted(routes):
            arcs = routes[tid]
            if not arcs:
                continue
            pts = [coords(instance.ways[arcs[0]].tail)]
            pts += [coords(instance.ways[a].head) for a in arcs]
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": pts},
                "properties": {"trip": tid, "route": True},
            })
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh,
                  indent=2, sort_keys=True)
