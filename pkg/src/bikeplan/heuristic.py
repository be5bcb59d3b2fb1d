"""Greedy baseline: upgrade the way (or road) most ridden while unsafe.

Each round routes every trip along the path minimizing distance ridden on
unsafe non-upgraded ways, drops trips whose true length exceeds their cap,
and accumulates rider counts onto the unsafe ways of the surviving paths.
The highest-count candidate whose cost fits the remaining budget is
upgraded; rounds repeat until nothing fits or all counts hit zero.
"""

from __future__ import annotations

from typing import Dict, Set, TYPE_CHECKING

from .model import Instance, PathMode, Safety, shortest_path

if TYPE_CHECKING:
    from .benders import SolveConfig, Solution


def greedy_plan(instance: Instance, config: "SolveConfig") -> "Solution":
    from .benders import Algo, evaluate_plan

    upgraded: Set[str] = set()
    spent = 0.0
    while True:
        counts: Dict[str, float] = {}
        plan = instance.plan_from_ways(upgraded)
        for trip in instance.trips:
            pr = shortest_path(instance, trip.origin, trip.dest,
                               PathMode.UNSAFE_PENALIZED, plan, trip=trip)
            if pr is None or pr.length > trip.max_len_m + 1e-9:
                continue
            for way_id in pr.arcs:
                way = instance.ways[way_id]
                if way.safety is Safety.UNSAFE and way_id not in upgraded:
                    counts[way_id] = counts.get(way_id, 0.0) + trip.riders

        if instance.road_level:
            road_counts: Dict[str, float] = {}
            for rid in sorted(instance.roads):
                pending = [w for w in instance.roads[rid].way_ids
                           if w not in upgraded]
                if not pending:
                    continue
                total = sum(counts.get(w, 0.0) for w in pending)
                road_counts[rid] = total / len(pending)
            candidates = [
                (road_counts[rid], rid,
                 sum(instance.ways[w].cost for w in instance.roads[rid].way_ids
                     if w not in upgraded),
                 {w for w in instance.roads[rid].way_ids if w not in upgraded})
                for rid in road_counts if road_counts[rid] > 0.0]
        else:
            candidates = [(c, wid, instance.ways[wid].cost, {wid})
                          for wid, c in counts.items() if c > 0.0]

        remaining = instance.budget - spent
        affordable = [(count, cid, cost, members)
                      for count, cid, cost, members in candidates
                      if cost <= remaining + 1e-9]
        if not affordable:
            break
        count, cid, cost, members = min(
            affordable, key=lambda t: (-t[0], t[1]))
        upgraded |= members
        spent += cost

    return evaluate_plan(instance, instance.plan_from_ways(upgraded),
                         config.penalty, variant=Algo.GREEDY.value)
