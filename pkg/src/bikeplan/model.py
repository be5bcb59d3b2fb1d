"""Road network instance model: nodes, ways, roads, trips, and plans.

The instance is the universe every solver consumes.  Ways are directed arcs,
partitioned into safe and unsafe ones; unsafe ways may be grouped into roads
that must be upgraded together.  Each trip is an origin-destination demand
with a rider count, the unrestricted shortest-path length ``s_m`` and the
maximum acceptable length ``L_m``.

Instances are treated as immutable after loading; operations that modify
parameters (thresholds, improvement costs) return a new instance.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple


class InstanceError(Exception):
    """Raised for malformed or inconsistent instance data."""


class Safety(str, Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"


class PathMode(Enum):
    ALL_WAYS = "all"                  # every way usable
    SAFE_AND_UPGRADED = "safe"        # safe ways plus a plan's upgrades
    UNSAFE_PENALIZED = "penalized"    # cost 0 on safe ways, d_ij on unsafe


class WayClass(str, Enum):
    """Road classes for uneven improvement costs."""

    BIKE_FRIENDLY = "bike_friendly"   # improve_cost = d / 2
    STANDARD = "standard"             # improve_cost = d
    SIGNIFICANT = "significant"       # improve_cost = 2 d


_CLASS_FACTOR = {
    WayClass.BIKE_FRIENDLY: 0.5,
    WayClass.STANDARD: 1.0,
    WayClass.SIGNIFICANT: 2.0,
}


@dataclass(frozen=True)
class Node:
    id: str
    coord: Optional[Tuple[float, float]] = None  # planar meters, emission only


@dataclass(frozen=True)
class Way:
    id: str
    tail: str
    head: str
    length_m: float
    safety: Safety
    road_id: Optional[str] = None
    improve_cost: Optional[float] = None  # defaults to length_m

    @property
    def cost(self) -> float:
        return self.length_m if self.improve_cost is None else self.improve_cost


@dataclass(frozen=True)
class Road:
    id: str
    way_ids: Tuple[str, ...]


@dataclass(frozen=True)
class GeneralizedCost:
    """Trip-specific path costs replacing plain distance.

    ``arc_costs`` maps way id to a nonnegative per-arc cost (missing entries
    fall back to the way length), ``max_cost`` replaces the length threshold,
    and ``offset`` is added to every path cost (the distance model uses the
    negated shortest-path length so that the objective reads as a deviation).
    """

    arc_costs: Dict[str, float]
    max_cost: float
    offset: float


@dataclass(frozen=True)
class Trip:
    id: str
    origin: str
    dest: str
    riders: int
    shortest_len_m: Optional[float] = None
    max_len_m: Optional[float] = None
    generalized: Optional[GeneralizedCost] = None

    def arc_cost(self, way: Way) -> float:
        if self.generalized is not None:
            return self.generalized.arc_costs.get(way.id, way.length_m)
        return way.length_m

    @property
    def cost_cap(self) -> float:
        """Maximum acceptable path cost (``L_m`` in the distance model)."""
        if self.generalized is not None:
            return self.generalized.max_cost
        assert self.max_len_m is not None
        return self.max_len_m

    @property
    def cost_offset(self) -> float:
        """Constant added to the path cost (``-s_m`` in the distance model)."""
        if self.generalized is not None:
            return self.generalized.offset
        assert self.shortest_len_m is not None
        return -self.shortest_len_m


@dataclass(frozen=True)
class ImprovementPlan:
    upgraded_ways: frozenset
    spent: float

    @staticmethod
    def empty() -> "ImprovementPlan":
        return ImprovementPlan(frozenset(), 0.0)


@dataclass(frozen=True)
class PathResult:
    length: float                 # true length in meters
    arcs: Tuple[str, ...]         # way ids along the path
    cost: float                   # objective used for the search


@dataclass
class Instance:
    nodes: Dict[str, Node]
    ways: Dict[str, Way]
    roads: Dict[str, Road]
    trips: List[Trip]
    budget: float
    road_level: bool = False
    deviation_factor: Optional[float] = None

    # adjacency cache, built lazily
    _out: Optional[Dict[str, List[Way]]] = field(default=None, repr=False)

    def outgoing(self, node_id: str) -> List[Way]:
        if self._out is None:
            out: Dict[str, List[Way]] = {n: [] for n in self.nodes}
            for way in self.ways.values():
                out[way.tail].append(way)
            # deterministic neighbor order
            for lst in out.values():
                lst.sort(key=lambda w: w.id)
            self._out = out
        return self._out[node_id]

    @property
    def unsafe_ways(self) -> List[Way]:
        return [w for w in sorted(self.ways.values(), key=lambda w: w.id)
                if w.safety is Safety.UNSAFE]

    def road_of(self, way_id: str) -> Optional[str]:
        return self.ways[way_id].road_id

    def plan_from_ways(self, way_ids) -> ImprovementPlan:
        ids = frozenset(way_ids)
        for wid in ids:
            if self.ways[wid].safety is not Safety.UNSAFE:
                raise InstanceError(f"way {wid!r} is not unsafe, cannot upgrade")
        spent = sum(self.ways[w].cost for w in ids)
        return ImprovementPlan(ids, spent)

    def plan_from_roads(self, road_ids) -> ImprovementPlan:
        ways: Set[str] = set()
        for rid in road_ids:
            ways.update(self.roads[rid].way_ids)
        return self.plan_from_ways(ways)


# ---------------------------------------------------------------------------
# Shortest paths


def _way_weight(way: Way, trip: Optional[Trip], mode: PathMode,
                upgraded: frozenset) -> float:
    if mode is PathMode.UNSAFE_PENALIZED:
        if way.safety is Safety.SAFE or way.id in upgraded:
            return 0.0
        return way.length_m
    if trip is not None:
        return trip.arc_cost(way)
    return way.length_m


def shortest_path(
    instance: Instance,
    origin: str,
    dest: str,
    mode: PathMode = PathMode.ALL_WAYS,
    plan: Optional[ImprovementPlan] = None,
    trip: Optional[Trip] = None,
) -> Optional[PathResult]:
    """Dijkstra between two nodes under the given arc availability.

    Ties are broken by the lexicographically smallest arc-id sequence so the
    returned path is deterministic.  Returns ``None`` when ``dest`` is
    unreachable.  ``trip`` selects trip-specific generalized arc costs for
    the ALL_WAYS / SAFE_AND_UPGRADED modes.
    """
    if origin not in instance.nodes or dest not in instance.nodes:
        raise InstanceError(f"unknown endpoint {origin!r} or {dest!r}")
    upgraded = plan.upgraded_ways if plan is not None else frozenset()

    # label = (cost, arc-id tuple); lexicographic order gives the tie-break
    heap: List[Tuple[float, Tuple[str, ...], str]] = [(0.0, (), origin)]
    settled: Set[str] = set()
    while heap:
        cost, arcs, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == dest:
            length = sum(instance.ways[a].length_m for a in arcs)
            return PathResult(length, arcs, cost)
        for way in instance.outgoing(node):
            if mode is PathMode.SAFE_AND_UPGRADED and way.safety is Safety.UNSAFE \
                    and way.id not in upgraded:
                continue
            if way.head in settled:
                continue
            heapq.heappush(
                heap, (cost + _way_weight(way, trip, mode, upgraded),
                       arcs + (way.id,), way.head))
    return None


def shortest_distances(
    instance: Instance,
    origin: str,
    available: Optional[Set[str]] = None,
    weights: Optional[Dict[str, float]] = None,
) -> Dict[str, float]:
    """Single-source distances; ``available`` restricts the usable unsafe ways.

    Missing nodes are unreachable.  Used for subproblem potentials where the
    path itself is not needed.
    """
    dist: Dict[str, float] = {origin: 0.0}
    heap: List[Tuple[float, str]] = [(0.0, origin)]
    settled: Set[str] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        for way in instance.outgoing(node):
            if available is not None and way.safety is Safety.UNSAFE \
                    and way.id not in available:
                continue
            w = way.length_m if weights is None else weights[way.id]
            nd = d + w
            if nd < dist.get(way.head, math.inf) - 1e-15:
                dist[way.head] = nd
                heapq.heappush(heap, (nd, way.head))
    return dist


# ---------------------------------------------------------------------------
# Parameter operations


def derive_thresholds(instance: Instance, deviation_factor: float) -> Instance:
    """Set every trip's maximum length to ``R * s_m`` for a factor ``R >= 1``."""
    if deviation_factor < 1.0:
        raise InstanceError(f"deviation factor must be >= 1, got {deviation_factor}")
    trips = []
    for trip in instance.trips:
        if trip.shortest_len_m is None:
            raise InstanceError(f"trip {trip.id!r} has no shortest path length")
        trips.append(replace(trip, max_len_m=deviation_factor * trip.shortest_len_m))
    return replace(instance, trips=trips, deviation_factor=deviation_factor, _out=None)


def apply_plan(instance: Instance, plan: ImprovementPlan) -> Instance:
    """Materialize a plan: upgraded ways become safe, roads shrink.

    Used by the sequential driver, where earlier upgrades are sunk cost and
    later steps plan on the improved network.
    """
    ways = {}
    for wid, way in instance.ways.items():
        if wid in plan.upgraded_ways:
            ways[wid] = replace(way, safety=Safety.SAFE, road_id=None)
        else:
            ways[wid] = way
    roads = {}
    for rid, road in instance.roads.items():
        left = tuple(w for w in road.way_ids if w not in plan.upgraded_ways)
        if left:
            roads[rid] = Road(rid, left)
    return replace(instance, ways=ways, roads=roads, _out=None)


def apply_uneven_costs(instance: Instance, class_of: Dict[str, WayClass]) -> Instance:
    """Scale improvement costs by road class: 0.5 / 1 / 2 times the length."""
    ways = {}
    for wid, way in instance.ways.items():
        if way.safety is Safety.UNSAFE:
            if wid not in class_of:
                raise InstanceError(f"unsafe way {wid!r} has no class assigned")
            ways[wid] = replace(
                way, improve_cost=_CLASS_FACTOR[class_of[wid]] * way.length_m)
        else:
            ways[wid] = way
    return replace(instance, ways=ways, _out=None)


# ---------------------------------------------------------------------------
# Validation and file IO


def validate(instance: Instance, s_tol: float = 1e-6) -> Instance:
    """Check structural invariants and fill in missing trip parameters.

    Recomputes every trip's unrestricted shortest path; a stored ``s_m`` that
    disagrees by more than ``s_tol`` is an error, a missing one is filled in.
    Thresholds are resolved from the instance deviation factor if absent.
    """
    if instance.budget < 0:
        raise InstanceError("budget must be nonnegative")
    for way in instance.ways.values():
        if way.tail not in instance.nodes or way.head not in instance.nodes:
            raise InstanceError(f"way {way.id!r} references unknown node")
        if way.tail == way.head:
            raise InstanceError(f"way {way.id!r} is a self-loop")
        if way.length_m < 0 or way.cost < 0:
            raise InstanceError(f"way {way.id!r} has negative length or cost")

    seen_road: Dict[str, str] = {}
    for road in instance.roads.values():
        if not road.way_ids:
            raise InstanceError(f"road {road.id!r} is empty")
        for wid in road.way_ids:
            if wid not in instance.ways:
                raise InstanceError(f"road {road.id!r} references unknown way {wid!r}")
            if instance.ways[wid].safety is not Safety.UNSAFE:
                raise InstanceError(f"road {road.id!r} contains safe way {wid!r}")
            if wid in seen_road:
                raise InstanceError(f"way {wid!r} appears in two roads")
            seen_road[wid] = road.id

    trips = []
    for trip in instance.trips:
        if trip.riders < 1:
            raise InstanceError(f"trip {trip.id!r} has riders < 1")
        if trip.origin not in instance.nodes or trip.dest not in instance.nodes:
            raise InstanceError(f"trip {trip.id!r} references unknown node")
        path = shortest_path(instance, trip.origin, trip.dest, PathMode.ALL_WAYS)
        if path is None:
            raise InstanceError(
                f"trip {trip.id!r}: destination {trip.dest!r} unreachable "
                f"from {trip.origin!r}")
        if trip.shortest_len_m is None:
            trip = replace(trip, shortest_len_m=path.length)
        elif abs(trip.shortest_len_m - path.length) > s_tol:
            raise InstanceError(
                f"trip {trip.id!r}: stored shortest length {trip.shortest_len_m} "
                f"disagrees with recomputed {path.length}")
        if trip.max_len_m is None and trip.generalized is None:
            if instance.deviation_factor is None:
                raise InstanceError(
                    f"trip {trip.id!r} has no max length and no deviation factor")
            trip = replace(trip,
                           max_len_m=instance.deviation_factor * trip.shortest_len_m)
        if trip.max_len_m is not None and trip.max_len_m < trip.shortest_len_m - s_tol:
            raise InstanceError(
                f"trip {trip.id!r}: max length {trip.max_len_m} below shortest "
                f"path {trip.shortest_len_m}")
        trips.append(trip)

    ids = [t.id for t in trips]
    if len(set(ids)) != len(ids):
        raise InstanceError("duplicate trip ids")
    return replace(instance, trips=trips, _out=None)


def _roads_from_ways(ways: Dict[str, Way]) -> Dict[str, Road]:
    grouped: Dict[str, List[str]] = {}
    for way in ways.values():
        if way.road_id is not None and way.safety is Safety.UNSAFE:
            grouped.setdefault(way.road_id, []).append(way.id)
    return {rid: Road(rid, tuple(sorted(wids))) for rid, wids in grouped.items()}


def instance_from_dict(doc: dict) -> Instance:
    try:
        params = doc.get("params", {})
        nodes = {}
        for n in doc["nodes"]:
            coord = None
            if "x" in n and "y" in n:
                coord = (float(n["x"]), float(n["y"]))
            nodes[str(n["id"])] = Node(str(n["id"]), coord)
        ways = {}
        for w in doc["ways"]:
            ways[str(w["id"])] = Way(
                id=str(w["id"]),
                tail=str(w["from"]),
                head=str(w["to"]),
                length_m=float(w["length_m"]),
                safety=Safety(w["safety"]),
                road_id=None if w.get("road_id") is None else str(w["road_id"]),
                improve_cost=None if w.get("improve_cost") is None
                else float(w["improve_cost"]),
            )
        trips = []
        for t in doc["trips"]:
            gen = None
            if t.get("generalized") is not None:
                g = t["generalized"]
                gen = GeneralizedCost(
                    arc_costs={str(k): float(v)
                               for k, v in g.get("arc_costs", {}).items()},
                    max_cost=float(g["max_cost"]),
                    offset=float(g["offset"]),
                )
            trips.append(Trip(
                id=str(t["id"]),
                origin=str(t["origin"]),
                dest=str(t["dest"]),
                riders=int(t["riders"]),
                shortest_len_m=None if t.get("s_m") is None else float(t["s_m"]),
                max_len_m=None if t.get("L_m") is None else float(t["L_m"]),
                generalized=gen,
            ))
        instance = Instance(
            nodes=nodes,
            ways=ways,
            roads=_roads_from_ways(ways),
            trips=trips,
            budget=float(params.get("budget", 0.0)),
            road_level=bool(params.get("road_level", False)),
            deviation_factor=None if params.get("R") is None
            else float(params["R"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc
    return validate(instance)


def instance_to_dict(instance: Instance) -> dict:
    doc: dict = {
        "params": {
            "budget": instance.budget,
            "road_level": instance.road_level,
        },
        "nodes": [],
        "ways": [],
        "trips": [],
    }
    if instance.deviation_factor is not None:
        doc["params"]["R"] = instance.deviation_factor
    for node in sorted(instance.nodes.values(), key=lambda n: n.id):
        rec: dict = {"id": node.id}
        if node.coord is not None:
            rec["x"], rec["y"] = node.coord
        doc["nodes"].append(rec)
    for way in sorted(instance.ways.values(), key=lambda w: w.id):
        rec = {"id": way.id, "from": way.tail, "to": way.head,
               "length_m": way.length_m, "safety": way.safety.value}
        if way.road_id is not None:
            rec["road_id"] = way.road_id
        if way.improve_cost is not None:
            rec["improve_cost"] = way.improve_cost
        doc["ways"].append(rec)
    for trip in instance.trips:
        rec = {"id": trip.id, "origin": trip.origin, "dest": trip.dest,
               "riders": trip.riders}
        if trip.shortest_len_m is not None:
            rec["s_m"] = trip.shortest_len_m
        if trip.max_len_m is not None:
            rec["L_m"] = trip.max_len_m
        if trip.generalized is not None:
            rec["generalized"] = {
                "arc_costs": dict(sorted(trip.generalized.arc_costs.items())),
                "max_cost": trip.generalized.max_cost,
                "offset": trip.generalized.offset,
            }
        doc["trips"].append(rec)
    return doc


def load_instance(path) -> Instance:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"cannot parse {path}: {exc}") from exc
    return instance_from_dict(doc)


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")
