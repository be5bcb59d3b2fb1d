import random

import pytest

from bikeplan.model import Instance, Node, Safety, Trip, Way, validate


def build_triangle(budget: float = 1.0, riders: float = 1.0,
                   factor: float = 1.5) -> Instance:
    """Three nodes, one safe way a->b, unsafe b->c and a->c, one trip a->c."""
    nodes = {n: Node(n) for n in "abc"}
    ways = {
        "ab": Way("ab", "a", "b", 1.0, Safety.SAFE),
        "bc": Way("bc", "b", "c", 1.0, Safety.UNSAFE),
        "ac": Way("ac", "a", "c", 1.5, Safety.UNSAFE),
    }
    trips = [Trip("t", "a", "c", riders=riders)]
    inst = Instance(nodes=nodes, ways=ways, roads={}, trips=trips,
                    budget=budget, deviation_factor=factor)
    return validate(inst)


def random_instance(seed: int, n_nodes: int = 8, extra_arcs: int = 10,
                    n_trips: int = 3, unsafe_frac: float = 0.5,
                    budget: float = 5.0) -> Instance:
    """Small random strongly-reachable digraph for property tests."""
    rng = random.Random(seed)
    names = [f"n{i}" for i in range(n_nodes)]
    nodes = {n: Node(n) for n in names}
    ways = {}
    wid = 0

    def add(a, b, safety):
        nonlocal wid
        ways[f"w{wid}"] = Way(f"w{wid}", a, b, float(rng.randint(1, 9)), safety)
        wid += 1

    # ring in both directions guarantees reachability
    for i in range(n_nodes):
        a, b = names[i], names[(i + 1) % n_nodes]
        add(a, b, Safety.UNSAFE if rng.random() < unsafe_frac else Safety.SAFE)
        add(b, a, Safety.UNSAFE if rng.random() < unsafe_frac else Safety.SAFE)
    for _ in range(extra_arcs):
        a, b = rng.sample(names, 2)
        add(a, b, Safety.UNSAFE if rng.random() < unsafe_frac else Safety.SAFE)

    trips = []
    for k in range(n_trips):
        a, b = rng.sample(names, 2)
        trips.append(Trip(f"t{k}", a, b, riders=float(rng.randint(1, 9))))
    inst = Instance(nodes=nodes, ways=ways, roads={}, trips=trips,
                    budget=budget, deviation_factor=1.5)
    return validate(inst)


@pytest.fixture
def triangle():
    return build_triangle()
