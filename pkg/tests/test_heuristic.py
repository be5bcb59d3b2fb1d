import dataclasses

import pytest

from bikeplan.benders import Algo, SolveConfig, solve
from bikeplan.experiments import generate_synthetic
from bikeplan.heuristic import greedy_plan
from bikeplan.penalty import PenaltyKind, PenaltyModel

from conftest import build_triangle, random_instance


def cfg(kind=PenaltyKind.LINEAR):
    return SolveConfig(variant=Algo.GREEDY, penalty=PenaltyModel(kind=kind))


def test_triangle_picks_the_ridden_way():
    inst = build_triangle(budget=1.0)
    sol = greedy_plan(inst, cfg())
    # the cheapest route within the cap is a-b-c; bc is its only unsafe way
    assert sol.plan.upgraded_ways == frozenset({"bc"})
    assert sol.objective == pytest.approx(0.5)
    assert sol.variant == "greedy"


def test_triangle_zero_budget_upgrades_nothing():
    inst = build_triangle(budget=0.0)
    sol = greedy_plan(inst, cfg())
    assert sol.plan.upgraded_ways == frozenset()
    assert sol.objective == pytest.approx(0.75)


def test_greedy_never_beats_exact():
    for seed in range(5):
        inst = random_instance(seed, budget=14.0)
        for kind in PenaltyKind:
            greedy = greedy_plan(inst, cfg(kind))
            exact = solve(inst, SolveConfig(variant=Algo.EXACT,
                                            penalty=PenaltyModel(kind=kind)))
            assert greedy.objective >= exact.objective - 1e-9


def test_greedy_respects_budget():
    for seed in range(5):
        inst = random_instance(seed, budget=9.0)
        sol = greedy_plan(inst, cfg())
        spent = sum(inst.ways[w].cost for w in sol.plan.upgraded_ways)
        assert spent <= inst.budget + 1e-9
        assert sol.plan.spent == pytest.approx(spent)


def test_greedy_skips_unaffordable_but_keeps_going():
    # the popular way is too expensive for the budget; the cheap way ridden
    # by fewer riders must still be upgraded instead of stopping early
    from bikeplan.model import Instance, Node, Safety, Trip, Way, validate
    nodes = {n: Node(n) for n in "abcd"}
    ways = {
        "ab": Way("ab", "a", "b", 1.0, Safety.SAFE),
        "bc": Way("bc", "b", "c", 1.0, Safety.UNSAFE, improve_cost=5.0),
        "ad": Way("ad", "a", "d", 1.0, Safety.UNSAFE, improve_cost=1.0),
    }
    trips = [Trip("t1", "a", "c", riders=10.0),
             Trip("t2", "a", "d", riders=1.0)]
    inst = validate(Instance(nodes=nodes, ways=ways, roads={}, trips=trips,
                             budget=1.0, deviation_factor=1.5))
    sol = greedy_plan(inst, cfg())
    assert sol.plan.upgraded_ways == frozenset({"ad"})
    assert sol.plan.spent == pytest.approx(1.0)


def test_greedy_road_level_upgrades_pairs():
    inst = generate_synthetic(3, 3, n_trips=4, seed=2, road_level=True)
    total = sum(w.cost for w in inst.unsafe_ways)
    inst = dataclasses.replace(inst, budget=0.5 * total)
    sol = greedy_plan(inst, cfg())
    for wid in sol.plan.upgraded_ways:
        rid = inst.ways[wid].road_id
        assert set(inst.roads[rid].way_ids) <= sol.plan.upgraded_ways


def test_greedy_through_solver_front_end():
    inst = build_triangle(budget=1.0)
    a = greedy_plan(inst, cfg())
    b = solve(inst, cfg())
    assert a.plan == b.plan and a.objective == b.objective
