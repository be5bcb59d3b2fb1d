"""Command-line entry points."""

from __future__ import annotations

import json
import os
from dataclasses import replace

import click

from . import experiments, reporting
from .benders import Algo, SolveConfig, bound_report, solve
from .model import derive_thresholds, load_instance, save_instance
from .penalty import PenaltyKind, PenaltyModel

_UNIT_M = {"m": 1.0, "km": 1000.0, "mi": 1609.344}


def _config(model: str, algo: str, gap: float, phase1_limit: float,
            seed: int) -> SolveConfig:
    return SolveConfig(variant=Algo(algo),
                       penalty=PenaltyModel(kind=PenaltyKind(model)),
                       gap_tol=gap, phase1_time_limit=phase1_limit, seed=seed)


def _solution_dict(sol) -> dict:
    return {
        "algo": sol.variant,
        "objective": sol.objective,
        "lower_bound": None if sol.lower_bound != sol.lower_bound
        else sol.lower_bound,
        "gap": sol.gap,
        "plan": {"upgraded_ways": sorted(sol.plan.upgraded_ways),
                 "spent": sol.plan.spent},
        "trips": {
            tid: {"additional_distance_m": out.deviation,
                  "outside": out.outside, "penalty": out.penalty,
                  "route": list(out.route) if out.route else None}
            for tid, out in sorted(sol.per_trip.items())},
    }


@click.group()
def main():
    """Plan bicycle network improvements under a budget."""


@main.command()
@click.option("--instance", "instance_path", required=True,
              type=click.Path(exists=True))
@click.option("--budget", type=float, default=None,
              help="Override the instance budget.")
@click.option("--model", type=click.Choice(["L", "P", "Z"]), default="L")
@click.option("--algo", type=click.Choice([a.value for a in Algo]),
              default="mw-mcd")
@click.option("--r", "--R", "r_factor", type=float, default=None,
              help="Deviation factor; max lengths become R times shortest.")
@click.option("--gap", type=float, default=1e-6)
@click.option("--phase1-limit", type=float, default=1200.0)
@click.option("--seed", type=int, default=0)
@click.option("--units", type=click.Choice(list(_UNIT_M)), default="m",
              help="Unit of the --budget value.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def solve_cmd(instance_path, budget, model, algo, r_factor, gap,
              phase1_limit, seed, units, out_dir):
    """Solve one instance and write solution, bounds and metrics files."""
    instance = load_instance(instance_path)
    if r_factor is not None:
        instance = derive_thresholds(instance, r_factor)
    if budget is not None:
        instance = replace(instance, budget=budget * _UNIT_M[units])
    config = _config(model, algo, gap, phase1_limit, seed)
    solution = solve(instance, config)
    metrics = experiments.compute_metrics(instance, solution)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "solution.json"), "w") as fh:
        json.dump(_solution_dict(solution), fh, indent=2, sort_keys=True)
    if solution.log:
        report = bound_report(solution.log)
        reporting.write_bounds_csv(report,
                                   os.path.join(out_dir, "bounds.csv"))
        reporting.plot_bounds(report, os.path.join(out_dir, "bounds.png"))
    rows = [reporting.metrics_row(instance.budget, solution, metrics)]
    reporting.write_metrics_csv(rows, os.path.join(out_dir, "metrics.csv"))
    reporting.plot_metrics(rows, os.path.join(out_dir, "metrics.png"))
    if all(n.coord is not None for n in instance.nodes.values()):
        routes = {tid: out.route for tid, out in solution.per_trip.items()
                  if out.route}
        experiments.emit_geojson(instance, solution.plan,
                                 os.path.join(out_dir, "plan.geojson"),
                                 routes=routes)
    click.echo(f"objective {solution.objective:.6f} "
               f"plan {sorted(solution.plan.upgraded_ways)} "
               f"spent {solution.plan.spent:.1f}")


main.add_command(solve_cmd, name="solve")


@main.command()
@click.option("--rows", type=int, default=4)
@click.option("--cols", type=int, default=4)
@click.option("--block-len", type=float, default=100.0)
@click.option("--unsafe-frac", type=float, default=0.5)
@click.option("--corridors", type=int, default=1)
@click.option("--trips", "n_trips", type=int, default=5)
@click.option("--budget", type=float, default=0.0)
@click.option("--r", "--R", "r_factor", type=float, default=1.5)
@click.option("--road-level", is_flag=True, default=False)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
def gen(rows, cols, block_len, unsafe_frac, corridors, n_trips, budget,
        r_factor, road_level, seed, out_path):
    """Generate a seeded synthetic grid instance file."""
    instance = experiments.generate_synthetic(
        rows, cols, block_len_m=block_len, unsafe_frac=unsafe_frac,
        safe_corridors=corridors, n_trips=n_trips, seed=seed, budget=budget,
        deviation_factor=r_factor, road_level=road_level)
    save_instance(instance, out_path)
    click.echo(f"wrote {out_path}: {len(instance.nodes)} nodes, "
               f"{len(instance.ways)} ways, {len(instance.trips)} trips")


@main.command()
@click.option("--instance", "instance_path", required=True,
              type=click.Path(exists=True))
@click.option("--budgets", required=True,
              help="Comma-separated budget levels.")
@click.option("--model", type=click.Choice(["L", "P", "Z"]), default="L")
@click.option("--algo", type=click.Choice([a.value for a in Algo]),
              default="mw-mcd")
@click.option("--gap", type=float, default=1e-6)
@click.option("--seed", type=int, default=0)
@click.option("--units", type=click.Choice(list(_UNIT_M)), default="m")
@click.option("--out", "out_dir", required=True, type=click.Path())
def sweep(instance_path, budgets, model, algo, gap, seed, units, out_dir):
    """Solve across budget levels and emit a metrics CSV plus figure."""
    instance = load_instance(instance_path)
    config = _config(model, algo, gap, 1200.0, seed)
    rows = []
    for raw in budgets.split(","):
        b = float(raw) * _UNIT_M[units]
        sol = solve(replace(instance, budget=b), config)
        metrics = experiments.compute_metrics(instance, sol)
        rows.append(reporting.metrics_row(b, sol, metrics))
    os.makedirs(out_dir, exist_ok=True)
    reporting.write_metrics_csv(rows, os.path.join(out_dir, "metrics.csv"))
    reporting.plot_metrics(rows, os.path.join(out_dir, "metrics.png"))
    click.echo(f"wrote {len(rows)} rows to {out_dir}/metrics.csv")


@main.command()
@click.option("--instance", "instance_path", required=True,
              type=click.Path(exists=True))
@click.option("--step-budget", type=float, required=True)
@click.option("--total-budget", type=float, required=True)
@click.option("--model", type=click.Choice(["L", "P", "Z"]), default="L")
@click.option("--algo", type=click.Choice([a.value for a in Algo]),
              default="mw-mcd")
@click.option("--units", type=click.Choice(list(_UNIT_M)), default="m")
@click.option("--out", "out_dir", required=True, type=click.Path())
def seq(instance_path, step_budget, total_budget, model, algo, units,
        out_dir):
    """Solve in budget increments and compare with the one-shot plan."""
    instance = load_instance(instance_path)
    config = _config(model, algo, 1e-6, 1200.0, 0)
    scale = _UNIT_M[units]
    result = experiments.sequential_driver(
        instance, step_budget * scale, total_budget * scale, config)
    os.makedirs(out_dir, exist_ok=True)
    import csv as _csv
    with open(os.path.join(out_dir, "sequential.csv"), "w",
              newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["step", "cumulative_budget", "objective",
                         "potential_cyclists_pct", "upgraded_ways"])
        for st in result.steps:
            writer.writerow([st.step, f"{st.cumulative_budget:.9f}",
                             f"{st.objective:.9f}",
                             f"{st.metrics.potential_cyclists_pct:.9f}",
                             ";".join(sorted(st.plan.upgraded_ways))])
    click.echo(f"strategic {result.strategic_objective:.6f} "
               f"sequential {result.steps[-1].objective:.6f} "
               f"difference {result.final_difference_pct:.2f}%")


@main.command()
@click.option("--instance", "instance_path", required=True,
              type=click.Path(exists=True))
@click.option("--budget", type=float, default=None)
@click.option("--model", type=click.Choice(["L", "P", "Z"]), default="L")
@click.option("--algo-a", type=click.Choice([a.value for a in Algo]),
              default="exact")
@click.option("--algo-b", type=click.Choice([a.value for a in Algo]),
              default="greedy")
def compare(instance_path, budget, model, algo_a, algo_b):
    """Per-trip penalty comparison between two algorithms."""
    instance = load_instance(instance_path)
    if budget is not None:
        instance = replace(instance, budget=budget)
    sol_a = solve(instance, _config(model, algo_a, 1e-6, 1200.0, 0))
    sol_b = solve(instance, _config(model, algo_b, 1e-6, 1200.0, 0))
    cmp_ = experiments.compare_solutions(sol_a, sol_b, instance)
    click.echo(f"{algo_a} objective {sol_a.objective:.6f}; "
               f"{algo_b} objective {sol_b.objective:.6f}")
    click.echo(f"{algo_a}-better {cmp_.a_better}, "
               f"{algo_b}-better {cmp_.b_better}, equal {cmp_.equal}, "
               f"network difference {cmp_.network_difference_pct:.1f}%")


@main.command()
@click.option("--instance", "instance_path", required=True,
              type=click.Path(exists=True))
@click.option("--ways", "way_list", default="",
              help="Comma-separated upgraded way ids.")
@click.option("--out", "out_path", required=True, type=click.Path())
def emit(instance_path, way_list, out_path):
    """Write a GeoJSON overlay of the network and an upgrade set."""
    instance = load_instance(instance_path)
    ids = {w for w in way_list.split(",") if w}
    plan = instance.plan_from_ways(ids)
    experiments.emit_geojson(instance, plan, out_path)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
