import math

from bikeplan.benders import (Algo, GapReport, IterationRecord, SolveConfig,
                              bound_report, solve)
from bikeplan.experiments import compute_metrics, generate_synthetic
from bikeplan.penalty import PenaltyModel
from bikeplan.reporting import (BOUNDS_COLUMNS, METRICS_COLUMNS, metrics_row,
                                plot_bounds, plot_histogram, plot_metrics,
                                write_bounds_csv, write_metrics_csv)

from conftest import build_triangle


def sample_report():
    rows = [
        IterationRecord(1, 1, 0.0, math.inf, math.inf, 3, 0.1),
        IterationRecord(2, 2, 0.4, 1.0, 0.6, 2, 0.2),
        IterationRecord(3, 2, 1.0, 1.0, 0.0, 0, 0.3),
    ]
    return bound_report(rows)


def test_bounds_csv_layout(tmp_path):
    path = tmp_path / "bounds.csv"
    write_bounds_csv(sample_report(), str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",") == BOUNDS_COLUMNS
    assert len(lines) == 4
    assert lines[1].startswith("1,1,0.000000000,inf,inf,3")
    assert "0.400000000" in lines[2]


def test_bounds_csv_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_bounds_csv(sample_report(), str(a))
    write_bounds_csv(sample_report(), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_metrics_csv_roundtrip(tmp_path):
    inst = build_triangle(budget=1.0)
    sol = solve(inst, SolveConfig(variant=Algo.EXACT, penalty=PenaltyModel()))
    row = metrics_row(1.0, sol, compute_metrics(inst, sol))
    path = tmp_path / "metrics.csv"
    write_metrics_csv([row], str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",") == METRICS_COLUMNS
    cells = lines[1].split(",")
    assert cells[0] == "1.000000000"
    assert cells[1] == "0.500000000"
    assert cells[-1] == "bc"


def test_metrics_csv_byte_identical_across_runs(tmp_path):
    inst = generate_synthetic(3, 3, n_trips=4, seed=8, budget=300.0)
    paths = []
    for tag in ("x", "y"):
        sol = solve(inst, SolveConfig(variant=Algo.MW_MCD,
                                      penalty=PenaltyModel()))
        row = metrics_row(inst.budget, sol, compute_metrics(inst, sol))
        p = tmp_path / f"{tag}.csv"
        write_metrics_csv([row], str(p))
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_plots_render_files(tmp_path):
    inst = build_triangle(budget=1.0)
    sol = solve(inst, SolveConfig(variant=Algo.TB, penalty=PenaltyModel()))
    metrics = compute_metrics(inst, sol)
    bounds_png = tmp_path / "bounds.png"
    plot_bounds(bound_report(sol.log), str(bounds_png))
    metrics_png = tmp_path / "metrics.png"
    plot_metrics([metrics_row(1.0, sol, metrics)], str(metrics_png))
    hist_png = tmp_path / "hist.png"
    plot_histogram(metrics, str(hist_png))
    for p in (bounds_png, metrics_png, hist_png):
        assert p.stat().st_size > 0
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
