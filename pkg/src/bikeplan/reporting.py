"""CSV and figure emission for solver runs and budget sweeps.

CSV output uses fixed decimal formatting so reruns with the same seed and
config produce byte-identical files.
"""

from __future__ import annotations

import csv
import math
from typing import List, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .benders import GapReport, Solution  # noqa: E402
from .experiments import Metrics  # noqa: E402


def _fmt(x: float) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.9f}"
    return str(x)


BOUNDS_COLUMNS = ["iteration", "phase", "lower", "upper", "gap", "cuts_added"]


def write_bounds_csv(report: GapReport, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BOUNDS_COLUMNS)
        for row in report.rows:
            writer.writerow([row.iteration, row.phase, _fmt(row.lower),
                             _fmt(row.upper), _fmt(row.gap), row.cuts_added])


def plot_bounds(report: GapReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    its = [r.iteration for r in report.rows]
    lows = [r.lower for r in report.rows]
    ups = [r.upper if not math.isinf(r.upper) else None for r in report.rows]
    ax.plot(its, lows, marker="o", label="lower bound")
    up_pts = [(i, u) for i, u in zip(its, ups) if u is not None]
    if up_pts:
        ax.plot([i for i, _ in up_pts], [u for _, u in up_pts],
                marker="s", label="incumbent")
    if report.phase_switch_index is not None:
        ax.axvline(report.rows[report.phase_switch_index].iteration - 0.5,
                   linestyle="--", color="gray", label="phase switch")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


METRICS_COLUMNS = ["budget", "objective", "potential_cyclists_pct",
                   "avg_additional_distance_m", "spent", "upgraded_ways"]


def write_metrics_csv(rows: Sequence[Mapping], path: str) -> None:
    """One row per (budget level, solve); see METRICS_COLUMNS."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) if c != "upgraded_ways"
                             else row[c] for c in METRICS_COLUMNS])


def metrics_row(budget: float, solution: Solution, metrics: Metrics) -> dict:
    return {
        "budget": float(budget),
        "objective": solution.objective,
        "potential_cyclists_pct": metrics.potential_cyclists_pct,
        "avg_additional_distance_m": metrics.avg_additional_distance_m,
        "spent": float(solution.plan.spent),
        "upgraded_ways": ";".join(sorted(solution.plan.upgraded_ways)),
    }


def plot_metrics(rows: Sequence[Mapping], path: str) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    budgets = [r["budget"] for r in rows]
    ax1.plot(budgets, [r["objective"] for r in rows], marker="o")
    ax1.set_xlabel("budget")
    ax1.set_ylabel("objective")
    ax2.plot(budgets, [r["potential_cyclists_pct"] for r in rows],
             marker="o", color="tab:green")
    ax2.set_xlabel("budget")
    ax2.set_ylabel("potential cyclists (%)")
    ax2.set_ylim(-2, 102)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_histogram(metrics: Metrics, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if metrics.deviation_histogram:
        lefts = [lo for lo, _, _ in metrics.deviation_histogram]
        widths = [hi - lo for lo, hi, _ in metrics.deviation_histogram]
        counts = [n for _, _, n in metrics.deviation_histogram]
        ax.bar(lefts, counts, width=widths, align="edge", edgecolor="black")
    ax.set_xlabel("additional distance (m)")
    ax.set_ylabel("trips")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
