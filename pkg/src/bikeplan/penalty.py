"""Penalty models for route deviations and their master-problem encodings.

Three families are supported:

* linear - the penalty is the deviation itself,
* piecewise - zero for small deviations, then a steeper linear ramp that
  reaches the full outside-option penalty at the acceptance threshold
  (default breakpoint at 0.2 s and ceiling at 0.5 s, i.e. slope 5/3 with
  intercept -s/3),
* outside - count riders forced onto the outside option.

Penalty functions are non-decreasing with f(0) = 0.  The piecewise family
is convex, so the master encodes it with one epigraph variable per trip
and one affine row per nonzero piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .model import Trip


class PenaltyKind(Enum):
    LINEAR = "L"
    PIECEWISE = "P"
    OUTSIDE = "Z"


@dataclass(frozen=True)
class PenaltyModel:
    kind: PenaltyKind = PenaltyKind.LINEAR
    breakpoint_frac: float = 0.2    # deviation fraction of s where the ramp starts
    ceiling_frac: float = 0.5       # deviation fraction of s with full dropout
    # optional explicit convex pieces as (slope, intercept-per-s) pairs;
    # overrides the fractions when given
    pieces: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.kind is PenaltyKind.PIECEWISE and self.pieces is None:
            if not 0.0 <= self.breakpoint_frac < self.ceiling_frac:
                raise ValueError("need 0 <= breakpoint_frac < ceiling_frac")

    def piece_list(self, trip: Trip) -> List[Tuple[float, float]]:
        """Affine pieces (slope, intercept) of the penalty at this trip."""
        s = trip.shortest_len_m or 0.0
        if self.pieces is not None:
            return [(sl, ic * s) for sl, ic in self.pieces]
        # ramp from 0 at breakpoint to the full penalty at the ceiling
        b, c = self.breakpoint_frac, self.ceiling_frac
        slope = c / (c - b)
        return [(0.0, 0.0), (slope, -slope * b * s)]


# variable naming shared by every master builder
def u_var(trip_id: str) -> str:
    return f"u[{trip_id}]"


def epi_var(trip_id: str) -> str:
    return f"v[{trip_id}]"


def z_var(trip_id: str) -> str:
    return f"z[{trip_id}]"


def evaluate(model: PenaltyModel, trip: Trip, u: float,
             outside: bool = False) -> float:
    """Scalar penalty of deviation ``u`` (or of the outside option)."""
    assert trip.shortest_len_m is not None and trip.max_len_m is not None
    hi = trip.max_len_m - trip.shortest_len_m
    if u < -1e-9 or u > hi + 1e-9:
        raise ValueError(f"deviation {u} outside [0, {hi}] for trip {trip.id!r}")
    if model.kind is PenaltyKind.OUTSIDE:
        return 1.0 if outside else 0.0
    if model.kind is PenaltyKind.LINEAR:
        return u
    return max(max(sl * u + ic for sl, ic in model.piece_list(trip)), 0.0)


@dataclass(frozen=True)
class EpigraphRow:
    trip_id: str
    coeffs: Dict[str, float]
    sense: str
    rhs: float
    name: str


@dataclass(frozen=True)
class MasterObjective:
    objective: Dict[str, float]           # variable -> coefficient (minimize)
    rows: List[EpigraphRow]
    extra_continuous: List[str]           # epigraph variables, lb 0
    extra_binaries: List[str]             # outside-option variables


def master_objective_rows(model: PenaltyModel,
                          trips: Sequence[Trip]) -> MasterObjective:
    """Objective coefficients and supporting rows for the chosen penalty."""
    objective: Dict[str, float] = {}
    rows: List[EpigraphRow] = []
    extra_cont: List[str] = []
    extra_bin: List[str] = []
    for trip in trips:
        if model.kind is PenaltyKind.LINEAR:
            objective[u_var(trip.id)] = float(trip.riders)
        elif model.kind is PenaltyKind.PIECEWISE:
            v = epi_var(trip.id)
            objective[v] = float(trip.riders)
            extra_cont.append(v)
            for idx, (slope, intercept) in enumerate(model.piece_list(trip)):
                if slope == 0.0 and intercept == 0.0:
                    continue  # covered by the variable's zero lower bound
                rows.append(EpigraphRow(
                    trip.id, {v: 1.0, u_var(trip.id): -slope}, ">=", intercept,
                    name=f"epi[{trip.id},{idx}]"))
        else:
            objective[z_var(trip.id)] = float(trip.riders)
            extra_bin.append(z_var(trip.id))
    return MasterObjective(objective, rows, extra_cont, extra_bin)
