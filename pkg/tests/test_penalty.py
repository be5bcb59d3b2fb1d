import pytest
from hypothesis import given, settings, strategies as st

from bikeplan.model import Trip
from bikeplan.penalty import (PenaltyKind, PenaltyModel, epi_var, evaluate,
                              master_objective_rows, u_var, z_var)


def make_trip(s=1000.0, factor=1.5, riders=3.0):
    return Trip(id="t", origin="a", dest="b", riders=riders,
                shortest_len_m=s, max_len_m=factor * s)


def test_linear_penalty_is_identity():
    trip = make_trip()
    model = PenaltyModel(kind=PenaltyKind.LINEAR)
    for u in (0.0, 17.5, 400.0):
        assert evaluate(model, trip, u) == u


def test_piecewise_penalty_anchor_values():
    trip = make_trip(s=1000.0)
    model = PenaltyModel(kind=PenaltyKind.PIECEWISE)
    s = trip.shortest_len_m
    assert evaluate(model, trip, 0.0) == 0.0
    assert evaluate(model, trip, 0.2 * s) == pytest.approx(0.0, abs=1e-12)
    assert evaluate(model, trip, 0.5 * s) == pytest.approx(0.5 * s)
    # midpoint of the ramp: slope 5/3 from the breakpoint
    assert evaluate(model, trip, 0.35 * s) == pytest.approx((5 / 3) * 0.15 * s)


def test_piecewise_zero_below_breakpoint_and_convex():
    trip = make_trip(s=1000.0)
    model = PenaltyModel(kind=PenaltyKind.PIECEWISE)
    s = trip.shortest_len_m
    grid = [i / 1000 * 0.5 * s for i in range(1001)]
    vals = [evaluate(model, trip, u) for u in grid]
    for u, f in zip(grid, vals):
        if u <= 0.2 * s:
            assert f == pytest.approx(0.0, abs=1e-9)
        else:
            assert f == pytest.approx((5 / 3) * (u - 0.2 * s), rel=1e-9)
    # non-decreasing along the grid
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_outside_penalty_counts_dropouts():
    trip = make_trip()
    model = PenaltyModel(kind=PenaltyKind.OUTSIDE)
    assert evaluate(model, trip, 0.0, outside=False) == 0.0
    assert evaluate(model, trip, 0.0, outside=True) == 1.0


def test_evaluate_rejects_out_of_range_deviation():
    trip = make_trip(s=1000.0, factor=1.5)
    model = PenaltyModel(kind=PenaltyKind.LINEAR)
    with pytest.raises(ValueError):
        evaluate(model, trip, -1.0)
    with pytest.raises(ValueError):
        evaluate(model, trip, 501.0)  # above max_len - shortest


def test_bad_piecewise_fractions_rejected():
    with pytest.raises(ValueError):
        PenaltyModel(kind=PenaltyKind.PIECEWISE,
                     breakpoint_frac=0.6, ceiling_frac=0.5)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(10.0, 1e5), frac=st.floats(0.0, 0.5))
def test_piecewise_epigraph_rows_support_function(s, frac):
    trip = make_trip(s=s)
    model = PenaltyModel(kind=PenaltyKind.PIECEWISE)
    u = frac * s
    truth = evaluate(model, trip, u)
    # the epigraph rows must admit exactly the penalty value and nothing less
    master = master_objective_rows(model, [trip])
    lo = 0.0
    for row in master.rows:
        slope = -row.coeffs[u_var(trip.id)]
        lo = max(lo, slope * u + row.rhs)
    assert lo == pytest.approx(truth, rel=1e-9, abs=1e-9)


def test_master_objective_shapes():
    trips = [make_trip() for _ in range(1)]
    lin = master_objective_rows(PenaltyModel(kind=PenaltyKind.LINEAR), trips)
    assert lin.objective == {u_var("t"): 3.0}
    assert not lin.rows and not lin.extra_continuous and not lin.extra_binaries

    pw = master_objective_rows(PenaltyModel(kind=PenaltyKind.PIECEWISE), trips)
    assert pw.objective == {epi_var("t"): 3.0}
    assert pw.extra_continuous == [epi_var("t")]
    assert len(pw.rows) == 1  # the zero piece is implied by the lower bound

    out = master_objective_rows(PenaltyModel(kind=PenaltyKind.OUTSIDE), trips)
    assert out.objective == {z_var("t"): 3.0}
    assert out.extra_binaries == [z_var("t")]


def test_explicit_pieces_override_fractions():
    trip = make_trip(s=100.0)
    model = PenaltyModel(kind=PenaltyKind.PIECEWISE,
                         pieces=((0.0, 0.0), (2.0, -0.4)))
    # intercept scales with the shortest length: 2u - 40 past u = 20
    assert evaluate(model, trip, 10.0) == 0.0
    assert evaluate(model, trip, 30.0) == pytest.approx(20.0)
