import math

import numpy as np
import pytest

from pmqds.forger import (
    SOLVER_MARGIN,
    ConstantFloorForger,
    TabulatedSDPForger,
    _load_table,
    default_grid,
    forger_min_error,
)


def test_positive_without_channel_information():
    assert forger_min_error(0.0) > 0.1


def test_cap_reaches_documented_floor():
    # a verifier error rate of one half carries no key information to protect
    assert forger_min_error(0.5) == 0.0


def test_table_monotone_and_in_range():
    grid, values = _load_table()
    assert np.array_equal(grid, default_grid())
    assert np.all(np.diff(values) <= 1e-9)
    assert values[0] == pytest.approx((1 - 1 / math.sqrt(2)) / 2, abs=2e-4)
    assert np.all((values >= -1e-9) & (values <= 0.5))


def test_lookup_never_exceeds_grid_values():
    grid, values = _load_table()
    f = TabulatedSDPForger()
    xs = np.linspace(0, 0.5, 2001)
    looked = np.array([f(x) for x in xs])
    # the curve at x is at least its value at the next grid point
    nxt = np.searchsorted(grid, xs, side="left")
    bound = values[np.minimum(nxt, len(grid) - 1)]
    assert np.all(looked <= np.maximum(bound - SOLVER_MARGIN, 0.0) + 1e-12)
    assert np.all(np.diff(looked) <= 1e-12)


def test_domain_checked():
    with pytest.raises(ValueError):
        forger_min_error(0.6)
    with pytest.raises(ValueError):
        forger_min_error(-0.01)


def test_constant_floor_strategy():
    f = ConstantFloorForger(floor=0.05, slope=1.0)
    assert f(0.0) == 0.05
    assert f(0.04) == pytest.approx(0.01)
    assert f(0.3) == 1e-6
    assert forger_min_error(0.0, f) == 0.05


@pytest.mark.parametrize("e11", [0.0, 0.013, 0.1, 0.27])
def test_table_matches_fresh_solve(e11):
    pytest.importorskip("cvxpy")
    from pmqds.forger import solve_forger_sdp

    grid, _ = _load_table()
    exact = solve_forger_sdp(e11)
    looked = forger_min_error(e11)
    assert looked <= exact
    # the lookup is never lower than the optimum two grid cells further right
    far = grid[min(np.searchsorted(grid, e11, side="right") + 1, len(grid) - 1)]
    assert looked >= solve_forger_sdp(float(far)) - 1e-5
