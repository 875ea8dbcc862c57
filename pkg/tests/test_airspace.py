import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lawnsim.airspace import (GridSpec, OccupancyLimits, TrafficState, Violation, airspace_capacity,
                              cell_of, cells_in_box, discretize, validate_state)


def test_discretize_counts():
    grid = discretize((0, 0, 0), (1000, 1000, 300), (100, 100, 100))
    assert grid.counts == (10, 10, 3)
    assert grid.n_cells == 300


def test_discretize_single_cell():
    assert discretize((0, 0, 0), (100, 100, 100), (100, 100, 100)).n_cells == 1


@pytest.mark.parametrize("size", [(0, 100, 100), (100, -1, 100)])
def test_discretize_rejects_bad_cells(size):
    with pytest.raises(ValueError):
        discretize((0, 0, 0), (100, 100, 100), size)


def test_discretize_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        discretize((0, 0, 100), (100, 100, 0), (10, 10, 10))


def test_discretize_expands_non_divisible_extent():
    grid = discretize((0, 0, 0), (250, 100, 100), (100, 100, 100))
    assert grid.counts == (3, 1, 1)
    assert grid.bounds_max == (300.0, 100.0, 100.0)


def test_discretize_tolerates_float_noise():
    grid = discretize((0, 0, 0), (0.3, 1, 1), (0.1, 1, 1))
    assert grid.counts == (3, 1, 1)


def test_cell_of_corners():
    grid = discretize((0, 0, 0), (1000, 1000, 300), (100, 100, 100))
    assert cell_of(grid.bounds_min, grid) == 0
    assert cell_of(grid.bounds_max, grid) == grid.n_cells - 1


def test_cell_of_two_cell_grid():
    grid = discretize((0, 0, 0), (200, 100, 100), (100, 100, 100))
    assert cell_of((150, 50, 50), grid) == 1
    # interior face goes to the lower-indexed cell
    assert cell_of((100, 50, 50), grid) == 0


def test_cell_of_row_major_x_slowest():
    grid = discretize((0, 0, 0), (200, 200, 200), (100, 100, 100))
    assert cell_of((50, 50, 150), grid) == 1
    assert cell_of((50, 150, 50), grid) == 2
    assert cell_of((150, 50, 50), grid) == 4


def test_cell_of_outside():
    grid = discretize((0, 0, 0), (100, 100, 100), (50, 50, 50))
    with pytest.raises(ValueError):
        cell_of((101, 0, 0), grid)


def test_cell_of_inverts_centers():
    grid = discretize((-50, 0, 10), (350, 300, 130), (100, 50, 40))
    for i, c in enumerate(grid.cell_centers()):
        assert cell_of(c, grid) == i
        np.testing.assert_allclose(grid.cell_center(i), c)


def test_cells_in_box_open_overlap():
    grid = discretize((0, 0, 0), (300, 100, 100), (100, 100, 100))
    # box touching cell 2 only on its face does not cover it
    assert cells_in_box(grid, (0, 0, 0), (200, 100, 100)).tolist() == [0, 1]
    assert cells_in_box(grid, (150, 0, 0), (160, 100, 100)).tolist() == [1]


def test_capacity_counts_assignments():
    assert airspace_capacity(TrafficState([], 10)) == 0
    assert airspace_capacity(TrafficState([0, 1, 2, 3, 4], 10)) == 5
    assert airspace_capacity(TrafficState([0, 0, 1, 1, 1, 2, 9], 10)) == 7


def test_state_rejects_bad_cells():
    with pytest.raises(ValueError):
        TrafficState([0, 10], 10)


def test_position_matrix_row_sums():
    state = TrafficState([3, 3, 0], 5)
    X = state.position_matrix()
    assert X.sum(axis=1).tolist() == [1, 1, 1]
    assert X.sum() == airspace_capacity(state)


def test_validate_state_examples():
    limits = OccupancyLimits.uniform(4, 2)
    assert validate_state(TrafficState([0, 0, 1, 2], 4), limits) == []
    assert validate_state(TrafficState([1, 1, 1, 0], 4), limits) == [Violation(1, 3, 2)]
    zero = OccupancyLimits(np.zeros(4, dtype=int))
    assert [v.cell for v in validate_state(TrafficState([3, 0, 3], 4), zero)] == [0, 3]


def test_validate_state_length_mismatch():
    with pytest.raises(ValueError):
        validate_state(TrafficState([0], 4), OccupancyLimits.uniform(3))


def test_default_limit_is_one_per_cell():
    assert OccupancyLimits.uniform(3).per_cell_max.tolist() == [1, 1, 1]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 64).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.integers(0, n - 1), max_size=256),
    st.lists(st.integers(0, 5), min_size=n, max_size=n),
)))
def test_validate_state_matches_histogram(case):
    n, cells, limit = case
    state = TrafficState(cells, n)
    report = validate_state(state, OccupancyLimits(np.array(limit)))
    brute = {}
    for c in cells:
        brute[c] = brute.get(c, 0) + 1
    expected = sorted(c for c, k in brute.items() if k > limit[c])
    assert [v.cell for v in report] == expected
    assert (report == []) == all(k <= limit[c] for c, k in brute.items())
    assert airspace_capacity(state) == len(cells)


def test_csv_round_trip(tmp_path):
    state = TrafficState([4, 1, 1], 6, ["a", "b", "c"])
    path = tmp_path / "state.csv"
    state.to_csv(path)
    assert path.read_text().splitlines()[0] == "uav_id,cell_index"
    back = TrafficState.from_csv(path, 6)
    assert back.assignments.tolist() == [4, 1, 1]
    assert back.uav_ids == ["a", "b", "c"]


def test_gridspec_is_validated():
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), (100, 100, 100), (50, 50, 50), (3, 2, 2))
