"""Grid discretization of the low-altitude domain and occupancy-constrained traffic states."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

_DIVISIBILITY_RTOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform axis-aligned grid over a 3D box.

    Cells are indexed row-major over (x, y, z): x is the slowest axis.
    """

    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]
    cell_size: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self):
        if any(c < 1 for c in self.counts):
            raise ValueError(f"every axis needs at least one cell, got counts={self.counts}")
        if any(s <= 0 for s in self.cell_size):
            raise ValueError(f"cell_size must be strictly positive, got {self.cell_size}")
        extent = np.subtract(self.bounds_max, self.bounds_min)
        tiled = np.multiply(self.counts, self.cell_size)
        if not np.allclose(extent, tiled, rtol=_DIVISIBILITY_RTOL, atol=0.0):
            raise ValueError("bounds_max - bounds_min must equal counts * cell_size")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    def cell_center(self, index: int) -> np.ndarray:
        ijk = np.unravel_index(index, self.counts)
        return np.asarray(self.bounds_min) + (np.asarray(ijk) + 0.5) * np.asarray(self.cell_size)

    def cell_centers(self) -> np.ndarray:
        """Centers of all cells, shape (N, 3), in index order."""
        ijk = np.stack(np.unravel_index(np.arange(self.n_cells), self.counts), axis=1)
        return np.asarray(self.bounds_min) + (ijk + 0.5) * np.asarray(self.cell_size)

    def contains(self, position) -> bool:
        p = np.asarray(position, dtype=float)
        return bool(np.all(p >= self.bounds_min) and np.all(p <= self.bounds_max))

    def to_dict(self) -> dict:
        return {
            "bounds_min": list(self.bounds_min),
            "bounds_max": list(self.bounds_max),
            "cell_size": list(self.cell_size),
            "counts": list(self.counts),
        }


def discretize(bounds_min, bounds_max, cell_size) -> GridSpec:
    """Tile ``[bounds_min, bounds_max]`` with cells of ``cell_size``.

    Extents that are not a whole number of cells (beyond a relative
    tolerance of 1e-9) are rounded up and ``bounds_max`` is pushed outward
    so the cells tile the domain exactly.
    """
    lo = np.asarray(bounds_min, dtype=float)
    hi = np.asarray(bounds_max, dtype=float)
    size = np.asarray(cell_size, dtype=float)
    if lo.shape != (3,) or hi.shape != (3,) or size.shape != (3,):
        raise ValueError("bounds and cell_size must be 3-vectors")
    if np.any(size <= 0):
        raise ValueError(f"cell_size must be strictly positive, got {tuple(size)}")
    if np.any(hi <= lo):
        raise ValueError(f"inverted or empty bounds: {tuple(lo)} .. {tuple(hi)}")

    counts = []
    for extent, s in zip(hi - lo, size):
        ratio = extent / s
        nearest = round(ratio)
        if nearest >= 1 and abs(ratio - nearest) <= _DIVISIBILITY_RTOL * ratio:
            counts.append(int(nearest))
        else:
            counts.append(int(math.ceil(ratio)))
    counts = tuple(counts)
    new_hi = lo + np.asarray(counts) * size
    return GridSpec(tuple(lo.tolist()), tuple(new_hi.tolist()), tuple(size.tolist()), counts)


def cell_of(position, grid: GridSpec) -> int:
    """Row-major index of the cell holding ``position``.

    A point on an interior face belongs to the lower-indexed cell, so
    ``bounds_min`` maps to cell 0 and ``bounds_max`` to cell N-1.
    """
    p = np.asarray(position, dtype=float)
    if not grid.contains(p):
        raise ValueError(f"position {tuple(p)} outside grid bounds")
    rel = (p - np.asarray(grid.bounds_min)) / np.asarray(grid.cell_size)
    ijk = np.ceil(rel).astype(int) - 1
    ijk = np.clip(ijk, 0, np.asarray(grid.counts) - 1)
    return int(np.ravel_multi_index(tuple(ijk), grid.counts))


def cells_in_box(grid: GridSpec, lo, hi) -> np.ndarray:
    """Indices of cells whose volume overlaps the open box (lo, hi)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    gmin = np.asarray(grid.bounds_min)
    size = np.asarray(grid.cell_size)
    counts = np.asarray(grid.counts)
    first = np.clip(np.floor((lo - gmin) / size).astype(int), 0, counts)
    last = np.clip(np.ceil((hi - gmin) / size).astype(int), 0, counts)
    if np.any(last <= first):
        return np.empty(0, dtype=int)
    axes = [np.arange(a, b) for a, b in zip(first, last)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index(tuple(m.ravel() for m in mesh), grid.counts)


@dataclass
class TrafficState:
    """Assignment of each active UAV to one grid cell.

    Storing one cell index per UAV makes the row-sum constraint of the
    binary position matrix hold by construction.
    """

    assignments: np.ndarray
    n_cells: int
    uav_ids: list[str] | None = field(default=None)

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=int).reshape(-1)
        if self.n_cells < 1:
            raise ValueError("n_cells must be positive")
        if self.assignments.size and (self.assignments.min() < 0 or self.assignments.max() >= self.n_cells):
            raise ValueError(f"cell indices must lie in [0, {self.n_cells})")
        if self.uav_ids is not None and len(self.uav_ids) != self.assignments.size:
            raise ValueError("uav_ids must match the number of assignments")

    @property
    def n_uavs(self) -> int:
        return int(self.assignments.size)

    def position_matrix(self) -> np.ndarray:
        """Dense binary K x N matrix X."""
        X = np.zeros((self.n_uavs, self.n_cells), dtype=np.int8)
        X[np.arange(self.n_uavs), self.assignments] = 1
        return X

    def cell_counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_cells)

    def to_csv(self, path) -> None:
        ids = self.uav_ids if self.uav_ids is not None else [str(k) for k in range(self.n_uavs)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["uav_id", "cell_index"])
            for uav, cell in zip(ids, self.assignments.tolist()):
                writer.writerow([uav, cell])

    @classmethod
    def from_csv(cls, path, n_cells: int) -> "TrafficState":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["uav_id", "cell_index"]:
                raise ValueError(f"unexpected header {header!r}")
            rows = [r for r in reader if r]
        ids = [r[0] for r in rows]
        cells = [int(r[1]) for r in rows]
        return cls(np.asarray(cells, dtype=int), n_cells, ids)


@dataclass(frozen=True)
class OccupancyLimits:
    per_cell_max: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.per_cell_max, dtype=int).reshape(-1)
        if np.any(arr < 0):
            raise ValueError("occupancy limits must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "per_cell_max", arr)

    @classmethod
    def uniform(cls, n_cells: int, limit: int = 1) -> "OccupancyLimits":
        return cls(np.full(n_cells, limit, dtype=int))

    def __len__(self):
        return int(self.per_cell_max.size)


class Violation(NamedTuple):
    cell: int
    occupancy: int
    limit: int


def airspace_capacity(state: TrafficState) -> int:
    """Number of active UAVs, i.e. the L1 norm of the position matrix."""
    return state.n_uavs


def validate_state(state: TrafficState, limits: OccupancyLimits) -> list[Violation]:
    """List every cell whose occupancy exceeds its geometric limit.

    An empty list means the column-sum constraint holds.
    """
    if len(limits) != state.n_cells:
        raise ValueError(f"limits cover {len(limits)} cells, state has {state.n_cells}")
    occ = state.cell_counts()
    bad = np.flatnonzero(occ > limits.per_cell_max)
    return [Violation(int(n), int(occ[n]), int(limits.per_cell_max[n])) for n in bad]


def random_state(n_cells: int, n_uavs: int, rng: np.random.Generator) -> TrafficState:
    return TrafficState(rng.integers(0, n_cells, size=n_uavs), n_cells)


def state_from_positions(positions: Sequence, grid: GridSpec) -> TrafficState:
    cells = [cell_of(p, grid) for p in positions]
    return TrafficState(np.asarray(cells, dtype=int), grid.n_cells)
