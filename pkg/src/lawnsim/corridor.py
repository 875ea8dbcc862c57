"""Layered air corridors, geofences, per-corridor beam budgets and admission control."""

from __future__ import annotations

import csv
import enum
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .airspace import GridSpec, cells_in_box
from .channel import BeamPlan, qos_capacity_bound


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3-vectors")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError(f"inverted box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2

    def is_degenerate(self) -> bool:
        return self.volume <= 0

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def intersection(self, other: "Box") -> "Box | None":
        """Closed intersection, possibly lower-dimensional; None if disjoint."""
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi < lo):
            return None
        return Box(tuple(lo), tuple(hi))

    def overlaps(self, other: "Box") -> bool:
        """True when the interiors intersect (positive-volume overlap)."""
        return bool(np.all(np.maximum(self.lo, other.lo) < np.minimum(self.hi, other.hi)))

    def subtract(self, other: "Box") -> list["Box"]:
        """Split ``self - other`` into disjoint boxes, slicing x, then y, then z."""
        if not self.overlaps(other):
            return [self]
        pieces = []
        lo = list(self.lo)
        hi = list(self.hi)
        for axis in range(3):
            if other.lo[axis] > lo[axis]:
                p_hi = list(hi)
                p_hi[axis] = other.lo[axis]
                pieces.append(Box(tuple(lo), tuple(p_hi)))
                lo[axis] = other.lo[axis]
            if other.hi[axis] < hi[axis]:
                p_lo = list(lo)
                p_lo[axis] = other.hi[axis]
                pieces.append(Box(tuple(p_lo), tuple(hi)))
                hi[axis] = other.hi[axis]
        return [p for p in pieces if not p.is_degenerate()]

    def inflate(self, margin: float) -> "Box":
        return Box(tuple(np.subtract(self.lo, margin)), tuple(np.add(self.hi, margin)))

    def to_dict(self) -> dict:
        return {"min": list(self.lo), "max": list(self.hi)}


class LayerRole(str, enum.Enum):
    DIRECTIONAL_NS = "DirectionalNS"
    DIRECTIONAL_EW = "DirectionalEW"
    TRANSITION = "Transition"


class FenceKind(str, enum.Enum):
    NO_FLY = "NoFly"
    BUFFER = "Buffer"


@dataclass(frozen=True)
class Corridor:
    id: str
    volume: Box
    layer_role: LayerRole
    altitude_band: tuple[float, float]
    direction_class: str | None = None


@dataclass(frozen=True)
class Geofence:
    id: str
    volume: Box
    kind: FenceKind = FenceKind.NO_FLY

    def __post_init__(self):
        if self.volume.is_degenerate():
            raise ValueError(f"geofence {self.id!r} has zero volume")


@dataclass(frozen=True)
class CorridorPlan:
    corridors: tuple[Corridor, ...]
    geofences: tuple[Geofence, ...]
    layer_order: tuple[LayerRole, LayerRole, LayerRole]

    def corridor(self, corridor_id: str) -> Corridor:
        for c in self.corridors:
            if c.id == corridor_id:
                return c
        raise KeyError(corridor_id)

    @property
    def nofly(self) -> list[Geofence]:
        return [g for g in self.geofences if g.kind is FenceKind.NO_FLY]

    def adjacency(self) -> dict[str, list[str]]:
        """Corridors sharing a face of positive area, in plan order."""
        adj = {c.id: [] for c in self.corridors}
        for i, a in enumerate(self.corridors):
            for b in self.corridors[i + 1:]:
                if _shares_face(a.volume, b.volume):
                    adj[a.id].append(b.id)
                    adj[b.id].append(a.id)
        return adj

    def to_dict(self) -> dict:
        return {
            "layer_order": [r.value for r in self.layer_order],
            "corridors": [
                {"id": c.id, "layer_role": c.layer_role.value, "altitude_band": list(c.altitude_band),
                 "direction_class": c.direction_class, **c.volume.to_dict()}
                for c in self.corridors
            ],
            "geofences": [{"id": g.id, "kind": g.kind.value, **g.volume.to_dict()} for g in self.geofences],
        }


def _shares_face(a: Box, b: Box) -> bool:
    inter = a.intersection(b)
    if inter is None:
        return False
    extent = np.subtract(inter.hi, inter.lo)
    return int(np.sum(extent > 0)) >= 2


_DIRECTION = {
    LayerRole.DIRECTIONAL_EW: "eastbound/westbound",
    LayerRole.DIRECTIONAL_NS: "northbound/southbound",
    LayerRole.TRANSITION: None,
}


def build_layered_plan(grid: GridSpec, layer_altitudes: Sequence[Sequence[float]],
                       nofly_list: Iterable[Box | Geofence] = (), bottom_role="DirectionalEW",
                       buffer_margin: float = 0.0) -> CorridorPlan:
    """Three altitude-disjoint layers: directional, transition, directional.

    ``bottom_role`` picks which directional class flies low; the other one
    flies high. NoFly volumes (inflated by ``buffer_margin`` when positive)
    are carved out of every layer and the remainder split into axis-aligned
    sub-box corridors.
    """
    bands = [tuple(float(v) for v in band) for band in layer_altitudes]
    if len(bands) != 3:
        raise ValueError("exactly three altitude bands are required")
    for low, high in bands:
        if high <= low:
            raise ValueError(f"empty altitude band {(low, high)}")
        if low < grid.bounds_min[2] or high > grid.bounds_max[2]:
            raise ValueError(f"altitude band {(low, high)} outside grid z-range")
    for (_, h0), (l1, _) in zip(bands, bands[1:]):
        if l1 < h0:
            raise ValueError("altitude bands must be strictly increasing and non-overlapping")

    bottom = LayerRole(bottom_role)
    if bottom is LayerRole.TRANSITION:
        raise ValueError("bottom layer must be directional")
    top = LayerRole.DIRECTIONAL_NS if bottom is LayerRole.DIRECTIONAL_EW else LayerRole.DIRECTIONAL_EW
    roles = (bottom, LayerRole.TRANSITION, top)

    fences = []
    for i, nf in enumerate(nofly_list):
        fences.append(nf if isinstance(nf, Geofence) else Geofence(f"nofly-{i}", nf))
    nofly = [f for f in fences if f.kind is FenceKind.NO_FLY]
    buffers = []
    keepout = [f.volume for f in nofly]
    if buffer_margin > 0:
        buffers = [Geofence(f"{f.id}-buffer", f.volume.inflate(buffer_margin), FenceKind.BUFFER) for f in nofly]
        keepout = [b.volume for b in buffers]
    keepout += [f.volume for f in fences if f.kind is FenceKind.BUFFER]

    corridors = []
    for layer, ((low, high), role) in enumerate(zip(bands, roles)):
        pieces = [Box((grid.bounds_min[0], grid.bounds_min[1], low), (grid.bounds_max[0], grid.bounds_max[1], high))]
        for ko in keepout:
            pieces = [p for piece in pieces for p in piece.subtract(ko)]
        if not pieces:
            raise ValueError(f"no-fly volumes cover the whole of layer {layer} ({role.value})")
        for j, p in enumerate(pieces):
            corridors.append(Corridor(f"L{layer}-{role.value}-{j}", p, role, (low, high), _DIRECTION[role]))
    return CorridorPlan(tuple(corridors), tuple(fences) + tuple(buffers), roles)


@dataclass(frozen=True)
class BeamBudget:
    corridor_id: str
    max_concurrent: int
    num_beams: int
    rho: float
    r_min: float
    feasible: bool

    def limit_for(self, r_min: float) -> int:
        """Budget recomputed for a stricter per-flight rate, capped by this one."""
        if r_min <= self.r_min:
            return self.max_concurrent
        return min(self.max_concurrent, _budget_count(self.num_beams, self.rho, r_min)[0])


def _budget_count(num_beams: int, rho: float, r_min: float) -> tuple[int, bool]:
    bound = qos_capacity_bound(num_beams, rho, r_min)
    if not bound.feasible:
        return 0, False
    return int(np.floor(bound.value)), True


def corridor_beam_budget(corridor: Corridor, beam_plan: BeamPlan, grid: GridSpec,
                         rho: float, r_min: float) -> BeamBudget:
    """Concurrent-flight budget from the QoS capacity bound over the corridor's beams."""
    cells = cells_in_box(grid, corridor.volume.lo, corridor.volume.hi)
    if cells.size == 0:
        raise ValueError(f"corridor {corridor.id!r} covers no grid cells")
    n_beams = int(np.unique(beam_plan.cell_to_beam[cells]).size)
    count, feasible = _budget_count(n_beams, rho, r_min)
    return BeamBudget(corridor.id, count, n_beams, float(rho), float(r_min), feasible)


class FenceViolation(NamedTuple):
    segment: int
    """Index of the segment (-1 for a waypoint check)."""
    waypoint: int
    """Index of the offending waypoint, -1 when the hit is mid-segment."""
    fence_id: str
    point: tuple[float, float, float]


def _segment_box_hit(p0, p1, box: Box):
    """First point of the closed segment p0-p1 inside a closed box, or None."""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        if d[axis] == 0.0:
            if p0[axis] < box.lo[axis] or p0[axis] > box.hi[axis]:
                return None
            continue
        ta = (box.lo[axis] - p0[axis]) / d[axis]
        tb = (box.hi[axis] - p0[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return p0 + t0 * d


def check_geofence(waypoints, geofences: Sequence[Geofence], step: float | None = 1.0) -> list[FenceViolation]:
    """Report waypoints and path segments that enter a NoFly volume.

    Volumes are closed, so touching a face counts. Segments are sampled
    every ``step`` meters (endpoints included); ``step=None`` switches to an
    exact segment/box clip instead of sampling.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("waypoint list is empty")
    fences = [g for g in geofences if g.kind is FenceKind.NO_FLY]
    out = []
    for i, p in enumerate(pts):
        for g in fences:
            if g.volume.contains(p):
                out.append(FenceViolation(-1, i, g.id, tuple(p.tolist())))
    for s in range(len(pts) - 1):
        p0, p1 = pts[s], pts[s + 1]
        for g in fences:
            if step is None:
                hit = _segment_box_hit(p0, p1, g.volume)
            else:
                n = max(1, int(np.ceil(np.linalg.norm(p1 - p0) / step)))
                samples = p0 + np.linspace(0.0, 1.0, n + 1)[:, None] * (p1 - p0)
                inside = np.all((samples >= g.volume.lo) & (samples <= g.volume.hi), axis=1)
                hit = samples[np.argmax(inside)] if inside.any() else None
            if hit is not None:
                out.append(FenceViolation(s, -1, g.id, tuple(np.asarray(hit).tolist())))
    return out


@dataclass(frozen=True)
class FlightRequest:
    request_id: str
    origin: tuple[float, float, float]
    destination: tuple[float, float, float]
    r_min: float
    timestamp: float = 0.0


@dataclass(frozen=True)
class Admitted:
    corridor_path: tuple[str, ...]
    waypoints: tuple[tuple[float, float, float], ...]
    decision = "Admitted"
    reason = ""


@dataclass(frozen=True)
class Rejected:
    reason: str
    """``capacity``, ``geofence`` or ``no-route``."""
    detail: str = ""
    decision = "Rejected"
    corridor_path = ()


@dataclass
class LiveOccupancy:
    """Admitted flights per corridor, keyed by request id."""

    counts: dict[str, int] = field(default_factory=dict)
    flights: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def count(self, corridor_id: str) -> int:
        return self.counts.get(corridor_id, 0)

    def add(self, request_id: str, path: Sequence[str]) -> None:
        if request_id in self.flights:
            raise ValueError(f"request {request_id!r} already admitted")
        self.flights[request_id] = tuple(path)
        for cid in set(path):
            self.counts[cid] = self.counts.get(cid, 0) + 1

    def release(self, request_id: str) -> None:
        path = self.flights.pop(request_id)
        for cid in set(path):
            self.counts[cid] -= 1


def _corridors_at(plan: CorridorPlan, point) -> list[str]:
    return [c.id for c in plan.corridors if c.volume.contains(point)]


def _shortest_path(adj, sources, targets, allowed):
    """BFS over allowed corridors; neighbours visited in plan order."""
    sources = [s for s in sources if s in allowed]
    prev = {s: None for s in sources}
    queue = deque(sources)
    while queue:
        node = queue.popleft()
        if node in targets:
            path = [node]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for nb in adj[node]:
            if nb in allowed and nb not in prev:
                prev[nb] = node
                queue.append(nb)
    return None


def route_waypoints(plan: CorridorPlan, path: Sequence[str], origin, destination) -> list[tuple]:
    """Origin, the centre of each shared face along ``path``, destination.

    Consecutive waypoints lie in one (convex) corridor box, so the polyline
    never leaves the corridor sequence.
    """
    pts = [tuple(float(v) for v in origin)]
    for a, b in zip(path, path[1:]):
        face = plan.corridor(a).volume.intersection(plan.corridor(b).volume)
        pts.append(tuple(face.center.tolist()))
    pts.append(tuple(float(v) for v in destination))
    return pts


def admit(request: FlightRequest, live: LiveOccupancy, plan: CorridorPlan,
          budgets: dict[str, BeamBudget], grid: GridSpec) -> Admitted | Rejected:
    """Admit a flight if a corridor route with spare budget and no NoFly crossing exists.

    On admission ``live`` is updated in place. Lateral legs run in the
    directional layers and layer changes go through the transition layer,
    which the plan geometry enforces: only vertically adjacent layers share
    faces.
    """
    for label, p in (("origin", request.origin), ("destination", request.destination)):
        if not grid.contains(p):
            raise ValueError(f"{label} {tuple(p)} outside the grid")
    nofly = plan.nofly
    for label, p in (("origin", request.origin), ("destination", request.destination)):
        for g in nofly:
            if g.volume.contains(p):
                return Rejected("geofence", f"{label} inside {g.id}")

    sources = _corridors_at(plan, request.origin)
    targets = set(_corridors_at(plan, request.destination))
    if not sources or not targets:
        return Rejected("no-route", "origin or destination not inside any corridor")
    adj = plan.adjacency()
    everything = set(adj)
    if _shortest_path(adj, sources, targets, everything) is None:
        return Rejected("no-route", "corridors are not connected")

    available = {cid for cid in everything
                 if cid in budgets and live.count(cid) < budgets[cid].limit_for(request.r_min)}
    path = _shortest_path(adj, sources, targets, available)
    if path is None:
        return Rejected("capacity", "every route crosses a corridor at its budget")
    waypoints = route_waypoints(plan, path, request.origin, request.destination)
    hits = check_geofence(waypoints, nofly, step=None)
    if hits:
        return Rejected("geofence", f"route touches {hits[0].fence_id}")
    live.add(request.request_id, path)
    return Admitted(tuple(path), tuple(waypoints))


ADMISSION_LOG_HEADER = ("timestamp", "request_id", "decision", "reason", "corridor_path")


class AdmissionController:
    """Serialized admission ledger over a fixed plan and budget table."""

    def __init__(self, plan: CorridorPlan, budgets: dict[str, BeamBudget], grid: GridSpec):
        self.plan = plan
        self.budgets = dict(budgets)
        self.grid = grid
        self.live = LiveOccupancy()
        self.log: list[tuple] = []
        self._lock = threading.Lock()

    def request(self, req: FlightRequest) -> Admitted | Rejected:
        with self._lock:
            result = admit(req, self.live, self.plan, self.budgets, self.grid)
            self.log.append((req.timestamp, req.request_id, result.decision, result.reason,
                             "|".join(result.corridor_path)))
            return result

    def release(self, request_id: str, timestamp: float = 0.0) -> None:
        with self._lock:
            self.live.release(request_id)
            self.log.append((timestamp, request_id, "Released", "", ""))

    def occupancy(self) -> dict[str, int]:
        return {c.id: self.live.count(c.id) for c in self.plan.corridors}

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ADMISSION_LOG_HEADER)
            for ts, rid, decision, reason, cpath in self.log:
                writer.writerow([repr(float(ts)), rid, decision, reason, cpath])
