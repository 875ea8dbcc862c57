"""Beam occupancy, SINR, spectral efficiency and the airspace capacity regimes.

Every UAV whose cell maps to the same orthogonal beam shares that beam's
interference subspace. With ``mu`` co-beam users and raw SNR ``rho`` the
per-user SINR is ``rho / ((mu - 1) * rho + 1)``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .airspace import TrafficState


class Regime(str, enum.Enum):
    NOISE_MASKED = "NoiseMasked"
    LINEAR_TRADEOFF = "LinearTradeoff"
    SATURATION = "Saturation"


class AllocationPolicy(str, enum.Enum):
    BALANCED = "Balanced"
    UNIFORM_RANDOM = "UniformRandom"


@dataclass(frozen=True)
class BeamPlan:
    num_beams: int
    cell_to_beam: np.ndarray

    def __post_init__(self):
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        arr = np.asarray(self.cell_to_beam, dtype=int).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= self.num_beams):
            raise ValueError(f"beam indices must lie in [0, {self.num_beams})")
        arr.setflags(write=False)
        object.__setattr__(self, "cell_to_beam", arr)

    @property
    def n_cells(self) -> int:
        return int(self.cell_to_beam.size)

    @classmethod
    def round_robin(cls, n_cells: int, num_beams: int) -> "BeamPlan":
        """Cell ``n`` is served by beam ``n mod num_beams``."""
        return cls(num_beams, np.arange(n_cells) % num_beams)

    @classmethod
    def blocks(cls, n_cells: int, num_beams: int) -> "BeamPlan":
        """Contiguous runs of cells share a beam (sector-like layout)."""
        return cls(num_beams, (np.arange(n_cells) * num_beams) // n_cells)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def beam_occupancy(state: TrafficState, beam_plan: BeamPlan) -> np.ndarray:
    """Per-UAV count of active UAVs (itself included) on the same beam."""
    if state.n_cells != beam_plan.n_cells:
        raise ValueError(f"state has {state.n_cells} cells, beam plan {beam_plan.n_cells}")
    if state.n_uavs == 0:
        return np.empty(0, dtype=int)
    beams = beam_plan.cell_to_beam[state.assignments]
    per_beam = np.bincount(beams, minlength=beam_plan.num_beams)
    return per_beam[beams]


def sinr(mu, rho):
    """Linear SINR under coherent intra-beam interference."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 1):
        raise ValueError("beam occupancy must be >= 1")
    if np.any(np.asarray(rho) <= 0):
        raise ValueError("rho must be positive")
    rho = np.asarray(rho, dtype=float)
    # rho = inf is the interference-limited limit 1 / (mu - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(rho), 1.0 / (mu - 1.0), rho / ((mu - 1.0) * rho + 1.0))
    return out if out.ndim else float(out)


def spectral_efficiency(gamma):
    """Shannon spectral efficiency in bits/s/Hz."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("SINR must be non-negative")
    out = np.log2(1.0 + g)
    return out if out.ndim else float(out)


def critical_capacity(num_beams: int, rho: float) -> float:
    if num_beams < 1 or rho <= 0:
        raise ValueError("need num_beams >= 1 and rho > 0")
    return num_beams * (1.0 + 1.0 / rho)


def classify_regime(c_air: float, num_beams: int, rho: float) -> Regime:
    if c_air < 0:
        raise ValueError("c_air must be non-negative")
    if c_air <= num_beams:
        return Regime.NOISE_MASKED
    if c_air <= critical_capacity(num_beams, rho):
        return Regime.LINEAR_TRADEOFF
    return Regime.SATURATION


def saturation_capacity_approx(c_air: float, num_beams: int) -> float:
    """Interference-limited per-UAV rate, ``log2(1 + 1/(c_air/L - 1))``."""
    if c_air <= num_beams:
        raise ValueError("saturation approximation needs c_air > num_beams")
    if np.isinf(c_air):
        return 0.0
    return float(np.log2(1.0 + 1.0 / (c_air / num_beams - 1.0)))


class QosBound(NamedTuple):
    raw: float
    """Unclamped ``L (1 + 1/(2^r_min - 1) - 1/rho)``."""
    value: float
    """``raw`` clamped at zero."""
    feasible: bool
    """False when even a lone user per beam misses r_min (raw < L)."""


def qos_capacity_bound(num_beams: int, rho: float, r_min: float) -> QosBound:
    """Largest airspace load keeping every user at or above ``r_min`` bits/s/Hz."""
    if r_min <= 0:
        raise ValueError("r_min must be positive")
    if rho <= 0:
        raise ValueError("rho must be positive")
    sinr_req = 2.0 ** r_min - 1.0
    raw = num_beams * (1.0 + 1.0 / sinr_req - 1.0 / rho)
    return QosBound(float(raw), float(max(raw, 0.0)), bool(raw >= num_beams))


def balanced_occupancy(n_uavs: int, num_beams: int) -> np.ndarray:
    """mu_k when UAVs are dealt round-robin over the beams."""
    beams = np.arange(n_uavs) % num_beams
    return np.bincount(beams, minlength=num_beams)[beams]


def balanced_state(n_uavs: int, beam_plan: BeamPlan) -> TrafficState:
    """One UAV per cell, cycling through the beams in order.

    Requires enough distinct cells per beam for the requested load.
    """
    L = beam_plan.num_beams
    by_beam = [np.flatnonzero(beam_plan.cell_to_beam == b) for b in range(L)]
    cells = []
    for k in range(n_uavs):
        b, slot = k % L, k // L
        if slot >= by_beam[b].size:
            raise ValueError(f"beam {b} has only {by_beam[b].size} cells")
        cells.append(by_beam[b][slot])
    return TrafficState(np.asarray(cells, dtype=int), beam_plan.n_cells)


def _grouped_mean_se(mu, rho) -> float:
    # weight each distinct occupancy level once, so a uniform load returns log2(1 + gamma) bit-exactly
    levels, counts = np.unique(mu, return_counts=True)
    se = spectral_efficiency(sinr(levels, rho))
    if levels.size == 1:
        return float(se[0])
    return float(np.sum(counts * se) / mu.size)


def _random_mean_se(n_uavs, num_beams, rho, replicates, rng):
    beams = rng.integers(0, num_beams, size=(replicates, n_uavs))
    offset = beams + num_beams * np.arange(replicates)[:, None]
    counts = np.bincount(offset.ravel(), minlength=replicates * num_beams)
    mu = counts[offset]
    return spectral_efficiency(sinr(mu, rho)).mean(axis=1)


def _point_seed(seed: int, n_uavs: int, rho: float) -> np.random.SeedSequence:
    rho_bits = int(np.float64(rho).view(np.uint64))
    return np.random.SeedSequence([seed, n_uavs, rho_bits])


@dataclass(frozen=True)
class CurveRow:
    K: int
    rho_db: float
    policy: str
    mean_se_bits: float
    stderr_se_bits: float
    regime: str

    CSV_HEADER = ("K", "rho_db", "policy", "mean_se_bits", "stderr_se_bits", "regime")

    def as_row(self):
        return [self.K, repr(self.rho_db), self.policy, repr(self.mean_se_bits),
                repr(self.stderr_se_bits), self.regime]


def per_uav_se_curve(k_range: Iterable[int], num_beams: int, rho_list: Sequence[float],
                     allocation_policy="Balanced", replicates: int = 1,
                     seed: int = 0) -> list[CurveRow]:
    """Mean per-UAV spectral efficiency versus load, one row per (K, rho).

    Balanced allocation is deterministic (stderr 0). UniformRandom draws an
    independent beam per UAV; each (K, rho) point gets its own stream seeded
    from ``(seed, K, rho)`` so rows do not depend on evaluation order.
    """
    ks = [int(k) for k in k_range]
    if not ks:
        raise ValueError("k_range is empty")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    policy = AllocationPolicy(allocation_policy)
    rows = []
    for rho in rho_list:
        rho = float(rho)
        for K in ks:
            if K < 1:
                raise ValueError("K must be >= 1")
            if policy is AllocationPolicy.BALANCED:
                mean = _grouped_mean_se(balanced_occupancy(K, num_beams), rho)
                err = 0.0
            else:
                rng = np.random.default_rng(_point_seed(seed, K, rho))
                per_rep = _random_mean_se(K, num_beams, rho, replicates, rng)
                mean = float(per_rep.mean())
                err = float(per_rep.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0
            rows.append(CurveRow(K, float(linear_to_db(rho)), policy.value, mean, err,
                                 classify_regime(K, num_beams, rho).value))
    return rows


def write_curve_csv(rows: Sequence[CurveRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CurveRow.CSV_HEADER)
        for r in rows:
            writer.writerow(r.as_row())
