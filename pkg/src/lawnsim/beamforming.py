"""ULA steering model, link/sensing gains, and the survival-constrained power minimization.

The transmit beam has to do two jobs: keep the control link's SINR above
the entropy-derived survival threshold, and keep the one-step Lyapunov
drift below ``eta * V(q)``. Communication gain depends on ``a(theta)^H w``
and sensing precision on ``adot(theta)^H w``, so power outside
``span{a, adot}`` is wasted. The solver therefore searches the family

    w(kappa, c) = c * ((1 - kappa) * a_hat + kappa * d_hat)

where ``a_hat`` is the normalized steering vector and ``d_hat`` the
normalized part of ``adot`` orthogonal to it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .sensing_control import (ControllerGain, LinkReliability, PlantModel, SensingSpec,
                              covariance_shape, crb_angle, expected_drift, lyapunov_value,
                              packet_success_prob, sensing_error_cov, _trace_product)


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int
    spacing: float = 0.5
    """Element spacing in wavelengths."""

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError("num_elements must be >= 1")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")


def _check_angle(theta):
    if not abs(theta) < np.pi / 2:
        raise ValueError("theta must lie strictly inside (-pi/2, pi/2); endfire is excluded")


def steering_vector(theta: float, array: ArrayGeometry) -> np.ndarray:
    _check_angle(theta)
    n = np.arange(array.num_elements)
    return np.exp(1j * 2 * np.pi * array.spacing * n * np.sin(theta))


def steering_derivative(theta: float, array: ArrayGeometry) -> np.ndarray:
    """d a(theta) / d theta."""
    _check_angle(theta)
    n = np.arange(array.num_elements)
    return 1j * 2 * np.pi * array.spacing * n * np.cos(theta) * steering_vector(theta, array)


def link_sinr(w, theta: float, beta: complex, noise_var: float, array: ArrayGeometry | None = None) -> float:
    """Interference-free control-link SINR ``|beta|^2 |a^H w|^2 / sigma^2``."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    w = np.asarray(w, dtype=complex).reshape(-1)
    array = array or ArrayGeometry(w.size)
    if w.size != array.num_elements:
        raise ValueError("beam vector length does not match the array")
    return float(abs(beta) ** 2 * abs(np.vdot(steering_vector(theta, array), w)) ** 2 / noise_var)


def sensing_gain(w, theta: float, array: ArrayGeometry | None = None) -> float:
    """``|adot(theta)^H w|^2``, the beam-dependent factor of the angle CRB."""
    w = np.asarray(w, dtype=complex).reshape(-1)
    array = array or ArrayGeometry(w.size)
    if w.size != array.num_elements:
        raise ValueError("beam vector length does not match the array")
    return float(abs(np.vdot(steering_derivative(theta, array), w)) ** 2)


def beam_basis(theta: float, array: ArrayGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Unit steering direction and the unit part of its derivative orthogonal to it.

    The orthogonal direction is phase-rotated so that ``adot^H d_hat`` and
    ``adot^H a_hat`` share a phase. With that choice the real mixtures
    ``(1 - kappa) a_hat + kappa d_hat`` attain the largest sensing gain of
    any beam in span{a, adot} with the same projection magnitudes, so the
    two-parameter search loses nothing against complex mixtures.
    """
    if array.num_elements < 2:
        raise ValueError("derivative-based sensing needs at least two elements")
    a = steering_vector(theta, array)
    a_dot = steering_derivative(theta, array)
    a_hat = a / np.linalg.norm(a)
    d = a_dot - np.vdot(a_hat, a_dot) * a_hat
    d_hat = d / np.linalg.norm(d)
    cross = np.vdot(a_dot, a_hat)
    if abs(cross) > 1e-12 * np.linalg.norm(a_dot):
        d_hat = d_hat * cross / abs(cross)
    return a_hat, d_hat


@dataclass(frozen=True)
class P1Problem:
    theta: float
    array: ArrayGeometry
    plant: PlantModel
    gains: ControllerGain
    link: LinkReliability
    sensing: SensingSpec
    gamma_critical: float
    eta: float
    q_current: np.ndarray
    noise_var: float
    comm_gain: complex = 1.0
    """Channel gain of the control link (the sensing echo gain lives in ``sensing``)."""

    def __post_init__(self):
        if self.gamma_critical < 0:
            raise ValueError("gamma_critical must be non-negative")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        _check_angle(self.theta)
        self.gains.check(self.plant)
        q = np.asarray(self.q_current, dtype=float).reshape(-1)
        if q.size != self.plant.dim:
            raise ValueError("q_current does not match the plant dimension")
        object.__setattr__(self, "q_current", q)


class ConstraintReport(NamedTuple):
    sinr: float
    sinr_margin: float
    """SINR(w) - gamma_critical."""
    sinr_ok: bool
    drift: float
    drift_margin: float
    """eta V(q) - E[V(q+) | q]."""
    drift_ok: bool
    packet_prob: float
    crb: float


def feasibility(w, problem: P1Problem, tol: float = 0.0) -> ConstraintReport:
    """Evaluate both survival constraints for a given beam."""
    s = link_sinr(w, problem.theta, problem.comm_gain, problem.noise_var, problem.array)
    p = packet_success_prob(s, problem.link)
    crb = crb_angle(sensing_gain(w, problem.theta, problem.array), problem.sensing)
    sigma = sensing_error_cov(crb, problem.sensing, problem.plant.dim)
    drift = expected_drift(problem.q_current, p, sigma, problem.plant, problem.gains)
    v = lyapunov_value(problem.q_current, problem.gains)
    sinr_margin = s - problem.gamma_critical
    drift_margin = problem.eta * v - drift
    return ConstraintReport(s, sinr_margin, sinr_margin >= -tol, drift, drift_margin,
                            drift_margin >= -tol, float(p), crb)


@dataclass(frozen=True)
class P1Solution:
    w: np.ndarray
    kappa: float
    scale: float
    power: float
    binding: str
    """``sinr``, ``drift``, ``both`` or ``none`` (minimum hit the search floor)."""
    report: ConstraintReport
    per_kappa: tuple = field(repr=False, default=())
    feasible = True


@dataclass(frozen=True)
class Infeasible:
    reason: str
    """``power-cap`` or ``entropy``."""
    per_kappa: tuple = field(repr=False, default=())
    feasible = False


class KappaRow(NamedTuple):
    kappa: float
    power: float
    sinr_margin: float
    drift_margin: float
    binding: str


P1_REPORT_HEADER = ("kappa", "power", "sinr_margin", "drift_margin", "binding")


class _Family:
    """Vectorized constraint evaluation along w(kappa, c)."""

    def __init__(self, problem: P1Problem):
        pb = problem
        self.problem = pb
        a = steering_vector(pb.theta, pb.array)
        a_dot = steering_derivative(pb.theta, pb.array)
        self.a_hat, self.d_hat = beam_basis(pb.theta, pb.array)
        self._a = a
        self._a_dot = a_dot
        q = pb.q_current
        A, B, G, P = pb.plant.A, pb.plant.B, pb.gains.G_fb, pb.gains.P_lyap
        BG = B @ G
        self.v_closed = float(q @ (A - BG).T @ P @ (A - BG) @ q)
        self.v_open = float(q @ A.T @ P @ A @ q)
        self.sens_coef = _trace_product(BG.T @ P @ BG, covariance_shape(pb.sensing, pb.plant.dim))
        self.noise_floor = float(np.trace(P @ pb.plant.Q_n))
        self.target = pb.eta * lyapunov_value(q, pb.gains)
        s = pb.sensing
        self.crb_num = s.noise_var / (2.0 * s.snapshots * abs(s.channel_gain) ** 2 * s.rx_antennas)

    def direction(self, kappa):
        return (1 - kappa) * self.a_hat + kappa * self.d_hat

    def unit_gains(self, kappa):
        u = self.direction(kappa)
        pb = self.problem
        comm = abs(pb.comm_gain) ** 2 * abs(np.vdot(self._a, u)) ** 2 / pb.noise_var
        sens = abs(np.vdot(self._a_dot, u)) ** 2
        return comm, sens, float(np.vdot(u, u).real)

    def margins(self, c, comm, sens):
        c2 = np.asarray(c, dtype=float) ** 2
        s = c2 * comm
        p = packet_success_prob(s, self.problem.link)
        sg = c2 * sens
        with np.errstate(divide="ignore"):
            crb = np.where(sg > 0, self.crb_num / np.where(sg > 0, sg, 1.0), np.inf)
        if self.sens_coef == 0:
            sens_term = 0.0
        else:
            with np.errstate(invalid="ignore"):
                sens_term = np.where(p > 0, p * self.sens_coef * crb, 0.0)
        drift = p * self.v_closed + (1 - p) * self.v_open + sens_term + self.noise_floor
        return s - self.problem.gamma_critical, self.target - drift


def solve_p1(problem: P1Problem, n_kappa: int = 101, power_cap: float = 1e6,
             rtol: float = 1e-6, decades: float = 12.0, points_per_decade: int = 20) -> P1Solution | Infeasible:
    """Minimum-power beam meeting the SINR survival and Lyapunov drift constraints.

    For each kappa on a uniform grid the scale ``c`` is scanned on a
    geometric grid reaching down ``decades`` below the power cap; the first
    feasible point is refined by bisection against its infeasible
    neighbour to relative tolerance ``rtol``. Ties in power go to the
    smaller kappa.
    """
    if not np.isfinite(problem.gamma_critical):
        return Infeasible("entropy")
    fam = _Family(problem)
    best = None
    rows = []
    for kappa in np.linspace(0.0, 1.0, n_kappa):
        comm, sens, unit_power = fam.unit_gains(kappa)
        c_max = np.sqrt(power_cap / unit_power)
        grid = c_max * np.logspace(-decades, 0.0, int(decades * points_per_decade) + 1)
        sm, dm = fam.margins(grid, comm, sens)
        ok = (sm >= 0) & (dm >= 0)
        if not ok.any():
            rows.append(KappaRow(float(kappa), float("inf"), float("nan"), float("nan"), "power-cap"))
            continue
        i = int(np.argmax(ok))
        if i == 0:
            c = grid[0]
        else:
            lo, hi = grid[i - 1], grid[i]
            while hi / lo - 1.0 > rtol:
                mid = np.sqrt(lo * hi)
                s_mid, d_mid = fam.margins(mid, comm, sens)
                if s_mid >= 0 and d_mid >= 0:
                    hi = mid
                else:
                    lo = mid
            c = hi
        s_c, d_c = fam.margins(c, comm, sens)
        s_below, d_below = fam.margins(c * (1 - 10 * rtol), comm, sens)
        if i == 0:
            binding = "none"
        elif s_below < 0 and d_below < 0:
            binding = "both"
        elif s_below < 0:
            binding = "sinr"
        elif d_below < 0:
            binding = "drift"
        else:
            binding = "sinr" if abs(s_c) <= abs(d_c) else "drift"
        row = KappaRow(float(kappa), float(c * c * unit_power), float(s_c), float(d_c), binding)
        rows.append(row)
        if best is None or row.power < best[0].power:
            best = (row, c)
    if best is None:
        return Infeasible("power-cap", tuple(rows))
    row, c = best
    w = c * fam.direction(row.kappa)
    return P1Solution(w, row.kappa, float(c), float(np.vdot(w, w).real), row.binding,
                      feasibility(w, problem), tuple(rows))


def matched_filter_solution(problem: P1Problem) -> np.ndarray:
    """Closed-form minimum-power beam for the SINR constraint alone (kappa = 0)."""
    a_hat, _ = beam_basis(problem.theta, problem.array)
    c2 = problem.gamma_critical * problem.noise_var / (abs(problem.comm_gain) ** 2 * problem.array.num_elements)
    return np.sqrt(c2) * a_hat


def write_p1_report(rows: Sequence[KappaRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(P1_REPORT_HEADER)
        for r in rows:
            writer.writerow([repr(r.kappa), repr(r.power), repr(r.sinr_margin), repr(r.drift_margin), r.binding])
