"""Closed-loop UAV control over a lossy, sensing-limited wireless link.

The plant evolves as ``q+ = A q + alpha B u + n`` where ``alpha`` is a
Bernoulli packet-delivery indicator whose success probability is a sigmoid
of the link SINR, and ``u = -G (q - e)`` acts on a state estimate whose
error covariance comes from the angle Cramer-Rao bound of the sensing beam.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

_PSD_TOL = 1e-10
_UNIT_CIRCLE_TOL = 1e-9


def _as_matrix(x, name):
    m = np.atleast_2d(np.asarray(x, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    return m


def _check_psd(m, name):
    if not np.allclose(m, m.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(m).min() < -_PSD_TOL:
        raise ValueError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    Q_n: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        Q = _as_matrix(self.Q_n, "Q_n")
        d = A.shape[0]
        if A.shape != (d, d):
            raise ValueError("A must be square")
        if B.shape[0] != d:
            raise ValueError(f"B must have {d} rows")
        if Q.shape != (d, d):
            raise ValueError(f"Q_n must be {d}x{d}")
        _check_psd(Q, "Q_n")
        for name, m in (("A", A), ("B", B), ("Q_n", Q)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ControllerGain:
    G_fb: np.ndarray
    P_lyap: np.ndarray
    eta: float

    def __post_init__(self):
        G = _as_matrix(self.G_fb, "G_fb")
        P = _as_matrix(self.P_lyap, "P_lyap")
        if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, atol=1e-12):
            raise ValueError("P_lyap must be square and symmetric")
        if np.linalg.eigvalsh(P).min() <= 0:
            raise ValueError("P_lyap must be positive definite")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        G.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "G_fb", G)
        object.__setattr__(self, "P_lyap", P)

    def check(self, plant: PlantModel) -> None:
        if self.G_fb.shape != (plant.input_dim, plant.dim):
            raise ValueError(f"G_fb must be {plant.input_dim}x{plant.dim}")
        if self.P_lyap.shape != (plant.dim, plant.dim):
            raise ValueError(f"P_lyap must be {plant.dim}x{plant.dim}")


@dataclass(frozen=True)
class LinkReliability:
    steepness_a: float
    gamma_th: float

    def __post_init__(self):
        if self.steepness_a <= 0 or self.gamma_th <= 0:
            raise ValueError("steepness and SINR threshold must be positive")


@dataclass(frozen=True)
class SensingSpec:
    noise_var: float
    snapshots: int
    rx_antennas: int
    channel_gain: complex
    slant_range: float
    position_axes: tuple[int, ...] = (0,)
    """State coordinates that carry position (receive the cross-range error)."""
    velocity_axes: tuple[int, ...] = ()
    velocity_factor: float = 0.0
    """Velocity variance = position variance * velocity_factor / dt**2."""
    dt: float = 1.0

    def __post_init__(self):
        if self.noise_var <= 0 or self.snapshots < 1 or self.rx_antennas < 1:
            raise ValueError("need noise_var > 0, snapshots >= 1, rx_antennas >= 1")
        if abs(self.channel_gain) <= 0 or self.slant_range <= 0:
            raise ValueError("need |channel_gain| > 0 and slant_range > 0")
        if self.velocity_factor < 0 or self.dt <= 0:
            raise ValueError("need velocity_factor >= 0 and dt > 0")


# -- link ------------------------------------------------------------------

def packet_success_prob(sinr, link: LinkReliability):
    """Sigmoid map from linear SINR to packet delivery probability."""
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be non-negative")
    z = -link.steepness_a * (s - link.gamma_th)
    # logistic via exp of a non-positive argument only, so no overflow warnings
    out = np.where(z >= 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))), 1.0 / (1.0 + np.exp(-np.abs(z))))
    return out if out.ndim else float(out)


def sample_packet(p: float, rng: np.random.Generator) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return int(rng.random() < p)


# -- sensing -----------------------------------------------------------------

def crb_angle(beam_gain_sq: float, spec: SensingSpec) -> float:
    """Angle CRB in rad^2; ``inf`` for a sensing-blind beam (zero gain)."""
    if beam_gain_sq < 0:
        raise ValueError("beam gain must be non-negative")
    if beam_gain_sq == 0:
        return float("inf")
    return spec.noise_var / (2.0 * spec.snapshots * abs(spec.channel_gain) ** 2
                             * spec.rx_antennas * beam_gain_sq)


def covariance_shape(spec: SensingSpec, plant_dim: int) -> np.ndarray:
    """Sigma per unit CRB: diagonal with slant_range^2 on position axes."""
    diag = np.zeros(plant_dim)
    for ax in spec.position_axes:
        diag[ax] = spec.slant_range ** 2
    for ax in spec.velocity_axes:
        diag[ax] = spec.slant_range ** 2 * spec.velocity_factor / spec.dt ** 2
    return np.diag(diag)


def sensing_error_cov(crb: float, spec: SensingSpec, plant_dim: int) -> np.ndarray:
    """State-estimate error covariance from the angle CRB.

    The angle error projects to a cross-range position error of variance
    ``slant_range**2 * crb``. An infinite CRB yields ``inf`` on the
    position diagonal (see :func:`is_unbounded`); such a step is a sensing
    outage.
    """
    if crb < 0:
        raise ValueError("CRB must be non-negative")
    shape = covariance_shape(spec, plant_dim)
    if np.isinf(crb):
        return np.where(shape > 0, np.inf, 0.0)
    return crb * shape


def is_unbounded(sigma) -> bool:
    return not bool(np.all(np.isfinite(sigma)))


# -- control -----------------------------------------------------------------

def control_law(q_hat, gains: ControllerGain) -> np.ndarray:
    q_hat = np.asarray(q_hat, dtype=float).reshape(-1)
    if q_hat.size != gains.G_fb.shape[1]:
        raise ValueError(f"state estimate has {q_hat.size} entries, gain expects {gains.G_fb.shape[1]}")
    return -gains.G_fb @ q_hat


def step_dynamics(q, u, alpha: int, noise_sample, plant: PlantModel) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    n = np.asarray(noise_sample, dtype=float).reshape(-1)
    if q.size != plant.dim or n.size != plant.dim or u.size != plant.input_dim:
        raise ValueError("dimension mismatch between state, input, noise and plant")
    if alpha not in (0, 1):
        raise ValueError("alpha must be 0 or 1")
    return plant.A @ q + alpha * (plant.B @ u) + n


def lyapunov_value(q, gains: ControllerGain) -> float:
    q = np.asarray(q, dtype=float).reshape(-1)
    return float(q @ gains.P_lyap @ q)


def _trace_product(C, sigma):
    # tr(C sigma) for symmetric sigma, with 0 * inf taken as 0
    with np.errstate(invalid="ignore"):
        prod = np.where(C == 0, 0.0, C * sigma)
    return float(prod.sum())


def expected_drift(q, p: float, sigma, plant: PlantModel, gains: ControllerGain) -> float:
    """One-step conditional expectation E[V(q+) | q].

    Assumes packet loss, estimation error and process noise are mutually
    independent and zero-mean, so all cross terms vanish.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    sigma = np.asarray(sigma, dtype=float)
    if not is_unbounded(sigma):
        _check_psd(sigma, "sigma")
    gains.check(plant)
    q = np.asarray(q, dtype=float).reshape(-1)
    A, B, G, P = plant.A, plant.B, gains.G_fb, gains.P_lyap
    BG = B @ G
    closed = A - BG
    v_closed = q @ closed.T @ P @ closed @ q
    v_open = q @ A.T @ P @ A @ q
    sensing = _trace_product(BG.T @ P @ BG, sigma) if p > 0 else 0.0
    return float(p * v_closed + (1 - p) * v_open + p * sensing + np.trace(P @ plant.Q_n))


class DriftResult(NamedTuple):
    satisfied: bool
    margin: float
    """``eta V(q) - E[V(q+)]``; negative means violated by ``-margin``."""
    noise_floor_bound: bool
    """Violated only because V(q) = 0 and the process noise floor is positive."""


def drift_certificate(q, p, sigma, plant: PlantModel, gains: ControllerGain) -> DriftResult:
    v = lyapunov_value(q, gains)
    margin = gains.eta * v - expected_drift(q, p, sigma, plant, gains)
    floor = v == 0.0 and margin < 0
    return DriftResult(bool(margin >= 0), float(margin), bool(floor))


def topological_entropy(A) -> float:
    """Sum of log2|lambda| over eigenvalues strictly outside the unit circle."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    mags = np.abs(np.linalg.eigvals(A))
    unstable = mags[mags > 1.0 + _UNIT_CIRCLE_TOL]
    return float(np.sum(np.log2(unstable)))


def critical_sinr(entropy_bits: float, bandwidth: float) -> float:
    """Minimum SINR whose rate covers the entropy production, ``2**(H/B) - 1``."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if entropy_bits < 0:
        raise ValueError("entropy must be non-negative")
    return float(2.0 ** (entropy_bits / bandwidth) - 1.0)


# -- simulation --------------------------------------------------------------

def _sqrt_psd(m):
    vals, vecs = np.linalg.eigh(m)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _schedule(value, horizon, name):
    if callable(value):
        arr = np.array([value(t) for t in range(horizon)], dtype=float)
    else:
        arr = np.broadcast_to(np.asarray(value, dtype=float), (horizon,)).copy()
    if arr.shape != (horizon,):
        raise ValueError(f"{name} schedule must have one entry per step")
    return arr


TRAJECTORY_HEADER = ("t", "mean_norm", "p05_norm", "p95_norm", "mean_V", "packet_rate", "diverged_frac")


@dataclass
class TrajectoryStats:
    """Per-step statistics across replicates, t = 0..horizon."""

    t: np.ndarray
    mean_norm: np.ndarray
    p05_norm: np.ndarray
    p95_norm: np.ndarray
    mean_V: np.ndarray
    packet_rate: np.ndarray
    """Delivered fraction among live replicates at step t (0 in the t = 0 row)."""
    diverged_frac: np.ndarray
    overall_packet_rate: float
    packet_prob: np.ndarray
    outage_steps: int

    @property
    def final_diverged_frac(self) -> float:
        return float(self.diverged_frac[-1])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_HEADER)
            for i in range(self.t.size):
                writer.writerow([int(self.t[i])] + [repr(float(col[i])) for col in (
                    self.mean_norm, self.p05_norm, self.p95_norm, self.mean_V,
                    self.packet_rate, self.diverged_frac)])


def simulate_closed_loop(plant: PlantModel, gains: ControllerGain, link: LinkReliability,
                         sensing: SensingSpec, sinr_schedule, beam_gain_schedule,
                         horizon: int, replicates: int, seed: int, q0=None,
                         divergence_ceiling: float = 1e6) -> TrajectoryStats:
    """Monte Carlo of the packet-loss / sensing-error closed loop.

    ``sinr_schedule`` and ``beam_gain_schedule`` are scalars, length-horizon
    arrays or callables of the step index. Each replicate draws all of its
    randomness from its own stream seeded by ``(seed, replicate)``.

    A replicate whose state norm exceeds ``divergence_ceiling`` is marked
    diverged and frozen. A step with unbounded sensing covariance reuses the
    previous estimate to compute the control.
    """
    if horizon < 1 or replicates < 1:
        raise ValueError("horizon and replicates must be >= 1")
    gains.check(plant)
    d = plant.dim
    sinr_t = _schedule(sinr_schedule, horizon, "SINR")
    gain_t = _schedule(beam_gain_schedule, horizon, "beam gain")
    p_t = np.asarray(packet_success_prob(sinr_t, link), dtype=float).reshape(horizon)
    sigmas = [sensing_error_cov(crb_angle(g, sensing), sensing, d) for g in gain_t]
    outage = np.array([is_unbounded(s) for s in sigmas])
    sig_roots = [np.zeros((d, d)) if o else _sqrt_psd(s) for s, o in zip(sigmas, outage)]
    noise_root = _sqrt_psd(plant.Q_n)

    # per-replicate streams: uniforms for alpha, normals for e and n
    U = np.empty((replicates, horizon))
    Z_e = np.empty((replicates, horizon, d))
    Z_n = np.empty((replicates, horizon, d))
    for r in range(replicates):
        rng = np.random.default_rng([seed, r])
        U[r] = rng.random(horizon)
        Z_e[r] = rng.standard_normal((horizon, d))
        Z_n[r] = rng.standard_normal((horizon, d))

    q = np.zeros((replicates, d)) if q0 is None else np.tile(np.asarray(q0, dtype=float).reshape(d), (replicates, 1))
    q_hat_prev = q.copy()
    alive = np.ones(replicates, dtype=bool)
    A, B, G, P = plant.A, plant.B, gains.G_fb, gains.P_lyap

    norms = np.empty((horizon + 1, replicates))
    vals = np.empty((horizon + 1, replicates))
    div = np.zeros(horizon + 1)
    rate = np.zeros(horizon + 1)
    norms[0] = np.linalg.norm(q, axis=1)
    vals[0] = np.einsum("ri,ij,rj->r", q, P, q)
    delivered = 0
    attempted = 0
    for t in range(horizon):
        if outage[t]:
            q_hat = q_hat_prev
        else:
            q_hat = q - Z_e[:, t] @ sig_roots[t].T
        u = -q_hat @ G.T
        alpha = (U[:, t] < p_t[t]).astype(float)
        q_next = q @ A.T + alpha[:, None] * (u @ B.T) + Z_n[:, t] @ noise_root.T
        q = np.where(alive[:, None], q_next, q)
        q_hat_prev = np.where(alive[:, None], q_hat, q_hat_prev)
        delivered += int(alpha[alive].sum())
        attempted += int(alive.sum())
        rate[t + 1] = alpha[alive].mean() if alive.any() else 0.0
        n = np.linalg.norm(q, axis=1)
        alive &= n <= divergence_ceiling
        norms[t + 1] = n
        vals[t + 1] = np.einsum("ri,ij,rj->r", q, P, q)
        div[t + 1] = 1.0 - alive.mean()

    return TrajectoryStats(
        t=np.arange(horizon + 1),
        mean_norm=norms.mean(axis=1),
        p05_norm=np.quantile(norms, 0.05, axis=1),
        p95_norm=np.quantile(norms, 0.95, axis=1),
        mean_V=vals.mean(axis=1),
        packet_rate=rate,
        diverged_frac=div,
        overall_packet_rate=delivered / attempted,
        packet_prob=p_t,
        outage_steps=int(outage.sum()),
    )
