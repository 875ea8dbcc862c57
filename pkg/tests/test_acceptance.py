"""End-to-end acceptance checks, one test per criterion.

Each test records a pass/fail line through the ``criterion`` fixture before
asserting, so the terminal summary lists every criterion even on failure.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from lawnsim.airspace import discretize
from lawnsim.beamforming import (ArrayGeometry, P1Problem, matched_filter_solution, sensing_gain, solve_p1,
                                 steering_derivative, steering_vector)
from lawnsim.channel import (BeamPlan, Regime, balanced_occupancy, classify_regime, critical_capacity,
                             db_to_linear, per_uav_se_curve, qos_capacity_bound, sinr, spectral_efficiency)
from lawnsim.corridor import (AdmissionController, Box, FlightRequest, Geofence, build_layered_plan,
                              check_geofence, corridor_beam_budget)
from lawnsim.harness.cli import main as cli_main
from lawnsim.sensing_control import (ControllerGain, LinkReliability, PlantModel, SensingSpec, crb_angle,
                                     critical_sinr, expected_drift, simulate_closed_loop, topological_entropy)

from p1_oracle import brute_force_power, scalar_instance

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# 1 ---------------------------------------------------------------------------

def test_c1_capacity_curve_shape(criterion):
    L = 16
    t0 = time.perf_counter()
    curves = {db: [r.mean_se_bits for r in per_uav_se_curve(range(1, 161), L, [float(db_to_linear(db))])]
              for db in (0.0, 10.0, 20.0)}
    elapsed = time.perf_counter() - t0
    plateau = all(se == math.log2(1 + float(db_to_linear(db))) for db, c in curves.items() for se in c[:L])
    decreasing = all(all(b < a for a, b in zip(c[L - 1:], c[L:])) for c in curves.values())
    ends = [c[-1] for c in curves.values()]
    spread = max(ends) - min(ends)
    ok = plateau and decreasing and spread < 0.06 and elapsed < 1.0
    criterion(1, ok, f"plateau={plateau} decreasing={decreasing} spread@160={spread:.4f} t={elapsed:.3f}s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c2_regime_boundaries(criterion):
    rng = np.random.default_rng(2024)
    bad = []
    for _ in range(50):
        L = int(rng.integers(1, 65))
        rho = float(10 ** rng.uniform(-2, 3))
        c_crit = critical_capacity(L, rho)
        got = (classify_regime(L, L, rho), classify_regime(c_crit, L, rho), classify_regime(c_crit + 1, L, rho))
        if got != (Regime.NOISE_MASKED, Regime.LINEAR_TRADEOFF, Regime.SATURATION):
            bad.append((L, rho, got))
    criterion(2, not bad, f"{50 - len(bad)}/50 pairs exact")
    assert not bad


# 3 ---------------------------------------------------------------------------

def _balanced_se(K, L, rho):
    return spectral_efficiency(sinr(balanced_occupancy(K, L), rho))


def test_c3_qos_bound(criterion):
    rng = np.random.default_rng(7)
    n_multiple = n_direct = 0
    fails = []
    for i in range(100):
        L = int(rng.integers(1, 33))
        rho = float(10 ** rng.uniform(-1, 3))
        r_min = float(rng.uniform(0.05, 0.95) * math.log2(1 + rho))
        bound = qos_capacity_bound(L, rho, r_min)
        assert bound.feasible
        K = int(math.floor(bound.value))
        # largest load that keeps occupancy uniform; equals floor(bound) when that is a multiple of L
        K_mult = L * (K // L)
        if K % L == 0:
            n_direct += 1
        if K_mult >= L:
            n_multiple += 1
            if _balanced_se(K_mult, L, rho).min() < r_min - 0.02:
                fails.append((i, "at bound"))
        K_over = int(math.ceil(bound.value * 1.1))
        if _balanced_se(K_over, L, rho).min() >= r_min:
            fails.append((i, "above bound"))
    detail = (f"{n_multiple} uniform-load checks ({n_direct} with floor(bound) itself a multiple of L), "
              f"100 overload checks, {len(fails)} failures")
    criterion(3, not fails, detail)
    assert not fails, fails


# 4 ---------------------------------------------------------------------------

def _random_instance(rng, d):
    A = rng.normal(size=(d, d))
    B = rng.normal(size=(d, 1 if d == 1 else 2))
    M = rng.normal(size=(d, d))
    G = rng.normal(scale=0.5, size=(B.shape[1], d))
    R = rng.normal(size=(d, d))
    S = rng.normal(size=(d, d))
    plant = PlantModel(A, B, 0.1 * M @ M.T)
    gains = ControllerGain(G, R @ R.T + d * np.eye(d), 0.5)
    return plant, gains, 0.2 * S @ S.T, rng.normal(size=d), float(rng.uniform(0.05, 0.95))


def _mc_drift(q, p, sigma, plant, gains, n, rng):
    d = plant.dim
    alpha = rng.random(n) < p
    e = rng.multivariate_normal(np.zeros(d), sigma, size=n, method="eigh")
    noise = rng.multivariate_normal(np.zeros(d), plant.Q_n, size=n, method="eigh")
    u = -(q - e) @ gains.G_fb.T
    nxt = q @ plant.A.T + alpha[:, None] * (u @ plant.B.T) + noise
    v = np.einsum("ni,ij,nj->n", nxt, gains.P_lyap, nxt)
    return v.mean(), v.std(ddof=1) / math.sqrt(n)


def test_c4_drift_matches_monte_carlo(criterion):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = 0.0
    misses = 0
    for d in (1, 2):
        for _ in range(20):
            plant, gains, sigma, q, p = _random_instance(rng, d)
            mean, se = _mc_drift(q, p, sigma, plant, gains, 100_000, rng)
            z = abs(expected_drift(q, p, sigma, plant, gains) - mean) / se
            worst = max(worst, z)
            misses += z > 3
    elapsed = time.perf_counter() - t0
    ok = misses == 0 and elapsed < 30
    criterion(4, ok, f"40 instances, worst |z|={worst:.2f}, misses={misses}, t={elapsed:.1f}s")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c5_entropy_survival_threshold(criterion):
    plant = PlantModel([[2.0]], [[1.0]], [[0.01]])
    gains = ControllerGain([[1.5]], [[1.0]], 0.5)
    gamma_c = critical_sinr(topological_entropy(plant.A), 1.0)
    link = LinkReliability(10.0, gamma_c)
    sensing = SensingSpec(1.0, 16, 4, 1.0, 100.0)
    frac = {}
    for label, s in (("low", gamma_c / 100), ("high", 4 * gamma_c)):
        stats = simulate_closed_loop(plant, gains, link, sensing, s, 1e3, horizon=200, replicates=500,
                                     seed=2024, q0=[1.0])
        frac[label] = stats.final_diverged_frac
    ok = gamma_c == 1.0 and frac["low"] > 0.95 and frac["high"] < 0.05
    criterion(5, ok, f"gamma_crit={gamma_c}, diverged {frac['low']:.3f} at /100, {frac['high']:.3f} at x4")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_c6_p1_vs_brute_force(criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    rel = []
    for _ in range(10):
        pb = scalar_instance(rng, n_t=4)
        sol = solve_p1(pb)
        bf = brute_force_power(pb)
        rel.append(abs(sol.power - bf) / bf if sol.feasible else math.inf)
    # drift slack: A = G = 0.5 keeps the drift at a quarter of V whatever the packet rate
    slack = P1Problem(theta=0.35, array=ArrayGeometry(4), plant=PlantModel([[0.5]], [[1.0]], [[0.0]]),
                      gains=ControllerGain([[0.5]], [[1.0]], 0.5), link=LinkReliability(5.0, 3.0),
                      sensing=SensingSpec(1.0, 1, 1, 1.0, 1e-3), gamma_critical=3.0, eta=0.5,
                      q_current=[1.0], noise_var=1.0)
    sol = solve_p1(slack)
    w_mf = matched_filter_solution(slack)
    mf_err = float(np.linalg.norm(sol.w - w_mf) / np.linalg.norm(w_mf))
    closed = sol.kappa == 0.0 and mf_err < 2e-6
    elapsed = time.perf_counter() - t0
    ok = max(rel) < 0.01 and closed and elapsed < 60
    criterion(6, ok, f"max rel power gap {max(rel):.2e}, closed-form rel err {mf_err:.1e}, t={elapsed:.1f}s")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_c7_crb_checks(criterion):
    rng = np.random.default_rng(77)
    arr = ArrayGeometry(8)
    h = 1e-6
    fd_err = 0.0
    for theta in rng.uniform(-1.4, 1.4, 100):
        fd = (steering_vector(theta + h, arr) - steering_vector(theta - h, arr)) / (2 * h)
        exact = steering_derivative(theta, arr)
        fd_err = max(fd_err, float(np.linalg.norm(fd - exact) / np.linalg.norm(exact)))
    spec = SensingSpec(0.7, 8, 4, 0.3 + 0.4j, 1.0)
    scale_err = 0.0
    for _ in range(100):
        w = rng.normal(size=8) + 1j * rng.normal(size=8)
        c = float(10 ** rng.uniform(-3, 3))
        theta = float(rng.uniform(-1.4, 1.4))
        base = crb_angle(sensing_gain(w, theta), spec)
        scaled = crb_angle(sensing_gain(c * w, theta), spec)
        scale_err = max(scale_err, abs(scaled * c * c - base) / base)
    ok = fd_err < 1e-6 and scale_err <= 1e-12
    criterion(7, ok, f"derivative FD max rel err {fd_err:.1e}, CRB power-scaling rel err {scale_err:.1e}")
    assert ok


# 8 ---------------------------------------------------------------------------

def _segment_hits_box(p0, p1, box, n=400):
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = p0 + t * (p1 - p0)
    return bool(np.any(np.all((pts >= box.lo) & (pts <= box.hi), axis=1)))


def test_c8_admission_safety(criterion):
    grid = discretize((0, 0, 0), (1000, 1000, 300), (100, 100, 100))
    beams = BeamPlan.round_robin(grid.n_cells, 4)
    fences = [Geofence("hospital", Box((400, 400, 0), (600, 600, 100))),
              Geofence("stadium", Box((100, 700, 100), (300, 900, 200)))]
    plan = build_layered_plan(grid, [(0, 100), (100, 200), (200, 300)], fences)
    rho = float(db_to_linear(10.0))
    budgets = {c.id: corridor_beam_budget(c, beams, grid, rho, 1.0) for c in plan.corridors}
    ctl = AdmissionController(plan, budgets, grid)
    rng = np.random.default_rng(8)

    live: dict[str, tuple[str, ...]] = {}
    counts = {c.id: 0 for c in plan.corridors}
    over_budget = mismatches = fence_hits = 0
    stats = {"Admitted": 0, "capacity": 0, "geofence": 0, "no-route": 0, "release": 0}
    for op in range(10_000):
        if live and rng.random() < 0.45:
            rid = sorted(live)[int(rng.integers(len(live)))]
            ctl.release(rid, float(op))
            for cid in live.pop(rid):
                counts[cid] -= 1
            stats["release"] += 1
        else:
            rid = f"r{op}"
            req = FlightRequest(rid, tuple(rng.uniform(0, 1, 3) * (1000, 1000, 300)),
                                tuple(rng.uniform(0, 1, 3) * (1000, 1000, 300)),
                                float(rng.choice([1.0, 1.5, 2.0])), float(op))
            res = ctl.request(req)
            stats[res.reason or res.decision] += 1
            if res.decision == "Admitted":
                live[rid] = res.corridor_path
                for cid in res.corridor_path:
                    counts[cid] += 1
                    if counts[cid] > budgets[cid].limit_for(req.r_min):
                        over_budget += 1
                wps = np.asarray(res.waypoints, dtype=float)
                exact = check_geofence(res.waypoints, plan.nofly, step=None)
                sampled = any(_segment_hits_box(a, b, g.volume) for a, b in zip(wps, wps[1:]) for g in plan.nofly)
                fence_hits += bool(exact) or sampled
        occ = ctl.occupancy()
        mismatches += occ != counts
        over_budget += sum(occ[cid] > budgets[cid].max_concurrent for cid in occ)
    ok = over_budget == 0 and mismatches == 0 and fence_hits == 0 and stats["capacity"] > 0
    criterion(8, ok, f"ops={stats}, over_budget={over_budget}, oracle_mismatch={mismatches}, "
                     f"fence_hits={fence_hits}")
    assert ok


# 9 ---------------------------------------------------------------------------

def _snapshot(path: Path) -> dict[str, bytes]:
    return {f.name: f.read_bytes() for f in sorted(path.iterdir())}


def test_c9_cli_determinism(criterion, tmp_path, capsys):
    jobs = [("capacity-sweep", "capacity.toml"), ("control-sim", "control.toml"), ("corridor-demo", "corridor.toml")]
    diffs = []
    for cmd, cfg in jobs:
        runs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{cmd}-{rep}"
            code = cli_main([cmd, "--config", str(CONFIGS / cfg), "--out", str(out), "--seed", "2024"])
            first = capsys.readouterr().out
            rcode = cli_main(["report", str(out)])
            second = capsys.readouterr().out
            runs.append((code, rcode, first.replace(str(out), "<out>"), second, _snapshot(out)))
        if runs[0] != runs[1] or runs[0][0] != 0:
            diffs.append(cmd)
    ok = not diffs
    criterion(9, ok, f"{len(jobs)} commands plus report rerun, differing: {diffs or 'none'}")
    assert ok
