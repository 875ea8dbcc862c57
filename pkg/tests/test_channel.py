import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from lawnsim.airspace import TrafficState
from lawnsim.channel import (BeamPlan, Regime, balanced_occupancy, balanced_state, beam_occupancy,
                             classify_regime, critical_capacity, db_to_linear, per_uav_se_curve,
                             qos_capacity_bound, saturation_capacity_approx, sinr, spectral_efficiency,
                             write_curve_csv)


def test_beam_occupancy_examples():
    plan = BeamPlan.round_robin(8, 4)
    assert beam_occupancy(TrafficState([3], 8), plan).tolist() == [1]
    # cells 1 and 5 are both on beam 1
    assert beam_occupancy(TrafficState([1, 5], 8), plan).tolist() == [2, 2]
    assert beam_occupancy(TrafficState([0, 1, 2], 8), plan).tolist() == [1, 1, 1]
    assert beam_occupancy(TrafficState([], 8), plan).size == 0


def test_beam_occupancy_brute_force():
    rng = np.random.default_rng(3)
    plan = BeamPlan(5, rng.integers(0, 5, size=40))
    cells = rng.integers(0, 40, size=60)
    mu = beam_occupancy(TrafficState(cells, 40), plan)
    beams = [plan.cell_to_beam[c] for c in cells]
    assert mu.tolist() == [sum(b == bk for b in beams) for bk in beams]


def test_beam_plan_validation():
    with pytest.raises(ValueError):
        BeamPlan(2, [0, 2])


def test_sinr_examples():
    assert sinr(1, 1.0) == 1.0
    assert sinr(2, 1.0) == 0.5
    assert sinr(10, 1e12) == pytest.approx(1 / 9, rel=1e-10)
    assert sinr(10, np.inf) == pytest.approx(1 / 9)
    with pytest.raises(ValueError):
        sinr(0, 1.0)


def test_spectral_efficiency_examples():
    assert spectral_efficiency(0.0) == 0.0
    assert spectral_efficiency(1.0) == 1.0
    assert spectral_efficiency(3.0) == 2.0
    with pytest.raises(ValueError):
        spectral_efficiency(-0.1)


def test_critical_capacity_examples():
    assert critical_capacity(16, 1.0) == 32.0
    assert critical_capacity(16, np.inf) == 16.0
    assert critical_capacity(1, 0.5) == 3.0


def test_regime_boundaries_closed_sides():
    assert classify_regime(16, 16, 1.0) is Regime.NOISE_MASKED
    assert classify_regime(32, 16, 1.0) is Regime.LINEAR_TRADEOFF
    assert classify_regime(32.5, 16, 1.0) is Regime.SATURATION
    assert classify_regime(100, 16, 1.0) is Regime.SATURATION
    assert classify_regime(0, 16, 1.0) is Regime.NOISE_MASKED


def test_saturation_approx_examples():
    assert saturation_capacity_approx(32, 16) == 1.0
    assert saturation_capacity_approx(160, 16) == pytest.approx(math.log2(10 / 9))
    assert saturation_capacity_approx(160, 16) == pytest.approx(0.152, abs=5e-4)
    assert saturation_capacity_approx(1e12, 16) < 1e-9
    with pytest.raises(ValueError):
        saturation_capacity_approx(16, 16)


@pytest.mark.parametrize("rho_db,ratios", [(10.0, range(4, 11)), (20.0, range(4, 11)), (0.0, range(9, 16))])
def test_saturation_approx_tracks_balanced(rho_db, ratios):
    # at 0 dB the mu/(mu-1) approximation needs mu >= 9 to be within 0.02 bits
    L, rho = 16, float(db_to_linear(rho_db))
    for m in ratios:
        row = per_uav_se_curve([m * L], L, [rho])[0]
        assert abs(row.mean_se_bits - saturation_capacity_approx(m * L, L)) <= 0.02


def test_qos_bound_examples():
    assert qos_capacity_bound(16, np.inf, 1.0).value == 32.0
    assert qos_capacity_bound(16, 1.0, 1.0).value == 16.0
    b = qos_capacity_bound(4, 0.2, 3.0)
    assert b.raw < 0 and b.value == 0.0 and not b.feasible
    with pytest.raises(ValueError):
        qos_capacity_bound(16, 1.0, 0.0)


def test_qos_bound_identity_symbolic():
    L, rho = sympy.symbols("L rho", positive=True)
    r = sympy.log(1 + rho, 2)
    bound = L * (1 + 1 / (2 ** r - 1) - 1 / rho)
    assert sympy.simplify(bound - L) == 0
    for L_, rho_ in [(16, 1.0), (8, 7.3), (3, 0.25)]:
        assert qos_capacity_bound(L_, rho_, math.log2(1 + rho_)).value == pytest.approx(L_, rel=1e-12)


def test_qos_bound_below_L_reported_as_is():
    b = qos_capacity_bound(16, 1.0, 1.5)
    assert 0 < b.value < 16 and not b.feasible


def test_balanced_occupancy_levels():
    mu = balanced_occupancy(37, 16)
    assert set(mu.tolist()) == {2, 3}
    assert mu.sum() == sum(c * c for c in np.bincount(np.arange(37) % 16))


def test_balanced_state_matches_occupancy():
    plan = BeamPlan.round_robin(300, 16)
    state = balanced_state(40, plan)
    assert len(set(state.assignments.tolist())) == 40
    assert sorted(beam_occupancy(state, plan).tolist()) == sorted(balanced_occupancy(40, 16).tolist())


def test_curve_examples():
    L = 16
    for rho in (1.0, 10.0, 100.0):
        rows = per_uav_se_curve(range(1, L + 1), L, [rho])
        assert all(r.mean_se_bits == math.log2(1 + rho) for r in rows)
    assert per_uav_se_curve([2 * L], L, [1e15])[0].mean_se_bits == pytest.approx(1.0, abs=1e-12)
    ends = [per_uav_se_curve([10 * L], L, [float(db_to_linear(db))])[0].mean_se_bits for db in (0, 10, 20)]
    assert max(ends) - min(ends) < 0.06


def test_curve_rejects_empty_range():
    with pytest.raises(ValueError):
        per_uav_se_curve([], 16, [1.0])


def test_curve_balanced_exact_values():
    # mu-grouped hand evaluation at K = 20, L = 16: 12 UAVs alone, 8 paired
    rho = 10.0
    expected = (12 * math.log2(11) + 8 * math.log2(1 + 10 / 11)) / 20
    assert per_uav_se_curve([20], 16, [rho])[0].mean_se_bits == pytest.approx(expected, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 32), st.floats(0.01, 1e4))
def test_balanced_monotone_and_capped(L, rho):
    rows = per_uav_se_curve(range(1, 6 * L), L, [rho])
    se = [r.mean_se_bits for r in rows]
    assert all(b <= a for a, b in zip(se, se[1:]))
    assert all(s <= math.log2(1 + rho) for s in se)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 200), st.floats(1e-3, 1e6))
def test_sinr_ceiling(mu, rho):
    g = sinr(mu, rho)
    assert g <= rho
    assert spectral_efficiency(g) <= math.log2(1 + rho) + 1e-12


def test_uniform_random_matches_binomial_expectation():
    L, K, reps = 16, 160, 10_000
    for rho in (1.0, 10.0, 100.0):
        row = per_uav_se_curve([K], L, [rho], "UniformRandom", reps, seed=17)[0]
        # oracle: a tagged UAV shares its beam with Binomial(K-1, 1/L) others
        j = np.arange(K)
        exact = float(np.sum(binom.pmf(j, K - 1, 1 / L) * np.log2(1 + rho / (j * rho + 1))))
        assert abs(row.mean_se_bits - exact) <= 3 * row.stderr_se_bits
        balanced = per_uav_se_curve([K], L, [rho])[0].mean_se_bits
        assert abs(row.mean_se_bits - balanced) < 0.002


def test_uniform_random_is_reproducible():
    a = per_uav_se_curve([20, 40], 8, [1.0, 10.0], "UniformRandom", 50, seed=3)
    b = per_uav_se_curve([40], 8, [10.0], "UniformRandom", 50, seed=3)
    assert a[-1] == b[0]


def test_curve_csv_header(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(per_uav_se_curve([1, 40], 16, [1.0]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "K,rho_db,policy,mean_se_bits,stderr_se_bits,regime"
    assert lines[2].endswith("Saturation")
