"""
Survival of a UAV control loop over a lossy, sensed link
========================================================

A scalar unstable plant (one bit of entropy per step) is stabilized over a
link whose packet success follows a sigmoid in SINR. Below the critical
SINR the loop loses; above it the loop holds.
"""

import numpy as np

from lawnsim.beamforming import ArrayGeometry, P1Problem, solve_p1
from lawnsim.sensing_control import (ControllerGain, LinkReliability, PlantModel, SensingSpec,
                                     critical_sinr, simulate_closed_loop, topological_entropy)

plant = PlantModel([[2.0]], [[1.0]], [[0.01]])
gains = ControllerGain([[1.5]], [[1.0]], eta=0.5)
H = topological_entropy(plant.A)
gamma_c = critical_sinr(H, bandwidth=1.0)
print(f"H(A) = {H} bit/step, critical SINR = {gamma_c}")

link = LinkReliability(steepness_a=10.0, gamma_th=gamma_c)
sensing = SensingSpec(noise_var=1.0, snapshots=16, rx_antennas=4, channel_gain=1.0, slant_range=100.0)

###############################################################################
# Sweep the operating SINR across the threshold. 500 replicates, 200 steps.

for factor in (0.01, 0.25, 0.5, 1.0, 1.5, 2.0, 4.0):
    stats = simulate_closed_loop(plant, gains, link, sensing, factor * gamma_c, 1e3,
                                 horizon=200, replicates=500, seed=3, q0=[1.0])
    print(f"SINR = {factor:>5} x crit   packet rate {stats.overall_packet_rate:.3f}   "
          f"diverged {stats.final_diverged_frac:.3f}")

###############################################################################
# Minimum transmit power that meets both the SINR floor and the one-step
# Lyapunov decrease at q = 1. The solver mixes the steering direction with
# its derivative; kappa > 0 buys sensing accuracy.

problem = P1Problem(theta=0.3, array=ArrayGeometry(4), plant=plant, gains=gains, link=link,
                    sensing=sensing, gamma_critical=gamma_c, eta=0.5, q_current=np.array([1.0]),
                    noise_var=1.0)
sol = solve_p1(problem)
print(f"P1: power {sol.power:.4f}, kappa {sol.kappa:.2f}, binding {sol.binding}, "
      f"SINR {sol.report.sinr:.3f}, drift margin {sol.report.drift_margin:.4f}")
