"""
Layered air corridors and admission control
===========================================

Build a three-layer corridor plan over a 1 km block, carve out a no-fly
box, and push a burst of flight requests through the admission controller.
"""

import numpy as np

from lawnsim.airspace import discretize
from lawnsim.channel import BeamPlan, db_to_linear
from lawnsim.corridor import (AdmissionController, Box, FlightRequest, Geofence, build_layered_plan,
                              corridor_beam_budget)

grid = discretize((0, 0, 0), (1000, 1000, 300), (100, 100, 100))
beams = BeamPlan.round_robin(grid.n_cells, 4)
hospital = Geofence("hospital", Box((400, 400, 0), (600, 600, 100)))
plan = build_layered_plan(grid, [(0, 100), (100, 200), (200, 300)], [hospital])

# The no-fly box splits the bottom layer into several directional corridors.
rho = float(db_to_linear(10.0))
budgets = {c.id: corridor_beam_budget(c, beams, grid, rho, r_min=1.0) for c in plan.corridors}
for c in plan.corridors:
    print(f"{c.id:<28} {c.layer_role.value:<14} budget {budgets[c.id].max_concurrent}")

###############################################################################
# Twelve flights along the top layer. Each corridor can carry as many
# concurrent flights as its beams allow at 1 bit/s/Hz, so the tail of the
# burst is turned away for capacity.

ctl = AdmissionController(plan, budgets, grid)
rng = np.random.default_rng(0)
for i in range(12):
    y = rng.uniform(50, 950)
    res = ctl.request(FlightRequest(f"top{i}", (20, y, 250), (980, 1000 - y, 250), 1.0, float(i)))
    print(f"top{i:<3} {res.decision:<9} {res.reason}")

# A flight that wants to land inside the hospital box is refused outright.
res = ctl.request(FlightRequest("medevac", (50, 50, 50), (500, 500, 50), 1.0, 20.0))
print("medevac", res.decision, res.reason, res.detail)

# Releasing a flight frees its slot for the next request.
ctl.release("top0", 21.0)
res = ctl.request(FlightRequest("late", (20, 500, 250), (980, 500, 250), 1.0, 22.0))
print("late", res.decision)
print(ctl.occupancy())
