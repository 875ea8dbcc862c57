"""Experiment runners: capacity sweep, closed-loop control study, corridor admission demo."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import airspace, beamforming, channel, corridor, sensing_control as sc
from .config import ScenarioConfig

SUMMARY_FILE = "summary.json"


@dataclass
class RunArtifacts:
    output_dir: Path
    files: list[Path]
    summary: dict
    config_hash: str
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _finish(cfg: ScenarioConfig, command: str, out: Path, files: list[Path], summary: dict,
            checks: dict[str, bool]) -> RunArtifacts:
    record = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "files": [f.name for f in files],
        "checks": checks,
        "summary": summary,
    }
    path = out / SUMMARY_FILE
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return RunArtifacts(out, files + [path], summary, record["config_hash"], checks)


def _out_dir(cfg: ScenarioConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- capacity ----------------------------------------------------------------

def run_capacity_sweep(cfg: ScenarioConfig) -> RunArtifacts:
    cap = cfg.capacity
    L = cfg.beams.num_beams
    k_max = cap.k_max if cap.k_max is not None else 10 * L
    ks = range(cap.k_min, k_max + 1)
    rhos = [float(channel.db_to_linear(db)) for db in cap.rho_db]
    out = _out_dir(cfg)

    rows = []
    for policy in cap.policies:
        rows += channel.per_uav_se_curve(ks, L, rhos, policy, cfg.replicates, cfg.seed)
    curve_path = out / "capacity_curve.csv"
    channel.write_curve_csv(rows, curve_path)

    bounds = []
    for db, rho in zip(cap.rho_db, rhos):
        qos = channel.qos_capacity_bound(L, rho, cap.r_min)
        bounds.append({"rho_db": db, "L": L, "C_crit": channel.critical_capacity(L, rho),
                       "r_min": cap.r_min, "qos_bound": qos.value, "qos_feasible": qos.feasible})
    boundary_path = _write_csv(
        out / "regime_boundaries.csv",
        ("rho_db", "L", "noise_masked_edge", "C_crit", "r_min", "qos_bound", "qos_feasible"),
        [[_fmt(b["rho_db"]), L, L, _fmt(b["C_crit"]), _fmt(b["r_min"]), _fmt(b["qos_bound"]),
          int(b["qos_feasible"])] for b in bounds],
    )

    checks = {}
    balanced = [r for r in rows if r.policy == "Balanced"]
    if balanced:
        plateau, decreasing = True, True
        for db, rho in zip(cap.rho_db, rhos):
            curve = [r for r in balanced if r.rho_db == float(channel.linear_to_db(rho))]
            ceiling = math.log2(1 + rho)
            plateau &= all(r.mean_se_bits == ceiling for r in curve if r.K <= L)
            tail = [r.mean_se_bits for r in curve if r.K >= L]
            decreasing &= all(b < a for a, b in zip(tail, tail[1:]))
        checks["noise_masked_plateau"] = bool(plateau)
        checks["strictly_decreasing_beyond_L"] = bool(decreasing)
    return _finish(cfg, "capacity-sweep", out, [curve_path, boundary_path], {"boundaries": bounds}, checks)


# -- control -----------------------------------------------------------------

def control_models(cfg: ScenarioConfig):
    c = cfg.control
    plant = sc.PlantModel(np.array(c.A), np.array(c.B), np.array(c.Q_n))
    gains = sc.ControllerGain(np.array(c.G_fb), np.array(c.P_lyap), c.eta)
    gains.check(plant)
    link = sc.LinkReliability(c.link.steepness, float(channel.db_to_linear(c.link.gamma_th_db)))
    s = c.sensing
    sensing = sc.SensingSpec(s.noise_var, s.snapshots, s.rx_antennas, s.channel_gain, s.slant_range,
                             tuple(s.position_axes), tuple(s.velocity_axes), s.velocity_factor, s.dt)
    return plant, gains, link, sensing


def _sub_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_control_experiment(cfg: ScenarioConfig) -> RunArtifacts:
    c = cfg.control
    plant, gains, link, sensing = control_models(cfg)
    if len(c.q0) != plant.dim:
        raise ValueError(f"control.q0 has {len(c.q0)} entries, plant dimension is {plant.dim}")
    entropy = sc.topological_entropy(plant.A)
    gamma_crit = sc.critical_sinr(entropy, c.bandwidth)
    out = _out_dir(cfg)
    files = []
    checks = {}

    points = [(f"sinr_{i}", float(channel.db_to_linear(db)), c.sensing.beam_gain) for i, db in enumerate(c.sinr_db)]
    if gamma_crit > 0:
        points += [(f"factor_{f!r}", f * gamma_crit, c.sensing.beam_gain) for f in c.sinr_factors]

    p1_summary = None
    if c.solve_p1:
        array = beamforming.ArrayGeometry(c.array.num_elements, c.array.spacing)
        problem = beamforming.P1Problem(c.theta, array, plant, gains, link, sensing, gamma_crit, c.eta,
                                        np.array(c.q0), c.noise_var, c.comm_gain)
        sol = beamforming.solve_p1(problem, n_kappa=c.n_kappa, power_cap=c.power_cap)
        p1_path = out / "p1_report.csv"
        beamforming.write_p1_report(sol.per_kappa, p1_path)
        files.append(p1_path)
        if sol.feasible:
            rep = sol.report
            checks["p1_solution_feasible"] = bool(rep.sinr_margin >= -1e-9 and rep.drift_margin >= -1e-9)
            p1_summary = {"status": "feasible", "kappa": sol.kappa, "power": sol.power, "binding": sol.binding,
                          "sinr": rep.sinr, "sinr_margin": rep.sinr_margin, "drift_margin": rep.drift_margin}
            points.append(("p1", rep.sinr, beamforming.sensing_gain(sol.w, c.theta, array)))
        else:
            p1_summary = {"status": "infeasible", "reason": sol.reason}

    survival = []
    for i, (label, sinr_lin, beam_gain) in enumerate(points):
        stats = sc.simulate_closed_loop(plant, gains, link, sensing, sinr_lin, beam_gain, c.horizon,
                                        cfg.replicates, _sub_seed(cfg.seed, i), q0=c.q0,
                                        divergence_ceiling=c.divergence_ceiling)
        path = out / f"trajectory_{label}.csv"
        stats.write_csv(path)
        files.append(path)
        survival.append({
            "label": label,
            "sinr_db": float(channel.linear_to_db(sinr_lin)) if sinr_lin > 0 else float("-inf"),
            "sinr_over_critical": sinr_lin / gamma_crit if gamma_crit > 0 else float("inf"),
            "packet_prob": float(stats.packet_prob[0]),
            "packet_rate": stats.overall_packet_rate,
            "diverged_frac": stats.final_diverged_frac,
            "final_mean_norm": float(stats.mean_norm[-1]),
        })
    keys = ("label", "sinr_db", "sinr_over_critical", "packet_prob", "packet_rate", "diverged_frac", "final_mean_norm")
    files.append(_write_csv(out / "survival.csv", keys,
                            [[s["label"]] + [_fmt(s[k]) for k in keys[1:]] for s in survival]))
    summary = {"entropy_bits": entropy, "gamma_critical": gamma_crit, "p1": p1_summary, "survival": survival}
    return _finish(cfg, "control-sim", out, files, summary, checks)


# -- corridors ---------------------------------------------------------------

def corridor_setup(cfg: ScenarioConfig):
    g = cfg.grid
    grid = airspace.discretize(g.bounds_min, g.bounds_max, g.cell_size)
    mapping = channel.BeamPlan.round_robin if cfg.beams.mapping == "round_robin" else channel.BeamPlan.blocks
    beam_plan = mapping(grid.n_cells, cfg.beams.num_beams)
    cc = cfg.corridor
    fences = [corridor.Geofence(nf.id, corridor.Box(nf.min, nf.max)) for nf in cc.nofly]
    plan = corridor.build_layered_plan(grid, cc.layers, fences, cc.bottom_role, cc.buffer_margin)
    rho = float(channel.db_to_linear(cc.rho_db))
    budgets = {c.id: corridor.corridor_beam_budget(c, beam_plan, grid, rho, cc.r_min) for c in plan.corridors}
    return grid, beam_plan, plan, budgets


def run_corridor_demo(cfg: ScenarioConfig) -> RunArtifacts:
    grid, _, plan, budgets = corridor_setup(cfg)
    cc = cfg.corridor
    ctl = corridor.AdmissionController(plan, budgets, grid)
    out = _out_dir(cfg)

    order = sorted(range(len(cc.events)), key=lambda i: (cc.events[i].timestamp, i))
    routes_clean = True
    decisions = {}
    for i in order:
        ev = cc.events[i]
        if ev.action == "release":
            ctl.release(ev.id, ev.timestamp)
            continue
        req = corridor.FlightRequest(ev.id, ev.origin, ev.destination,
                                     ev.r_min if ev.r_min is not None else cc.r_min, ev.timestamp)
        result = ctl.request(req)
        decisions[ev.id] = result.reason or result.decision
        if result.decision == "Admitted":
            routes_clean &= not corridor.check_geofence(result.waypoints, plan.nofly, step=None)

    log_path = out / "admission_log.csv"
    ctl.write_log(log_path)
    occ = ctl.occupancy()
    rho = float(channel.db_to_linear(cc.rho_db))
    occ_path = _write_csv(
        out / "occupancy.csv",
        ("corridor_id", "layer_role", "occupancy", "max_concurrent", "num_beams", "C_crit", "regime"),
        [[c.id, c.layer_role.value, occ[c.id], budgets[c.id].max_concurrent, budgets[c.id].num_beams,
          _fmt(channel.critical_capacity(budgets[c.id].num_beams, rho)),
          channel.classify_regime(occ[c.id], budgets[c.id].num_beams, rho).value] for c in plan.corridors],
    )
    plan_path = out / "corridor_plan.json"
    plan_path.write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n")
    checks = {
        "budgets_respected": all(occ[cid] <= budgets[cid].max_concurrent for cid in occ),
        "admitted_routes_clear_of_nofly": bool(routes_clean),
    }
    admitted = sum(1 for d in decisions.values() if d == "Admitted")
    summary = {"requests": len(decisions), "admitted": admitted, "decisions": decisions,
               "total_budget": sum(b.max_concurrent for b in budgets.values())}
    return _finish(cfg, "corridor-demo", out, [log_path, occ_path, plan_path], summary, checks)


# -- reporting ---------------------------------------------------------------

def load_artifacts(output_dir) -> RunArtifacts:
    out = Path(output_dir)
    path = out / SUMMARY_FILE
    if not path.is_file():
        raise FileNotFoundError(f"no {SUMMARY_FILE} in {out}")
    record = json.loads(path.read_text())
    files = [out / name for name in record["files"]]
    missing = [f.name for f in files if not f.is_file() or f.stat().st_size == 0]
    if missing:
        raise FileNotFoundError(f"missing or empty artifacts: {', '.join(missing)}")
    summary = {**record["summary"], "command": record["command"]}
    return RunArtifacts(out, files + [path], summary, record["config_hash"], record["checks"])


def report_summary(artifacts: RunArtifacts) -> str:
    """Human-readable digest of a finished run."""
    if not artifacts.files:
        raise ValueError("no artifacts to report")
    for f in artifacts.files:
        if not Path(f).is_file():
            raise FileNotFoundError(f)
    s = artifacts.summary
    lines = [f"config {artifacts.config_hash[:12]}"]
    if "boundaries" in s:
        lines.append(f"{'L':>4} {'rho_dB':>8} {'C_crit':>10} {'C_air_max':>10} feasible")
        for b in s["boundaries"]:
            lines.append(f"{b['L']:>4} {b['rho_db']:>8.2f} {b['C_crit']:>10.3f} {b['qos_bound']:>10.3f} "
                         f"{b['qos_feasible']}")
    if "gamma_critical" in s:
        lines.append(f"entropy H(A) = {s['entropy_bits']:.4f} bits/step, "
                     f"gamma_critical = {s['gamma_critical']:.4f} (linear)")
        if s.get("p1"):
            lines.append("P1: " + ", ".join(f"{k}={v}" for k, v in s["p1"].items()))
        lines.append(f"{'point':>16} {'SINR_dB':>9} {'x crit':>8} {'p':>7} {'rate':>7} {'diverged':>9}")
        for r in s["survival"]:
            lines.append(f"{r['label']:>16} {r['sinr_db']:>9.2f} {r['sinr_over_critical']:>8.3g} "
                         f"{r['packet_prob']:>7.4f} {r['packet_rate']:>7.4f} {r['diverged_frac']:>9.3f}")
    if "decisions" in s:
        lines.append(f"admitted {s['admitted']}/{s['requests']} requests (total budget {s['total_budget']})")
        for rid, d in s["decisions"].items():
            lines.append(f"  {rid}: {d}")
    for name, ok in artifacts.checks.items():
        lines.append(f"check {name}: {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines)
