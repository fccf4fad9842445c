"""Persistence formats for plans, profiles, policies, filter histories,
and campaign records.

JSON for structured artifacts, CSV for grids and records. All floats are
written with repr (shortest round-trip text), so reloading and
re-persisting an artifact reproduces it byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from . import astro, guidance, nominal, rl


def _jdump(obj, path: str):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _floats(arr) -> list:
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        return [float(x) for x in a]
    return [_floats(row) for row in a]


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_plan(path: str, plan: nominal.ImpulsePlan):
    _jdump({
        "node_times_s": _floats(plan.node_times),
        "dv_mps": _floats(plan.dv),
        "total_dv_mps": plan.total_dv,
    }, path)


def read_plan(path: str) -> nominal.ImpulsePlan:
    with open(path) as f:
        doc = json.load(f)
    return nominal.ImpulsePlan(np.asarray(doc["node_times_s"], dtype=float),
                               np.asarray(doc["dv_mps"], dtype=float))


def write_profiles(path: str, traj: nominal.NominalTrajectory):
    """Per-grid-point trajectory and metric traces (plot-ready CSV)."""
    cols = ("segment,t_s,rel_r_m,rel_t_m,rel_n_m,rel_vr_mps,rel_vt_mps,"
            "rel_vn_mps,eta,zeta_pws,zeta_pas,pas_min_dist_m")
    lines = [cols]
    for seg, (p, rel) in enumerate(zip(traj.profiles, traj.seg_rel_states)):
        for k in range(len(p.times)):
            vals = [seg + 1, p.times[k], *rel[k], p.eta[k], p.zeta_pws[k],
                    p.zeta_pas[k], p.pas_min_dist[k]]
            lines.append(",".join(
                repr(float(v)) if isinstance(v, (float, np.floating))
                else str(v) for v in vals))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_weights(path: str, gamma, optima):
    _jdump({
        "gamma": _floats(gamma),
        "component_optima": _floats(optima),
    }, path)


def read_weights(path: str):
    with open(path) as f:
        doc = json.load(f)
    return tuple(doc["gamma"]), tuple(doc["component_optima"])


def write_policy(path: str, params: rl.PolicyParams,
                 problem: guidance.GuidanceProblem):
    cfg = problem.cfg
    _jdump({
        "actor": {"W": [_floats(w) for w in params.actor.W],
                  "b": [_floats(b) for b in params.actor.b]},
        "critic": {"W": [_floats(w) for w in params.critic.W],
                   "b": [_floats(b) for b in params.critic.b]},
        "log_std": float(params.log_std),
        "state_bounds": {"s_min": _floats(problem.s_min),
                         "s_max": _floats(problem.s_max)},
        "guidance_config": {
            "impulses_per_segment": cfg.m,
            "alpha_max": cfg.alpha_max,
            "rho_obs": cfg.rho_obs,
            "rho_safe": cfg.rho_safe,
            "dx0_max_m_mps": _floats(cfg.dx0_max),
            "thrust_error_level": cfg.thrust_error.level,
        },
    }, path)


def read_policy(path: str) -> rl.PolicyParams:
    with open(path) as f:
        doc = json.load(f)
    params = object.__new__(rl.PolicyParams)
    actor = object.__new__(rl.Mlp)
    actor.W = [np.asarray(w, dtype=float) for w in doc["actor"]["W"]]
    actor.b = [np.asarray(b, dtype=float) for b in doc["actor"]["b"]]
    critic = object.__new__(rl.Mlp)
    critic.W = [np.asarray(w, dtype=float) for w in doc["critic"]["W"]]
    critic.b = [np.asarray(b, dtype=float) for b in doc["critic"]["b"]]
    params.actor = actor
    params.critic = critic
    params.log_std = float(doc["log_std"])
    return params


def write_schedule(path: str, schedule: np.ndarray, converged: bool):
    _jdump({"alpha_schedule": _floats(schedule),
            "converged": bool(converged)}, path)


def read_schedule(path: str) -> np.ndarray:
    with open(path) as f:
        doc = json.load(f)
    return np.asarray(doc["alpha_schedule"], dtype=float)


def write_ekf_history(path: str, hist):
    cols = ("t_s," + ",".join(f"xhat_{k}" for k in range(6))
            + ",max_pos_sigma_m,max_pos_eig_m2")
    lines = [cols]
    for k in range(len(hist.times)):
        vals = [hist.times[k], *hist.estimates[k], hist.max_pos_sigma[k],
                hist.max_pos_eig[k]]
        lines.append(",".join(repr(float(v)) for v in vals))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_mc_records(path: str, records):
    lines = ["sample,strategy,level,total_dv_mps,pws_min_m,pas_min_m,reached"]
    for r in records:
        lines.append(",".join([
            str(r.sample), r.strategy, r.level, repr(float(r.total_dv)),
            repr(float(r.pws_min)), repr(float(r.pas_min)),
            str(int(r.reached))]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_mc_summary(path: str, summary):
    doc = {}
    for (strategy, level), stats in sorted(summary.entries.items()):
        doc.setdefault(level, {})[strategy] = {
            k: (v if isinstance(v, int) else float(v))
            for k, v in stats.items()}
    _jdump(doc, path)


def write_alpha_traces(path: str, problem: guidance.GuidanceProblem,
                       episodes: dict):
    """Per-strategy alpha and deviation-norm traces (plot-ready CSV)."""
    lines = ["strategy,j,t_s,alpha,dev_norm_m,pws_dist_m,pas_dist_m"]
    for name, result in episodes.items():
        for s in result.steps:
            lines.append(",".join([
                name, str(s.j), repr(float(s.t)), repr(float(s.alpha)),
                repr(float(np.linalg.norm(s.dx))),
                repr(float(s.pws_dist)),
                repr(float(s.pas_dist)) if np.isfinite(s.pas_dist) else "inf"]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_manifest(path: str, cfg: dict, seeds: dict, artifact_paths: dict,
                   version: str):
    missing = [p for p in artifact_paths.values() if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"artifacts missing: {missing}")
    _jdump({
        "config_sha256": config_hash(cfg),
        "seeds": seeds,
        "artifacts": artifact_paths,
        "tool_version": version,
    }, path)
