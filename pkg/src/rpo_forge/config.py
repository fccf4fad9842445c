"""Configuration schema: one JSON document drives every command.

Field names carry explicit unit suffixes; all values are converted to SI
once, here, when the typed configs are built.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from . import astro, guidance, metrics, mc, navfilter, nominal, rl


class ConfigError(ValueError):
    """Malformed or inconsistent configuration document."""


DEFAULT_CONFIG = {
    "seed": 1234,
    "gravity": {"mu_m3_s2": 3.986e14},
    "target": {
        "a_m": 6678136.0,
        "e": 0.0,
        "i_deg": 99.8,
        "raan_deg": 0.0,
        "argp_deg": 0.0,
        "mean_anomaly_deg": 0.0,
    },
    "mission": {
        "x0_rel_m_mps": [1.0, 100000.0, 5.0, -0.02, 0.01, 0.0],
        "xf_rel_m_mps": [0.0, 1000.0, 0.0, 0.0, 0.0, 0.0],
        "tof_s": 21600.0,
        "n_impulses": 6,
        "dv_lim_mps": 10.0,
        "n_grid": 1000,
        "d_min_m": 500.0,
        "pas_window_s": 5400.0,
    },
    "pso": {
        "swarm_size": 200,
        "iterations": 300,
        "inertia": 0.7298,
        "cognitive": 1.49618,
        "social": 1.49618,
        "velocity_clamp": 0.2,
    },
    "weights": {"gamma": None},
    "guidance": {
        "impulses_per_segment": 7,
        "alpha_max": 2.0,
        "rho_obs": 1000.0,
        "rho_safe": 1000.0,
        "dx0_max_m_mps": [15000.0, 15000.0, 750.0, 0.0, 0.0, 0.0],
        "thrust_error_level": "none",
    },
    "ppo": {
        "batch_size": 64,
        "epochs": 10,
        "eval_episodes": 6,
        "gae_lambda": 1.0,
        "discount": 0.99,
        "clip": 0.1,
        "lr": 0.003,
        "entropy_coef": 0.01,
        "value_coef": 0.5,
        "rollout_steps": 2048,
        "total_steps": 200000,
        "hidden_width": 64,
        "hidden_layers": 4,
        "init_std": 0.25,
    },
    "ekf": {
        "dt_s": 10.0,
        "sigma_s_rad": 0.001,
        "sigma_w_m_mps": [50.0, 50.0, 50.0, 0.1, 0.1, 0.1],
        "sigma_x0_m_mps": [300.0, 100.0, 100.0, 0.3, 0.3, 0.3],
        "process_noise_mode": "measurement",
        "reset_on_impulse": False,
    },
    "mc": {
        "samples": 500,
        "error_levels": ["none", "low", "high"],
        "strategies": ["rl", "ld", "c", "s"],
        "workers": 1,
    },
    "alpha_s": {"maxiter": 25},
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def load_config(path: str | None) -> dict:
    """Defaults overridden by the JSON document at path (if given)."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path) as f:
            user = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    _merge(cfg, user)
    return cfg


def _merge(base: dict, override: dict, prefix: str = ""):
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, prefix=f"{prefix}{key}.")
        else:
            base[key] = value


def gravity_from_config(cfg: dict) -> astro.GravityModel:
    return astro.GravityModel(float(cfg["gravity"]["mu_m3_s2"]))


def target_from_config(cfg: dict) -> astro.KeplerianElements:
    t = cfg["target"]
    try:
        return astro.KeplerianElements(
            a=float(t["a_m"]), e=float(t["e"]),
            i=np.radians(float(t["i_deg"])),
            raan=np.radians(float(t["raan_deg"])),
            argp=np.radians(float(t["argp_deg"])),
            M=np.radians(float(t["mean_anomaly_deg"])))
    except (ValueError, astro.UnsupportedOrbit) as exc:
        raise ConfigError(f"bad target elements: {exc}") from exc


def mission_from_config(cfg: dict) -> nominal.MissionConfig:
    m = cfg["mission"]
    try:
        return nominal.MissionConfig(
            t0=0.0,
            tf=float(m["tof_s"]),
            n=int(m["n_impulses"]),
            target_el0=target_from_config(cfg),
            x0_rel=astro.RelativeState(m["x0_rel_m_mps"]),
            xf_rel=astro.RelativeState(m["xf_rel_m_mps"]),
            dv_lim=float(m["dv_lim_mps"]),
            n_grid=int(m["n_grid"]),
            safety=metrics.SafetyConfig(
                d_min=float(m["d_min_m"]),
                pas_window=float(m["pas_window_s"])),
            gravity=gravity_from_config(cfg),
        )
    except ValueError as exc:
        raise ConfigError(f"bad mission config: {exc}") from exc


def pso_from_config(cfg: dict, seed: int | None = None) -> nominal.PsoConfig:
    p = cfg["pso"]
    try:
        return nominal.PsoConfig(
            swarm_size=int(p["swarm_size"]),
            iterations=int(p["iterations"]),
            inertia=float(p["inertia"]),
            cognitive=float(p["cognitive"]),
            social=float(p["social"]),
            velocity_clamp=float(p["velocity_clamp"]),
            seed=int(cfg["seed"] if seed is None else seed),
        )
    except ValueError as exc:
        raise ConfigError(f"bad pso config: {exc}") from exc


def guidance_from_config(cfg: dict, seed: int | None = None) -> guidance.GuidanceConfig:
    gcd = cfg["guidance"]
    try:
        return guidance.GuidanceConfig(
            m=int(gcd["impulses_per_segment"]),
            alpha_max=float(gcd["alpha_max"]),
            rho_obs=float(gcd["rho_obs"]),
            rho_safe=float(gcd["rho_safe"]),
            dx0_max=np.asarray(gcd["dx0_max_m_mps"], dtype=float),
            thrust_error=guidance.ThrustErrorModel.preset(
                gcd["thrust_error_level"]),
            seed=int(cfg["seed"] if seed is None else seed),
        )
    except ValueError as exc:
        raise ConfigError(f"bad guidance config: {exc}") from exc


def ppo_from_config(cfg: dict, seed: int | None = None) -> rl.PpoConfig:
    p = cfg["ppo"]
    try:
        return rl.PpoConfig(
            batch_size=int(p["batch_size"]),
            epochs=int(p["epochs"]),
            eval_episodes=int(p["eval_episodes"]),
            gae_lambda=float(p["gae_lambda"]),
            discount=float(p["discount"]),
            clip=float(p["clip"]),
            lr=float(p["lr"]),
            entropy_coef=float(p["entropy_coef"]),
            value_coef=float(p["value_coef"]),
            rollout_steps=int(p["rollout_steps"]),
            total_steps=int(p["total_steps"]),
            hidden_width=int(p["hidden_width"]),
            hidden_layers=int(p["hidden_layers"]),
            init_std=float(p["init_std"]),
            seed=int(cfg["seed"] if seed is None else seed),
        )
    except ValueError as exc:
        raise ConfigError(f"bad ppo config: {exc}") from exc


def ekf_from_config(cfg: dict, seed: int | None = None) -> navfilter.EkfConfig:
    e = cfg["ekf"]
    try:
        return navfilter.EkfConfig(
            dt=float(e["dt_s"]),
            sigma_s=float(e["sigma_s_rad"]),
            sigma_w=np.asarray(e["sigma_w_m_mps"], dtype=float),
            sigma_x0=np.asarray(e["sigma_x0_m_mps"], dtype=float),
            process_noise_mode=str(e["process_noise_mode"]),
            reset_on_impulse=bool(e["reset_on_impulse"]),
            seed=int(cfg["seed"] if seed is None else seed),
        )
    except ValueError as exc:
        raise ConfigError(f"bad ekf config: {exc}") from exc


def mc_from_config(cfg: dict, seed: int | None = None,
                   strategies=None, levels=None,
                   workers: int | None = None) -> mc.McConfig:
    m = cfg["mc"]
    try:
        return mc.McConfig(
            samples=int(m["samples"]),
            error_levels=tuple(levels if levels is not None
                               else m["error_levels"]),
            strategies=tuple(strategies if strategies is not None
                             else m["strategies"]),
            seed=int(cfg["seed"] if seed is None else seed),
            worker_count=int(m["workers"] if workers is None else workers),
        )
    except ValueError as exc:
        raise ConfigError(f"bad mc config: {exc}") from exc
