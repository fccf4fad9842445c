"""Bearings-only extended Kalman filter.

Validates trajectory observability: the filter tracks the target-centric
relative state from unit line-of-sight measurements alone and reports
the largest position-covariance eigenvalue over time. Range is invisible
to a single bearing (H @ r_hat = 0), so uncertainty collapses only where
maneuvers bend the measurement profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import astro


class CovarianceFailure(RuntimeError):
    """Covariance lost positive semidefiniteness beyond repair."""


@dataclass
class EkfConfig:
    """Filter tuning.

    sigma_w corrupts the simulated measurements (the truth-side position
    error inside the line-of-sight observation). process_noise_mode
    "measurement" keeps the filter's Q at zero (the measurement equations
    are the only place sigma_w acts); "filter" additionally adds
    Q = diag(sigma_w)^2 per step. reset_on_impulse restores the initial
    covariance at every known burn.
    """

    dt: float = 10.0  # filter step, s
    sigma_s: float = 1e-3  # sensor noise std per axis on the unit LOS
    sigma_w: np.ndarray = field(
        default_factory=lambda: np.array([50.0, 50.0, 50.0, 0.1, 0.1, 0.1]))
    sigma_x0: np.ndarray = field(
        default_factory=lambda: np.array([300.0, 100.0, 100.0, 0.3, 0.3, 0.3]))
    process_noise_mode: str = "measurement"  # measurement | filter
    reset_on_impulse: bool = False
    seed: int = 0

    def __post_init__(self):
        self.sigma_w = np.asarray(self.sigma_w, dtype=float).reshape(6)
        self.sigma_x0 = np.asarray(self.sigma_x0, dtype=float).reshape(6)
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.sigma_s < 0.0 or np.any(self.sigma_w < 0.0) or np.any(self.sigma_x0 < 0.0):
            raise ValueError("noise stds must be non-negative")
        if self.process_noise_mode not in ("measurement", "filter"):
            raise ValueError("process_noise_mode must be measurement or filter")


@dataclass
class EkfHistory:
    times: np.ndarray
    estimates: np.ndarray  # (N, 6) relative state estimates
    covariances: np.ndarray  # (N, 6, 6)
    max_pos_sigma: np.ndarray  # sqrt of largest position-block eigenvalue, m
    max_pos_eig: np.ndarray  # the eigenvalue itself, m^2

    @property
    def final_max_pos_sigma(self) -> float:
        return float(self.max_pos_sigma[-1])


@dataclass
class RelativeTruth:
    """Dense relative trajectory plus the impulse schedule the filter knows."""

    times: np.ndarray
    states: np.ndarray  # (N, 6) RTN relative states
    impulse_times: np.ndarray  # epochs of known impulses
    impulse_dvs: np.ndarray  # (K, 3) RTN velocity jumps


def simulate_measurement(true_rel_pos: np.ndarray, cfg: EkfConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """Unit line-of-sight observation with position and sensor noise."""
    r = np.asarray(true_rel_pos, dtype=float)
    if np.linalg.norm(r) == 0.0:
        raise ValueError("relative position must be nonzero")
    r_noisy = r + rng.normal(0.0, cfg.sigma_w[:3])
    y = r_noisy / np.linalg.norm(r_noisy)
    return y + rng.normal(0.0, cfg.sigma_s, 3)


def max_position_uncertainty(P: np.ndarray) -> float:
    """sqrt of the largest eigenvalue of the position covariance block."""
    block = P[:3, :3]
    return float(np.sqrt(max(np.linalg.eigvalsh(block)[-1], 0.0)))


def _ensure_psd(P: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    P = 0.5 * (P + P.T)
    min_eig = float(np.linalg.eigvalsh(P)[0])
    if min_eig < -tol * max(np.max(np.abs(P)), 1.0):
        raise CovarianceFailure(f"covariance indefinite (min eig {min_eig:.3e})")
    return P


def ekf_run(truth: RelativeTruth, target_el: astro.KeplerianElements,
            cfg: EkfConfig, rng: np.random.Generator | None = None,
            g: astro.GravityModel = astro.EARTH) -> EkfHistory:
    """Run the bearings-only EKF along a known truth trajectory.

    Prediction uses the linear relative-motion STM of the target orbit
    over cfg.dt with additive process noise; updates use the unit-LOS
    Jacobian in Joseph form. At each known impulse the velocity jump is
    added to the estimate and the covariance resets to the initial one.
    """
    rng = rng or np.random.default_rng(cfg.seed)
    t0 = float(truth.times[0])
    tf = float(truth.times[-1])
    n_steps = int(np.floor((tf - t0) / cfg.dt + 1e-9)) + 1
    times = t0 + cfg.dt * np.arange(n_steps)

    truth_pos = np.stack([
        np.interp(times, truth.times, truth.states[:, k]) for k in range(3)],
        axis=1)

    if cfg.process_noise_mode == "filter":
        Q = np.diag(cfg.sigma_w**2)
    else:
        Q = np.zeros((6, 6))
    R = cfg.sigma_s**2 * np.eye(3)
    P0 = np.diag(cfg.sigma_x0**2)

    x = truth.states[0] + rng.normal(0.0, cfg.sigma_x0)
    P = P0.copy()

    # impulses indexed by filter step (applied after the update at that epoch)
    imp_by_step = {}
    for t_imp, dv in zip(truth.impulse_times, truth.impulse_dvs):
        k = int(np.round((t_imp - t0) / cfg.dt))
        if 0 <= k < n_steps:
            imp_by_step.setdefault(k, np.zeros(3))
            imp_by_step[k] = imp_by_step[k] + dv

    stm = astro.ya_stm(target_el, 0.0, cfg.dt, g)

    estimates = np.zeros((n_steps, 6))
    covariances = np.zeros((n_steps, 6, 6))
    sigmas = np.zeros(n_steps)
    eigs = np.zeros(n_steps)

    for k in range(n_steps):
        if k > 0:
            # prediction through the impulse applied at the previous epoch
            x = stm @ x
            P = _ensure_psd(stm @ P @ stm.T + Q)

        z = simulate_measurement(truth_pos[k], cfg, rng)
        r_hat = x[:3]
        rng_est = np.linalg.norm(r_hat)
        y_hat = r_hat / rng_est
        H = np.zeros((3, 6))
        H[:, :3] = (np.eye(3) - np.outer(y_hat, y_hat)) / rng_est
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        x = x + K @ (z - y_hat)
        IKH = np.eye(6) - K @ H
        P = _ensure_psd(IKH @ P @ IKH.T + K @ R @ K.T)

        estimates[k] = x
        covariances[k] = P
        eig = float(np.linalg.eigvalsh(P[:3, :3])[-1])
        eigs[k] = max(eig, 0.0)
        sigmas[k] = np.sqrt(max(eig, 0.0))

        if k in imp_by_step and k < n_steps - 1:
            x = x.copy()
            x[3:] += imp_by_step[k]
            if cfg.reset_on_impulse:
                P = P0.copy()

    return EkfHistory(times=times, estimates=estimates,
                      covariances=covariances, max_pos_sigma=sigmas,
                      max_pos_eig=eigs)


def truth_from_nominal(nominal_traj, ekf_dt: float | None = None,
                       ballistic: bool = False) -> RelativeTruth:
    """Sample the exact relative truth of a nominal plan on the filter grid.

    With ballistic=True the impulses are dropped and the initial orbit
    coasts; this is the maneuver-free control case for observability
    comparisons.
    """
    mission = nominal_traj.mission
    g = mission.gravity
    dt = ekf_dt if ekf_dt is not None else 10.0
    n_steps = int(np.floor((mission.tf - mission.t0) / dt + 1e-9)) + 1
    times = mission.t0 + dt * np.arange(n_steps)

    el_t = mission.target_el0
    tgt_r, tgt_v = astro.propagate_grid(el_t, times - mission.t0, g)
    tgt0 = astro.AbsoluteState(tgt_r[0], tgt_v[0])
    chaser0 = astro.rtn_relative_to_eci(mission.x0_rel, tgt0)

    states = np.zeros((n_steps, 6))
    plan = nominal_traj.plan
    impulse_times = [] if ballistic else list(plan.node_times[:-1])
    impulse_dvs = []

    if ballistic:
        el_c = astro.eci_to_kepler(chaser0, g)
        ch_r, ch_v = astro.propagate_grid(el_c, times - mission.t0, g)
    else:
        # segment-wise exact propagation through the impulse plan
        node_times = plan.node_times
        ch_r = np.zeros((n_steps, 3))
        ch_v = np.zeros((n_steps, 3))
        state = chaser0
        for seg in range(mission.n - 1):
            state = astro.AbsoluteState(state.r, state.v + plan.dv[seg])
            el_c = astro.eci_to_kepler(state, g)
            t_end = node_times[seg + 1]
            if seg == mission.n - 2:
                mask = (times >= node_times[seg] - 1e-9) & (times <= t_end + 1e-9)
            else:
                mask = (times >= node_times[seg] - 1e-9) & (times < t_end - 1e-9)
            offs = times[mask] - node_times[seg]
            r_b, v_b = astro.propagate_grid(el_c, offs, g)
            ch_r[mask] = r_b
            ch_v[mask] = v_b
            r_e, v_e = astro.propagate_grid(
                el_c, np.array([t_end - node_times[seg]]), g)
            state = astro.AbsoluteState(r_e[0], v_e[0])

    for k in range(n_steps):
        tgt = astro.AbsoluteState(tgt_r[k], tgt_v[k])
        states[k] = astro.eci_to_rtn_relative(
            astro.AbsoluteState(ch_r[k], ch_v[k]), tgt).x

    if not ballistic:
        # impulse velocity jumps expressed in the RTN frame at each node
        impulse_dvs = []
        for seg in range(mission.n - 1):
            kk = int(np.round((node_times[seg] - mission.t0) / dt))
            tgt = astro.AbsoluteState(tgt_r[min(kk, n_steps - 1)],
                                      tgt_v[min(kk, n_steps - 1)])
            C = astro.rtn_basis(tgt)
            impulse_dvs.append(C @ plan.dv[seg])
        impulse_times = list(node_times[:-1])

    return RelativeTruth(
        times=times, states=states,
        impulse_times=np.asarray(impulse_times, dtype=float),
        impulse_dvs=np.asarray(impulse_dvs, dtype=float).reshape(-1, 3))
