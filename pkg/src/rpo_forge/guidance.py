"""Stage 2 guidance environment.

Between the nominal impulses, a controller picks a contraction constant
alpha per sub-step; the minimum-norm correction impulse that keeps the
deviation from the nominal trajectory inside alpha times its current
size comes from a single-constraint QCQP solved exactly via its secular
equation. Includes the benchmark alpha schedules and the Monte-Carlo
episode runner primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import astro, metrics
from .nominal import MissionConfig, NominalTrajectory

QCQP_TOL = 1e-12
REACH_POS_TOL = 1.0  # m
REACH_VEL_TOL = 1e-3  # m/s


@dataclass(frozen=True)
class ThrustErrorModel:
    """Gaussian execution errors on the nominal impulses only."""

    level: str = "none"  # none | low | high
    sigma_mag: float = 0.0  # fractional magnitude std
    sigma_dir: float = 0.0  # pointing std, rad

    PRESETS = {
        "none": (0.0, 0.0),
        "low": (0.01, np.radians(1.0)),
        "high": (0.05, np.radians(2.0)),
    }

    @classmethod
    def preset(cls, level: str) -> "ThrustErrorModel":
        if level not in cls.PRESETS:
            raise ValueError(f"unknown thrust error level: {level!r}")
        mag, direction = cls.PRESETS[level]
        return cls(level, mag, direction)

    def __post_init__(self):
        if self.sigma_mag < 0.0 or self.sigma_dir < 0.0:
            raise ValueError("error stds must be non-negative")
        if self.level == "none" and (self.sigma_mag or self.sigma_dir):
            raise ValueError("level 'none' requires zero stds")


@dataclass
class GuidanceConfig:
    m: int = 7  # guidance impulses per segment
    alpha_max: float = 2.0
    rho_obs: float = 1000.0
    rho_safe: float = 1000.0
    dx0_max: np.ndarray = field(
        default_factory=lambda: np.array([15e3, 15e3, 750.0, 0.0, 0.0, 0.0]))
    thrust_error: ThrustErrorModel = field(
        default_factory=lambda: ThrustErrorModel.preset("none"))
    seed: int = 0

    def __post_init__(self):
        self.dx0_max = np.asarray(self.dx0_max, dtype=float).reshape(6)
        if self.m < 0:
            raise ValueError("m must be non-negative")
        if not self.alpha_max > 0.0:
            raise ValueError("alpha_max must be positive")
        if self.rho_obs < 0.0 or self.rho_safe < 0.0:
            raise ValueError("penalty constants must be non-negative")


@dataclass
class GuidanceStep:
    j: int
    t: float
    x_abs: astro.AbsoluteState
    x_rel: np.ndarray
    dx: np.ndarray
    alpha: float
    ddv_rel: np.ndarray
    nominal_dv: float  # magnitude applied at this step (0 off nominal nodes)
    reward: float
    p_safe: float
    p_obs: float
    pws_dist: float
    pas_dist: float


FAILURE_REWARD = -5e5  # matches the worst-case safety-penalty scale
DEVIATION_ABORT = 5e6  # m; beyond this the episode is unrecoverable


@dataclass
class EpisodeResult:
    steps: list
    total_dv: float
    pws_min: float
    pas_min: float
    reached: bool
    initial_rel: np.ndarray
    final_rel: np.ndarray
    failed: bool = False

    @property
    def total_reward(self) -> float:
        return float(sum(s.reward for s in self.steps))


def qcqp_step(dx: np.ndarray, phi: np.ndarray, alpha: float,
              svd: tuple | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm velocity correction under the contraction constraint.

    Solves min ||u|| s.t. ||phi @ (dx + M u)||^2 <= alpha^2 ||dx||^2 with
    M mapping u into the velocity slots. Interior case returns zero; an
    infeasible constraint falls back to the least-norm least-squares
    minimizer of the contracted norm; otherwise the unique boundary
    solution comes from the secular equation in the multiplier.

    svd optionally carries a precomputed np.linalg.svd(phi[:, 3:]).
    """
    dx = np.asarray(dx, dtype=float).reshape(6)
    A = phi[:, 3:]
    b = phi @ dx
    r = alpha * np.linalg.norm(dx)

    bnorm = np.linalg.norm(b)
    if bnorm <= r:
        return np.zeros(3), b

    U, s, Vt = svd if svd is not None else np.linalg.svd(A, full_matrices=False)
    beta = U.T @ b
    b_perp2 = max(b @ b - beta @ beta, 0.0)

    if b_perp2 >= r * r or np.any(s < 1e-300):
        # ball unreachable by 3-dof control: least-norm least-squares point
        u = -Vt.T @ (beta / s)
        return u, phi @ dx + A @ u

    target = r * r - b_perp2

    def resid(lam):
        return float(np.sum(beta**2 / (1.0 + lam * s**2) ** 2) - target)

    lam_lo, lam_hi = 0.0, 1.0
    while resid(lam_hi) > 0.0:
        lam_lo = lam_hi
        lam_hi *= 4.0
        if lam_hi > 1e300:
            u = -Vt.T @ (beta / s)
            return u, phi @ dx + A @ u
    lam = 0.5 * (lam_lo + lam_hi)
    for _ in range(200):
        f = resid(lam)
        if f > 0.0:
            lam_lo = lam
        else:
            lam_hi = lam
        # Newton step on the monotone residual, safeguarded by bisection
        df = float(np.sum(-2.0 * s**2 * beta**2 / (1.0 + lam * s**2) ** 3))
        if df != 0.0:
            lam_new = lam - f / df
            if not lam_lo < lam_new < lam_hi:
                lam_new = 0.5 * (lam_lo + lam_hi)
        else:
            lam_new = 0.5 * (lam_lo + lam_hi)
        if abs(lam_new - lam) <= QCQP_TOL * max(lam, 1.0):
            lam = lam_new
            break
        lam = lam_new

    u = -lam * (Vt.T @ (s * beta / (1.0 + lam * s**2)))
    return u, phi @ dx + A @ u


def sample_initial_state(mission: MissionConfig, cfg: GuidanceConfig,
                         rng: np.random.Generator) -> astro.RelativeState:
    """Uniform componentwise draw around the nominal initial state."""
    base = mission.x0_rel.x
    lo = base - cfg.dx0_max
    hi = base + cfg.dx0_max
    return astro.RelativeState(rng.uniform(lo, hi))


def alpha_ld(t: float, t0: float, tf: float) -> float:
    """Linearly decreasing contraction: 1 at t0, 0 at tf."""
    return 1.0 - (t - t0) / (tf - t0)


def alpha_c() -> float:
    """Constant zero contraction: snap to the nominal path immediately."""
    return 0.0


def ld_controller(mission: MissionConfig):
    def controller(j, t, s_star):
        return alpha_ld(t, mission.t0, mission.tf)
    return controller


def c_controller():
    def controller(j, t, s_star):
        return alpha_c()
    return controller


def schedule_controller(schedule: np.ndarray):
    schedule = np.asarray(schedule, dtype=float)

    def controller(j, t, s_star):
        return float(schedule[j])
    return controller


def _perp_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal pair spanning the plane perpendicular to v."""
    a = np.zeros(3)
    a[int(np.argmin(np.abs(v)))] = 1.0
    e1 = np.cross(v, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    e2 /= np.linalg.norm(e2)
    return e1, e2


def apply_thrust_error(dv: np.ndarray, model: ThrustErrorModel,
                       draws: np.ndarray) -> np.ndarray:
    """Corrupt an impulse with magnitude and pointing errors.

    draws = (mag_normal, angle_normal, azimuth_uniform_0_2pi); shared
    draws let different error levels and strategies see paired errors.
    """
    mag = np.linalg.norm(dv)
    if mag == 0.0 or model.level == "none":
        return dv
    e1, e2 = _perp_basis(dv / mag)
    axis = np.cos(draws[2]) * e1 + np.sin(draws[2]) * e2
    angle = model.sigma_dir * draws[1]
    ca, sa = np.cos(angle), np.sin(angle)
    rotated = ca * dv + sa * np.cross(axis, dv) + (1 - ca) * (axis @ dv) * axis
    return rotated * (1.0 + model.sigma_mag * draws[0])


class GuidanceProblem:
    """Precomputed nominal/target data shared by all episodes."""

    def __init__(self, mission: MissionConfig, nominal: NominalTrajectory,
                 cfg: GuidanceConfig):
        self.mission = mission
        self.nominal = nominal
        self.cfg = cfg
        g = mission.gravity
        n = mission.n
        m = cfg.m
        self.j_end = (n - 1) * (m + 1)
        self.dt_sub = (mission.tf - mission.t0) / self.j_end
        self.sub_times = mission.t0 + self.dt_sub * np.arange(self.j_end + 1)

        # target states, frame bases, and elements at every sub-node
        el_t0 = mission.target_el0
        self.el_target = [astro.propagate_elements(el_t0, t - mission.t0, g)
                          for t in self.sub_times]
        tr, tv = astro.propagate_grid(el_t0, self.sub_times - mission.t0, g)
        self.tgt_r, self.tgt_v = tr, tv
        self.tgt_states = [astro.AbsoluteState(tr[j], tv[j])
                           for j in range(self.j_end + 1)]
        self.bases = [astro.rtn_basis(s) for s in self.tgt_states]
        h = np.cross(tr, tv)
        self.w_rate = np.linalg.norm(h, axis=1) / np.einsum("ij,ij->i", tr, tr)

        # nominal chaser at sub-nodes: exact element-space propagation
        self.nom_abs = []
        self.nom_rel = np.zeros((self.j_end + 1, 6))
        self.eta_bar = np.ones(self.j_end + 1)
        plan = nominal.plan
        chaser = None
        el_man = None
        el_bal = None
        for j in range(self.j_end + 1):
            if j == 0:
                chaser = astro.rtn_relative_to_eci(
                    mission.x0_rel, self.tgt_states[0])
            else:
                r, v = astro.propagate_grid(
                    el_man, np.array([self.dt_sub]), g)
                chaser = astro.AbsoluteState(r[0], v[0])
                el_man = astro.propagate_elements(el_man, self.dt_sub, g)
                el_bal = astro.propagate_elements(el_bal, self.dt_sub, g)
                # observability reference uses the incoming coasting branch
                rb, _ = astro.propagate_grid(el_bal, np.array([0.0]), g)
                bal_rel = self.bases[j] @ (rb[0] - self.tgt_states[j].r)
                man_rel = self.bases[j] @ (chaser.r - self.tgt_states[j].r)
                self.eta_bar[j] = float(np.clip(
                    (bal_rel / np.linalg.norm(bal_rel))
                    @ (man_rel / np.linalg.norm(man_rel)), -1.0, 1.0))
            if j % (m + 1) == 0 and j < self.j_end:
                el_bal = astro.eci_to_kepler(chaser, g)
                node = j // (m + 1)
                chaser = astro.AbsoluteState(chaser.r, chaser.v + plan.dv[node])
                el_man = astro.eci_to_kepler(chaser, g)
            self.nom_abs.append(chaser)
            self.nom_rel[j] = astro.eci_to_rtn_relative(
                chaser, self.tgt_states[j]).x

        # terminal reference (post-arrival-burn chaser state)
        self.xf_abs = astro.rtn_relative_to_eci(
            mission.xf_rel, self.tgt_states[-1])

        # per-sub-step state transition matrices of the target orbit
        self.stms = [astro.ya_stm(mission.target_el0, self.sub_times[j] - mission.t0,
                                  self.dt_sub, g)
                     for j in range(self.j_end)]
        self.stm_svds = [np.linalg.svd(phi[:, 3:], full_matrices=False)
                         for phi in self.stms]

        # actor-state normalization bounds
        a_t = mission.target_el0.a
        pos_abs = a_t + 200e3
        vel_abs = 1.2 * np.sqrt(g.mu / a_t)
        rel_scale = 2.0 * (np.linalg.norm(mission.x0_rel.x)
                           + np.linalg.norm(cfg.dx0_max))
        r_min = -(cfg.rho_safe * mission.safety.d_min + 10.0 * mission.dv_lim)
        self.s_min = np.concatenate([
            [0.0], np.full(3, -pos_abs), np.full(3, -vel_abs),
            np.full(6, -rel_scale), [r_min], [0.0], np.full(6, -rel_scale)])
        self.s_max = np.concatenate([
            [self.j_end], np.full(3, pos_abs), np.full(3, vel_abs),
            np.full(6, rel_scale), [0.0], [cfg.alpha_max],
            np.full(6, rel_scale)])

    def normalize_state(self, raw: np.ndarray) -> np.ndarray:
        s = 2.0 * (raw - self.s_min) / (self.s_max - self.s_min) - 1.0
        return np.clip(s, -1.0, 1.0)

    def actor_state(self, n_rem: int, x_abs: astro.AbsoluteState,
                    x_rel: np.ndarray, r_prev: float, a_prev: float,
                    j: int) -> np.ndarray:
        return self.actor_state_raw(n_rem, x_abs.r, x_abs.v, x_rel,
                                    r_prev, a_prev, j)

    def actor_state_raw(self, n_rem: int, r: np.ndarray, v: np.ndarray,
                        x_rel: np.ndarray, r_prev: float, a_prev: float,
                        j: int) -> np.ndarray:
        raw = np.concatenate([
            [float(n_rem)], r, v, x_rel, [r_prev], [a_prev],
            x_rel - self.nom_rel[j]])
        return self.normalize_state(raw)


def run_episode(controller, problem: GuidanceProblem,
                x0_rel: astro.RelativeState | None = None,
                rng: np.random.Generator | None = None,
                error_draws: np.ndarray | None = None,
                thrust_error: ThrustErrorModel | None = None) -> EpisodeResult:
    """Run one guidance episode under a controller alpha(j, t, s*) -> float.

    error_draws is an (n, 3) array of standard draws for the nominal-node
    thrust errors; drawn from rng when omitted and a non-none error model
    is active.
    """
    mission = problem.mission
    cfg = problem.cfg
    g = mission.gravity
    model = thrust_error if thrust_error is not None else cfg.thrust_error
    rng = rng or np.random.default_rng(cfg.seed)
    if x0_rel is None:
        x0_rel = sample_initial_state(mission, cfg, rng)
    if error_draws is None:
        if model.level != "none":
            error_draws = np.column_stack([
                rng.standard_normal(mission.n),
                rng.standard_normal(mission.n),
                rng.uniform(0.0, 2 * np.pi, mission.n)])
        else:
            error_draws = np.zeros((mission.n, 3))

    m = cfg.m
    j_end = problem.j_end
    start = astro.rtn_relative_to_eci(x0_rel, problem.tgt_states[0])
    ch_r, ch_v = start.r.copy(), start.v.copy()
    el_bal = None
    bal_R = None
    bal_dt = 0.0
    pas_engine = None
    n_rem = j_end
    r_prev = 0.0
    a_prev = 0.0
    total_dv = 0.0
    pas_min = np.inf
    steps = []

    def rel_state(j, r, v):
        C = problem.bases[j]
        pos = C @ (r - problem.tgt_r[j])
        vel = problem.w_rate[j] * np.array([pos[1], -pos[0], 0.0]) \
            + C @ (v - problem.tgt_v[j])
        return np.concatenate([pos, vel])

    x_rel = rel_state(0, ch_r, ch_v)
    pws_min = float(np.linalg.norm(x_rel[:3]))
    el_man = None
    man_R = None
    man_dt = 0.0
    failed = False

    for j in range(j_end):
        t_j = problem.sub_times[j]
        nominal_dv_mag = 0.0
        if j % (m + 1) == 0:
            # re-branch the ballistic reference, then inject the nominal burn
            el_bal = astro.elements_from_rv(ch_r, ch_v, g)
            bal_R = astro._perifocal_rotation(el_bal)
            bal_dt = 0.0
            pas_engine = None
            node = j // (m + 1)
            dv_nom = apply_thrust_error(
                problem.nominal.plan.dv[node], model, error_draws[node])
            ch_v = ch_v + dv_nom
            nominal_dv_mag = float(np.linalg.norm(dv_nom))
            total_dv += nominal_dv_mag
            x_rel = rel_state(j, ch_r, ch_v)
            el_man = None

        dx = x_rel - problem.nom_rel[j]
        if np.linalg.norm(dx) > DEVIATION_ABORT:
            failed = True
        s_star = problem.actor_state_raw(n_rem, ch_r, ch_v, x_rel, r_prev,
                                         a_prev, j)
        alpha = float(controller(j, t_j, s_star))
        alpha = float(np.clip(alpha, 0.0, cfg.alpha_max))
        if n_rem == 1:
            alpha = 0.0

        if not failed:
            ddv_rel, _ = qcqp_step(dx, problem.stms[j], alpha,
                                   svd=problem.stm_svds[j])
        else:
            ddv_rel = np.zeros(3)
        ddv_mag = float(np.linalg.norm(ddv_rel))
        if ddv_mag > 0.0:
            ch_v = ch_v + problem.bases[j].T @ ddv_rel
            total_dv += ddv_mag
            el_man = None

        try:
            if failed:
                raise astro.UnsupportedOrbit("episode aborted")
            if el_man is None:
                el_man = astro.elements_from_rv(ch_r, ch_v, g)
                man_R = astro._perifocal_rotation(el_man)
                man_dt = 0.0
            man_dt += problem.dt_sub
            ch_r, ch_v = astro.state_at_offset(el_man, man_dt, g, man_R)
        except (astro.UnsupportedOrbit, astro.NumericalFailure):
            # unrecoverable excursion: close the episode with a flat
            # failure penalty so training steers away from here
            failed = True
            steps.append(GuidanceStep(
                j=j, t=t_j, x_abs=astro.AbsoluteState(ch_r, ch_v),
                x_rel=x_rel.copy(), dx=dx, alpha=alpha, ddv_rel=ddv_rel,
                nominal_dv=nominal_dv_mag, reward=FAILURE_REWARD,
                p_safe=0.0, p_obs=0.0, pws_dist=float(np.linalg.norm(x_rel[:3])),
                pas_dist=np.inf))
            break
        bal_dt += problem.dt_sub

        jn = j + 1
        x_rel = rel_state(jn, ch_r, ch_v)

        # observability against the coasting branch
        rb, _ = astro.state_at_offset(el_bal, bal_dt, g, bal_R)
        bal_rel = problem.bases[jn] @ (rb - problem.tgt_r[jn])
        eta_j = min(max(
            float((bal_rel @ x_rel[:3])
                  / (np.linalg.norm(bal_rel) * np.linalg.norm(x_rel[:3]))),
            -1.0), 1.0)
        eta_ref = problem.eta_bar[jn]
        p_obs = cfg.rho_obs * (eta_j - eta_ref) if eta_j >= eta_ref else 0.0

        # safety: actual distance first, then the passive coast
        pws_dist = float(np.linalg.norm(x_rel[:3]))
        if jn == j_end:
            pas_dist = metrics.min_full_distance(
                astro.AbsoluteState(ch_r, ch_v), problem.tgt_states[jn],
                mission.safety.pas_window, g)
        else:
            if pas_engine is None:
                t_branch = problem.sub_times[j - (j % (m + 1))]
                roe = astro.roe_from_elements(
                    el_bal, problem.el_target[j - (j % (m + 1))],
                    t_ref=t_branch, g=g)
                pas_engine = astro.RnWindowMinimizer(
                    roe, mission.safety.pas_window)
            pas_dist = pas_engine.query_scalar(problem.sub_times[jn])
        if pws_dist <= mission.safety.d_min:
            p_safe = cfg.rho_safe * (mission.safety.d_min - pws_dist)
        elif pas_dist <= mission.safety.d_min:
            p_safe = cfg.rho_safe * (mission.safety.d_min - pas_dist)
        else:
            p_safe = 0.0

        reward = -(ddv_mag + nominal_dv_mag + p_safe + p_obs)
        n_rem -= 1

        if n_rem == 0:
            # arrival: velocity-matching burn closes the plan
            dv_term = apply_thrust_error(
                problem.xf_abs.v - ch_v, model, error_draws[mission.n - 1])
            ch_v = ch_v + dv_term
            term_mag = float(np.linalg.norm(dv_term))
            total_dv += term_mag
            reward -= term_mag
            x_rel = rel_state(jn, ch_r, ch_v)

        pws_min = min(pws_min, pws_dist)
        pas_min = min(pas_min, pas_dist)
        steps.append(GuidanceStep(
            j=j, t=t_j, x_abs=astro.AbsoluteState(ch_r, ch_v),
            x_rel=x_rel.copy(), dx=dx, alpha=alpha, ddv_rel=ddv_rel,
            nominal_dv=nominal_dv_mag, reward=reward, p_safe=p_safe,
            p_obs=p_obs, pws_dist=pws_dist, pas_dist=pas_dist))
        r_prev = reward
        a_prev = alpha

    pos_err = np.linalg.norm(ch_r - problem.xf_abs.r)
    vel_err = np.linalg.norm(ch_v - problem.xf_abs.v)
    reached = bool(not failed and pos_err < REACH_POS_TOL
                   and vel_err < REACH_VEL_TOL)
    return EpisodeResult(steps=steps, total_dv=total_dv, pws_min=pws_min,
                         pas_min=pas_min, reached=reached,
                         initial_rel=x0_rel.x.copy(), final_rel=x_rel.copy(),
                         failed=failed)


def alpha_s_objective(schedule: np.ndarray, problem: GuidanceProblem,
                      points) -> float:
    """Summed reward of a fixed alpha schedule over the evaluation states."""
    total = 0.0
    ctrl = schedule_controller(schedule)
    none_err = ThrustErrorModel.preset("none")
    for p in points:
        res = run_episode(ctrl, problem, x0_rel=astro.RelativeState(p),
                          rng=np.random.default_rng(0), thrust_error=none_err)
        total += res.total_reward
    return total


def alpha_s_optimize(problem: GuidanceProblem, points,
                     maxiter: int = 60) -> tuple[np.ndarray, bool]:
    """Schedule maximizing the sigma-point reward, box-bounded [0, a_max].

    Projected quasi-Newton (L-BFGS-B) started from the linearly decreasing
    schedule; the constant-zero schedule is a fallback start and candidate,
    so the result never scores below it.
    """
    from scipy.optimize import minimize

    cfg = problem.cfg
    j_end = problem.j_end
    t = problem.sub_times[:j_end]
    x_ld = np.array([alpha_ld(tj, problem.mission.t0, problem.mission.tf)
                     for tj in t])
    x_c = np.zeros(j_end)

    def neg(x):
        return -alpha_s_objective(x, problem, points)

    bounds = [(0.0, cfg.alpha_max)] * j_end
    f_c = neg(x_c)
    best_x, best_f = x_c, f_c  # the constant schedule is always feasible
    converged = True
    for x0 in (x_ld, x_c):
        res = minimize(neg, x0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter, "eps": 1e-3})
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
            converged = bool(res.success)
        if best_f < f_c - 1e-9:
            break
    return np.clip(best_x, 0.0, cfg.alpha_max), converged
