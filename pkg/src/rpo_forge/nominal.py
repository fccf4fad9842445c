"""Stage 1: particle-swarm design of the nominal multi-impulse trajectory.

The decision vector holds the impulses of the first n-2 nodes; the last
two impulses always come from a Lambert transfer that lands exactly on
the final state, so every candidate satisfies the terminal constraint by
construction. The objective combines fuel, observability, and safety
terms over dense per-segment grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import astro, metrics

LAMBERT_PENALTY = 1e12


class InconsistentPlan(ValueError):
    """An impulse plan does not reach the mission's final state."""


@dataclass
class MissionConfig:
    """Far-range rendezvous scenario definition. SI units."""

    t0: float
    tf: float
    n: int  # nominal impulse nodes, equally spaced
    target_el0: astro.KeplerianElements
    x0_rel: astro.RelativeState
    xf_rel: astro.RelativeState
    dv_lim: float  # per-component impulse bound, m/s
    n_grid: int
    safety: metrics.SafetyConfig
    gravity: astro.GravityModel = field(default_factory=astro.GravityModel)

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")
        if self.n < 3:
            raise ValueError("need at least 3 nodes")
        if not self.dv_lim > 0.0:
            raise ValueError("dv_lim must be positive")
        if self.n_grid < 2:
            raise ValueError("n_grid must be at least 2")

    @property
    def node_times(self) -> np.ndarray:
        return np.linspace(self.t0, self.tf, self.n)

    @property
    def segment_duration(self) -> float:
        return (self.tf - self.t0) / (self.n - 1)

    @property
    def n_free(self) -> int:
        return self.n - 2


@dataclass
class ImpulsePlan:
    """Node epochs and the full set of n impulse vectors (ECI, m/s)."""

    node_times: np.ndarray
    dv: np.ndarray  # (n, 3)

    def __post_init__(self):
        self.node_times = np.asarray(self.node_times, dtype=float)
        self.dv = np.asarray(self.dv, dtype=float)
        n = len(self.node_times)
        if self.dv.shape != (n, 3):
            raise ValueError("dv must be (n, 3)")
        dts = np.diff(self.node_times)
        if n >= 2 and not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-6):
            raise ValueError("node times must be uniformly spaced")

    @property
    def total_dv(self) -> float:
        return float(np.sum(np.linalg.norm(self.dv, axis=1)))

    def free_components(self) -> np.ndarray:
        """Decision-variable view: impulses of nodes 1..n-2, flattened."""
        return self.dv[:-2].reshape(-1)

    def check_bounds(self, dv_lim: float) -> bool:
        return bool(np.all(np.abs(self.dv[:-2]) <= dv_lim + 1e-12))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    g_total: float
    g_dv: float
    g_obs: float
    g_safety: float
    gamma: tuple[float, float, float]

    @classmethod
    def combine(cls, g_dv: float, g_obs: float, g_safety: float,
                gamma) -> "ObjectiveBreakdown":
        g1, g2, g3 = (float(x) for x in gamma)
        total = g1 * g_dv + g2 * g_obs + g3 * g_safety
        return cls(total, g_dv, g_obs, g_safety, (g1, g2, g3))


@dataclass
class PsoConfig:
    swarm_size: int = 200
    iterations: int = 300
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    velocity_clamp: float = 0.2  # fraction of box width
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0.0 < self.inertia <= 1.0:
            raise ValueError("inertia must be in (0, 1]")
        if self.cognitive <= 0.0 or self.social <= 0.0:
            raise ValueError("acceleration coefficients must be positive")


@dataclass
class NominalTrajectory:
    """Densely sampled nominal trajectory and its metric profiles."""

    plan: ImpulsePlan
    profiles: list  # SegmentProfile per segment
    eta_bar_times: np.ndarray  # de-overlapped mission grid
    eta_bar_values: np.ndarray
    seg_rel_states: list  # (N, 6) RTN relative state per segment
    seg_chaser_elements: list  # post-impulse chaser elements per segment
    seg_target_elements: list  # target elements at each segment start
    total_dv: float
    mission: MissionConfig

    def eta_bar_at(self, t) -> np.ndarray:
        """Linear interpolation of the nominal observability profile."""
        return np.interp(t, self.eta_bar_times, self.eta_bar_values)

    def chaser_state_at(self, t: float) -> astro.AbsoluteState:
        """Exact post-impulse chaser state at mission epoch t."""
        i = self._segment_of(t)
        el = self.seg_chaser_elements[i]
        dt = t - self.plan.node_times[i]
        r, v = astro.propagate_grid(el, np.array([dt]), self.mission.gravity)
        return astro.AbsoluteState(r[0], v[0])

    def target_state_at(self, t: float) -> astro.AbsoluteState:
        el = self.seg_target_elements[0]
        dt = t - self.plan.node_times[0]
        r, v = astro.propagate_grid(el, np.array([dt]), self.mission.gravity)
        return astro.AbsoluteState(r[0], v[0])

    def rel_state_at(self, t: float) -> astro.RelativeState:
        return astro.eci_to_rtn_relative(self.chaser_state_at(t),
                                         self.target_state_at(t))

    def _segment_of(self, t: float) -> int:
        nt = self.plan.node_times
        i = int(np.searchsorted(nt, t, side="right")) - 1
        return min(max(i, 0), len(nt) - 2)


class DesignProblem:
    """Caches the mission's target-side grids and evaluates the objective."""

    def __init__(self, mission: MissionConfig):
        self.mission = mission
        g = mission.gravity
        m = mission
        self.el_target0 = m.target_el0.copy()
        self.x0 = None  # set below
        self.seg_dts = np.linspace(0.0, m.segment_duration, m.n_grid)
        self.node_times = m.node_times

        tgt0 = astro.kepler_to_eci(self.el_target0, g)
        self.x0 = astro.rtn_relative_to_eci(m.x0_rel, tgt0)
        tgt_f = astro.propagate(tgt0, m.tf - m.t0, g)
        self.xf = astro.rtn_relative_to_eci(m.xf_rel, tgt_f)
        self.h_ref = np.cross(tgt0.r, tgt0.v)

        # target elements and dense grids per segment
        self.seg_target_el = []
        self.tgt_r = []
        self.tgt_v = []
        self.basis = []
        el_t = self.el_target0
        for i in range(m.n - 1):
            self.seg_target_el.append(el_t)
            r, v = astro.propagate_grid(el_t, self.seg_dts, g)
            self.tgt_r.append(r)
            self.tgt_v.append(v)
            h = np.cross(r, v)
            r_hat = r / np.linalg.norm(r, axis=1, keepdims=True)
            n_hat = h / np.linalg.norm(h, axis=1, keepdims=True)
            t_hat = np.cross(n_hat, r_hat)
            self.basis.append((r_hat, t_hat, n_hat))
            el_t = astro.propagate_elements(el_t, m.segment_duration, g)
        self.el_target_f = el_t

    def _rel_positions(self, seg: int, chaser_r: np.ndarray) -> np.ndarray:
        r_hat, t_hat, n_hat = self.basis[seg]
        dr = chaser_r - self.tgt_r[seg]
        return np.stack([
            np.einsum("ij,ij->i", dr, r_hat),
            np.einsum("ij,ij->i", dr, t_hat),
            np.einsum("ij,ij->i", dr, n_hat),
        ], axis=1)

    def evaluate(self, dv_free: np.ndarray, gamma, want_details: bool = False):
        """Run the segment loop: apply impulses, grid-propagate the
        maneuvered/ballistic/target trajectories, score the metrics, and
        close the transfer with the final Lambert pair."""
        m = self.mission
        g = m.gravity
        dv_free = np.asarray(dv_free, dtype=float).reshape(m.n_free, 3)
        dv_all = np.zeros((m.n, 3))
        dv_all[: m.n_free] = dv_free

        profiles = []
        seg_rel = []
        seg_el = []
        chaser = self.x0.copy()
        el_bal = None  # elements of the coasting (pre-impulse) chaser

        try:
            for i in range(m.n - 1):
                el_bal = astro.eci_to_kepler(chaser, g) if el_bal is None else el_bal
                if i == m.n - 2:
                    v1, v2 = astro.lambert_solve(
                        chaser.r, self.xf.r, m.segment_duration, g, self.h_ref)
                    dv_all[m.n - 2] = v1 - chaser.v
                    dv_all[m.n - 1] = self.xf.v - v2
                chaser = astro.AbsoluteState(chaser.r, chaser.v + dv_all[i])
                el_man = astro.eci_to_kepler(chaser, g)

                man_r, man_v = astro.propagate_grid(el_man, self.seg_dts, g)
                bal_r, _ = astro.propagate_grid(el_bal, self.seg_dts, g)
                rel_man = self._rel_positions(i, man_r)
                rel_bal = self._rel_positions(i, bal_r)

                eta = metrics.eta_profile(rel_bal, rel_man)
                dist = np.linalg.norm(rel_man, axis=1)
                zeta_pws = metrics.pws_penalty(dist, m.safety)

                t_seg = self.node_times[i] + self.seg_dts
                roe = astro.roe_from_elements(el_bal, self.seg_target_el[i],
                                              t_ref=self.node_times[i], g=g)
                pas_min = astro.min_rn_distance_profile(
                    roe, t_seg, m.safety.pas_window)
                if i == m.n - 2:
                    # arrival point: missed final burn leaves the chaser on
                    # the transfer orbit; use the full relative distance
                    arrive = astro.AbsoluteState(man_r[-1], man_v[-1])
                    tgt_f = astro.AbsoluteState(self.tgt_r[i][-1], self.tgt_v[i][-1])
                    pas_min = pas_min.copy()
                    pas_min[-1] = metrics.min_full_distance(
                        arrive, tgt_f, m.safety.pas_window, g)
                zeta_pas = metrics.pas_penalty(pas_min, m.safety)

                profiles.append(metrics.SegmentProfile(
                    times=t_seg, eta=eta, zeta_pws=zeta_pws, zeta_pas=zeta_pas,
                    rel_pos=rel_man, pas_min_dist=pas_min))
                if want_details:
                    vel_rel = _rel_velocities(self, i, man_r, man_v)
                    seg_rel.append(np.concatenate([rel_man, vel_rel], axis=1))
                    seg_el.append(el_man)

                chaser = astro.AbsoluteState(man_r[-1], man_v[-1])
                el_bal = astro.propagate_elements(el_man, m.segment_duration, g)
        except (astro.TargetingFailure, astro.UnsupportedOrbit,
                astro.NumericalFailure):
            bad = ObjectiveBreakdown.combine(
                LAMBERT_PENALTY, LAMBERT_PENALTY, LAMBERT_PENALTY, gamma)
            return (bad, None, None, None) if want_details else bad

        g_dv = float(np.sum(np.linalg.norm(dv_all, axis=1)))
        g_obs, g_safety = metrics.accumulate_objective_terms(
            _deoverlap(profiles))
        breakdown = ObjectiveBreakdown.combine(g_dv, g_obs, g_safety, gamma)
        if want_details:
            plan = ImpulsePlan(self.node_times.copy(), dv_all)
            return breakdown, plan, profiles, (seg_rel, seg_el)
        return breakdown


def _rel_velocities(problem: DesignProblem, seg: int, chaser_r, chaser_v):
    r_hat, t_hat, n_hat = problem.basis[seg]
    tgt_r = problem.tgt_r[seg]
    tgt_v = problem.tgt_v[seg]
    dr = chaser_r - tgt_r
    dv = chaser_v - tgt_v
    pos = np.stack([np.einsum("ij,ij->i", dr, b) for b in (r_hat, t_hat, n_hat)],
                   axis=1)
    vel = np.stack([np.einsum("ij,ij->i", dv, b) for b in (r_hat, t_hat, n_hat)],
                   axis=1)
    h = np.cross(tgt_r, tgt_v)
    w = np.linalg.norm(h, axis=1) / np.einsum("ij,ij->i", tgt_r, tgt_r)
    vel_rot = np.stack([w * pos[:, 1], -w * pos[:, 0], np.zeros_like(w)], axis=1)
    return vel + vel_rot


def _deoverlap(profiles):
    """Attribute shared node points to the earlier segment."""
    out = [profiles[0]]
    for p in profiles[1:]:
        out.append(metrics.SegmentProfile(
            times=p.times[1:], eta=p.eta[1:], zeta_pws=p.zeta_pws[1:],
            zeta_pas=p.zeta_pas[1:], rel_pos=p.rel_pos[1:],
            pas_min_dist=p.pas_min_dist[1:]))
    return out


def objective(dv_free, mission: MissionConfig, gamma) -> ObjectiveBreakdown:
    """Score one decision vector (impulses of nodes 1..n-2, flattened)."""
    return DesignProblem(mission).evaluate(dv_free, gamma)


def pso_optimize(mission: MissionConfig, gamma, cfg: PsoConfig,
                 problem: DesignProblem | None = None,
                 history: list | None = None):
    """Global-best PSO over the free impulse components.

    Deterministic for a fixed seed: every particle draws from its own
    seeded stream and the global best merges once per generation.
    """
    problem = problem or DesignProblem(mission)
    dim = 3 * mission.n_free
    lb = -mission.dv_lim
    ub = mission.dv_lim
    width = ub - lb
    v_max = cfg.velocity_clamp * width

    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence(cfg.seed).spawn(cfg.swarm_size)]
    x = np.stack([r.uniform(lb, ub, dim) for r in streams])
    v = np.stack([r.uniform(-v_max, v_max, dim) for r in streams])

    fx = np.array([problem.evaluate(xi, gamma).g_total for xi in x])
    pbest = x.copy()
    fbest = fx.copy()
    gi = int(np.argmin(fbest))
    gbest = pbest[gi].copy()
    fg = float(fbest[gi])
    if history is not None:
        history.append(fg)

    for _ in range(cfg.iterations):
        for k in range(cfg.swarm_size):
            rp = streams[k].uniform(size=dim)
            rg = streams[k].uniform(size=dim)
            v[k] = (cfg.inertia * v[k]
                    + cfg.cognitive * rp * (pbest[k] - x[k])
                    + cfg.social * rg * (gbest - x[k]))
            np.clip(v[k], -v_max, v_max, out=v[k])
            x[k] = np.clip(x[k] + v[k], lb, ub)
            fx[k] = problem.evaluate(x[k], gamma).g_total
            if fx[k] < fbest[k]:
                fbest[k] = fx[k]
                pbest[k] = x[k].copy()
        gi = int(np.argmin(fbest))
        if fbest[gi] < fg:
            fg = float(fbest[gi])
            gbest = pbest[gi].copy()
        if history is not None:
            history.append(fg)

    breakdown, plan, _, _ = problem.evaluate(gbest, gamma, want_details=True)
    return plan, breakdown


WEIGHT_FLOOR = 1e-9


def calibrate_weights(mission: MissionConfig, cfg: PsoConfig,
                      problem: DesignProblem | None = None):
    """Single-objective optima of fuel, observability, and safety set the
    weights: gamma_k = 1 / max(|optimal cost_k|, floor).

    The observability optimum is negative (the metric rewards reversing
    the line of sight), so the magnitude is what normalizes the scale; a
    signed inverse would flip the minimization direction.
    """
    problem = problem or DesignProblem(mission)
    unit_gammas = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    optima = []
    for k, gam in enumerate(unit_gammas):
        sub = PsoConfig(**{**cfg.__dict__, "seed": cfg.seed + k})
        _, bd = pso_optimize(mission, gam, sub, problem=problem)
        optima.append(bd.g_total)
    gamma = tuple(1.0 / max(abs(opt), WEIGHT_FLOOR) for opt in optima)
    return gamma, tuple(optima)


def build_nominal(mission: MissionConfig, plan: ImpulsePlan) -> NominalTrajectory:
    """Materialize dense profiles for a plan and verify it lands on x_f."""
    problem = DesignProblem(mission)
    if len(plan.node_times) != mission.n or not np.allclose(
            plan.node_times, mission.node_times, rtol=0, atol=1e-6):
        raise InconsistentPlan("plan node layout does not match the mission")

    g = mission.gravity
    chaser = problem.x0.copy()
    for i in range(mission.n - 1):
        chaser = astro.AbsoluteState(chaser.r, chaser.v + plan.dv[i])
        chaser = astro.propagate(chaser, mission.segment_duration, g)
    chaser = astro.AbsoluteState(chaser.r, chaser.v + plan.dv[-1])
    pos_err = np.linalg.norm(chaser.r - problem.xf.r)
    vel_err = np.linalg.norm(chaser.v - problem.xf.v)
    if pos_err > 1.0 or vel_err > 1e-3:
        raise InconsistentPlan(
            f"terminal mismatch: {pos_err:.3g} m, {vel_err:.3g} m/s")

    _, _, profiles, (seg_rel, seg_el) = problem.evaluate(
        plan.free_components(), (1.0, 0.0, 0.0), want_details=True)

    deov = _deoverlap(profiles)
    eta_times = np.concatenate([p.times for p in deov])
    eta_vals = np.concatenate([p.eta for p in deov])

    return NominalTrajectory(
        plan=ImpulsePlan(plan.node_times.copy(), plan.dv.copy()),
        profiles=profiles,
        eta_bar_times=eta_times,
        eta_bar_values=eta_vals,
        seg_rel_states=seg_rel,
        seg_chaser_elements=seg_el,
        seg_target_elements=problem.seg_target_el,
        total_dv=plan.total_dv,
        mission=mission,
    )
