"""Monte-Carlo evaluation of guidance strategies.

Each sample draws one initial state and one set of thrust-error values,
shared across every strategy and error level so the comparison is
paired. Summaries report mean/std and linear-interpolation percentiles
of the total impulse cost, plus the safety extrema.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import astro, guidance

STRATEGY_NAMES = ("rl", "ld", "c", "s")
ERROR_LEVELS = ("none", "low", "high")


@dataclass
class McConfig:
    samples: int = 500
    error_levels: tuple = ("none", "low", "high")
    strategies: tuple = ("rl", "ld", "c", "s")
    seed: int = 0
    worker_count: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        for lv in self.error_levels:
            if lv not in ERROR_LEVELS:
                raise ValueError(f"unknown error level {lv!r}")
        for st in self.strategies:
            if st not in STRATEGY_NAMES:
                raise ValueError(f"unknown strategy {st!r}")


@dataclass
class McRecord:
    sample: int
    strategy: str
    level: str
    total_dv: float
    pws_min: float
    pas_min: float
    reached: bool
    total_reward: float


@dataclass
class McSummary:
    """Per (strategy, level) statistics of the campaign."""

    entries: dict = field(default_factory=dict)

    def add(self, strategy: str, level: str, stats: dict):
        self.entries[(strategy, level)] = stats

    def get(self, strategy: str, level: str) -> dict:
        return self.entries[(strategy, level)]


def summarize(records) -> dict:
    """Mean/std (n-1 divisor) and P25/P75/P99 of total dv, plus extrema."""
    if not records:
        raise ValueError("no records to summarize")
    dv = np.array([r.total_dv for r in records])
    stats = {
        "count": len(records),
        "mean_dv": float(np.mean(dv)),
        "std_dv": float(np.std(dv, ddof=1)) if len(dv) > 1 else 0.0,
        "p25_dv": float(np.percentile(dv, 25)),
        "p75_dv": float(np.percentile(dv, 75)),
        "p99_dv": float(np.percentile(dv, 99)),
        "min_pws": float(min(r.pws_min for r in records)),
        "min_pas": float(min(r.pas_min for r in records)),
        "reached_count": int(sum(r.reached for r in records)),
    }
    return stats


def draw_sample_inputs(mission, guidance_cfg, samples: int, seed: int):
    """Initial states and error draws, indexed by (sample, node)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    base = mission.x0_rel.x
    lo = base - guidance_cfg.dx0_max
    hi = base + guidance_cfg.dx0_max
    x0s = rng.uniform(lo, hi, size=(samples, 6))
    err = np.stack([
        rng.standard_normal((samples, mission.n)),
        rng.standard_normal((samples, mission.n)),
        rng.uniform(0.0, 2 * np.pi, (samples, mission.n)),
    ], axis=2)  # (samples, n, 3)
    return x0s, err


def run_campaign(problem: guidance.GuidanceProblem, controllers: dict,
                 cfg: McConfig):
    """Run the paired campaign; returns (records, summary).

    controllers maps strategy name -> controller factory (a zero-argument
    callable returning a fresh controller), so stateful controllers are
    rebuilt per episode.
    """
    mission = problem.mission
    for st in cfg.strategies:
        if st not in controllers:
            raise ValueError(f"no controller supplied for strategy {st!r}")

    x0s, err_draws = draw_sample_inputs(mission, problem.cfg, cfg.samples,
                                        cfg.seed)
    records = []
    for level in cfg.error_levels:
        model = guidance.ThrustErrorModel.preset(level)
        for st in cfg.strategies:
            factory = controllers[st]
            for k in range(cfg.samples):
                res = guidance.run_episode(
                    factory(), problem,
                    x0_rel=astro.RelativeState(x0s[k]),
                    rng=np.random.default_rng(0),
                    error_draws=err_draws[k],
                    thrust_error=model)
                records.append(McRecord(
                    sample=k, strategy=st, level=level,
                    total_dv=res.total_dv, pws_min=res.pws_min,
                    pas_min=res.pas_min, reached=res.reached,
                    total_reward=res.total_reward))

    summary = McSummary()
    for level in cfg.error_levels:
        for st in cfg.strategies:
            subset = [r for r in records
                      if r.strategy == st and r.level == level]
            summary.add(st, level, summarize(subset))
    return records, summary


def default_controllers(problem: guidance.GuidanceProblem,
                        policy=None, schedule=None) -> dict:
    """Controller factories for the benchmark strategies.

    policy (PolicyParams) backs "rl"; schedule (per-step array) backs "s".
    """
    from . import rl

    mission = problem.mission
    out = {
        "ld": lambda: guidance.ld_controller(mission),
        "c": lambda: guidance.c_controller(),
    }
    if policy is not None:
        out["rl"] = lambda: rl.policy_controller(
            policy, problem.cfg.alpha_max, deterministic=True)
    if schedule is not None:
        out["s"] = lambda: guidance.schedule_controller(schedule)
    return out
