"""Proximal policy optimization, implemented from scratch on numpy.

A tanh-squashed Gaussian actor and a value critic (MLPs with four hidden
layers) trained with the clipped surrogate objective, generalized
advantage estimation, and Adam. The policy picks the contraction
constant for the guidance environment; training draws stochastic initial
states and the best policy is selected on the deterministic sigma-point
sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import astro, guidance
from .guidance import GuidanceConfig, GuidanceProblem, run_episode
from .nominal import MissionConfig, NominalTrajectory

LOG_2PI = math.log(2.0 * math.pi)
TANH_EPS = 1e-9


@dataclass
class PpoConfig:
    batch_size: int = 64
    epochs: int = 10
    eval_episodes: int = 6  # exposed knob; sigma-point sweep covers all 12
    gae_lambda: float = 1.0
    discount: float = 0.99
    clip: float = 0.1
    lr: float = 0.003
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    rollout_steps: int = 2048
    total_steps: int = 200_000
    hidden_width: int = 64
    hidden_layers: int = 4
    init_std: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ValueError("clip must be in (0, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")


class Mlp:
    """Plain fully-connected network with tanh hidden activations."""

    def __init__(self, sizes, rng: np.random.Generator):
        self.W = []
        self.b = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            self.W.append(rng.uniform(-scale, scale, (fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        h = x
        for k in range(len(self.W) - 1):
            z = h @ self.W[k] + self.b[k]
            h = np.tanh(z)
            if cache is not None:
                cache.append(h)
        return h @ self.W[-1] + self.b[-1]

    def backward(self, x: np.ndarray, cache: list, d_out: np.ndarray):
        """Gradients of sum(d_out * output) w.r.t. weights and input."""
        gW = [None] * len(self.W)
        gb = [None] * len(self.b)
        hs = [x] + cache
        delta = d_out
        gW[-1] = hs[-1].T @ delta
        gb[-1] = delta.sum(axis=0)
        delta = delta @ self.W[-1].T
        for k in range(len(self.W) - 2, -1, -1):
            delta = delta * (1.0 - hs[k + 1] ** 2)
            gW[k] = hs[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k > 0:
                delta = delta @ self.W[k].T
        return gW, gb

    def params(self):
        return self.W + self.b

    def copy(self) -> "Mlp":
        out = object.__new__(Mlp)
        out.W = [w.copy() for w in self.W]
        out.b = [b.copy() for b in self.b]
        return out


@dataclass
class PolicyParams:
    actor: Mlp
    critic: Mlp
    log_std: float

    @classmethod
    def initialize(cls, cfg: PpoConfig, state_dim: int = 21) -> "PolicyParams":
        rng = np.random.default_rng(cfg.seed)
        sizes = [state_dim] + [cfg.hidden_width] * cfg.hidden_layers + [1]
        return cls(actor=Mlp(sizes, rng), critic=Mlp(sizes, rng),
                   log_std=float(np.log(cfg.init_std)))

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.actor.copy(), self.critic.copy(), self.log_std)


def _gaussian_log_prob(z, mu, log_std):
    std = np.exp(log_std)
    return -0.5 * ((z - mu) / std) ** 2 - log_std - 0.5 * LOG_2PI


def squashed_log_prob(z, mu, log_std):
    """Log density of a = tanh(z) under the squashed Gaussian."""
    return _gaussian_log_prob(z, mu, log_std) - np.log1p(-np.tanh(z) ** 2 + TANH_EPS)


def policy_act(params: PolicyParams, s_star: np.ndarray,
               rng: np.random.Generator | None = None,
               deterministic: bool = False):
    """Sample an action in (-1, 1) and its log-probability.

    Returns (a, log_prob, z) with z the pre-squash Gaussian draw; the
    environment rescales a to the contraction range.
    """
    s = np.asarray(s_star, dtype=float).reshape(1, -1)
    mu = float(params.actor.forward(s)[0, 0])
    if deterministic:
        z = mu
    else:
        z = mu + np.exp(params.log_std) * float(rng.standard_normal())
    a = float(np.tanh(z))
    lp = float(squashed_log_prob(z, mu, params.log_std))
    return a, lp, z


def value_of(params: PolicyParams, s_star: np.ndarray) -> float:
    return float(params.critic.forward(
        np.asarray(s_star, dtype=float).reshape(1, -1))[0, 0])


def alpha_from_action(a: float, alpha_max: float) -> float:
    return alpha_max * (a + 1.0) / 2.0


def compute_gae(rewards, values, discount: float, lam: float):
    """Generalized advantage estimation with terminal bootstrap zero."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(rewards) != len(values):
        raise ValueError("rewards and values must have equal length")
    n = len(rewards)
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        v_next = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + discount * v_next - values[t]
        acc = delta + discount * lam * acc
        adv[t] = acc
    return adv, adv + values


@dataclass
class Transition:
    s: np.ndarray
    a: float
    z: float
    log_prob: float
    reward: float
    value: float
    advantage: float = 0.0
    ret: float = 0.0


class Adam:
    def __init__(self, shapes, lr: float):
        self.lr = lr
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.b1 = 0.9
        self.b2 = 0.999
        self.eps = 1e-8

    def step(self, params, grads):
        self.t += 1
        lr_t = self.lr * np.sqrt(1 - self.b2**self.t) / (1 - self.b1**self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def ppo_loss_and_grads(params: PolicyParams, batch: list, cfg: PpoConfig):
    """Clipped-surrogate PPO loss (to minimize) and its gradients.

    Returns (loss, actor grads, critic grads, d log_std, diagnostics).
    """
    S = np.stack([tr.s for tr in batch])
    z = np.array([tr.z for tr in batch])
    adv = np.array([tr.advantage for tr in batch])
    ret = np.array([tr.ret for tr in batch])
    lp_old = np.array([tr.log_prob for tr in batch])
    n = len(batch)

    a_cache = []
    mu = params.actor.forward(S, a_cache)[:, 0]
    lp_new = squashed_log_prob(z, mu, params.log_std)
    ratio = np.exp(lp_new - lp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr_unclipped = ratio * adv
    surr_clipped = clipped * adv
    take_unclipped = surr_unclipped <= surr_clipped
    surrogate = np.where(take_unclipped, surr_unclipped, surr_clipped)
    entropy = 0.5 * (1.0 + LOG_2PI) + params.log_std

    v_cache = []
    values = params.critic.forward(S, v_cache)[:, 0]
    v_err = values - ret
    value_loss = float(np.mean(v_err**2))

    loss = float(-np.mean(surrogate) - cfg.entropy_coef * entropy
                 + cfg.value_coef * value_loss)

    # gradient of -mean(surrogate): flows only through the unclipped branch
    std = np.exp(params.log_std)
    d_lp = np.where(take_unclipped, ratio * adv, 0.0) / n  # d surr / d lp_new
    d_mu = -d_lp * (z - mu) / std**2  # minus: loss = -surrogate
    d_log_std = float(-np.sum(d_lp * (((z - mu) / std) ** 2 - 1.0)))
    d_log_std -= cfg.entropy_coef  # entropy bonus
    gW_a, gb_a = params.actor.backward(S, a_cache, d_mu[:, None])

    d_v = cfg.value_coef * 2.0 * v_err[:, None] / n
    gW_c, gb_c = params.critic.backward(S, v_cache, d_v)

    diag = {
        "surrogate": float(np.mean(surrogate)),
        "value_loss": value_loss,
        "entropy": float(entropy),
        "mean_ratio": float(np.mean(ratio)),
        "clip_fraction": float(np.mean(~take_unclipped)),
    }
    return loss, (gW_a, gb_a), (gW_c, gb_c), d_log_std, diag


def ppo_update(params: PolicyParams, transitions: list, cfg: PpoConfig,
               rng: np.random.Generator, optimizer: "PpoOptimizer | None" = None):
    """Epochs of shuffled minibatch updates over one rollout batch."""
    optimizer = optimizer or PpoOptimizer(params, cfg)
    adv = np.array([tr.advantage for tr in transitions])
    std = adv.std()
    mean = adv.mean()
    for tr in transitions:
        tr.advantage = (tr.advantage - mean) / (std + 1e-8)

    diags = []
    n = len(transitions)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo: lo + cfg.batch_size]
            batch = [transitions[i] for i in idx]
            loss, ga, gc, g_ls, diag = ppo_loss_and_grads(params, batch, cfg)
            if not np.isfinite(loss):
                diag["skipped"] = True
                diags.append(diag)
                continue
            optimizer.apply(params, ga, gc, g_ls)
            diags.append(diag)
    return diags


class PpoOptimizer:
    """Adam over the actor, critic, and log_std parameters."""

    def __init__(self, params: PolicyParams, cfg: PpoConfig):
        shapes = [w.shape for w in params.actor.params()] \
            + [w.shape for w in params.critic.params()] + [()]
        self.adam = Adam(shapes, cfg.lr)

    def apply(self, params: PolicyParams, actor_grads, critic_grads,
              d_log_std: float):
        gW_a, gb_a = actor_grads
        gW_c, gb_c = critic_grads
        flat_params = params.actor.params() + params.critic.params()
        flat_grads = gW_a + gb_a + gW_c + gb_c
        ls_box = np.array(params.log_std)
        self.adam.step(flat_params + [ls_box],
                       flat_grads + [np.array(d_log_std)])
        params.log_std = float(ls_box)


def sigma_points(mission: MissionConfig, cfg: GuidanceConfig) -> np.ndarray:
    """Twelve deterministic evaluation states at +-half the dispersion."""
    base = mission.x0_rel.x
    pts = np.tile(base, (12, 1))
    for k in range(6):
        pts[k, k] += 0.5 * cfg.dx0_max[k]
        pts[6 + k, k] -= 0.5 * cfg.dx0_max[k]
    return pts


def policy_controller(params: PolicyParams, alpha_max: float,
                      rng: np.random.Generator | None = None,
                      deterministic: bool = True,
                      recorder: list | None = None):
    """Adapt a policy to the guidance controller interface."""

    def controller(j, t, s_star):
        a, lp, z = policy_act(params, s_star, rng, deterministic)
        if recorder is not None:
            recorder.append((s_star.copy(), a, z, lp,
                             value_of(params, s_star)))
        return alpha_from_action(a, alpha_max)
    return controller


def evaluate_on_points(params: PolicyParams, problem: GuidanceProblem,
                       points: np.ndarray) -> float:
    """Summed deterministic, error-free episode reward over the points."""
    total = 0.0
    none_err = guidance.ThrustErrorModel.preset("none")
    for p in points:
        ctrl = policy_controller(params, problem.cfg.alpha_max,
                                 deterministic=True)
        res = run_episode(ctrl, problem, x0_rel=astro.RelativeState(p),
                          rng=np.random.default_rng(0), thrust_error=none_err)
        total += res.total_reward
    return total


@dataclass
class TrainingCurve:
    steps: list = field(default_factory=list)
    mean_episode_reward: list = field(default_factory=list)
    sigma_score: list = field(default_factory=list)


def train(mission: MissionConfig, nominal: NominalTrajectory,
          guidance_cfg: GuidanceConfig, ppo_cfg: PpoConfig,
          problem: GuidanceProblem | None = None):
    """Rollout / update / evaluate loop returning the best-scoring policy.

    The best parameters are the ones with the highest summed sigma-point
    reward under deterministic, error-free evaluation.
    """
    problem = problem or GuidanceProblem(mission, nominal, guidance_cfg)
    params = PolicyParams.initialize(ppo_cfg)
    optimizer = PpoOptimizer(params, ppo_cfg)
    points = sigma_points(mission, guidance_cfg)
    curve = TrainingCurve()

    best = params.copy()
    best_score = evaluate_on_points(params, problem, points)
    curve.steps.append(0)
    curve.mean_episode_reward.append(float("nan"))
    curve.sigma_score.append(best_score)

    rng_env = np.random.default_rng(np.random.SeedSequence(ppo_cfg.seed + 1))
    rng_act = np.random.default_rng(np.random.SeedSequence(ppo_cfg.seed + 2))
    rng_upd = np.random.default_rng(np.random.SeedSequence(ppo_cfg.seed + 3))

    steps_done = 0
    while steps_done < ppo_cfg.total_steps:
        transitions = []
        episode_rewards = []
        while len(transitions) < ppo_cfg.rollout_steps:
            recorder = []
            ctrl = policy_controller(params, guidance_cfg.alpha_max,
                                     rng=rng_act, deterministic=False,
                                     recorder=recorder)
            res = run_episode(ctrl, problem, rng=rng_env)
            rewards = [s.reward for s in res.steps]
            episode_rewards.append(sum(rewards))
            values = [rec[4] for rec in recorder]
            adv, rets = compute_gae(rewards, values, ppo_cfg.discount,
                                    ppo_cfg.gae_lambda)
            for (s, a, z, lp, v), r, ad, rt in zip(recorder, rewards, adv, rets):
                transitions.append(Transition(s, a, z, lp, r, v, ad, rt))
        steps_done += len(transitions)

        ppo_update(params, transitions, ppo_cfg, rng_upd, optimizer)

        score = evaluate_on_points(params, problem, points)
        curve.steps.append(steps_done)
        curve.mean_episode_reward.append(float(np.mean(episode_rewards)))
        curve.sigma_score.append(score)
        if score > best_score:
            best_score = score
            best = params.copy()

    return best, best_score, curve
