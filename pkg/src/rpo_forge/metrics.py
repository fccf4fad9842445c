"""Observability and safety metrics shared by the trajectory designer
and the guidance penalties."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import astro

UNIT_TOL = 1e-9
FULL_DIST_GRID = 1440


class ContractViolation(ValueError):
    """An input does not satisfy an operation's preconditions."""


@dataclass(frozen=True)
class SafetyConfig:
    """Keep-out-zone geometry and passive-safety horizon.

    The Gaussian penalty width is tied to the KOZ radius: sigma = d_min/3,
    so d_min sits at the 3-sigma (99.73%) point of the penalty.
    """

    d_min: float  # m
    pas_window: float  # s

    def __post_init__(self):
        if not self.d_min > 0.0:
            raise ValueError("d_min must be positive")
        if not self.pas_window > 0.0:
            raise ValueError("pas_window must be positive")

    @property
    def sigma(self) -> float:
        return self.d_min / 3.0


@dataclass
class SegmentProfile:
    """Per-grid-point metric traces over one trajectory segment."""

    times: np.ndarray  # s
    eta: np.ndarray  # instantaneous observability, in [-1, 1]
    zeta_pws: np.ndarray  # point-wise safety index, in (0, 1]
    zeta_pas: np.ndarray  # passive safety index, in (0, 1]
    rel_pos: np.ndarray  # (N, 3) relative position, m
    pas_min_dist: np.ndarray  # m

    def __post_init__(self):
        n = len(self.times)
        for name in ("eta", "zeta_pws", "zeta_pas", "pas_min_dist"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length mismatch")
        if self.rel_pos.shape != (n, 3):
            raise ValueError("rel_pos must be (N, 3)")


def observability_eta(y_bal: np.ndarray, y: np.ndarray) -> float:
    """Dot product of ballistic and maneuvered line-of-sight unit vectors.

    +1 means the maneuver left the measurement profile unchanged (least
    observable); -1 means it fully reversed (most observable).
    """
    y_bal = np.asarray(y_bal, dtype=float)
    y = np.asarray(y, dtype=float)
    if abs(np.linalg.norm(y_bal) - 1.0) > UNIT_TOL or abs(np.linalg.norm(y) - 1.0) > UNIT_TOL:
        raise ContractViolation("inputs must be unit vectors")
    return float(np.clip(y_bal @ y, -1.0, 1.0))


def eta_profile(rel_pos_bal: np.ndarray, rel_pos: np.ndarray) -> np.ndarray:
    """Vectorized observability metric for (N, 3) relative position arrays."""
    yb = rel_pos_bal / np.linalg.norm(rel_pos_bal, axis=1, keepdims=True)
    ym = rel_pos / np.linalg.norm(rel_pos, axis=1, keepdims=True)
    return np.clip(np.einsum("ij,ij->i", yb, ym), -1.0, 1.0)


def pws_penalty(rel_dist, cfg: SafetyConfig):
    """Gaussian KOZ proximity penalty exp(-d^2 / (2 sigma^2))."""
    rel_dist = np.asarray(rel_dist, dtype=float)
    if np.any(rel_dist < 0.0):
        raise ContractViolation("distances must be non-negative")
    out = np.exp(-rel_dist**2 / (2.0 * cfg.sigma**2))
    return float(out) if out.ndim == 0 else out


def pas_penalty(min_dist, cfg: SafetyConfig):
    """Gaussian penalty applied to the passive-safety minimum distance."""
    return pws_penalty(min_dist, cfg)


def min_full_distance(chaser: astro.AbsoluteState, target: astro.AbsoluteState,
                      window: float, g: astro.GravityModel) -> float:
    """Minimum total relative distance over a coasting window."""
    el_c = astro.eci_to_kepler(chaser, g)
    el_t = astro.eci_to_kepler(target, g)
    dts = window * np.arange(FULL_DIST_GRID) / FULL_DIST_GRID
    rc, _ = astro.propagate_grid(el_c, dts, g)
    rt, _ = astro.propagate_grid(el_t, dts, g)
    return float(np.min(np.linalg.norm(rc - rt, axis=1)))


def pas_min_distance(node_index: int, n: int, chaser_ballistic: astro.AbsoluteState,
                     target: astro.AbsoluteState, cfg: SafetyConfig,
                     g: astro.GravityModel = astro.EARTH) -> float:
    """Passive-safety minimum distance for a missed impulse at a node.

    Nodes 1..n-1 use the radial-normal separation of the coasting orbit
    (meaningful while the orbits differ); the final node uses the full
    relative distance, since the arrival state shares the target's orbit.
    """
    if not 1 <= node_index <= n:
        raise ValueError("node_index out of range")
    if node_index < n:
        roe = astro.compute_roe(chaser_ballistic, target, g)
        return astro.min_rn_distance(roe, 0.0, cfg.pas_window)
    return min_full_distance(chaser_ballistic, target, cfg.pas_window, g)


def accumulate_objective_terms(profiles) -> tuple[float, float]:
    """Plain sums of eta and (zeta_PAS + zeta_PWS) over all grid points.

    Profiles are expected to partition the mission grid without duplicated
    points; shared segment boundaries belong to the earlier segment.
    Sums are exactly rounded (fsum) so they are partition-independent.
    """
    g_obs = math.fsum(np.concatenate([p.eta for p in profiles]).tolist())
    g_safety = math.fsum(np.concatenate(
        [a for p in profiles for a in (p.zeta_pas, p.zeta_pws)]).tolist())
    return g_obs, g_safety
