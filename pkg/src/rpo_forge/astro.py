"""Two-body astrodynamics kernel.

Keplerian element conversions and propagation, target-centric RTN frame
transforms, relative orbital elements with the radial-normal separation
metric, a universal-variables Lambert targeter, and the Yamanaka-Ankersen
state transition matrix for linear relative motion about an elliptic
reference orbit.

Units are SI throughout: meters, seconds, radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (faster than np.cross for scalars)."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])

KEPLER_TOL = 1e-12
KEPLER_MAX_ITER = 50
ECC_DEGENERATE = 1e-12
INC_DEGENERATE = 1e-12


class NumericalFailure(RuntimeError):
    """An iterative solver failed to converge."""


class UnsupportedOrbit(ValueError):
    """Orbit is not elliptic (specific energy >= 0)."""


class FrameUndefined(ValueError):
    """Target angular momentum too small to define the RTN frame."""


class TargetingFailure(NumericalFailure):
    """Lambert targeting did not converge or the geometry is degenerate."""


@dataclass(frozen=True)
class GravityModel:
    """Point-mass gravity field."""

    mu: float = 3.986e14  # m^3/s^2

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError("mu must be positive")


EARTH = GravityModel()


@dataclass
class AbsoluteState:
    """ECI position/velocity pair."""

    r: np.ndarray  # m
    v: np.ndarray  # m/s

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.v))):
            raise ValueError("state components must be finite")
        if np.linalg.norm(self.r) == 0.0:
            raise ValueError("position must be nonzero")

    def copy(self) -> "AbsoluteState":
        return AbsoluteState(self.r.copy(), self.v.copy())


@dataclass
class KeplerianElements:
    """Classical elements with mean anomaly; elliptic orbits only."""

    a: float  # semi-major axis, m
    e: float
    i: float  # rad
    raan: float  # rad
    argp: float  # rad
    M: float  # mean anomaly, rad

    def __post_init__(self):
        if not self.a > 0.0:
            raise UnsupportedOrbit("semi-major axis must be positive")
        if not 0.0 <= self.e < 1.0:
            raise UnsupportedOrbit("eccentricity must lie in [0, 1)")
        self.i = wrap_angle(self.i)
        self.raan = wrap_angle(self.raan)
        self.argp = wrap_angle(self.argp)
        self.M = wrap_angle(self.M)

    def mean_motion(self, g: GravityModel) -> float:
        return np.sqrt(g.mu / self.a**3)

    def period(self, g: GravityModel) -> float:
        return TWO_PI / self.mean_motion(g)

    def copy(self) -> "KeplerianElements":
        return KeplerianElements(self.a, self.e, self.i, self.raan, self.argp, self.M)


@dataclass
class RelativeState:
    """Six-vector [dr_R, dr_T, dr_N, dv_R, dv_T, dv_N] in target-centric RTN."""

    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(6)
        if not np.all(np.isfinite(self.x)):
            raise ValueError("relative state components must be finite")

    @property
    def pos(self) -> np.ndarray:
        return self.x[:3]

    @property
    def vel(self) -> np.ndarray:
        return self.x[3:]

    def copy(self) -> "RelativeState":
        return RelativeState(self.x.copy())


@dataclass
class RelativeOrbitalElements:
    """Relative orbit geometry of a chaser with respect to a target.

    ``da`` is the semi-major-axis difference in meters; ``de`` and ``di``
    are the magnitudes of the relative eccentricity and inclination
    vectors (dimensionless / rad); ``phi`` and ``theta`` are their phases.
    The chaser mean argument of latitude is linear in time:
    ``u(t) = u0 + u_rate * (t - t_ref)``.
    """

    a_t: float  # target semi-major axis, m
    da: float  # m
    de: float
    di: float  # rad
    theta: float  # rad, relative-orbit ascending node
    phi: float  # rad, relative eccentricity-vector phase
    u0: float  # rad, chaser mean argument of latitude at t_ref
    u_rate: float  # rad/s, chaser mean motion
    t_ref: float  # s

    def __post_init__(self):
        if self.de < 0.0 or self.di < 0.0:
            raise ValueError("de and di must be non-negative")

    def u_at(self, t) :
        """Mean argument of latitude at epoch(s) t."""
        return self.u0 + self.u_rate * (np.asarray(t, dtype=float) - self.t_ref)


def wrap_angle(x):
    """Wrap an angle (or array) to [0, 2*pi)."""
    return np.mod(x, TWO_PI)


def solve_kepler(M, e: float):
    """Solve Kepler's equation E - e*sin(E) = M. Scalar or array M.

    Newton iteration with a Danby-style starter; tolerance 1e-12 rad.
    """
    M = wrap_angle(np.asarray(M, dtype=float))
    E = M + 0.85 * e * np.sign(np.sin(M))
    if e < 1e-14:
        return M if M.ndim else float(M)
    for _ in range(KEPLER_MAX_ITER):
        f = E - e * np.sin(E) - M
        E = E - f / (1.0 - e * np.cos(E))
        if np.max(np.abs(f)) < KEPLER_TOL:
            break
    else:
        raise NumericalFailure("Kepler solver did not converge")
    # the loop exits one half-step after the residual check; verify
    resid = np.abs(E - e * np.sin(E) - M)
    if np.max(resid) >= KEPLER_TOL:
        raise NumericalFailure("Kepler solver did not converge")
    return E if E.ndim else float(E)


def true_from_eccentric(E, e: float):
    return 2.0 * np.arctan2(np.sqrt(1.0 + e) * np.sin(E / 2.0),
                            np.sqrt(1.0 - e) * np.cos(E / 2.0))


def eccentric_from_true(nu, e: float):
    return 2.0 * np.arctan2(np.sqrt(1.0 - e) * np.sin(nu / 2.0),
                            np.sqrt(1.0 + e) * np.cos(nu / 2.0))


def _perifocal_rotation(el: KeplerianElements) -> np.ndarray:
    """Rotation matrix from perifocal (PQW) to ECI axes."""
    cO, sO = np.cos(el.raan), np.sin(el.raan)
    ci, si = np.cos(el.i), np.sin(el.i)
    cw, sw = np.cos(el.argp), np.sin(el.argp)
    return np.array([
        [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
        [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
        [sw * si, cw * si, ci],
    ])


def kepler_to_eci(el: KeplerianElements, g: GravityModel = EARTH) -> AbsoluteState:
    """ECI state on the orbit defined by `el` at its mean anomaly."""
    E = solve_kepler(el.M, el.e)
    nu = true_from_eccentric(E, el.e)
    p = el.a * (1.0 - el.e**2)
    r_mag = p / (1.0 + el.e * np.cos(nu))
    r_pf = r_mag * np.array([np.cos(nu), np.sin(nu), 0.0])
    vf = np.sqrt(g.mu / p)
    v_pf = vf * np.array([-np.sin(nu), el.e + np.cos(nu), 0.0])
    R = _perifocal_rotation(el)
    return AbsoluteState(R @ r_pf, R @ v_pf)


def eci_to_kepler(s: AbsoluteState, g: GravityModel = EARTH) -> KeplerianElements:
    """Classical elements of an elliptic ECI state.

    Degenerate cases follow the usual conventions: circular orbits get
    argp = 0, equatorial orbits get raan = 0.
    """
    return elements_from_rv(s.r, s.v, g)


def elements_from_rv(r: np.ndarray, v: np.ndarray,
                     g: GravityModel = EARTH) -> KeplerianElements:
    """eci_to_kepler on raw position/velocity arrays."""
    r_mag = np.linalg.norm(r)
    v_mag2 = v @ v
    energy = v_mag2 / 2.0 - g.mu / r_mag
    if energy >= 0.0:
        raise UnsupportedOrbit("state is not on an elliptic orbit")
    a = -g.mu / (2.0 * energy)

    h = cross3(r, v)
    h_mag = np.linalg.norm(h)
    if h_mag == 0.0:
        raise UnsupportedOrbit("rectilinear orbit")
    e_vec = cross3(v, h) / g.mu - r / r_mag
    e = np.linalg.norm(e_vec)
    if e >= 1.0:
        raise UnsupportedOrbit("state is not on an elliptic orbit")

    i = np.arccos(np.clip(h[2] / h_mag, -1.0, 1.0))
    node = np.array([-h[1], h[0], 0.0])
    node_mag = np.linalg.norm(node)

    if i < INC_DEGENERATE:
        raan = 0.0
        node = np.array([1.0, 0.0, 0.0])
        node_mag = 1.0
    else:
        raan = np.arctan2(node[1], node[0])

    if e < ECC_DEGENERATE:
        argp = 0.0
        # measure anomaly from the node line for a circular orbit
        u_dir = node / node_mag
    else:
        cos_w = np.clip(node @ e_vec / (node_mag * e), -1.0, 1.0)
        argp = np.arccos(cos_w)
        if e_vec[2] < 0.0:
            argp = TWO_PI - argp
        if i < INC_DEGENERATE:
            # equatorial: longitude of perigee measured in the plane
            argp = np.arctan2(e_vec[1], e_vec[0])
        u_dir = e_vec / e

    cos_nu = np.clip(r @ u_dir / r_mag, -1.0, 1.0)
    nu = np.arccos(cos_nu)
    # forward of the reference direction if moving away from it
    ref_cross = cross3(u_dir, r / r_mag)
    if ref_cross @ (h / h_mag) < 0.0:
        nu = TWO_PI - nu

    E = eccentric_from_true(nu, e)
    M = E - e * np.sin(E)
    return KeplerianElements(a, e, i, raan, argp, M)


def propagate(s: AbsoluteState, dt: float, g: GravityModel = EARTH) -> AbsoluteState:
    """Two-body propagation by dt seconds (element-space mean-anomaly update)."""
    el = eci_to_kepler(s, g)
    el.M = wrap_angle(el.M + el.mean_motion(g) * dt)
    return kepler_to_eci(el, g)


def propagate_elements(el: KeplerianElements, dt: float,
                       g: GravityModel = EARTH) -> KeplerianElements:
    """Element-space propagation: only the mean anomaly advances."""
    out = el.copy()
    out.M = wrap_angle(el.M + el.mean_motion(g) * dt)
    return out


def propagate_grid(el: KeplerianElements, dts: np.ndarray,
                   g: GravityModel = EARTH) -> tuple[np.ndarray, np.ndarray]:
    """States at an array of time offsets from the epoch of `el`.

    Returns (positions, velocities) with shape (len(dts), 3). Vectorized
    Kepler solve; one rotation matrix shared across the grid.
    """
    dts = np.asarray(dts, dtype=float)
    n = el.mean_motion(g)
    M = wrap_angle(el.M + n * dts)
    E = solve_kepler(M, el.e)
    nu = true_from_eccentric(E, el.e)
    p = el.a * (1.0 - el.e**2)
    r_mag = p / (1.0 + el.e * np.cos(nu))
    cos_nu, sin_nu = np.cos(nu), np.sin(nu)
    r_pf = np.stack([r_mag * cos_nu, r_mag * sin_nu, np.zeros_like(nu)], axis=1)
    vf = np.sqrt(g.mu / p)
    v_pf = np.stack([-vf * sin_nu, vf * (el.e + cos_nu), np.zeros_like(nu)], axis=1)
    R = _perifocal_rotation(el)
    return r_pf @ R.T, v_pf @ R.T


def rtn_basis(target: AbsoluteState) -> np.ndarray:
    """Rows are the R, T, N unit vectors of the target-centric frame."""
    r = target.r
    h = cross3(target.r, target.v)
    h_mag = np.linalg.norm(h)
    if h_mag <= 0.0 or not np.isfinite(h_mag):
        raise FrameUndefined("target angular momentum is degenerate")
    r_hat = r / np.linalg.norm(r)
    n_hat = h / h_mag
    t_hat = cross3(n_hat, r_hat)
    return np.vstack([r_hat, t_hat, n_hat])


def _rtn_rate(target: AbsoluteState) -> float:
    h_mag = np.linalg.norm(cross3(target.r, target.v))
    return h_mag / (target.r @ target.r)


_OMEGA_PATTERN = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def eci_to_rtn_relative(chaser: AbsoluteState, target: AbsoluteState) -> RelativeState:
    """Relative state of the chaser in target-centric rotating RTN axes."""
    C = rtn_basis(target)
    w = _rtn_rate(target)
    dr = chaser.r - target.r
    dv = chaser.v - target.v
    pos = C @ dr
    vel = w * (_OMEGA_PATTERN @ pos) + C @ dv
    return RelativeState(np.concatenate([pos, vel]))


def rtn_relative_to_eci(rel: RelativeState, target: AbsoluteState) -> AbsoluteState:
    """Inverse of eci_to_rtn_relative: absolute chaser state from a relative one."""
    C = rtn_basis(target)
    w = _rtn_rate(target)
    dr = C.T @ rel.pos
    dv = C.T @ (rel.vel - w * (_OMEGA_PATTERN @ rel.pos))
    return AbsoluteState(target.r + dr, target.v + dv)


def solve_kepler_scalar(M: float, e: float) -> float:
    """Scalar Kepler solve on plain floats (hot-path helper)."""
    M = math.fmod(M, TWO_PI)
    if M < 0.0:
        M += TWO_PI
    if e < 1e-14:
        return M
    E = M + 0.85 * e * (1.0 if math.sin(M) >= 0.0 else -1.0)
    for _ in range(KEPLER_MAX_ITER):
        f = E - e * math.sin(E) - M
        E -= f / (1.0 - e * math.cos(E))
        if abs(f) < KEPLER_TOL:
            return E
    raise NumericalFailure("Kepler solver did not converge")


def state_at_offset(el: KeplerianElements, dt: float, g: GravityModel,
                    R: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Position/velocity dt seconds past the epoch of `el` (scalar fast path).

    R is the cached perifocal rotation of `el`; pass it when propagating
    the same orbit repeatedly.
    """
    if R is None:
        R = _perifocal_rotation(el)
    n = math.sqrt(g.mu / el.a**3)
    E = solve_kepler_scalar(el.M + n * dt, el.e)
    e = el.e
    nu = 2.0 * math.atan2(math.sqrt(1.0 + e) * math.sin(E / 2.0),
                          math.sqrt(1.0 - e) * math.cos(E / 2.0))
    p = el.a * (1.0 - e * e)
    cos_nu = math.cos(nu)
    sin_nu = math.sin(nu)
    r_mag = p / (1.0 + e * cos_nu)
    vf = math.sqrt(g.mu / p)
    rx, ry = r_mag * cos_nu, r_mag * sin_nu
    vx, vy = -vf * sin_nu, vf * (e + cos_nu)
    r = R[:, 0] * rx + R[:, 1] * ry
    v = R[:, 0] * vx + R[:, 1] * vy
    return r, v


def rtn_positions(chaser_r: np.ndarray, target_r: np.ndarray,
                  target_v: np.ndarray) -> np.ndarray:
    """Batched RTN relative positions. Inputs shaped (N, 3)."""
    dr = chaser_r - target_r
    h = np.cross(target_r, target_v)
    r_hat = target_r / np.linalg.norm(target_r, axis=1, keepdims=True)
    n_hat = h / np.linalg.norm(h, axis=1, keepdims=True)
    t_hat = np.cross(n_hat, r_hat)
    return np.stack([
        np.einsum("ij,ij->i", dr, r_hat),
        np.einsum("ij,ij->i", dr, t_hat),
        np.einsum("ij,ij->i", dr, n_hat),
    ], axis=1)


def roe_from_elements(el_c: KeplerianElements, el_t: KeplerianElements,
                      t_ref: float = 0.0,
                      g: GravityModel = EARTH) -> RelativeOrbitalElements:
    """Relative orbital elements from the two element sets.

    Relative eccentricity vector (e cos w, e sin w) difference; relative
    inclination vector (di, dRAAN * sin i_t).
    """
    de_vec = np.array([
        el_c.e * np.cos(el_c.argp) - el_t.e * np.cos(el_t.argp),
        el_c.e * np.sin(el_c.argp) - el_t.e * np.sin(el_t.argp),
    ])
    draan = el_c.raan - el_t.raan
    draan = (draan + np.pi) % TWO_PI - np.pi
    di_vec = np.array([el_c.i - el_t.i, draan * np.sin(el_t.i)])
    de = float(np.linalg.norm(de_vec))
    di = float(np.linalg.norm(di_vec))
    phi = float(np.arctan2(de_vec[1], de_vec[0])) if de > 0.0 else 0.0
    theta = float(np.arctan2(di_vec[1], di_vec[0])) if di > 0.0 else 0.0
    return RelativeOrbitalElements(
        a_t=el_t.a,
        da=el_c.a - el_t.a,
        de=de,
        di=di,
        theta=theta,
        phi=phi,
        u0=wrap_angle(el_c.argp + el_c.M),
        u_rate=el_c.mean_motion(g),
        t_ref=t_ref,
    )


def compute_roe(chaser: AbsoluteState, target: AbsoluteState,
                g: GravityModel = EARTH, t_ref: float = 0.0) -> RelativeOrbitalElements:
    """Relative orbital elements of chaser w.r.t. target."""
    return roe_from_elements(eci_to_kepler(chaser, g), eci_to_kepler(target, g),
                             t_ref, g)


def rn_distance(roe: RelativeOrbitalElements, u) -> np.ndarray:
    """Radial-normal separation at mean argument of latitude u (rad)."""
    u = np.asarray(u, dtype=float)
    normal = roe.a_t * roe.di * np.sin(u - roe.theta)
    radial = roe.da - roe.a_t * roe.de * np.cos(u - roe.theta - roe.phi)
    return np.sqrt(normal**2 + radial**2)


def rn_distance_scalar(roe: RelativeOrbitalElements, u: float) -> float:
    """Scalar rn_distance on plain floats (hot-path helper)."""
    normal = roe.a_t * roe.di * math.sin(u - roe.theta)
    radial = roe.da - roe.a_t * roe.de * math.cos(u - roe.theta - roe.phi)
    return math.hypot(normal, radial)


def rn_distance_standard(roe: RelativeOrbitalElements, u) -> np.ndarray:
    """Variant with the conventional radial phasing cos(u - phi)."""
    u = np.asarray(u, dtype=float)
    normal = roe.a_t * roe.di * np.sin(u - roe.theta)
    radial = roe.da - roe.a_t * roe.de * np.cos(u - roe.phi)
    return np.sqrt(normal**2 + radial**2)


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
RN_GRID_POINTS = 720
RN_GOLDEN_ITERS = 40


def min_rn_distance(roe: RelativeOrbitalElements, t: float, window: float,
                    standard_radial: bool = False) -> float:
    """Minimum radial-normal separation over epochs [t, t + window).

    720-point grid in the argument of latitude followed by golden-section
    refinement around the best grid point.
    """
    if not window > 0.0:
        raise ValueError("window must be positive")
    fn = rn_distance_standard if standard_radial else rn_distance
    u_start = float(roe.u_at(t))
    span = roe.u_rate * window
    du = span / RN_GRID_POINTS
    u_grid = u_start + du * np.arange(RN_GRID_POINTS)
    vals = fn(roe, u_grid)
    k = int(np.argmin(vals))
    lo = u_grid[k] - du
    hi = u_grid[k] + du
    lo = max(lo, u_start)
    hi = min(hi, u_start + span)
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = float(fn(roe, x1))
    f2 = float(fn(roe, x2))
    for _ in range(RN_GOLDEN_ITERS):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = float(fn(roe, x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = float(fn(roe, x2))
    return float(min(vals[k], f1, f2))


RN_PROFILE_GRID = 2048


class RnWindowMinimizer:
    """Windowed minima of the radial-normal separation for one relative orbit.

    The separation depends only on the argument of latitude, so a dense
    circular grid plus range-minimum sparse tables are built once; each
    query is then an O(1) table lookup, exact window-endpoint evaluations,
    and one parabolic refinement. Agrees with min_rn_distance well inside
    its 0.1 m contract.
    """

    def __init__(self, roe: RelativeOrbitalElements, window: float):
        self.roe = roe
        self.window = window
        self.span = roe.u_rate * window
        n = RN_PROFILE_GRID
        self.n = n
        self.du = TWO_PI / n
        grid_vals = rn_distance(roe, self.du * np.arange(n))
        g2 = np.concatenate([grid_vals, grid_vals])

        if self.span >= TWO_PI:
            k = int(np.argmin(grid_vals))
            u_k = k * self.du
            self.global_min = min(
                float(grid_vals[k]),
                _parabolic_min(roe, u_k - self.du, u_k, u_k + self.du))
            return
        self.global_min = None

        # t_val[lv][i] = min of g2[i : i + 2^lv]; t_arg tracks argmins
        L = 2 * n
        w_idx = int(self.span / self.du)
        self.levels = max(w_idx + 1, 1).bit_length() - 1
        t_val = [g2]
        t_arg = [np.arange(L)]
        for lv in range(1, self.levels + 1):
            h = 1 << (lv - 1)
            prev_v, prev_a = t_val[-1], t_arg[-1]
            m_len = L - (1 << lv) + 1
            left_v, right_v = prev_v[:m_len], prev_v[h:h + m_len]
            take_left = left_v <= right_v
            t_val.append(np.where(take_left, left_v, right_v))
            t_arg.append(np.where(take_left, prev_a[:m_len], prev_a[h:h + m_len]))
        self.t_val = t_val
        self.t_arg = t_arg

    def query_scalar(self, t: float) -> float:
        """Minimum separation over [t, t + window) (scalar fast path)."""
        if self.global_min is not None:
            return self.global_min
        roe = self.roe
        du = self.du
        u0 = roe.u0 + roe.u_rate * (t - roe.t_ref)
        phase = math.fmod(u0, TWO_PI)
        if phase < 0.0:
            phase += TWO_PI
        j0 = int(math.ceil(phase / du - 1e-12))
        j1 = int(math.floor((phase + self.span) / du + 1e-12))
        width = j1 - j0 + 1
        candidates = [
            rn_distance_scalar(roe, u0),
            rn_distance_scalar(roe, u0 + self.span),
        ]
        if width >= 1:
            lv = min(max(width, 1).bit_length() - 1, self.levels)
            half = 1 << lv
            va, aa = self.t_val[lv][j0], self.t_arg[lv][j0]
            vb, ab = self.t_val[lv][j1 - half + 1], self.t_arg[lv][j1 - half + 1]
            best_val, best_arg = (float(va), int(aa)) if va <= vb else (float(vb), int(ab))
            u_star = best_arg * du
            f_lo = rn_distance_scalar(roe, u_star - du)
            f_hi = rn_distance_scalar(roe, u_star + du)
            denom = f_lo - 2.0 * best_val + f_hi
            candidates.append(best_val)
            if denom > 1e-30:
                shift = 0.5 * du * (f_lo - f_hi) / denom
                u_ref = u_star + min(max(shift, -du), du)
                u_ref = min(max(u_ref, phase), phase + self.span)
                candidates.append(rn_distance_scalar(roe, u_ref))
        return min(candidates)

    def query(self, times) -> np.ndarray:
        """Minimum separation over [t, t + window) for each epoch in times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if self.global_min is not None:
            return np.full(len(times), self.global_min)
        roe = self.roe
        du = self.du
        span = self.span
        u0s = np.asarray(roe.u_at(times), dtype=float)
        phase = np.mod(u0s, TWO_PI)
        j0 = np.ceil(phase / du - 1e-12).astype(int)
        j1 = np.floor((phase + span) / du + 1e-12).astype(int)
        width = j1 - j0 + 1
        has_grid = width >= 1
        w_safe = np.maximum(width, 1)
        lv = np.minimum(np.floor(np.log2(w_safe)).astype(int), self.levels)
        half = 1 << lv
        v_a = _table_lookup(self.t_val, lv, j0)
        a_a = _table_lookup(self.t_arg, lv, j0)
        v_b = _table_lookup(self.t_val, lv, j1 - half + 1)
        a_b = _table_lookup(self.t_arg, lv, j1 - half + 1)
        take_a = v_a <= v_b
        best_val = np.where(has_grid, np.where(take_a, v_a, v_b), np.inf)
        best_arg = np.where(take_a, a_a, a_b)

        # grid minimum refined by one parabolic step, plus exact endpoints
        u_star = best_arg * du
        f_lo = rn_distance(roe, u_star - du)
        f_hi = rn_distance(roe, u_star + du)
        denom = f_lo - 2 * best_val + f_hi
        convex = denom > 1e-30
        shift = np.where(convex,
                         0.5 * du * (f_lo - f_hi) / np.where(convex, denom, 1.0),
                         0.0)
        u_ref = np.clip(u_star + np.clip(shift, -du, du), phase, phase + span)
        refined = np.where(has_grid, rn_distance(roe, u_ref), np.inf)

        end_a = rn_distance(roe, u0s)
        end_b = rn_distance(roe, u0s + span)
        return np.minimum(np.minimum(best_val, refined), np.minimum(end_a, end_b))


def min_rn_distance_profile(roe: RelativeOrbitalElements, times: np.ndarray,
                            window: float) -> np.ndarray:
    """min_rn_distance evaluated at many window-start epochs at once."""
    return RnWindowMinimizer(roe, window).query(times)


def _table_lookup(tables, lv, idx):
    out = np.empty(len(idx), dtype=tables[0].dtype)
    for level in np.unique(lv):
        mask = lv == level
        out[mask] = tables[level][idx[mask]]
    return out


def _parabolic_min(roe: RelativeOrbitalElements, ua: float, ub: float,
                   uc: float) -> float:
    fa = float(rn_distance(roe, ua))
    fb = float(rn_distance(roe, ub))
    fc = float(rn_distance(roe, uc))
    denom = fa - 2 * fb + fc
    if abs(denom) < 1e-30:
        return fb
    shift = 0.5 * (ub - ua) * (fa - fc) / denom
    shift = float(np.clip(shift, ua - ub, uc - ub))
    return float(min(fb, rn_distance(roe, ub + shift)))


def _stumpff_c2c3(psi):
    """Stumpff functions c2(psi), c3(psi) (scalar)."""
    if psi > 1e-6:
        sq = np.sqrt(psi)
        c2 = (1.0 - np.cos(sq)) / psi
        c3 = (sq - np.sin(sq)) / (sq * psi)
    elif psi < -1e-6:
        sq = np.sqrt(-psi)
        c2 = (np.cosh(sq) - 1.0) / (-psi)
        c3 = (np.sinh(sq) - sq) / (sq * (-psi))
    else:
        c2 = 0.5 - psi / 24.0
        c3 = 1.0 / 6.0 - psi / 120.0
    return c2, c3


LAMBERT_MAX_ITER = 200
LAMBERT_TOL = 1e-11


def lambert_solve(r1: np.ndarray, r2: np.ndarray, tof: float,
                  g: GravityModel = EARTH,
                  h_ref: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Zero-revolution Lambert targeting via universal variables.

    Returns (v1, v2): departure velocity at r1 and arrival velocity at r2
    for a transfer of `tof` seconds. The transfer direction follows
    `h_ref` (angular momentum of the reference orbit, e.g. the target's);
    with h_ref None the short way is taken.
    """
    if not tof > 0.0:
        raise ValueError("time of flight must be positive")
    r1 = np.asarray(r1, dtype=float).reshape(3)
    r2 = np.asarray(r2, dtype=float).reshape(3)
    r1n = np.linalg.norm(r1)
    r2n = np.linalg.norm(r2)
    cross = cross3(r1, r2)
    cos_dnu = np.clip(r1 @ r2 / (r1n * r2n), -1.0, 1.0)
    if h_ref is not None:
        normal = np.asarray(h_ref, dtype=float)
        sin_dnu = cross @ normal / (r1n * r2n * np.linalg.norm(normal))
    else:
        sin_dnu = np.linalg.norm(cross) / (r1n * r2n)
    if np.linalg.norm(cross) / (r1n * r2n) < 1e-12:
        raise TargetingFailure("transfer plane undefined (collinear endpoints)")

    A = sin_dnu * np.sqrt(r1n * r2n / (1.0 - cos_dnu))
    if abs(A) < 1e-12:
        raise TargetingFailure("degenerate transfer geometry")

    # bisection on the universal variable psi; t(psi) is monotone
    psi_low = -4.0 * np.pi**2
    psi_high = 4.0 * np.pi**2 - 1e-10
    psi = 0.0
    y = 0.0
    for _ in range(LAMBERT_MAX_ITER):
        c2, c3 = _stumpff_c2c3(psi)
        y = r1n + r2n + A * (psi * c3 - 1.0) / np.sqrt(c2)
        if A > 0.0 and y < 0.0:
            # raise psi until y becomes positive
            psi_low = psi
            psi = 0.5 * (psi_low + psi_high)
            continue
        chi = np.sqrt(y / c2)
        t = (chi**3 * c3 + A * np.sqrt(y)) / np.sqrt(g.mu)
        if abs(t - tof) < LAMBERT_TOL * tof:
            break
        if t <= tof:
            psi_low = psi
        else:
            psi_high = psi
        psi = 0.5 * (psi_low + psi_high)
    else:
        raise TargetingFailure("Lambert iteration did not converge")

    f = 1.0 - y / r1n
    gl = A * np.sqrt(y / g.mu)
    gdot = 1.0 - y / r2n
    v1 = (r2 - f * r1) / gl
    v2 = (gdot * r2 - r1) / gl
    return v1, v2


def _continuous_true_anomaly(M_cont: float, e: float) -> float:
    """True anomaly tracking whole revolutions of a continuous mean anomaly."""
    rev = np.floor(M_cont / TWO_PI)
    E = solve_kepler(M_cont - TWO_PI * rev, e)
    nu = true_from_eccentric(E, e)
    # place nu on the same branch as E (they always lie within pi)
    nu = nu + TWO_PI * np.round((E - nu) / TWO_PI)
    return float(nu + TWO_PI * rev)


def _ya_inplane_fundamental(e: float, nu: float, J: float) -> np.ndarray:
    """Fundamental matrix of the normalized in-plane relative motion.

    State ordering [x, y, x', y'] (radial, along-track, true-anomaly
    derivatives); columns multiply the integration constants K1..K4.
    """
    rho = 1.0 + e * np.cos(nu)
    s = rho * np.sin(nu)
    c = rho * np.cos(nu)
    sp = np.cos(nu) + e * np.cos(2.0 * nu)
    cp = -(np.sin(nu) + e * np.sin(2.0 * nu))
    q = 1.0 + 1.0 / rho
    return np.array([
        [0.0, s, c, 2.0 - 3.0 * e * s * J],
        [1.0, c * q, -s * q, -3.0 * J * (1.0 + e * c * q)],
        [0.0, sp, cp, -3.0 * e * (sp * J + s / rho**2)],
        [0.0, -2.0 * s, e - 2.0 * c, -3.0 + 6.0 * e * s * J],
    ])


def ya_stm(target_el: KeplerianElements, t: float, dt: float,
           g: GravityModel = EARTH) -> np.ndarray:
    """Yamanaka-Ankersen STM for RTN relative motion about `target_el`.

    Maps a small deviation [dr_R, dr_T, dr_N, dv_R, dv_T, dv_N] at epoch
    t (seconds past the epoch of target_el) to t + dt. Reduces to the
    Clohessy-Wiltshire STM for a circular reference orbit.
    """
    if dt == 0.0:
        return np.eye(6)
    e = target_el.e
    p = target_el.a * (1.0 - e**2)
    h = np.sqrt(g.mu * p)
    k2 = h / p**2  # d(nu)/dt = k2 * rho^2

    n = target_el.mean_motion(g)
    # continuous anomalies across whole revolutions
    M0c = target_el.M + n * t
    M1c = M0c + n * dt
    nu0 = _continuous_true_anomaly(M0c, e)
    nu1 = _continuous_true_anomaly(M1c, e)

    J = k2 * dt

    B0 = _ya_inplane_fundamental(e, nu0, 0.0)
    B1 = _ya_inplane_fundamental(e, nu1, J)
    phi_ip = B1 @ np.linalg.inv(B0)

    dth = nu1 - nu0
    phi_oop = np.array([[np.cos(dth), np.sin(dth)],
                        [-np.sin(dth), np.cos(dth)]])

    # normalized-coordinate transform: pos_n = rho*pos, vel_n = d(pos_n)/dnu
    def to_normalized(nu):
        rho = 1.0 + e * np.cos(nu)
        es = e * np.sin(nu)
        up = np.array([[rho, 0.0], [-es, 1.0 / (k2 * rho)]])
        dn = np.array([[1.0 / rho, 0.0], [k2 * es, k2 * rho]])
        return up, dn

    up0, _ = to_normalized(nu0)
    _, dn1 = to_normalized(nu1)

    # assemble 6x6 in [rR rT rN vR vT vN] ordering
    idx_ip = [0, 1, 3, 4]  # x, y, xdot, ydot
    idx_oop = [2, 5]
    # in-plane normalization acts on (x, xdot) and (y, ydot) identically
    up0_full = np.zeros((4, 4))
    dn1_full = np.zeros((4, 4))
    for a_i, b_i in ((0, 2), (1, 3)):
        up0_full[a_i, a_i] = up0[0, 0]
        up0_full[b_i, a_i] = up0[1, 0]
        up0_full[b_i, b_i] = up0[1, 1]
        dn1_full[a_i, a_i] = dn1[0, 0]
        dn1_full[b_i, a_i] = dn1[1, 0]
        dn1_full[b_i, b_i] = dn1[1, 1]
    phi_ip_phys = dn1_full @ phi_ip @ up0_full

    up0_o = np.array([[up0[0, 0], 0.0], [up0[1, 0], up0[1, 1]]])
    dn1_o = np.array([[dn1[0, 0], 0.0], [dn1[1, 0], dn1[1, 1]]])
    phi_oop_phys = dn1_o @ phi_oop @ up0_o

    phi = np.zeros((6, 6))
    for a_i, ia in enumerate(idx_ip):
        for b_i, ib in enumerate(idx_ip):
            phi[ia, ib] = phi_ip_phys[a_i, b_i]
    for a_i, ia in enumerate(idx_oop):
        for b_i, ib in enumerate(idx_oop):
            phi[ia, ib] = phi_oop_phys[a_i, b_i]
    return phi
