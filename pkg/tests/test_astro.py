import numpy as np
import pytest

from rpo_forge import astro

from conftest import random_elliptic_elements


def cw_stm(n, t):
    """Clohessy-Wiltshire closed-form STM (independent oracle)."""
    c, s = np.cos(n * t), np.sin(n * t)
    prr = np.array([[4 - 3 * c, 0, 0], [6 * (s - n * t), 1, 0], [0, 0, c]])
    prv = np.array([[s / n, 2 * (1 - c) / n, 0],
                    [2 * (c - 1) / n, (4 * s - 3 * n * t) / n, 0],
                    [0, 0, s / n]])
    pvr = np.array([[3 * n * s, 0, 0], [6 * n * (c - 1), 0, 0], [0, 0, -n * s]])
    pvv = np.array([[c, 2 * s, 0], [-2 * s, 4 * c - 3, 0], [0, 0, c]])
    return np.block([[prr, prv], [pvr, pvv]])


class TestKeplerConversions:
    def test_circular_equatorial_closed_form(self, gravity):
        a = 6678136.0
        el = astro.KeplerianElements(a, 0.0, 0.0, 0.0, 0.0, 0.0)
        s = astro.kepler_to_eci(el, gravity)
        assert np.allclose(s.r, [a, 0.0, 0.0])
        assert np.allclose(s.v, [0.0, np.sqrt(gravity.mu / a), 0.0])

    def test_table_orbit_position_magnitude(self, target_elements, gravity):
        s = astro.kepler_to_eci(target_elements, gravity)
        assert np.linalg.norm(s.r) == pytest.approx(6678136.0, rel=1e-12)

    def test_specific_energy_matches_vis_viva(self, gravity):
        rng = np.random.default_rng(11)
        for _ in range(50):
            el = random_elliptic_elements(rng)
            s = astro.kepler_to_eci(el, gravity)
            energy = s.v @ s.v / 2.0 - gravity.mu / np.linalg.norm(s.r)
            assert energy == pytest.approx(-gravity.mu / (2 * el.a), rel=1e-10)

    def test_round_trip_recovers_table_elements(self, target_elements, gravity):
        s = astro.kepler_to_eci(target_elements, gravity)
        el = astro.eci_to_kepler(s, gravity)
        assert el.a == pytest.approx(6678136.0, rel=1e-9)
        assert el.i == pytest.approx(np.radians(99.8), rel=1e-9)

    def test_circular_degeneracy_convention(self, target_state, gravity):
        el = astro.eci_to_kepler(target_state, gravity)
        assert el.e < 1e-12
        assert el.argp == 0.0

    def test_round_trip_random_states(self, gravity):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            el = random_elliptic_elements(rng)
            s = astro.kepler_to_eci(el, gravity)
            s2 = astro.kepler_to_eci(astro.eci_to_kepler(s, gravity), gravity)
            worst = max(
                worst,
                np.linalg.norm(s2.r - s.r) / np.linalg.norm(s.r),
                np.linalg.norm(s2.v - s.v) / np.linalg.norm(s.v),
            )
        assert worst < 1e-8

    def test_hyperbolic_rejected(self, gravity):
        r = np.array([7e6, 0.0, 0.0])
        v = np.array([0.0, 2 * np.sqrt(gravity.mu / 7e6), 0.0])
        with pytest.raises(astro.UnsupportedOrbit):
            astro.eci_to_kepler(astro.AbsoluteState(r, v), gravity)

    def test_kepler_solver_tolerance(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            e = rng.uniform(0.0, 0.95)
            M = rng.uniform(0.0, 2 * np.pi)
            E = astro.solve_kepler(M, e)
            assert abs(E - e * np.sin(E) - M) < 1e-12


class TestPropagate:
    def test_period_return(self, target_state, target_elements, gravity):
        T = target_elements.period(gravity)
        s1 = astro.propagate(target_state, T, gravity)
        assert np.linalg.norm(s1.r - target_state.r) / np.linalg.norm(target_state.r) < 1e-9
        assert np.linalg.norm(s1.v - target_state.v) / np.linalg.norm(target_state.v) < 1e-9

    def test_zero_dt_identity(self, target_state, gravity):
        s1 = astro.propagate(target_state, 0.0, gravity)
        assert np.allclose(s1.r, target_state.r)
        assert np.allclose(s1.v, target_state.v)

    def test_half_period_antipodal(self, target_state, target_elements, gravity):
        T = target_elements.period(gravity)
        s1 = astro.propagate(target_state, T / 2, gravity)
        r2 = np.linalg.norm(target_state.r) ** 2
        assert s1.r @ target_state.r == pytest.approx(-r2, rel=1e-9)

    def test_energy_momentum_conserved(self, gravity):
        rng = np.random.default_rng(9)
        for _ in range(30):
            el = random_elliptic_elements(rng)
            s = astro.kepler_to_eci(el, gravity)
            s1 = astro.propagate(s, rng.uniform(0, 3 * el.period(gravity)), gravity)
            e0 = s.v @ s.v / 2 - gravity.mu / np.linalg.norm(s.r)
            e1 = s1.v @ s1.v / 2 - gravity.mu / np.linalg.norm(s1.r)
            h0 = np.cross(s.r, s.v)
            h1 = np.cross(s1.r, s1.v)
            assert abs(e1 - e0) / abs(e0) < 1e-10
            assert np.linalg.norm(h1 - h0) / np.linalg.norm(h0) < 1e-10

    def test_grid_propagation_matches_scalar(self, gravity):
        rng = np.random.default_rng(21)
        el = random_elliptic_elements(rng, e_max=0.5)
        s0 = astro.kepler_to_eci(el, gravity)
        dts = np.linspace(0.0, el.period(gravity), 17)
        rs, vs = astro.propagate_grid(el, dts, gravity)
        for k, dt in enumerate(dts):
            sk = astro.propagate(s0, dt, gravity)
            assert np.linalg.norm(rs[k] - sk.r) < 1e-6 * np.linalg.norm(sk.r)
            assert np.linalg.norm(vs[k] - sk.v) < 1e-6 * np.linalg.norm(sk.v)


class TestRtnFrame:
    def test_coincident_states_zero(self, target_state):
        rel = astro.eci_to_rtn_relative(target_state, target_state)
        assert np.allclose(rel.x, 0.0)

    def test_along_track_displacement(self, target_state):
        # displace 100 km along the velocity direction of a circular orbit
        vhat = target_state.v / np.linalg.norm(target_state.v)
        chaser = astro.AbsoluteState(target_state.r + 100e3 * vhat, target_state.v)
        rel = astro.eci_to_rtn_relative(chaser, target_state)
        assert rel.x[1] == pytest.approx(100e3, rel=1e-3)
        assert abs(rel.x[0]) < 1e3
        assert abs(rel.x[2]) < 1e-6

    def test_position_norm_preserved(self, gravity):
        rng = np.random.default_rng(13)
        for _ in range(100):
            el = random_elliptic_elements(rng, e_max=0.6)
            tgt = astro.kepler_to_eci(el, gravity)
            dr = rng.normal(0, 1e5, 3)
            chaser = astro.AbsoluteState(tgt.r + dr, tgt.v + rng.normal(0, 10, 3))
            rel = astro.eci_to_rtn_relative(chaser, tgt)
            assert np.linalg.norm(rel.pos) == pytest.approx(
                np.linalg.norm(dr), rel=1e-12)

    def test_zero_relative_round_trip(self, target_state):
        s = astro.rtn_relative_to_eci(astro.RelativeState(np.zeros(6)), target_state)
        assert np.allclose(s.r, target_state.r)
        assert np.allclose(s.v, target_state.v)

    def test_initial_state_separation(self, target_state):
        rel = astro.RelativeState([1.0, 100e3, 5.0, -0.02, 0.01, 0.0])
        chaser = astro.rtn_relative_to_eci(rel, target_state)
        sep = np.linalg.norm(chaser.r - target_state.r)
        assert sep == pytest.approx(100e3, rel=1e-6)

    def test_random_round_trips(self, gravity):
        rng = np.random.default_rng(17)
        for _ in range(100):
            el = random_elliptic_elements(rng, e_max=0.6)
            tgt = astro.kepler_to_eci(el, gravity)
            rel = astro.RelativeState(
                np.concatenate([rng.normal(0, 5e4, 3), rng.normal(0, 20, 3)]))
            back = astro.eci_to_rtn_relative(
                astro.rtn_relative_to_eci(rel, tgt), tgt)
            scale = max(np.max(np.abs(rel.x)), 1.0)
            assert np.max(np.abs(back.x - rel.x)) / scale < 1e-10

    def test_degenerate_target_rejected(self):
        bad = astro.AbsoluteState([7e6, 0, 0], [7e3, 0, 0])
        with pytest.raises(astro.FrameUndefined):
            astro.eci_to_rtn_relative(bad, bad)


class TestRoe:
    def test_coincident_zero(self, target_state, gravity):
        roe = astro.compute_roe(target_state, target_state, gravity)
        assert roe.da == pytest.approx(0.0, abs=1e-6)
        assert roe.de == pytest.approx(0.0, abs=1e-12)
        assert roe.di == pytest.approx(0.0, abs=1e-12)

    def test_coplanar_sma_offset(self, target_elements, target_state, gravity):
        el_c = target_elements.copy()
        el_c.a += 1000.0
        chaser = astro.kepler_to_eci(el_c, gravity)
        roe = astro.compute_roe(chaser, target_state, gravity)
        assert roe.da == pytest.approx(1000.0, abs=1e-4)
        assert roe.di == pytest.approx(0.0, abs=1e-12)

    def test_pure_inclination_offset(self, target_elements, target_state, gravity):
        el_c = target_elements.copy()
        el_c.i += np.radians(0.01)
        chaser = astro.kepler_to_eci(el_c, gravity)
        roe = astro.compute_roe(chaser, target_state, gravity)
        assert roe.di == pytest.approx(np.radians(0.01), rel=1e-6)
        assert roe.de == pytest.approx(0.0, abs=1e-9)


class TestMinRnDistance:
    def test_same_orbit_zero(self, target_elements, gravity):
        T = target_elements.period(gravity)
        roe = astro.RelativeOrbitalElements(
            6678136.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2 * np.pi / T, 0.0)
        assert astro.min_rn_distance(roe, 0.0, T) == 0.0

    def test_constant_radial_offset(self, target_elements, gravity):
        T = target_elements.period(gravity)
        roe = astro.RelativeOrbitalElements(
            6678136.0, 700.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2 * np.pi / T, 0.0)
        assert astro.min_rn_distance(roe, 0.0, T) == pytest.approx(700.0, abs=1e-9)

    def test_against_dense_sampling_oracle(self, gravity):
        T = 5431.0
        rng = np.random.default_rng(7)
        for _ in range(10):
            roe = astro.RelativeOrbitalElements(
                6678136.0, rng.uniform(-2000, 2000), rng.uniform(0, 5e-4),
                rng.uniform(0, 5e-4), rng.uniform(0, 2 * np.pi),
                rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi),
                2 * np.pi / T, 0.0)
            mine = astro.min_rn_distance(roe, 0.0, T)
            us = roe.u_at(0.0) + roe.u_rate * T * np.arange(10**6) / 10**6
            brute = float(astro.rn_distance(roe, us).min())
            assert abs(mine - brute) <= 0.1

    def test_profile_matches_scalar(self, gravity):
        T = 5431.0
        rng = np.random.default_rng(70)
        roe = astro.RelativeOrbitalElements(
            6678136.0, 300.0, 2e-4, 1e-4, 0.3, 1.1, 0.2, 2 * np.pi / T, 0.0)
        times = rng.uniform(0.0, T, 50)
        prof = astro.min_rn_distance_profile(roe, times, T)
        for t, p in zip(times, prof):
            assert abs(p - astro.min_rn_distance(roe, float(t), T)) <= 0.1


class TestLambert:
    def test_known_circular_arc(self, target_state, target_elements, gravity):
        T = target_elements.period(gravity)
        tof = 0.3 * T
        s2 = astro.propagate(target_state, tof, gravity)
        h = np.cross(target_state.r, target_state.v)
        v1, v2 = astro.lambert_solve(target_state.r, s2.r, tof, gravity, h_ref=h)
        assert np.linalg.norm(v1 - target_state.v) / np.linalg.norm(target_state.v) < 1e-8
        assert np.linalg.norm(v2 - s2.v) / np.linalg.norm(s2.v) < 1e-8

    def test_quarter_period_circular_speed(self, target_state, target_elements, gravity):
        T = target_elements.period(gravity)
        s2 = astro.propagate(target_state, T / 4, gravity)
        h = np.cross(target_state.r, target_state.v)
        v1, _ = astro.lambert_solve(target_state.r, s2.r, T / 4, gravity, h_ref=h)
        assert np.linalg.norm(v1) == pytest.approx(
            np.sqrt(gravity.mu / target_elements.a), rel=1e-6)

    def test_500_random_arcs_close(self, gravity):
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(500):
            el = random_elliptic_elements(rng, e_max=0.6)
            s1 = astro.kepler_to_eci(el, gravity)
            tof = rng.uniform(0.05, 0.92) * el.period(gravity)
            s2 = astro.propagate(s1, tof, gravity)
            h = np.cross(s1.r, s1.v)
            v1, v2 = astro.lambert_solve(s1.r, s2.r, tof, gravity, h_ref=h)
            closed = astro.propagate(astro.AbsoluteState(s1.r, v1), tof, gravity)
            worst = max(worst,
                        np.linalg.norm(closed.r - s2.r) / np.linalg.norm(s2.r),
                        np.linalg.norm(closed.v - v2) / np.linalg.norm(v2))
        assert worst < 1e-8

    def test_rejects_bad_tof(self, target_state, gravity):
        with pytest.raises(ValueError):
            astro.lambert_solve(target_state.r, target_state.r * 1.01, -5.0, gravity)

    def test_rejects_collinear(self, gravity):
        r1 = np.array([7e6, 0.0, 0.0])
        with pytest.raises(astro.TargetingFailure):
            astro.lambert_solve(r1, -r1, 1000.0, gravity)


class TestYaStm:
    def test_identity_at_zero_dt(self, target_elements, gravity):
        assert np.allclose(astro.ya_stm(target_elements, 123.0, 0.0, gravity),
                           np.eye(6))

    def test_matches_cw_at_zero_ecc(self, target_elements, gravity):
        n = target_elements.mean_motion(gravity)
        for dt in (60.0, 600.0, 5431.0, 12345.6):
            ya = astro.ya_stm(target_elements, 777.0, dt, gravity)
            cw = cw_stm(n, dt)
            assert np.max(np.abs(ya - cw)) / np.max(np.abs(cw)) < 1e-9

    def test_semigroup_property(self, gravity):
        el = astro.KeplerianElements(8000e3, 0.35, 0.6, 1.0, 2.0, 0.7)
        rng = np.random.default_rng(2)
        for _ in range(10):
            t = rng.uniform(0, el.period(gravity))
            d1 = rng.uniform(10, 3000)
            d2 = rng.uniform(10, 3000)
            p1 = astro.ya_stm(el, t, d1, gravity)
            p2 = astro.ya_stm(el, t + d1, d2, gravity)
            p12 = astro.ya_stm(el, t, d1 + d2, gravity)
            assert np.max(np.abs(p2 @ p1 - p12)) / np.max(np.abs(p12)) < 1e-10

    def test_nonlinear_differencing_table_orbit(self, target_elements, target_state,
                                                gravity):
        dx0 = np.array([100.0, 0, 0, 0, 0, 0])
        chaser = astro.rtn_relative_to_eci(astro.RelativeState(dx0), target_state)
        ch1 = astro.propagate(chaser, 60.0, gravity)
        tg1 = astro.propagate(target_state, 60.0, gravity)
        truth = astro.eci_to_rtn_relative(ch1, tg1).x
        pred = astro.ya_stm(target_elements, 0.0, 60.0, gravity) @ dx0
        assert np.linalg.norm(pred - truth) < 1e-3 * np.linalg.norm(dx0)

    def test_nonlinear_differencing_elliptic(self, gravity):
        el = astro.KeplerianElements(8000e3, 0.35, 0.6, 1.0, 2.0, 0.7)
        tgt0 = astro.kepler_to_eci(el, gravity)
        rng = np.random.default_rng(4)
        for _ in range(20):
            t0 = rng.uniform(0, el.period(gravity))
            dt = rng.uniform(10, 2000)
            tgt = astro.propagate(tgt0, t0, gravity)
            dx0 = np.concatenate([rng.normal(0, 100.0, 3), np.zeros(3)])
            ch = astro.rtn_relative_to_eci(astro.RelativeState(dx0), tgt)
            truth = astro.eci_to_rtn_relative(
                astro.propagate(ch, dt, gravity),
                astro.propagate(tgt, dt, gravity)).x
            pred = astro.ya_stm(el, t0, dt, gravity) @ dx0
            assert np.linalg.norm(pred - truth) < 1e-2 * np.linalg.norm(dx0)
