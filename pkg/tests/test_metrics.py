import numpy as np
import pytest

from rpo_forge import astro, metrics


@pytest.fixture
def cfg():
    return metrics.SafetyConfig(d_min=500.0, pas_window=5400.0)


class TestObservabilityEta:
    def test_unchanged_profile_is_one(self):
        y = np.array([0.0, 1.0, 0.0])
        assert metrics.observability_eta(y, y) == 1.0

    def test_reversed_profile_is_minus_one(self):
        y = np.array([0.0, 1.0, 0.0])
        assert metrics.observability_eta(-y, y) == -1.0

    def test_perpendicular_is_zero(self):
        assert metrics.observability_eta([1, 0, 0], [0, 0, 1]) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.normal(size=3)
            a /= np.linalg.norm(a)
            b = rng.normal(size=3)
            b /= np.linalg.norm(b)
            assert metrics.observability_eta(a, b) == metrics.observability_eta(b, a)

    def test_non_unit_rejected(self):
        with pytest.raises(metrics.ContractViolation):
            metrics.observability_eta([2.0, 0, 0], [1.0, 0, 0])

    def test_clamped_range(self):
        eps = 4e-10
        y = np.array([1.0 + eps, 0.0, 0.0])
        assert metrics.observability_eta(y, y) == 1.0


class TestPenalties:
    def test_zero_distance(self, cfg):
        assert metrics.pws_penalty(0.0, cfg) == 1.0
        assert metrics.pas_penalty(0.0, cfg) == 1.0

    def test_koz_radius_value(self, cfg):
        assert metrics.pws_penalty(cfg.d_min, cfg) == pytest.approx(np.exp(-4.5))
        assert metrics.pas_penalty(cfg.d_min, cfg) == pytest.approx(np.exp(-4.5))

    def test_sigma_point(self, cfg):
        assert metrics.pws_penalty(cfg.sigma, cfg) == pytest.approx(np.exp(-0.5))

    def test_double_radius(self, cfg):
        assert metrics.pas_penalty(2 * cfg.d_min, cfg) == pytest.approx(np.exp(-18.0))

    def test_monotone_decreasing_bounded(self, cfg):
        d = np.linspace(0.0, 5000.0, 200)
        v = metrics.pws_penalty(d, cfg)
        assert np.all(np.diff(v) < 0)
        assert np.all(v > 0.0)
        assert np.all(v <= 1.0)

    def test_sigma_is_d_min_third(self):
        c = metrics.SafetyConfig(d_min=900.0, pas_window=1.0)
        assert c.sigma == 300.0

    def test_negative_distance_rejected(self, cfg):
        with pytest.raises(metrics.ContractViolation):
            metrics.pws_penalty(-1.0, cfg)


class TestPasMinDistance:
    def test_last_node_coincident_orbit(self, target_state, gravity, cfg):
        d = metrics.pas_min_distance(6, 6, target_state, target_state, cfg, gravity)
        assert d == pytest.approx(0.0, abs=1e-6)

    def test_node_one_radial_offset(self, target_elements, target_state, gravity, cfg):
        el_c = target_elements.copy()
        el_c.a += 700.0
        chaser = astro.kepler_to_eci(el_c, gravity)
        d = metrics.pas_min_distance(1, 6, chaser, target_state, cfg, gravity)
        assert d == pytest.approx(700.0, abs=0.5)

    def test_last_node_along_track_hold(self, target_state, gravity, cfg):
        # chaser 1 km ahead on the same circular orbit: distance holds
        rel = astro.RelativeState([0.0, 1000.0, 0.0, 0.0, 0.0, 0.0])
        chaser = astro.rtn_relative_to_eci(rel, target_state)
        d = metrics.pas_min_distance(6, 6, chaser, target_state, cfg, gravity)
        assert d == pytest.approx(1000.0, rel=0.02)

    def test_node_index_validation(self, target_state, cfg, gravity):
        with pytest.raises(ValueError):
            metrics.pas_min_distance(0, 6, target_state, target_state, cfg, gravity)


class TestAccumulate:
    @staticmethod
    def _profile(times, eta, pws, pas):
        n = len(times)
        return metrics.SegmentProfile(
            times=np.asarray(times, dtype=float),
            eta=np.asarray(eta, dtype=float),
            zeta_pws=np.asarray(pws, dtype=float),
            zeta_pas=np.asarray(pas, dtype=float),
            rel_pos=np.zeros((n, 3)) + 1e4,
            pas_min_dist=np.full(n, 1e4),
        )

    def test_uniform_eta_sum(self):
        n = 1000
        p = self._profile(np.arange(n), np.ones(n), np.zeros(n), np.zeros(n))
        g_obs, g_safety = metrics.accumulate_objective_terms([p])
        assert g_obs == 1000.0
        assert g_safety == 0.0

    def test_far_distances_negligible(self, cfg):
        n = 500
        z = metrics.pws_penalty(np.full(n, 10 * cfg.d_min), cfg)
        p = self._profile(np.arange(n), np.zeros(n), z, z)
        _, g_safety = metrics.accumulate_objective_terms([p])
        assert g_safety < n * np.exp(-400.0)

    def test_hand_computed_two_segments(self):
        p1 = self._profile([0, 1], [0.5, -0.25], [0.1, 0.2], [0.0, 0.3])
        p2 = self._profile([2, 3], [1.0, 0.0], [0.05, 0.0], [0.01, 0.02])
        g_obs, g_safety = metrics.accumulate_objective_terms([p1, p2])
        assert g_obs == pytest.approx(0.5 - 0.25 + 1.0)
        assert g_safety == pytest.approx(0.1 + 0.2 + 0.3 + 0.05 + 0.01 + 0.02)

    def test_partition_additive(self):
        rng = np.random.default_rng(8)
        eta = rng.uniform(-1, 1, 100)
        pws = rng.uniform(0, 1, 100)
        pas = rng.uniform(0, 1, 100)
        whole = self._profile(np.arange(100), eta, pws, pas)
        left = self._profile(np.arange(60), eta[:60], pws[:60], pas[:60])
        right = self._profile(np.arange(60, 100), eta[60:], pws[60:], pas[60:])
        assert metrics.accumulate_objective_terms([whole]) == \
            metrics.accumulate_objective_terms([left, right])
