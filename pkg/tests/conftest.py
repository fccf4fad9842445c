import numpy as np
import pytest

from rpo_forge import astro


@pytest.fixture(scope="session")
def gravity():
    return astro.GravityModel(3.986e14)


@pytest.fixture(scope="session")
def target_elements():
    """Circular 300 km altitude, 99.8 deg inclination reference orbit."""
    return astro.KeplerianElements(6678136.0, 0.0, np.radians(99.8), 0.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def target_state(target_elements, gravity):
    return astro.kepler_to_eci(target_elements, gravity)


def random_elliptic_elements(rng, a_range=(6.6e6, 4.5e7), e_max=0.8):
    return astro.KeplerianElements(
        a=rng.uniform(*a_range),
        e=rng.uniform(0.0, e_max),
        i=rng.uniform(0.0, np.pi),
        raan=rng.uniform(0.0, 2 * np.pi),
        argp=rng.uniform(0.0, 2 * np.pi),
        M=rng.uniform(0.0, 2 * np.pi),
    )
