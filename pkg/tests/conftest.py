import numpy as np
import pytest

from powderdem.core import MaterialParams, fit_lognormal


@pytest.fixture
def material():
    return MaterialParams()


@pytest.fixture
def reference_psd():
    return fit_lognormal(20e-6, 34e-6, 44e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: seed of every desk-scale pour used by the slow tests
DESK_SEED = 1


@pytest.fixture(scope="session")
def desk_pile():
    """``desk_pile(gamma, scale=1.0, **material)`` -> (FunnelResult, AOR in degrees), cached per session.

    ``gamma`` is in mJ/m^2. ``scale`` shrinks the funnel geometry and the
    particle sizes together (see ``FunnelConfig.scaled``); the contact
    stiffness is then scaled by ``scale**2`` so that overlaps stay the same
    fraction of the radius.
    """
    from powderdem.analysis import measure_pile_aor
    from powderdem.scenario import FunnelConfig, run_funnel

    cache = {}

    def get(gamma, scale=1.0, **changes):
        key = (gamma, scale, tuple(sorted(changes.items())))
        if key not in cache:
            config = FunnelConfig.preset("desk")
            dist = fit_lognormal(20e-6, 34e-6, 44e-6)
            material = MaterialParams(surface_energy=gamma * 1e-3).replace(**changes)
            if scale != 1.0:
                config, dist = config.scaled(scale), dist.scaled(scale)
                material = material.replace(stiffness=material.stiffness * scale**2)
            result = run_funnel(config, dist, material, seed=DESK_SEED)
            cache[key] = (result, measure_pile_aor(result.snapshot).angle)
        return cache[key]

    return get
