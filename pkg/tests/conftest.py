import numpy as np
import pytest

from glsurface.fieldcore import Configuration, LinkField, make_params, rectangle, torus
from glsurface.profile1d import minimize_profile1d


@pytest.fixture(scope="session")
def profile_quarter():
    """1D profile at kappa = 1/4 (default T, n)."""
    return minimize_profile1d(0.25)


def random_configuration(rng, n=12, *, torus_mode=True, twist=0.0, eps=0.7, kappa=0.3, amplitude=0.8):
    """Generic smallish configuration with O(1) link phases."""
    grid = torus(n) if torus_mode else rectangle(n, 1.0, 1.0)
    shape = grid.shape
    u = amplitude * (rng.random(shape) + 0.1) * np.exp(2j * np.pi * rng.random(shape))
    params = make_params(eps, kappa, kappa * twist)
    scale = 1.0 / (params.alpha * grid.h)
    a = LinkField(scale * rng.normal(size=shape), scale * rng.normal(size=shape), twist)
    return Configuration(u, a, grid, params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def smooth_field(n, eps=0.5, kappa=0.3):
    """Fixed smooth periodic test field on the unit torus."""
    grid = torus(n)
    X1, X2 = grid.coordinates()
    amp = 0.6 + 0.3 * np.sin(2 * np.pi * X1) * np.cos(2 * np.pi * X2)
    u = amp * np.exp(1j * (2 * np.pi * X2 + 0.5 * np.sin(2 * np.pi * X1)))
    a = LinkField(0.3 * np.cos(2 * np.pi * X2), 0.2 * np.sin(2 * np.pi * X1) + 0.1 * np.cos(2 * np.pi * (X1 + X2)))
    return Configuration(u, a, grid, make_params(eps, kappa))


def directional_check(cfg, rng, step=1e-5):
    """(analytic, central-difference) directional derivative along a random direction."""
    from glsurface.energy import energy_and_gradient, energy_value
    shape = cfg.grid.shape
    du = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    da1, da2 = rng.normal(size=shape), rng.normal(size=shape)
    _, gu, ga = energy_and_gradient(cfg)
    analytic = float(np.sum(gu.real * du.real + gu.imag * du.imag) + np.sum(ga.a1 * da1) + np.sum(ga.a2 * da2))

    def shifted(t):
        a = LinkField(cfg.a.a1 + t * da1, cfg.a.a2 + t * da2, cfg.a.twist_c)
        return energy_value(cfg.replace(u=cfg.u + t * du, a=a))

    return analytic, (shifted(step) - shifted(-step)) / (2 * step)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
