import numpy as np
import pytest

from conftest import directional_check, random_configuration, smooth_field
from glsurface.energy import (bogomolny_identity_residual, double_well, energy_and_gradient, energy_value,
                              integrated_bogomolny_gap, meissner_indicator, modica_mortola, psi, total_energy,
                              well_inequality_margin)
from glsurface.fieldcore import (SQRT2, Configuration, LinkField, gauge_transform, make_params, rectangle, torus,
                                 uniform_configuration)


def test_wells_have_zero_energy():
    grid = torus(16)
    assert total_energy(uniform_configuration(grid, make_params(0.3, 0.25))).total == 0.0
    normal = uniform_configuration(grid, make_params(0.3, 0.25, 0.25 / SQRT2 * 0.999), 0.0, 1 / SQRT2)
    assert abs(total_energy(normal).total) < 1e-28


def test_empty_state_costs_half():
    grid = torus(16)
    cfg = uniform_configuration(grid, make_params(1.0, 0.25), 0.0)
    e = total_energy(cfg)
    assert e.total == pytest.approx(0.5, rel=1e-14)
    assert e.total == pytest.approx(e.grad_sym + e.grad_bogo + e.well, rel=1e-14)


def test_region_energies_add_up(rng):
    cfg = random_configuration(rng, 12)
    mask = np.zeros(cfg.grid.shape, dtype=bool)
    mask[:5] = True
    parts = total_energy(cfg, mask).total + total_energy(cfg, ~mask).total
    assert parts == pytest.approx(total_energy(cfg).total, rel=1e-12)


def test_gradient_zero_at_superconducting_well():
    cfg = uniform_configuration(torus(12), make_params(0.4, 0.3))
    _, gu, ga = energy_and_gradient(cfg)
    assert np.max(np.abs(gu)) == 0.0 and np.max(np.abs(ga.a1)) == 0.0 and np.max(np.abs(ga.a2)) == 0.0


@pytest.mark.parametrize("torus_mode", [True, False])
def test_gradient_matches_finite_difference(rng, torus_mode):
    for _ in range(3):
        cfg = random_configuration(rng, 9, torus_mode=torus_mode, twist=0.15 if torus_mode else 0.0)
        analytic, fd = directional_check(cfg, rng)
        assert abs(analytic - fd) <= 1e-6 * abs(analytic)


def test_gradient_is_gauge_equivariant(rng):
    cfg = random_configuration(rng, 10, twist=0.1)
    phi = rng.normal(size=cfg.grid.shape)
    _, gu, ga = energy_and_gradient(cfg)
    _, gu2, ga2 = energy_and_gradient(gauge_transform(cfg, phi))
    scale = np.max(np.abs(gu))
    assert np.max(np.abs(gu2 - gu * np.exp(1j * phi))) <= 1e-10 * scale
    assert np.max(np.abs(ga2.a1 - ga.a1)) <= 1e-10 * np.max(np.abs(ga.a1))


def test_energy_value_agrees_with_breakdown(rng):
    cfg = random_configuration(rng, 8)
    assert energy_value(cfg) == pytest.approx(total_energy(cfg).total, rel=1e-13)


def test_bogomolny_residual_vanishes_on_constants():
    cfg = uniform_configuration(torus(16), make_params(0.5, 0.3), 0.8)
    assert bogomolny_identity_residual(cfg) == 0.0


def test_bogomolny_refinement_and_integral():
    r1, r2 = (bogomolny_identity_residual(smooth_field(n)) for n in (128, 256))
    assert 1.5 <= r1 / r2 <= 3.0
    g1, g2 = (abs(integrated_bogomolny_gap(smooth_field(n))) for n in (128, 256))
    assert 1.5 <= g1 / g2 <= 3.0


def test_double_well_values():
    assert double_well(1.0) == 0.0 and double_well(0.0) == 0.0
    assert double_well(1 / SQRT2) == pytest.approx(1 / 8)
    grid = torus(10)
    rho = np.full(grid.shape, 1 / SQRT2)
    assert modica_mortola(rho, 0.2, grid) == pytest.approx(1 / (8 * 0.2))
    assert modica_mortola(np.ones(grid.shape), 0.2, grid) == 0.0


def test_psi_range():
    rho = np.linspace(0, 1, 1001)
    values = psi(rho)
    assert values.min() >= 0.0 and values.max() <= 2.0
    assert psi(0.0) == 2.0 and psi(1.0) == 0.0


def test_well_margin_examples():
    assert well_inequality_margin(1.0, 0.0) == 0.0
    assert abs(well_inequality_margin(0.0, 1 / SQRT2)) < 1e-16
    rng = np.random.default_rng(5)
    assert well_inequality_margin(rng.random(10_000), rng.uniform(-2, 2, 10_000)).min() >= -1e-14


def test_meissner_indicator_trivial_cases():
    grid = torus(12)
    cfg = uniform_configuration(grid, make_params(0.5, 0.3))
    m = meissner_indicator(cfg, np.ones(grid.shape))
    assert m.lhs == 0.0 and m.gradient_part == 0.0 and m.boundary_part == 0.0
    rect = rectangle(12)
    cfg = uniform_configuration(rect, make_params(0.5, 0.3), 0.5)
    assert meissner_indicator(cfg, np.ones(rect.shape)).lhs == 0.0


def test_rectangle_energy_excludes_nothing_twice():
    grid = rectangle(8, 1.0, 1.0)
    cfg = Configuration(np.zeros(grid.shape, complex), LinkField.zeros(grid), grid, make_params(1.0, 0.25))
    assert total_energy(cfg).total == pytest.approx(0.5, rel=1e-14)
