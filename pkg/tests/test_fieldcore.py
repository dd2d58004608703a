import math

import numpy as np
import pytest

from conftest import random_configuration
from glsurface.fieldcore import (SQRT2, LinkField, ValidationError, admissible_epsilons, bogomolny,
                                 covariant_diff, discrete_curl, gauge_transform, make_params, nondimensionalize,
                                 quantization_number, read_snapshot, rectangle, snapshot_bytes,
                                 snapshot_from_bytes, snapshot_from_text, snapshot_text, supercurrent, torus,
                                 uniform_configuration, write_snapshot, Configuration)


# --- parameters

def test_alpha_values():
    assert make_params(1.0, 0.5, 0.0).alpha == 2.0
    assert make_params(0.1, 0.25, 0.1).alpha == pytest.approx(400.0, rel=1e-14)


@pytest.mark.parametrize("args", [(0.1, 0.8, 0.0), (0.0, 0.3, 0.0), (0.1, 0.3, -1.0), (0.1, 0.3, 0.3)])
def test_params_rejected(args):
    with pytest.raises(ValidationError):
        make_params(*args)


def test_nondimensionalize():
    assert nondimensionalize(0.5, 20.0, 0.1).epsilon == pytest.approx(0.1)
    assert nondimensionalize(0.25, 4.0, 0.0).epsilon == 1.0
    with pytest.raises(ValidationError):
        nondimensionalize(0.5, 20.0, 0.4)


def test_admissible_epsilon_m100():
    kappa = 0.25
    b_ext = kappa / (2 * SQRT2)
    hint = (SQRT2 * math.pi * 100) ** -0.5 * 1.001
    eps, m = admissible_epsilons(kappa, b_ext, hint)
    assert m == 100
    assert eps == pytest.approx(0.047442, abs=5e-7)
    q = quantization_number(make_params(eps, kappa, b_ext))
    assert abs(q - round(q)) <= 1e-9


def test_admissible_grid_is_monotone():
    kappa, b_ext = 0.25, 0.25 * 0.25 / SQRT2
    ms = [admissible_epsilons(kappa, b_ext, h)[1] for h in np.linspace(0.03, 0.031, 40)]
    steps = np.diff(ms)
    assert np.all((steps == 0) | (steps == -1))


def test_admissible_needs_flux():
    with pytest.raises(ValidationError):
        admissible_epsilons(0.25, 0.0, 0.05)


# --- grids

def test_rectangle_dims_must_fit():
    with pytest.raises(ValidationError):
        rectangle(10, 1.05, 1.0)
    g = rectangle(8, 1.0, 2.0)
    assert g.shape == (9, 17)
    assert g.plaquette_shape == (8, 16)
    assert g.axes()[0][0] == -0.5


# --- covariant differences

def test_constant_field_has_zero_derivative():
    grid = torus(16)
    cfg = uniform_configuration(grid, make_params(0.5, 0.3))
    assert np.max(np.abs(covariant_diff(cfg, 1))) == 0.0
    assert np.max(np.abs(covariant_diff(cfg, 2))) == 0.0


def test_plane_wave():
    n = 256
    grid = torus(n)
    _, x2 = grid.coordinates()
    cfg = Configuration(np.exp(2j * np.pi * x2), LinkField.zeros(grid), grid, make_params(0.5, 0.3))
    h = grid.h
    d2 = np.abs(covariant_diff(cfg, 2))
    assert np.allclose(d2, abs(np.exp(2j * np.pi * h) - 1) / h, atol=1e-10)
    assert abs(d2.mean() - 2 * np.pi) < 1e-3
    j1, j2 = supercurrent(cfg)
    assert np.max(np.abs(j1)) < 1e-12
    assert np.allclose(j2, 2 * np.pi, atol=1e-3)


def test_gauge_covariance_of_modulus(rng):
    for torus_mode in (True, False):
        cfg = random_configuration(rng, 10, torus_mode=torus_mode, twist=0.2 if torus_mode else 0.0)
        phi = rng.normal(size=cfg.grid.shape)
        other = gauge_transform(cfg, phi)
        for mu in (1, 2):
            assert np.max(np.abs(np.abs(covariant_diff(cfg, mu)) - np.abs(covariant_diff(other, mu)))) <= 1e-12


def test_bogomolny_zero_and_shape_check():
    z = np.zeros((3, 3))
    assert np.all(bogomolny(z, z) == 0)
    with pytest.raises(ValidationError):
        bogomolny(z, np.zeros((3, 4)))


def test_bogomolny_on_real_profile():
    # real u = rho(x1), A = (0, A2(x1)): |D2 u - i D1 u|^2 = (rho' + alpha A2 rho)^2 to O(h)
    grid = rectangle(400, 1.0, 1.0)
    params = make_params(0.5, 0.3)
    x1, _ = grid.axes()
    rho = 0.5 * (1 - np.tanh(3 * x1))
    a2 = 0.2 * np.sin(2 * x1)
    ny = grid.shape[1]
    cfg = Configuration(np.repeat(rho[:, None], ny, 1).astype(complex),
                        LinkField(np.zeros(grid.shape), np.repeat(a2[:, None], ny, 1)), grid, params)
    d1 = covariant_diff(cfg, 1)[:, :-1]
    d2 = covariant_diff(cfg, 2)[:-1, :]
    lhs = np.abs(bogomolny(d1, d2)) ** 2
    drho = -1.5 / np.cosh(3 * x1) ** 2
    rhs = (drho + params.alpha * a2 * rho) ** 2
    assert np.max(np.abs(lhs - rhs[:-1, None])) < 5e-2 * np.max(rhs)


# --- curl

def test_linear_potential_curl():
    grid = rectangle(16, 1.0, 1.0)
    X1, _ = grid.coordinates()
    B = discrete_curl(LinkField(np.zeros(grid.shape), X1.copy()), grid)
    assert np.allclose(B, 1.0, atol=1e-13)


def test_curl_of_gradient(rng):
    for grid in (torus(12), rectangle(12, 1.0, 1.0)):
        cfg = uniform_configuration(grid, make_params(0.5, 0.3))
        cfg = gauge_transform(cfg, rng.normal(size=grid.shape))
        assert np.max(np.abs(discrete_curl(cfg.a, grid))) <= 1e-12 * np.max(np.abs(cfg.a.a1))


def test_twist_background_curl():
    grid = torus(10)
    B = discrete_curl(LinkField.zeros(grid, 0.3), grid)
    assert np.allclose(B, 0.3, rtol=0, atol=1e-15)


def test_current_bounded_by_gradient(rng):
    cfg = random_configuration(rng, 14, amplitude=0.9)
    rho = np.clip(np.abs(cfg.u), 0, 1)
    cfg = cfg.replace(u=rho * np.exp(1j * np.angle(cfg.u)))
    j1, j2 = supercurrent(cfg)
    d1, d2 = covariant_diff(cfg, 1), covariant_diff(cfg, 2)
    assert np.all(np.abs(j1) <= np.abs(d1) + 1e-12)
    assert np.all(np.abs(j2) <= np.abs(d2) + 1e-12)


def test_real_field_has_no_current():
    grid = torus(8)
    cfg = uniform_configuration(grid, make_params(0.5, 0.3), 0.7)
    j1, j2 = supercurrent(cfg)
    assert np.all(j1 == 0) and np.all(j2 == 0)


def test_gauge_identity_and_constant(rng):
    cfg = random_configuration(rng, 8)
    same = gauge_transform(cfg, np.zeros(cfg.grid.shape))
    assert np.array_equal(same.u, cfg.u)
    rotated = gauge_transform(cfg, np.full(cfg.grid.shape, 0.7))
    assert np.array_equal(rotated.a.a1, cfg.a.a1) and np.array_equal(rotated.a.a2, cfg.a.a2)
    assert np.allclose(rotated.u, cfg.u * np.exp(0.7j))
    with pytest.raises(ValidationError):
        gauge_transform(cfg, np.zeros((3, 3)))


# --- snapshots

def test_snapshot_round_trip(rng, tmp_path):
    for torus_mode in (True, False):
        cfg = random_configuration(rng, 6, torus_mode=torus_mode, twist=0.1 if torus_mode else 0.0)
        back = snapshot_from_bytes(snapshot_bytes(cfg))
        assert np.array_equal(back.u, cfg.u) and np.array_equal(back.a.a2, cfg.a.a2)
        assert back.params == cfg.params and back.grid == cfg.grid
        text = snapshot_from_text(snapshot_text(cfg))
        assert np.array_equal(text.u, cfg.u) and text.a.twist_c == cfg.a.twist_c
        path = tmp_path / "f.gl2d"
        write_snapshot(cfg, path)
        assert snapshot_bytes(read_snapshot(path)) == snapshot_bytes(cfg)


def test_snapshot_bad_magic():
    with pytest.raises(ValidationError):
        snapshot_from_bytes(b"NOPE" + bytes(100))


def test_shape_mismatch_rejected():
    grid = torus(4)
    with pytest.raises(ValidationError):
        Configuration(np.ones((3, 3), complex), LinkField.zeros(grid), grid, make_params(0.5, 0.3))
    rect = rectangle(4)
    with pytest.raises(ValidationError):
        Configuration(np.ones(rect.shape, complex), LinkField.zeros(rect, 0.1), rect, make_params(0.5, 0.3))
