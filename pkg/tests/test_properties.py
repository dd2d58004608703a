"""Invariants as hypothesis properties."""
import math

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_configuration
from glsurface.energy import energy_value, psi, total_energy, well_inequality_margin
from glsurface.fieldcore import (SQRT2, LinkField, admissible_epsilons, discrete_curl, gauge_transform, make_params,
                                 quantization_number, snapshot_bytes, snapshot_from_bytes, torus)
from glsurface.polygeom import PolyhedralSet

seeds = st.integers(0, 2 ** 32 - 1)
unit = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, torus_mode=st.booleans())
def test_energy_is_gauge_invariant(seed, torus_mode):
    rng = np.random.default_rng(seed)
    cfg = random_configuration(rng, 8, torus_mode=torus_mode, twist=0.2 if torus_mode else 0.0)
    phi = rng.uniform(-10, 10, cfg.grid.shape)
    before, after = energy_value(cfg), energy_value(gauge_transform(cfg, phi))
    assert abs(after - before) <= 1e-12 * before


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_field_is_gauge_invariant(seed):
    rng = np.random.default_rng(seed)
    cfg = random_configuration(rng, 8, twist=0.1)
    other = gauge_transform(cfg, rng.normal(size=cfg.grid.shape))
    B0, B1 = discrete_curl(cfg.a, cfg.grid), discrete_curl(other.a, other.grid)
    assert np.max(np.abs(B1 - B0)) <= 1e-9 * max(1.0, np.max(np.abs(cfg.a.a1)))


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_energy_terms_are_nonnegative(seed):
    cfg = random_configuration(np.random.default_rng(seed), 6)
    e = total_energy(cfg)
    assert e.grad_sym >= 0 and e.grad_bogo >= 0 and e.well >= 0


@given(rho=unit, B=st.floats(-2.0, 2.0, allow_nan=False))
def test_well_inequality(rho, B):
    assert well_inequality_margin(rho, B) >= -1e-14
    assert 0.0 <= float(psi(rho)) <= 2.0


@given(values=arrays(np.float64, 64, elements=unit))
def test_psi_vectorized(values):
    out = psi(values)
    assert np.all((out >= 0) & (out <= 2))


@settings(max_examples=30, deadline=None)
@given(kappa=st.floats(0.05, 0.7), flux=st.floats(0.05, 0.9), hint=st.floats(0.005, 0.2))
def test_snapped_epsilon_is_quantized(kappa, flux, hint):
    b_ext = kappa * flux / SQRT2
    eps, m = admissible_epsilons(kappa, b_ext, hint)
    q = quantization_number(make_params(eps, kappa, b_ext))
    assert m >= 1 and abs(q - m) <= 1e-9 * max(1.0, m)


@settings(max_examples=15, deadline=None)
@given(seed=seeds, torus_mode=st.booleans())
def test_snapshot_round_trip_is_exact(seed, torus_mode):
    cfg = random_configuration(np.random.default_rng(seed), 5, torus_mode=torus_mode,
                               twist=0.05 if torus_mode else 0.0)
    data = snapshot_bytes(cfg)
    assert snapshot_bytes(snapshot_from_bytes(data)) == data


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(0.05, 0.45), y0=st.floats(0.05, 0.45), w=st.floats(0.1, 0.45), h=st.floats(0.1, 0.45),
       px=unit, py=unit)
def test_rectangle_signed_distance(x0, y0, w, h, px, py):
    E = PolyhedralSet(([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]],))
    p = np.array([px, py]) % 1.0
    best = math.inf         # minus the signed distance, minimized over the nine torus images
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            q = p + (dx, dy)
            gx = max(x0 - q[0], 0.0, q[0] - x0 - w)
            gy = max(y0 - q[1], 0.0, q[1] - y0 - h)
            if gx == 0.0 and gy == 0.0:
                inner = min(q[0] - x0, x0 + w - q[0], q[1] - y0, y0 + h - q[1])
                best = min(best, -inner)
            else:
                best = min(best, math.hypot(gx, gy))
    assert abs(float(E.signed_distance(p[None, :])[0]) + best) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-1.0, 1.0), n=st.integers(4, 24))
def test_uniform_twist_curl(c, n):
    grid = torus(n)
    B = discrete_curl(LinkField.zeros(grid, c), grid)
    assert np.all(B == c)
