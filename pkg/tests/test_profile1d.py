import math

import numpy as np
import pytest

from glsurface.fieldcore import SQRT2, NumericalError, ValidationError
from glsurface.profile1d import (SIGMA0_CLOSED_FORM, Profile1D, build_block, check_profile, discrete_energy,
                                 interval_energy, lift_consistency, minimize_profile1d, profile_energy,
                                 sigma0_integrand, sigma0_reference, strip_violations)

# closed form of the integral of sqrt2 (1 - v^2) over [0, 1], computed independently
SIGMA0 = 2 * math.sqrt(2) / 3


def test_sigma0_reference():
    assert abs(sigma0_reference() - SIGMA0) <= 1e-6
    assert abs(sigma0_reference(5e-4) - sigma0_reference()) <= 1e-8
    assert SIGMA0_CLOSED_FORM == pytest.approx(SIGMA0, rel=1e-15)


def test_equipartition_along_tanh():
    t = np.linspace(-10, 0, 501)
    v = np.tanh(t / SQRT2)
    potential = 0.5 * (1 - v * v) ** 2
    assert np.max(np.abs(sigma0_integrand(t) - 2 * potential)) <= 1e-10


def test_discrete_energy_trivial_profiles():
    T, n = 20.0, 400
    t = np.linspace(-T, T, n + 1)
    dt = 2 * T / n
    assert discrete_energy(np.ones(n + 1), np.zeros(n + 1), 0.3, dt) == 0.0
    assert abs(discrete_energy(np.zeros(n + 1), t / SQRT2, 0.3, dt)) < 1e-12
    assert discrete_energy(np.zeros(n + 1), np.zeros(n + 1), 0.3, dt) == pytest.approx(T, rel=1e-13)


def test_profile_quarter(profile_quarter):
    p = profile_quarter
    check_profile(p)
    assert p.energy_1d == pytest.approx(profile_energy(p), rel=1e-14)
    # frozen from the converged Newton solve at default T, n
    assert p.energy_1d == pytest.approx(0.4121169, abs=2e-7)
    assert p.energy_1d < SIGMA0
    assert np.all(np.diff(p.rho) <= 1e-12)


def test_energy_decreases_with_kappa():
    values = [minimize_profile1d(k).energy_1d for k in (0.05, 0.2, 0.4, 0.6, 0.7)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_literal_form_is_available():
    lit = minimize_profile1d(0.25, form="literal")
    assert lit.form == "literal"
    assert lit.energy_1d > minimize_profile1d(0.25).energy_1d
    with pytest.raises(ValidationError):
        minimize_profile1d(0.25, form="other")


@pytest.mark.parametrize("kwargs", [dict(T=10.0), dict(n=500), dict(kappa=0.71)])
def test_profile_preconditions(kwargs):
    args = dict(kappa=0.25)
    args.update(kwargs)
    with pytest.raises(ValidationError):
        minimize_profile1d(**args)


def test_csv_round_trip(profile_quarter):
    back = Profile1D.from_csv(profile_quarter.to_csv())
    assert np.array_equal(back.rho, profile_quarter.rho) and np.array_equal(back.a, profile_quarter.a)
    assert back.energy_1d == profile_quarter.energy_1d


def test_block(profile_quarter):
    block = build_block(profile_quarter, 1 / 16, 0.25, 256)
    lo, hi = 1 / (4 * SQRT2), 3 / (4 * SQRT2)
    assert lo < block.flux0 <= hi
    assert block.flux0 == pytest.approx(1 / (2 * SQRT2), rel=0.02)
    e1d = profile_quarter.energy_1d
    assert 0.98 * e1d <= block.sigma_cell <= 1.05 * e1d
    viol = strip_violations(block.cfg, 0.25)
    assert viol["u_is_one_left"] == viol["u_is_zero_right"] == viol["a1_zero"] == viol["a_zero_left"] == 0.0
    assert viol["b_normal_right"] <= 1e-12      # curl of an exactly linear sample, up to rounding
    assert block.cell_n == 256 and block.u0.shape == (257, 257)


def test_block_preconditions(profile_quarter):
    with pytest.raises(ValidationError):
        build_block(profile_quarter, 0.3, 0.25)
    with pytest.raises(ValidationError):
        build_block(profile_quarter, 0.01, 0.25)      # delta0/eps0 beyond T


def test_lift_consistency(profile_quarter):
    coarse, fine = lift_consistency(profile_quarter, 256), lift_consistency(profile_quarter, 512)
    assert fine <= 1e-2
    assert 1.5 <= coarse / fine <= 3.0


def test_lift_of_trivial_profile_is_exact():
    t = np.linspace(-20, 20, 2001)
    p = Profile1D(t, np.ones_like(t), np.zeros_like(t), 0.3, 0.0)
    assert lift_consistency(p, 64) == 0.0
    assert interval_energy(p, -0.5, 0.5) == 0.0


def test_bogomolny_point_degenerates():
    coarse = minimize_profile1d(0.70).energy_1d
    fine = minimize_profile1d(0.70, n=8000).energy_1d
    assert coarse < 0.1 * SIGMA0
    assert abs(coarse - fine) <= 0.05 * fine


def test_nonconvergence_is_reported():
    with pytest.raises(NumericalError):
        minimize_profile1d(0.25, max_iter=1)
