"""Fourier drives: evaluation, exact integrals, and validation."""

import numpy as np
import pytest

from floqlab.drive import (DrivingProfile, drive_integral,
                           drive_quadratic_integral, eval_drive)
from floqlab.errors import ConfigError


def test_single_cosine_2d():
    prof = DrivingProfile.real_harmonics(2 * np.pi, 1, 2, [(1, (1.0, 0.0), (0.0, 0.0))])
    ts = np.linspace(0, 4 * np.pi, 50)
    vals = eval_drive(prof, ts)
    np.testing.assert_allclose(vals[:, 0], np.cos(ts), atol=1e-12)
    np.testing.assert_allclose(vals[:, 1], 0.0, atol=1e-14)


def test_zero_profile():
    prof = DrivingProfile.zero(1.0, 1, 1)
    assert prof.is_zero
    assert prof.max_harmonic == 0
    np.testing.assert_allclose(eval_drive(prof, np.linspace(0, 3, 7)), 0.0)
    np.testing.assert_allclose(drive_integral(prof, 0.8), [0.0])


def test_circular_polarization():
    """cos in x and sin in y trace the unit circle."""
    prof = DrivingProfile.real_harmonics(2 * np.pi, 1, 2, [(1, (1.0, 0.0), (0.0, 1.0))])
    ts = np.linspace(0, 2 * np.pi, 13)
    vals = eval_drive(prof, ts)
    np.testing.assert_allclose(vals, np.column_stack([np.cos(ts), np.sin(ts)]), atol=1e-12)
    hs = drive_integral(prof, ts)
    np.testing.assert_allclose(hs, np.column_stack([np.sin(ts), 1 - np.cos(ts)]), atol=1e-12)


def test_integral_closes_over_period():
    prof = DrivingProfile.real_harmonics(
        1.7, 2, 1, [(1, 0.4, -0.3), (2, 0.0, 0.25), (5, -0.1, 0.05)])
    np.testing.assert_allclose(drive_integral(prof, 1.7), [0.0], atol=1e-14)
    np.testing.assert_allclose(drive_integral(prof, 3 * 1.7), [0.0], atol=1e-13)


def test_integral_differentiates_back():
    """Central difference of h recovers A."""
    prof = DrivingProfile.real_harmonics(1.0, 1, 1, [(1, 0.3, 0.5), (3, -0.2, 0.1)])
    delta = 1e-4
    for T in (0.13, 0.49, 0.81):
        fd = (drive_integral(prof, T + delta) - drive_integral(prof, T - delta)) / (2 * delta)
        np.testing.assert_allclose(fd, eval_drive(prof, T), atol=1e-6)


def test_periodicity():
    prof = DrivingProfile.real_harmonics(0.9, 1, 1, [(2, 0.7, -0.4)])
    ts = np.linspace(0, 0.9, 11)
    np.testing.assert_allclose(eval_drive(prof, ts + 0.9), eval_drive(prof, ts), atol=1e-12)


def test_invalid_exponent_and_mean():
    with pytest.raises(ConfigError):
        DrivingProfile(1.0, {}, 3, 1)
    with pytest.raises(ConfigError):
        DrivingProfile(1.0, {0: [0.5]}, 1, 1)
    with pytest.raises(ConfigError):
        # conjugate partner missing
        DrivingProfile(1.0, {1: [0.5 + 0.2j]}, 1, 1)


def test_driven_period_scaling():
    prof = DrivingProfile.real_harmonics(1.0, 1, 1, [(1, 0.0, 0.5)])
    np.testing.assert_allclose(prof.driven_period(0.1), 10.0)
    prof2 = DrivingProfile.real_harmonics(1.0, 2, 1, [(1, 0.0, 0.5)])
    np.testing.assert_allclose(prof2.driven_period(0.1), 100.0)


def test_max_harmonic():
    prof = DrivingProfile.real_harmonics(1.0, 1, 1, [(1, 0.1, 0.0), (4, 0.0, 0.2)])
    assert prof.max_harmonic == 4


def test_quadratic_integral_closed_form():
    """Q(T) for A = cos(T), D = 0.7: integral of 0.7 cos^2 is 0.7 (T/2 + sin 2T / 4)."""
    prof = DrivingProfile.real_harmonics(2 * np.pi, 1, 1, [(1, 1.0, 0.0)])
    D = np.array([[0.7]])
    for T in (0.3, 1.7, 2 * np.pi, 9.0):
        expect = 0.7 * (T / 2 + np.sin(2 * T) / 4)
        np.testing.assert_allclose(drive_quadratic_integral(prof, D, T), expect, atol=1e-12)


def test_quadratic_integral_cross_terms():
    """Two-harmonic drive checked against dense trapezoid quadrature."""
    prof = DrivingProfile.real_harmonics(1.3, 1, 2,
                                         [(1, (0.4, 0.0), (0.0, -0.2)),
                                          (2, (0.0, 0.3), (0.1, 0.0))])
    D = np.array([[1.2, 0.3], [0.3, 0.8]])
    T = 2.9
    ts = np.linspace(0.0, T, 20001)
    vals = eval_drive(prof, ts)
    integrand = np.einsum("ti,ij,tj->t", vals, D, vals)
    expect = np.trapezoid(integrand, ts)
    np.testing.assert_allclose(drive_quadratic_integral(prof, D, T), expect, atol=1e-7)
