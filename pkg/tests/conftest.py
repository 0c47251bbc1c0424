"""Shared scenario fixtures; session-scoped since band structures are costly."""

from types import SimpleNamespace

import numpy as np
import pytest

from floqlab import make_lattice, plane_wave_basis, potential_coefficients
from floqlab.bloch import band_structure, verify_separation
from floqlab.drive import DrivingProfile
from floqlab.lattice import zone_grid


@pytest.fixture(scope="session")
def cos1d():
    """1D scenario: V = cos(2pi x), 9 plane waves, transport point at k = 0.3pi."""
    lat = make_lattice([[1.0]])
    pot = potential_coefficients(
        {"family": "cosine_sum", "terms": [{"m": [1], "amplitude": 1.0}]}, lat)
    basis = plane_wave_basis(lat, 4.5 * 2 * np.pi)
    bands = band_structure(pot, basis, zone_grid(lat, [17]), 4)
    deg = verify_separation(bands, np.array([0.15 * 2 * np.pi]),
                            b_star=1, N=1, radius=1.0, classify=True)
    return SimpleNamespace(lat=lat, pot=pot, basis=basis, bands=bands, deg=deg)


@pytest.fixture(scope="session")
def free1d():
    """Free 1D bands on the same basis, with a classified point at k = 0.3pi."""
    lat = make_lattice([[1.0]])
    pot = potential_coefficients({"family": "zero"}, lat)
    basis = plane_wave_basis(lat, 4.5 * 2 * np.pi)
    bands = band_structure(pot, basis, zone_grid(lat, [17]), 4)
    deg = verify_separation(bands, np.array([0.15 * 2 * np.pi]),
                            b_star=1, N=1, radius=1.0, classify=True)
    return SimpleNamespace(lat=lat, pot=pot, basis=basis, bands=bands, deg=deg)


@pytest.fixture(scope="session")
def sine_drive():
    # zero at T = 0, so the first-order boundary term of the driven response vanishes
    return DrivingProfile.real_harmonics(1.0, 1, 1, [(1, 0.0, 0.5)])


@pytest.fixture(scope="session")
def honeycomb():
    """Three-cosine honeycomb system, 199 plane waves, Dirac pair at the zone vertex."""
    lat = make_lattice([[1.0, 0.0], [-0.5, np.sqrt(3) / 2]])
    pot = potential_coefficients(
        {"family": "cosine_sum",
         "terms": [{"m": [1, 0], "amplitude": 0.7}, {"m": [0, 1], "amplitude": 0.7},
                   {"m": [1, -1], "amplitude": 0.7}]}, lat)
    basis = plane_wave_basis(lat, 7.43 * np.linalg.norm(lat.duals[0]))
    K = (lat.duals[0] + lat.duals[1]) / 3.0
    bands = band_structure(pot, basis, zone_grid(lat, [5, 5]), 6)
    deg = verify_separation(bands, K, b_star=1, N=2, radius=0.3, classify=True)
    return SimpleNamespace(lat=lat, pot=pot, basis=basis, bands=bands, K=K, deg=deg)


@pytest.fixture(scope="session")
def honeycomb_small():
    """Coarse honeycomb variant kept small enough for per-test effective dynamics."""
    lat = make_lattice([[1.0, 0.0], [-0.5, np.sqrt(3) / 2]])
    pot = potential_coefficients(
        {"family": "cosine_sum",
         "terms": [{"m": [1, 0], "amplitude": 1.0}, {"m": [0, 1], "amplitude": 1.0},
                   {"m": [1, -1], "amplitude": 1.0}]}, lat)
    basis = plane_wave_basis(lat, 3.2 * np.linalg.norm(lat.duals[0]))
    K = (lat.duals[0] + lat.duals[1]) / 3.0
    bands = band_structure(pot, basis, zone_grid(lat, [7, 7]), 6)
    deg = verify_separation(bands, K, b_star=1, N=2, radius=0.35, classify=True)
    return SimpleNamespace(lat=lat, pot=pot, basis=basis, bands=bands, K=K, deg=deg)


@pytest.fixture(scope="session")
def square_touch():
    """Separable 2D cosine potential with a quadratic two-fold touching at M."""
    lat = make_lattice([[1.0, 0.0], [0.0, 1.0]])
    pot = potential_coefficients(
        {"family": "cosine_sum",
         "terms": [{"m": [1, 0], "amplitude": 1.0}, {"m": [0, 1], "amplitude": 1.0}]}, lat)
    basis = plane_wave_basis(lat, 4.5 * 2 * np.pi)
    M = 0.5 * (lat.duals[0] + lat.duals[1])
    bands = band_structure(pot, basis, zone_grid(lat, [5, 5]), 6)
    deg = verify_separation(bands, M, b_star=2, N=2, radius=0.5, classify=True)
    return SimpleNamespace(lat=lat, pot=pot, basis=basis, bands=bands, M=M, deg=deg)
