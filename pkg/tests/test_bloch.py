"""Fiber Hamiltonians, band structures, degeneracy classification, projectors."""

from types import SimpleNamespace

import numpy as np
import pytest

import floqlab.bloch
from floqlab import make_lattice, plane_wave_basis, potential_coefficients
from floqlab.bloch import (DegeneracyInfo, SeparationReport, assemble_fiber,
                           band_structure, dirac_fit, fit_quadratic_touching,
                           group_velocity, hessian, riesz_projector,
                           verify_separation)
from floqlab.errors import (ConfigError, ContourCollisionError,
                            DegeneracyDetectionError)
from floqlab.lattice import zone_grid


def test_free_fiber_diagonal(free1d):
    """With V = 0 the fiber is diagonal with entries (k + 2 pi m)^2."""
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.3]))
    expect = np.sort([(0.3 + 2 * np.pi * m) ** 2 for m in range(-4, 5)])
    np.testing.assert_allclose(fib.energies, expect, atol=1e-12)


def test_free_origin_degenerate_pair(free1d):
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.0]))
    np.testing.assert_allclose(fib.energies[1], 4 * np.pi ** 2, rtol=1e-14)
    np.testing.assert_allclose(fib.energies[2], 4 * np.pi ** 2, rtol=1e-14)
    assert fib.energies[0] < 1e-12


def test_band_folding_oracle(free1d):
    """Every free band value equals a sorted kinetic energy |k + G|^2."""
    for j, k in enumerate(free1d.bands.grid.points):
        kin = np.sort([(k[0] + 2 * np.pi * m) ** 2 for m in range(-4, 5)])
        np.testing.assert_allclose(free1d.bands.energies[j], kin[:4], atol=1e-12)


def test_cosine_bands_against_doubled_cutoff(cos1d):
    """33 fibers of the cosine scenario, refreshed on a twice-richer basis."""
    lat = cos1d.lat
    big = plane_wave_basis(lat, 9.0 * 2 * np.pi)
    ks = np.linspace(-np.pi, np.pi, 33)
    for k in ks:
        small = assemble_fiber(cos1d.pot, cos1d.basis, np.array([k])).energies[:4]
        ref = assemble_fiber(cos1d.pot, big, np.array([k])).energies[:4]
        np.testing.assert_allclose(small, ref, atol=1e-8)


def test_zone_edge_gap_weak_coupling():
    """First gap of V = 2 cos(2 pi x) at the zone edge is 2|Vhat| + O(|Vhat|^2)."""
    lat = make_lattice([[1.0]])
    pot = potential_coefficients(
        {"family": "cosine_sum", "terms": [{"m": [1], "amplitude": 2.0}]}, lat)
    basis = plane_wave_basis(lat, 4.5 * 2 * np.pi)
    fib = assemble_fiber(pot, basis, np.array([np.pi]))
    gap = fib.energies[1] - fib.energies[0]
    assert abs(gap - 2.0) < 0.1


def test_noncritical_point_free(free1d):
    deg = free1d.deg
    assert isinstance(deg, DegeneracyInfo)
    assert deg.classification == "noncritical"
    np.testing.assert_allclose(deg.c, [-2 * 0.15 * 2 * np.pi], atol=1e-9)
    np.testing.assert_allclose(deg.E_star, (0.15 * 2 * np.pi) ** 2, rtol=1e-12)
    assert deg.margin > 0


def test_free_pair_at_origin_is_conical(free1d):
    """The folded |k -+ 2 pi| pair at k = 0 splits linearly with slope 4 pi."""
    deg = verify_separation(free1d.bands, np.array([0.0]), b_star=2, N=2, radius=1.0)
    assert deg.classification == "dirac"
    np.testing.assert_allclose(deg.E_star, 4 * np.pi ** 2, rtol=1e-12)
    np.testing.assert_allclose(deg.v_D, 4 * np.pi, rtol=1e-9)


def test_separation_failure_names_offender():
    """A hostile window around a free 2D crossing yields a report, not an info."""
    lat = make_lattice([[1.0, 0.0], [0.0, 1.0]])
    pot = potential_coefficients({"family": "zero"}, lat)
    basis = plane_wave_basis(lat, 2.5 * 2 * np.pi)
    bands = band_structure(pot, basis, zone_grid(lat, [9, 9]), 3)
    k_star = np.array([2.793, 2.793])
    rep = verify_separation(bands, k_star, b_star=1, N=1, radius=1.6)
    assert isinstance(rep, SeparationReport)
    assert not rep.ok
    assert rep.offending_band == 2
    np.testing.assert_allclose(rep.offending_k, [1.3962634, 2.7925268], atol=1e-6)
    assert "band 2 dips" in rep.message
    # shrinking the scan radius below the crossing distance restores isolation
    deg = verify_separation(bands, k_star, b_star=1, N=1, radius=0.5)
    assert isinstance(deg, DegeneracyInfo)


def test_margin_shrinks_with_radius(free1d):
    k = np.array([0.15 * 2 * np.pi])
    margins = [verify_separation(free1d.bands, k, b_star=1, N=1, radius=r,
                                 classify=False).margin
               for r in (0.25, 0.5, 1.0)]
    assert margins[0] >= margins[1] >= margins[2] > 0


def test_cluster_size_mismatch_raises(free1d):
    with pytest.raises(DegeneracyDetectionError, match="size 1"):
        verify_separation(free1d.bands, np.array([0.15 * 2 * np.pi]),
                          b_star=1, N=2, radius=0.5)


def test_group_velocity_free():
    """Free dispersion k^2 has dE/dk = 2k and transport coefficient -2k."""
    lat = make_lattice([[1.0]])
    pot = potential_coefficients({"family": "zero"}, lat)
    basis = plane_wave_basis(lat, 4.5 * 2 * np.pi)
    fib = assemble_fiber(pot, basis, np.array([0.3]))
    c_raw, c = group_velocity(fib, 1)
    np.testing.assert_allclose(c_raw, [0.6], atol=1e-12)
    np.testing.assert_allclose(c, [-0.6], atol=1e-12)
    fib0 = assemble_fiber(pot, basis, np.array([0.0]))
    c_raw0, c0 = group_velocity(fib0, 1)
    np.testing.assert_allclose(c_raw0, [0.0], atol=1e-12)


def test_group_velocity_cosine_vs_difference(cos1d):
    k = np.array([0.15 * 2 * np.pi])
    fib = assemble_fiber(cos1d.pot, cos1d.basis, k)
    c_raw, c = group_velocity(fib, 1)
    h = 2e-4
    Ep = assemble_fiber(cos1d.pot, cos1d.basis, k + h).energies[0]
    Em = assemble_fiber(cos1d.pot, cos1d.basis, k - h).energies[0]
    np.testing.assert_allclose(c_raw, [(Ep - Em) / (2 * h)], atol=1e-6)
    np.testing.assert_allclose(c, -c_raw, atol=0.0)


def test_group_velocity_degenerate_raises(free1d):
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.0]))
    with pytest.raises(ConfigError):
        group_velocity(fib, 2)


def test_hessian_free_quadratic(free1d):
    """Central differences are exact on the parabola, in 1D and 2D."""
    H1 = hessian(free1d.bands, np.array([0.15 * 2 * np.pi]), 1)
    np.testing.assert_allclose(H1, [[2.0]], atol=1e-8)
    lat = make_lattice([[1.0, 0.0], [0.0, 1.0]])
    pot = potential_coefficients({"family": "zero"}, lat)
    basis = plane_wave_basis(lat, 2.5 * 2 * np.pi)
    bands = band_structure(pot, basis, zone_grid(lat, [5, 5]), 2)
    H2 = hessian(bands, np.array([0.2, -0.3]), 1)
    np.testing.assert_allclose(H2, 2 * np.eye(2), atol=1e-7)


def test_hessian_cosine_richardson(cos1d):
    """Second difference of the cosine ground band, checked by extrapolation."""
    H = hessian(cos1d.bands, np.array([0.0]), 1)

    def second_diff(h):
        E0 = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.0])).energies[0]
        Ep = assemble_fiber(cos1d.pot, cos1d.basis, np.array([h])).energies[0]
        Em = assemble_fiber(cos1d.pot, cos1d.basis, np.array([-h])).energies[0]
        return (Ep - 2 * E0 + Em) / h ** 2

    d1 = second_diff(2e-3)
    d2 = second_diff(1e-3)
    richardson = (4 * d2 - d1) / 3
    np.testing.assert_allclose(H[0, 0], richardson, atol=1e-5)
    np.testing.assert_allclose(H[0, 0], 1.99743635, rtol=1e-6)


def test_classify_cosine_critical_point(cos1d):
    deg = verify_separation(cos1d.bands, np.array([0.0]), b_star=1, N=1, radius=0.5)
    assert deg.classification == "quadratic_simple"
    np.testing.assert_allclose(deg.hessian[0, 0], 1.99743635, rtol=1e-6)


def test_dirac_fit_synthetic_cone(monkeypatch):
    """Exact linear test data: the fit must return the planted slope."""
    lat_like = SimpleNamespace(dim=2, duals=np.array([[2 * np.pi, 0.0], [0.0, 2 * np.pi]]))
    fake_bands = SimpleNamespace(potential=None,
                                 basis=SimpleNamespace(lattice=lat_like))

    def fake_fiber(pot, basis, k):
        r = np.linalg.norm(np.atleast_1d(k))
        return SimpleNamespace(energies=np.array([-0.8 * r, 0.8 * r]))

    monkeypatch.setattr(floqlab.bloch, "assemble_fiber", fake_fiber)
    fit = dirac_fit(fake_bands, np.zeros(2), 1, radius=0.1)
    np.testing.assert_allclose(fit.v_D, 0.8, rtol=1e-12)
    assert fit.anisotropy < 1e-12
    assert fit.residual < 1e-12
    np.testing.assert_allclose(fit.splitting_order, 1.0, atol=1e-10)


def test_dirac_fit_quadratic_correction(monkeypatch):
    """Richardson across r and r/2 cancels the linear-in-radius bias exactly."""
    lat_like = SimpleNamespace(dim=2, duals=np.array([[2 * np.pi, 0.0], [0.0, 2 * np.pi]]))
    fake_bands = SimpleNamespace(potential=None,
                                 basis=SimpleNamespace(lattice=lat_like))

    def fake_fiber(pot, basis, k):
        r = np.linalg.norm(np.atleast_1d(k))
        s = 0.8 * r + 0.1 * r ** 2
        return SimpleNamespace(energies=np.array([-s, s]))

    monkeypatch.setattr(floqlab.bloch, "assemble_fiber", fake_fiber)
    fit = dirac_fit(fake_bands, np.zeros(2), 1, radius=0.1)
    np.testing.assert_allclose(fit.v_D, 0.8, rtol=1e-12)
    assert fit.residual > 0
    assert 1.0 < fit.splitting_order < 1.2


def test_honeycomb_vertex_is_dirac(honeycomb):
    deg = honeycomb.deg
    assert deg.classification == "dirac"
    assert deg.N == 2
    np.testing.assert_allclose(deg.v_D, 4.216446298411442, rtol=1e-6)


def test_riesz_rank_one(free1d):
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.3]))
    P = riesz_projector(fib, 0.09, 1.0)
    v = fib.vectors[:, 0]
    np.testing.assert_allclose(P, np.outer(v, v.conj()), atol=1e-8)
    np.testing.assert_allclose(np.trace(P).real, 1.0, atol=1e-10)


def test_riesz_empty_contour(free1d):
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.3]))
    P = riesz_projector(fib, 15.0, 1.0)
    assert np.linalg.norm(P) < 1e-12


def test_riesz_two_band_cluster(cos1d):
    """Contour around the zone-edge pair reproduces the rank-2 eigenprojector."""
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([np.pi]))
    E_star = 0.5 * (fib.energies[0] + fib.energies[1])
    radius = 0.5 * (fib.energies[2] - E_star)
    P = riesz_projector(fib, E_star, radius)
    V = fib.vectors[:, :2]
    np.testing.assert_allclose(P, V @ V.conj().T, atol=1e-8)


def test_riesz_contour_collision(free1d):
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.0]))
    with pytest.raises(ContourCollisionError, match="band 1"):
        riesz_projector(fib, 2 * np.pi ** 2, 2 * np.pi ** 2)


def test_quadratic_touching_fit(square_touch):
    deg = square_touch.deg
    assert deg.classification == "quadratic_double"
    alpha, gamma, beta = deg.abg
    np.testing.assert_allclose(alpha, 0.999919775864119, rtol=1e-6)
    np.testing.assert_allclose(gamma, 37.12631682777691, rtol=1e-6)
    assert beta < 1e-8
    # fits at an explicit radius agree with the classifier's default
    again = fit_quadratic_touching(square_touch.bands, square_touch.M, 2)
    np.testing.assert_allclose(again, deg.abg, rtol=1e-9)
