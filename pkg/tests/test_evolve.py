"""Driven propagation and monodromy spectra."""

import numpy as np
import pytest
import scipy.linalg

from floqlab.bloch import assemble_fiber
from floqlab.drive import DrivingProfile, drive_integral
from floqlab.errors import ConfigError
from floqlab.evolve import (SIGN_CONVENTIONS, fiber_generator, monodromy,
                            monodromy_stack, propagate)


def wrap_angle(x):
    return np.angle(np.exp(1j * np.asarray(x)))


def test_generator_reduces_to_fiber(free1d, cos1d):
    """With A = 0 the generator is H(k) - E* I under the default convention."""
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    zero = DrivingProfile.zero(1.0, 1, 1)
    H = fiber_generator(fib, zero, 0.1, 0.7, e_star=0.25)
    np.testing.assert_allclose(H, fib.H - 0.25 * np.eye(fib.size), atol=1e-14)


def test_generator_drive_diagonal(free1d):
    """V = 0, k = 0: the drive contributes -2 eps^a A . (k+G) on the diagonal."""
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.0]))
    prof = DrivingProfile.real_harmonics(1.0, 1, 1, [(1, 1.0, 0.0)])
    eps, t = 0.1, 0.0
    H = fiber_generator(fib, prof, eps, t)
    A0 = 1.0  # cos(0)
    expect = np.diag(fib.kg[:, 0] ** 2 - 2 * eps * A0 * fib.kg[:, 0]).astype(complex)
    np.testing.assert_allclose(H, expect, atol=1e-13)


def test_generator_gauge_identity(cos1d, sine_drive):
    """H_k(t) equals the undriven fiber at k - eps^a A shifted by -|eps^a A|^2."""
    eps, t = 0.2, 1.3
    k = np.array([0.45])
    fib = assemble_fiber(cos1d.pot, cos1d.basis, k)
    H = fiber_generator(fib, sine_drive, eps, t)
    from floqlab.drive import eval_drive
    A = eval_drive(sine_drive, eps ** sine_drive.a * t)
    shifted = assemble_fiber(cos1d.pot, cos1d.basis, k - eps * A)
    np.testing.assert_allclose(
        H, shifted.H - (eps * A[0]) ** 2 * np.eye(fib.size), atol=1e-12)


def test_undriven_propagator_is_exponential(cos1d):
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    zero = DrivingProfile.zero(1.0, 1, 1)
    U = propagate(fib, zero, 0.1, 0.0, 2.7, 50)
    ref = scipy.linalg.expm(-1j * 2.7 * fib.H)
    np.testing.assert_allclose(U, ref, atol=1e-10)


def test_propagator_unitary(cos1d, sine_drive):
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    U = propagate(fib, sine_drive, 0.3, 0.0, 2.0, 400, e_star=0.8)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(fib.size), atol=1e-12)


def test_step_doubling_second_order(cos1d, sine_drive):
    """Midpoint rule: halving dt cuts the error by about four."""
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    args = dict(e_star=0.9)
    ref = propagate(fib, sine_drive, 0.5, 0.0, 2.0, 8192, **args)
    e1 = np.linalg.norm(propagate(fib, sine_drive, 0.5, 0.0, 2.0, 128, **args) - ref)
    e2 = np.linalg.norm(propagate(fib, sine_drive, 0.5, 0.0, 2.0, 256, **args) - ref)
    assert 3.4 < e1 / e2 < 4.6


def test_undriven_multipliers(cos1d):
    """A = 0: multiplier of band b is e^{-i E_b T_eps} exactly."""
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    zero = DrivingProfile.zero(1.0, 1, 1)
    eps = 0.1
    mono = monodromy(fib, zero, eps, 64)
    T_eps = 1.0 / eps
    assert mono.T_eps == T_eps
    expect = sorted(wrap_angle(E * T_eps) for E in fib.energies)
    np.testing.assert_allclose(mono.exponents, expect, atol=1e-8)
    for E in fib.energies:
        z = np.exp(-1j * wrap_angle(E * T_eps))
        assert np.min(np.abs(mono.multipliers - z)) < 1e-8


def test_resonant_period_identity(free1d):
    """V = 0, k = 0, T_eps = 2 pi n: every phase winds fully, M = I."""
    fib = assemble_fiber(free1d.pot, free1d.basis, np.array([0.0]))
    zero = DrivingProfile.zero(1.0 / (2 * np.pi), 1, 1)
    mono = monodromy(fib, zero, 1.0, 64)
    np.testing.assert_allclose(mono.M, np.eye(fib.size), atol=1e-12)


def test_driven_monodromy_refinement(cos1d, sine_drive):
    """Fixed-step answer sits within O(dt^2) of a 10x refinement."""
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    m1 = monodromy(fib, sine_drive, 0.5, 1000, e_star=0.8)
    m2 = monodromy(fib, sine_drive, 0.5, 10000, e_star=0.8)
    assert np.linalg.norm(m1.M - m2.M) < 1e-6
    np.testing.assert_allclose(m1.exponents, m2.exponents, atol=1e-6)


def test_flow_composition(cos1d, sine_drive):
    """U(0 -> T) = U(T/2 -> T) U(0 -> T/2) when the split lands on step edges."""
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    T = 2.0
    full = propagate(fib, sine_drive, 0.5, 0.0, T, 512)
    first = propagate(fib, sine_drive, 0.5, 0.0, T / 2, 256)
    second = propagate(fib, sine_drive, 0.5, T / 2, T, 256)
    np.testing.assert_allclose(second @ first, full, atol=1e-12)


def test_literal_convention_negates_undriven_exponents(cos1d):
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    zero = DrivingProfile.zero(1.0, 1, 1)
    std = monodromy(fib, zero, 0.1, 64, sign_convention="standard")
    lit = monodromy(fib, zero, 0.1, 64, sign_convention="literal")
    np.testing.assert_allclose(np.sort(wrap_angle(-std.exponents)),
                               np.sort(lit.exponents), atol=1e-12)
    with pytest.raises(ConfigError):
        monodromy(fib, zero, 0.1, 64, sign_convention="flipped")
    assert set(SIGN_CONVENTIONS) == {"standard", "literal"}


def test_monodromy_fields(cos1d, sine_drive):
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    mono = monodromy(fib, sine_drive, 0.4, 640, e_star=0.8)
    assert mono.M.shape == (fib.size, fib.size)
    np.testing.assert_allclose(np.abs(mono.multipliers), 1.0, atol=1e-10)
    assert np.all(np.diff(mono.exponents) >= 0)
    assert np.all(mono.exponents > -np.pi) and np.all(mono.exponents <= np.pi)
    np.testing.assert_allclose(mono.multipliers, np.exp(-1j * mono.exponents), atol=1e-12)
    resid = np.linalg.norm(mono.M @ mono.vectors - mono.vectors * mono.multipliers[None, :], axis=0)
    assert np.max(resid) < 1e-8
    np.testing.assert_allclose(mono.quasi_energies * mono.T_eps, mono.exponents, atol=1e-14)


def test_stack_thread_determinism(cos1d, sine_drive):
    ks = [np.array([x]) for x in (0.2, 0.3, 0.4, 0.5)]
    fibers = [assemble_fiber(cos1d.pot, cos1d.basis, k) for k in ks]
    serial = monodromy_stack(fibers, sine_drive, 0.5, 200, e_star=0.8)
    parallel = monodromy_stack(fibers, sine_drive, 0.5, 200, e_star=0.8, threads=3)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.M, b.M)
        assert np.array_equal(a.exponents, b.exponents)


def test_underresolved_steps_warn(cos1d, sine_drive):
    fib = assemble_fiber(cos1d.pot, cos1d.basis, np.array([0.3]))
    with pytest.warns(UserWarning, match="fewer than 64 steps"):
        monodromy(fib, sine_drive, 0.5, 32)
