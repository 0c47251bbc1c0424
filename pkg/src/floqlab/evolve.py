"""Unitary time stepping of driven fibers and the monodromy eigendecomposition.

The driven fiber generator at quasi-momentum k is

    H_k(t) = s (H(k) - E* I) + diag(-2 ε^a A(ε^a t) · (k + G)),

where s = +1 under the default sign convention and s = -1 under the 'literal'
alternative (the two differ in the sign of the undriven part only; the drive
diagonal is common to both). E* is subtracted up front so quasi-energy arcs
can be stated around zero.

Propagation uses the exponential midpoint rule, U <- exp(-i H(t_mid) Δt) U,
with each exponential taken through a Hermitian eigendecomposition. Every step
is exactly unitary, so unitarity of the monodromy is a construction invariant
rather than an accuracy statement; the O(Δt²) error shows up only in the
multipliers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bloch import FiberSystem
from .drive import DrivingProfile, eval_drive
from .errors import ConfigError, NumericError

MONODROMY_UNITARITY_TOL = 1e-10
MULTIPLIER_TOL = 1e-10
EIGENVECTOR_RESIDUAL_TOL = 1e-8
STEPS_PER_PERIOD_MIN = 64

SIGN_CONVENTIONS = {"standard": 1.0, "literal": -1.0}


def convention_sign(sign_convention: str) -> float:
    try:
        return SIGN_CONVENTIONS[sign_convention]
    except KeyError:
        raise ConfigError(f"sign_convention must be one of {sorted(SIGN_CONVENTIONS)}") from None


def fiber_generator(fib: FiberSystem, profile: DrivingProfile, eps: float, t: float,
                    e_star: float = 0.0, sign_convention: str = "standard") -> np.ndarray:
    """The Hermitian generator H_k(t) at physical time t."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    s = convention_sign(sign_convention)
    scale = eps ** profile.a
    A = eval_drive(profile, scale * t)
    d = -2.0 * scale * (fib.kg @ A)
    H = s * (fib.H - e_star * np.eye(fib.size))
    return H + np.diag(d).astype(complex)


def _expm_unitary(H: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) for Hermitian H via eigendecomposition; exactly unitary."""
    w, Q = np.linalg.eigh(H)
    phase = np.exp(-1j * w * dt)
    return (Q * phase[None, :]) @ Q.conj().T


def propagate(fib: FiberSystem, profile: DrivingProfile, eps: float,
              t0: float, t1: float, n_steps: int,
              e_star: float = 0.0, sign_convention: str = "standard") -> np.ndarray:
    """Flow U(t0 -> t1) of the driven fiber, exponential midpoint rule.

    With no drive the generator is autonomous and a single exponential is the
    exact flow; that path is taken regardless of n_steps so undriven results
    carry no time-stepping error at all.
    """
    if n_steps < 1:
        raise ConfigError("n_steps must be at least 1")
    s = convention_sign(sign_convention)
    base = s * (fib.H - e_star * np.eye(fib.size))
    if profile.is_zero:
        return _expm_unitary(base, t1 - t0)
    scale = eps ** profile.a
    dt = (t1 - t0) / n_steps
    mids = t0 + dt * (np.arange(n_steps) + 0.5)
    A_mid = eval_drive(profile, scale * mids)          # (n_steps, dim)
    diag_mid = -2.0 * scale * (A_mid @ fib.kg.T)       # (n_steps, M)
    U = np.eye(fib.size, dtype=complex)
    H = base.copy()
    idx = np.diag_indices(fib.size)
    base_diag = np.real(base[idx]).copy()
    for j in range(n_steps):
        H[idx] = base_diag + diag_mid[j]
        U = _expm_unitary(H, dt) @ U
    return U


@dataclass
class Monodromy:
    """One-period flow of a driven fiber with its multiplier decomposition.

    multipliers z_j = e^{-iθ_j} lie on the unit circle; exponents θ_j ∈ (-π, π]
    are sorted ascending. vectors holds the orthonormal eigenvectors as
    columns, aligned with the exponent order. quasi-energies ν_j = θ_j / T_eps
    are derived, not stored.
    """

    k: np.ndarray
    M: np.ndarray
    multipliers: np.ndarray
    exponents: np.ndarray
    vectors: np.ndarray
    T_eps: float
    fiber: FiberSystem
    e_star: float
    sign_convention: str

    @property
    def quasi_energies(self) -> np.ndarray:
        return self.exponents / self.T_eps

    def in_arc_mask(self, arc) -> np.ndarray:
        return arc.contains(self.exponents)


def _sorted_unitary_eigensystem(M: np.ndarray):
    """Eigendecomposition of a (numerically) unitary matrix via complex Schur.

    For a normal matrix the complex Schur form is diagonal and the Schur
    vectors are exactly orthonormal, which is the property the spectral
    projectors downstream rely on. Exponents are sorted ascending with exact
    ties broken lexicographically on the eigenvector components.
    """
    T, Z = scipy.linalg.schur(M, output="complex")
    offdiag = np.max(np.abs(T - np.diag(np.diag(T)))) if T.shape[0] > 1 else 0.0
    if offdiag > 1e-8:
        raise NumericError(f"monodromy departs from normality by {offdiag:.3e}; cannot trust multipliers")
    z = np.diag(T).copy()
    theta = -np.angle(z)
    # map [-π, π) to (-π, π]
    theta[theta <= -np.pi] += 2 * np.pi
    order = np.argsort(theta, kind="stable")
    # resolve exact ties deterministically by the first differing vector component
    theta_sorted = theta[order]
    j = 0
    order = list(order)
    while j < len(order):
        j2 = j
        while j2 + 1 < len(order) and theta_sorted[j2 + 1] == theta_sorted[j]:
            j2 += 1
        if j2 > j:
            block = order[j:j2 + 1]
            block.sort(key=lambda i: tuple(x for c in Z[:, i] for x in (c.real, c.imag)))
            order[j:j2 + 1] = block
        j = j2 + 1
    order = np.array(order)
    return z[order], theta[order], Z[:, order]


def monodromy(fib: FiberSystem, profile: DrivingProfile, eps: float, n_steps: int,
              e_star: float = 0.0, sign_convention: str = "standard") -> Monodromy:
    """Propagate over one driven period and eigendecompose the flow."""
    T_eps = profile.driven_period(eps)
    if not profile.is_zero and n_steps < STEPS_PER_PERIOD_MIN * max(profile.max_harmonic, 1):
        warnings.warn(
            f"n_steps={n_steps} gives fewer than {STEPS_PER_PERIOD_MIN} steps per period of the "
            f"fastest drive harmonic (m={profile.max_harmonic}); multipliers may be underresolved"
        )
    M = propagate(fib, profile, eps, 0.0, T_eps, n_steps,
                  e_star=e_star, sign_convention=sign_convention)
    unit = np.linalg.norm(M.conj().T @ M - np.eye(fib.size))
    if unit >= MONODROMY_UNITARITY_TOL:
        raise NumericError(f"monodromy unitarity defect {unit:.3e} at k={fib.k}")
    z, theta, V = _sorted_unitary_eigensystem(M)
    if np.max(np.abs(np.abs(z) - 1.0)) >= MULTIPLIER_TOL:
        raise NumericError("Floquet multipliers left the unit circle")
    resid = np.linalg.norm(M @ V - V * z[None, :], axis=0)
    if np.max(resid) >= EIGENVECTOR_RESIDUAL_TOL:
        raise NumericError(f"multiplier eigenvector residual {np.max(resid):.3e}")
    return Monodromy(k=fib.k, M=M, multipliers=z, exponents=theta, vectors=V,
                     T_eps=T_eps, fiber=fib, e_star=e_star, sign_convention=sign_convention)


def monodromy_stack(fibers, profile, eps, n_steps, e_star=0.0, sign_convention="standard", threads=1):
    """Monodromies for a list of fibers, optionally with a thread pool.

    Results are returned in fiber order regardless of completion order, so the
    output is deterministic for any thread count.
    """
    if threads <= 1 or len(fibers) <= 1:
        return [monodromy(f, profile, eps, n_steps, e_star, sign_convention) for f in fibers]
    from concurrent.futures import ThreadPoolExecutor

    def work(f):
        return monodromy(f, profile, eps, n_steps, e_star, sign_convention)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, fibers))
