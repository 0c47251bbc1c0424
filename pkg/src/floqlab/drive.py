"""Time-periodic forcing profiles A(T) and their exact antiderivatives h(T).

A drive is a finite Fourier series

    A(T) = Σ_{m≠0} a_m e^{2πi m T / T_per},   a_{-m} = conj(a_m),

so A is real with zero mean by construction, integrals are exact term by term,
and h(T_per) = 0 holds analytically rather than to quadrature accuracy. The
scaling exponent a ∈ {1, 2} says how the slow time enters the driven fiber:
the physical drive is ε^a A(ε^a t).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


class DrivingProfile:
    """Finite Fourier drive with period T_per and scaling exponent a.

    coeffs maps nonzero integer harmonics m to complex n-vectors a_m. The
    conjugate pairing a_{-m} = conj(a_m) is validated at construction; a
    missing partner is an error rather than being filled in silently.
    """

    def __init__(self, T_per: float, coeffs: dict, a: int, dim: int):
        if T_per <= 0:
            raise ConfigError("T_per must be positive")
        if a not in (1, 2):
            raise ConfigError("scaling exponent a must be 1 or 2")
        if dim not in (1, 2):
            raise ConfigError("drive dimension must be 1 or 2")
        clean = {}
        for m, vec in coeffs.items():
            m = int(m)
            if m == 0:
                raise ConfigError("a_0 must be absent: drives have zero mean exactly")
            v = np.atleast_1d(np.asarray(vec, dtype=complex))
            if v.shape != (dim,):
                raise ConfigError(f"coefficient a_{m} has shape {v.shape}, expected ({dim},)")
            clean[m] = v
        for m, v in clean.items():
            w = clean.get(-m)
            if w is None or np.max(np.abs(np.conj(v) - w)) > 1e-12 * (1 + np.max(np.abs(v))):
                raise ConfigError(f"drive is not real: a_{-m} must equal conj(a_{m})")
        self.T_per = float(T_per)
        self.a = int(a)
        self.dim = int(dim)
        self.coeffs = dict(sorted(clean.items()))
        self.omega = 2 * np.pi / self.T_per

    @classmethod
    def real_harmonics(cls, T_per: float, a: int, dim: int, terms) -> "DrivingProfile":
        """Build from real cos/sin amplitudes.

        terms: list of (m, cos_amp, sin_amp) with m > 0 and n-vector amplitudes,
        meaning  cos_amp · cos(2πmT/T_per) + sin_amp · sin(2πmT/T_per).
        """
        coeffs: dict = {}
        for m, ca, sa in terms:
            m = int(m)
            if m <= 0:
                raise ConfigError("real_harmonics wants m > 0")
            ca = np.atleast_1d(np.asarray(ca, dtype=float))
            sa = np.atleast_1d(np.asarray(sa, dtype=float))
            coeffs[m] = coeffs.get(m, 0) + (ca - 1j * sa) / 2.0
            coeffs[-m] = coeffs.get(-m, 0) + (ca + 1j * sa) / 2.0
        return cls(T_per, coeffs, a, dim)

    @classmethod
    def zero(cls, T_per: float, a: int, dim: int) -> "DrivingProfile":
        return cls(T_per, {}, a, dim)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def max_harmonic(self) -> int:
        return max((abs(m) for m in self.coeffs), default=0)

    def driven_period(self, eps: float) -> float:
        """The period in physical time: T_per^ε = T_per ε^{-a}."""
        if eps <= 0:
            raise ConfigError("eps must be positive")
        return self.T_per * eps ** (-self.a)

    def __repr__(self):
        return f"DrivingProfile(T_per={self.T_per}, a={self.a}, harmonics={sorted(self.coeffs)})"


def _reduced(T, T_per):
    # A and h are both T_per-periodic (h because the mean vanishes), so reduce
    # first; this also makes h(T_per) land on exactly 0.
    return np.mod(T, T_per)


def eval_drive(profile: DrivingProfile, T) -> np.ndarray:
    """A(T) as a real n-vector; T may be a scalar or an array (leading axes)."""
    Tr = _reduced(np.asarray(T, dtype=float), profile.T_per)
    out = np.zeros(Tr.shape + (profile.dim,), dtype=complex)
    for m, a_m in profile.coeffs.items():
        out += np.exp(1j * profile.omega * m * Tr)[..., None] * a_m
    if out.size and np.max(np.abs(out.imag)) > 1e-10:
        raise ConfigError("drive evaluated to a complex vector; coefficients are inconsistent")
    return out.real


def drive_integral(profile: DrivingProfile, T) -> np.ndarray:
    """h(T) = ∫_0^T A, term-by-term exact; h(T_per) = 0 identically.

    Accepts scalar or array T like :func:`eval_drive`.
    """
    Tr = _reduced(np.asarray(T, dtype=float), profile.T_per)
    out = np.zeros(Tr.shape + (profile.dim,), dtype=complex)
    for m, a_m in profile.coeffs.items():
        iw = 1j * profile.omega * m
        out += ((np.exp(iw * Tr) - 1.0) / iw)[..., None] * a_m
    return out.real


def drive_quadratic_integral(profile: DrivingProfile, D: np.ndarray, T: float) -> float:
    """Q(T) = ∫_0^T A(T')ᵀ D A(T') dT' for a symmetric matrix D, term by term.

    Cross terms with m + m' = 0 integrate to a linear-in-T part, everything
    else to oscillatory boundary terms; all closed form, no quadrature.
    """
    Tr = _reduced(T, profile.T_per)
    wraps = np.floor(T / profile.T_per) if profile.T_per > 0 else 0
    D = np.asarray(D, dtype=float)
    total = 0.0 + 0.0j
    linear = 0.0 + 0.0j
    for m, a_m in profile.coeffs.items():
        for mp, a_mp in profile.coeffs.items():
            quad = a_m @ (D @ a_mp)
            s = m + mp
            if s == 0:
                linear += quad
            else:
                iw = 1j * profile.omega * s
                total += quad * (np.exp(iw * Tr) - 1.0) / iw
    # the linear part accumulates over full periods too
    total += linear * (Tr + wraps * profile.T_per)
    if abs(total.imag) > 1e-9 * (1 + abs(total.real)):
        raise ConfigError("quadratic drive integral came out complex; check D symmetry")
    return float(total.real)
