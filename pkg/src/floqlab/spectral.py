"""Arc projectors of unitary monodromies, the discrete direct-integral state
representation, the fiberwise spectral measure, and the centering diagnostic.

An arc is written in exponent coordinates: I = (g_lo, g_hi) denotes
{e^{-iy} : y ∈ (g_lo, g_hi)} with endpoints in (-π, π]. g_lo > g_hi means the
arc wraps through π; g_lo == g_hi means the full circle minus that one point.
Boundaries are open. An exponent within BOUNDARY_SNAP of an endpoint is
assigned to the interior side (toward the arc midpoint) with a warning; the
statements being tested never place spectrum on arc endpoints.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatchError
from .lattice import BrillouinGrid

BOUNDARY_SNAP = 1e-12
PROJECTOR_TOL = 1e-10


def wrap_angle(y):
    """Map angles to (-π, π]."""
    out = np.mod(np.asarray(y, dtype=float) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.shape else float(out)


@dataclass(frozen=True)
class Arc:
    """Open arc (g_lo, g_hi) on the unit circle in exponent coordinates."""

    lo: float
    hi: float

    def __post_init__(self):
        for v in (self.lo, self.hi):
            if not (-np.pi < v <= np.pi + 1e-15):
                raise ConfigError(f"arc endpoint {v} outside (-π, π]")

    @property
    def wraps(self) -> bool:
        return self.lo >= self.hi

    @property
    def arclength(self) -> float:
        if self.lo == self.hi:
            return 2 * np.pi
        return (self.hi - self.lo) if not self.wraps else 2 * np.pi - (self.lo - self.hi)

    @property
    def midpoint(self) -> float:
        mid = 0.5 * (self.lo + self.hi)
        if self.wraps:
            mid = wrap_angle(mid + np.pi)
        return float(mid)

    def complement(self) -> "Arc":
        """The complementary open arc (shares the two boundary points)."""
        return Arc(self.hi, self.lo)

    def contains(self, theta) -> np.ndarray:
        """Open-arc membership with boundary snapping toward the midpoint."""
        theta = np.asarray(theta, dtype=float)
        if self.lo == self.hi:
            inside = np.abs(wrap_angle(theta - self.lo)) > 0
        elif not self.wraps:
            inside = (theta > self.lo) & (theta < self.hi)
        else:
            inside = (theta > self.lo) | (theta < self.hi)
        near = (np.abs(wrap_angle(theta - self.lo)) < BOUNDARY_SNAP) | \
               (np.abs(wrap_angle(theta - self.hi)) < BOUNDARY_SNAP)
        if np.any(near):
            warnings.warn("exponent within 1e-12 of an arc boundary; assigning it to the arc interior")
            inside = inside | near
        return inside

    @classmethod
    def symmetric(cls, g: float) -> "Arc":
        """The arc (-g, g) around multiplier 1; g = π gives the circle minus {-1}."""
        if not (0 < g <= np.pi):
            raise ConfigError("symmetric arc needs 0 < g ≤ π")
        if g == np.pi:
            return cls(np.pi, np.pi)
        return cls(-g, g)


def arc_projector(mono, arc: Arc) -> np.ndarray:
    """P = Σ_{θ_j ∈ I} v_j v_j*; Hermitian idempotent by orthonormality."""
    mask = arc.contains(mono.exponents)
    V = mono.vectors[:, mask]
    return V @ V.conj().T


class StateFiberRep:
    """A state as band coefficients over a quasi-momentum quadrature grid.

    coeffs[j, b] is the coefficient of band b at grid point j, taken in the
    eigenbasis of the undriven H(k_j); band_vectors[j] holds those eigenvectors
    as columns so conversions to the plane-wave and monodromy bases are exact.
    ||u||² = Σ_j w_j Σ_b |c_jb|².
    """

    def __init__(self, grid: BrillouinGrid, coeffs, band_energies, band_vectors):
        self.grid = grid
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.band_energies = np.asarray(band_energies, dtype=float)
        self.band_vectors = np.asarray(band_vectors, dtype=complex)
        n_k = len(grid)
        if self.coeffs.shape[0] != n_k or self.band_energies.shape != self.coeffs.shape:
            raise ConfigError("state arrays are inconsistent with the grid")
        if self.band_vectors.shape[0] != n_k or self.band_vectors.shape[2] != self.coeffs.shape[1]:
            raise ConfigError("band vector slab does not match the coefficient array")

    @property
    def n_bands(self) -> int:
        return self.coeffs.shape[1]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights[:, None] * np.abs(self.coeffs) ** 2)))

    def inner(self, other: "StateFiberRep") -> complex:
        self._check_grid(other)
        return complex(np.sum(self.grid.weights[:, None] * np.conj(self.coeffs) * other.coeffs))

    def copy_with(self, coeffs) -> "StateFiberRep":
        return StateFiberRep(self.grid, coeffs, self.band_energies, self.band_vectors)

    def _check_grid(self, other):
        if not self.grid.same_grid(other.grid):
            raise GridMismatchError("states live on different quasi-momentum grids")

    def __add__(self, other):
        self._check_grid(other)
        return self.copy_with(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_grid(other)
        return self.copy_with(self.coeffs - other.coeffs)

    def scaled(self, factor) -> "StateFiberRep":
        return self.copy_with(self.coeffs * factor)

    def fiber_vector(self, j: int) -> np.ndarray:
        """Plane-wave coefficient vector of the state at grid point j."""
        return self.band_vectors[j] @ self.coeffs[j]

    @classmethod
    def from_band_structure(cls, bands, coeffs) -> "StateFiberRep":
        return cls(bands.grid, coeffs, bands.energies, bands.vectors)


def _check_monodromy_alignment(state: StateFiberRep, monodromies):
    if len(monodromies) != len(state.grid):
        raise GridMismatchError(
            f"{len(monodromies)} monodromies for {len(state.grid)} grid points"
        )
    for mono, k in zip(monodromies, state.grid.points):
        if np.max(np.abs(mono.k - k)) > 1e-12 * (1 + np.max(np.abs(k))):
            raise GridMismatchError("monodromy fibers do not match the state grid")


def apply_measure(state: StateFiberRep, arc: Arc, monodromies) -> StateFiberRep:
    """Fiberwise action of the quasi-energy spectral measure on an arc.

    Per fiber: convert the band coefficients to the plane-wave basis, project
    onto the monodromy eigenvectors whose exponents lie in the arc, convert
    back. Norm non-increasing always; idempotent exactly when the state keeps
    every band of the discretization (the band slab is then square unitary).
    """
    _check_monodromy_alignment(state, monodromies)
    out = np.empty_like(state.coeffs)
    for j, mono in enumerate(monodromies):
        mask = arc.contains(mono.exponents)
        B = state.band_vectors[j]
        w = B @ state.coeffs[j]
        d = mono.vectors.conj().T @ w
        d[~mask] = 0.0
        out[j] = B.conj().T @ (mono.vectors @ d)
    return state.copy_with(out)


def centering_residual(mono, arc: Arc, u: np.ndarray, proj_tol: float = 1e-10):
    """How far the monodromy is from scalar rotation by the arc midpoint.

    For u in the range of the arc projector, η = M u - e^{-iν₀} u with ν₀ the
    arc midpoint satisfies ||η|| ≤ 2 sin(|I|/4) ||u||. The input is
    pre-projected onto the arc (per the precondition) and the pair
    (||η||, bound) is returned after asserting the inequality.
    """
    P = arc_projector(mono, arc)
    v = P @ np.asarray(u, dtype=complex)
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        raise ConfigError("state has no component in the arc; centering residual undefined")
    defect = np.linalg.norm(v - u)
    if defect > proj_tol * max(np.linalg.norm(u), 1.0):
        warnings.warn("input was not arc-invariant; using its projection onto the arc")
    nu0 = arc.midpoint
    eta = mono.M @ v - np.exp(-1j * nu0) * v
    norm_eta = float(np.linalg.norm(eta))
    bound = float(2.0 * np.sin(min(arc.arclength, 2 * np.pi) / 4.0) * nv)
    if norm_eta > bound + 1e-10:
        raise AssertionError(f"centering bound violated: ||η||={norm_eta:.3e} > bound={bound:.3e}")
    return norm_eta, bound


def pvm_checks(mono, rng, n_pairs: int = 8, tol: float = PROJECTOR_TOL):
    """Spot-check the projection-valued-measure axioms on random arc pairs.

    Verifies: empty arc -> 0, full circle -> identity, additivity over a
    disjoint split, multiplicativity over intersections, and spectral
    reconstruction Σ z_j v_j v_j* = M. Returns a dict of worst-case defects.
    """
    M = mono.M
    dim = M.shape[0]
    eye = np.eye(dim)
    V, z = mono.vectors, mono.multipliers
    worst = {
        "reconstruction": float(np.linalg.norm((V * z[None, :]) @ V.conj().T - M)),
        "full_circle": float(np.linalg.norm(arc_projector(mono, Arc(np.pi, np.pi)) - eye)),
        "additivity": 0.0,
        "multiplicativity": 0.0,
        "idempotent": 0.0,
        "empty": 0.0,
    }
    # an empty arc: squeeze between two adjacent exponents if there is room
    theta = np.sort(mono.exponents)
    gaps = np.diff(theta)
    if gaps.size and np.max(gaps) > 4 * BOUNDARY_SNAP:
        i = int(np.argmax(gaps))
        a, b = theta[i] + gaps[i] * 0.4, theta[i] + gaps[i] * 0.6
        worst["empty"] = float(np.linalg.norm(arc_projector(mono, Arc(a, b))))
    for _ in range(n_pairs):
        cut = np.sort(wrap_angle(rng.uniform(-np.pi, np.pi, size=2)))
        if np.min(np.abs(cut[:, None] - mono.exponents[None, :])) < 4 * BOUNDARY_SNAP:
            continue
        a1 = Arc(cut[0], cut[1])
        a2 = a1.complement()
        P1, P2 = arc_projector(mono, a1), arc_projector(mono, a2)
        worst["additivity"] = max(worst["additivity"], float(np.linalg.norm(P1 + P2 - eye)))
        worst["idempotent"] = max(worst["idempotent"], float(np.linalg.norm(P1 @ P1 - P1)))
        cut2 = np.sort(wrap_angle(rng.uniform(-np.pi, np.pi, size=2)))
        if np.min(np.abs(cut2[:, None] - mono.exponents[None, :])) < 4 * BOUNDARY_SNAP:
            continue
        b1 = Arc(cut2[0], cut2[1])
        inter = _intersect_plain(a1, b1)
        if inter is not None:
            Pi = arc_projector(mono, inter) if inter != "empty" else np.zeros_like(P1)
            worst["multiplicativity"] = max(
                worst["multiplicativity"],
                float(np.linalg.norm(arc_projector(mono, b1) @ P1 - Pi)),
            )
    if max(worst.values()) > tol:
        raise AssertionError(f"projection-valued measure axiom defect above {tol}: {worst}")
    return worst


def _intersect_plain(a: Arc, b: Arc):
    """Intersection of two non-wrapping arcs; 'empty' or None if not an interval."""
    if a.wraps or b.wraps:
        return None
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    if hi <= lo:
        return "empty"
    return Arc(lo, hi)
