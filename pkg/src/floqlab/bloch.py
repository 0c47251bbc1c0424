"""Fiber Hamiltonians H(k), band structures, degeneracy classification,
group velocities, Hessians, cone fits, and contour spectral projectors.

The fiber at quasi-momentum k acts on lattice-periodic functions expanded in
plane waves e^{iG·x}; its matrix has entries |k + G|² δ_{GG'} + V̂(G - G').
Eigenvalues are the bands E_1(k) ≤ E_2(k) ≤ ... and eigenvectors are the
periodic Bloch coefficient vectors p_b(k).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContourCollisionError, DegeneracyDetectionError, NumericError
from .lattice import BrillouinGrid, PlaneWaveBasis, PotentialCoeffs

EIG_RESIDUAL_TOL = 1e-10   # relative to ||H||
UNITARITY_TOL = 1e-12
GAP_TOL_DEFAULT = 1e-6
CONE_TOL_DEFAULT = 0.05
VELOCITY_FD_TOL = 1e-6


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive.

    np.argmax returns the first maximal index, which realizes the
    lowest-basis-index tie break. Columns with zero norm are left alone.
    """
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        i = int(np.argmax(np.abs(col)))
        a = col[i]
        if a != 0:
            out[:, j] = col * (np.conj(a) / abs(a))
    return out


class FiberSystem:
    """H(k) on a plane-wave basis together with its eigendecomposition."""

    def __init__(self, potential: PotentialCoeffs, basis: PlaneWaveBasis, k):
        self.potential = potential
        self.basis = basis
        self.k = np.atleast_1d(np.asarray(k, dtype=float))
        if self.k.shape != (basis.lattice.dim,):
            raise ConfigError(f"quasi-momentum shape {self.k.shape} does not match dimension {basis.lattice.dim}")
        kg = self.k[None, :] + basis.vectors          # rows k + G
        kinetic = np.sum(kg * kg, axis=1)
        H = potential.matrix(basis) + np.diag(kinetic).astype(complex)
        try:
            energies, vectors = np.linalg.eigh(H)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on Hermitian rarely fails
            raise NumericError(f"eigensolver failed at k={self.k}: {exc}") from exc
        vectors = fix_phases(vectors)
        self.H = H
        self.kg = kg
        self.energies = energies
        self.vectors = vectors
        hnorm = max(np.max(np.abs(energies)), 1.0)
        resid = np.linalg.norm(H @ vectors - vectors * energies[None, :], axis=0)
        if np.max(resid) > EIG_RESIDUAL_TOL * hnorm:
            raise NumericError(f"eigenpair residual {np.max(resid):.3e} too large at k={self.k}")
        gram = vectors.conj().T @ vectors
        if np.max(np.abs(gram - np.eye(len(basis)))) > UNITARITY_TOL * 10:
            raise NumericError(f"eigenvector matrix not unitary at k={self.k}")

    @property
    def size(self):
        return len(self.energies)

    def band_gap(self, b: int) -> float:
        """Distance from band b (1-based) to its nearest neighbor band."""
        i = b - 1
        gaps = []
        if i > 0:
            gaps.append(self.energies[i] - self.energies[i - 1])
        if i + 1 < self.size:
            gaps.append(self.energies[i + 1] - self.energies[i])
        return float(min(gaps)) if gaps else np.inf


def assemble_fiber(potential: PotentialCoeffs, basis: PlaneWaveBasis, k) -> FiberSystem:
    """Assemble and diagonalize the fiber Hamiltonian at quasi-momentum k."""
    return FiberSystem(potential, basis, k)


class BandStructure:
    """Lowest n_bands eigenpairs over a Brillouin grid.

    Keeps references to the potential and basis so downstream code (window
    projectors, degeneracy analysis, wavepacket synthesis) can assemble fresh
    fibers at off-grid points.
    """

    def __init__(self, potential, basis, grid: BrillouinGrid, n_bands: int):
        if n_bands < 1 or n_bands > len(basis):
            raise ConfigError(f"n_bands={n_bands} outside 1..{len(basis)}")
        self.potential = potential
        self.basis = basis
        self.grid = grid
        self.n_bands = n_bands
        energies = np.empty((len(grid), n_bands))
        vectors = np.empty((len(grid), len(basis), n_bands), dtype=complex)
        for j, k in enumerate(grid.points):
            fib = assemble_fiber(potential, basis, k)
            energies[j] = fib.energies[:n_bands]
            vectors[j] = fib.vectors[:, :n_bands]
        self.energies = energies
        self.vectors = vectors
        self._lipschitz_sanity()

    def _lipschitz_sanity(self):
        # |∇_k E_b| ≤ max 2|k+G| over the basis; warn on jumps far beyond it
        pts = self.grid.points
        if len(pts) < 2:
            return
        kmax = np.max(np.linalg.norm(pts, axis=1)) + self.basis.cutoff
        lip = 2.0 * kmax
        order = np.lexsort(pts.T[::-1])
        dk = np.linalg.norm(np.diff(pts[order], axis=0), axis=1)
        dE = np.max(np.abs(np.diff(self.energies[order], axis=0)), axis=1)
        ok = dk > 0
        if np.any(dE[ok] > 1.5 * lip * dk[ok] + 1e-9):
            warnings.warn("band energies jump faster than the Lipschitz estimate; grid may be too coarse")


def band_structure(potential, basis, grid, n_bands) -> BandStructure:
    """Solve the lowest n_bands bands over the grid."""
    return BandStructure(potential, basis, grid, n_bands)


@dataclass
class DegeneracyInfo:
    """An isolated eigenvalue cluster at k* with its local classification.

    classification is one of:
      'noncritical'       simple band, ∇E ≠ 0; carries c = -∇E
      'quadratic_simple'  simple band at a critical point; carries the Hessian
      'dirac'             two-fold conical touching; carries v_D
      'quadratic_double'  two-fold quadratic touching; carries (alpha, gamma, beta)
    """

    k_star: np.ndarray
    E_star: float
    b_star: int
    N: int
    classification: str
    modes: np.ndarray                       # (basis_size, N) plane-wave columns, phase fixed
    margin: float                           # worst-case isolation margin found on the scan
    c: np.ndarray | None = None
    v_D: float | None = None
    hessian: np.ndarray | None = None
    abg: tuple | None = None
    potential: object = field(default=None, repr=False)
    basis: object = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "k_star": list(map(float, np.atleast_1d(self.k_star))),
            "E_star": float(self.E_star),
            "b_star": int(self.b_star),
            "N": int(self.N),
            "classification": self.classification,
            "margin": float(self.margin),
        }
        if self.c is not None:
            out["c"] = list(map(float, np.atleast_1d(self.c)))
        if self.v_D is not None:
            out["v_D"] = float(self.v_D)
        if self.hessian is not None:
            out["hessian"] = np.asarray(self.hessian).tolist()
        if self.abg is not None:
            out["alpha_gamma_beta"] = [float(x) for x in self.abg]
        return out


@dataclass
class SeparationReport:
    """Isolation failed somewhere on the scan; names the offending point/band."""

    ok: bool
    offending_k: np.ndarray | None
    offending_band: int | None
    message: str


def _cluster_at(fib: FiberSystem, b_star: int, cluster_scale=1e-8):
    """Indices of the eigenvalue cluster containing band b_star (1-based)."""
    i = b_star - 1
    E = fib.energies
    tol = cluster_scale * (1.0 + abs(E[i]))
    lo = i
    while lo > 0 and E[lo] - E[lo - 1] <= tol:
        lo -= 1
    hi = i
    while hi + 1 < len(E) and E[hi + 1] - E[hi] <= tol:
        hi += 1
    return lo, hi


def verify_separation(bands: BandStructure, k_star, b_star: int, N: int, radius: float,
                      gap_tol: float = GAP_TOL_DEFAULT, classify: bool = True):
    """Check the isolation of an N-fold cluster at k* and classify it.

    Scans every grid point within `radius` of k* and demands
    E_{b*-1}(k) < E* - gap_tol and E_{b*+N}(k) > E* + gap_tol. Returns a
    DegeneracyInfo on success, a SeparationReport naming the offending point
    and band otherwise. A cluster at k* of the wrong size raises
    DegeneracyDetectionError.
    """
    k_star = np.atleast_1d(np.asarray(k_star, dtype=float))
    if bands.n_bands < b_star + N:
        raise ConfigError(
            f"band structure holds {bands.n_bands} bands; isolating bands {b_star}..{b_star + N - 1} "
            f"needs at least {b_star + N} to see the band above"
        )
    fib = assemble_fiber(bands.potential, bands.basis, k_star)
    lo, hi = _cluster_at(fib, b_star)
    size = hi - lo + 1
    if size != N or lo != b_star - 1:
        raise DegeneracyDetectionError(
            f"cluster at k*={k_star} spans bands {lo + 1}..{hi + 1} (size {size}), requested b*={b_star}, N={N}"
        )
    E_star = float(np.mean(fib.energies[lo:hi + 1]))

    margin = np.inf
    pts = bands.grid.points
    sel = np.linalg.norm(pts - k_star[None, :], axis=1) <= radius
    for j in np.nonzero(sel)[0]:
        fe = bands.energies[j]
        if b_star - 2 >= 0:
            below = E_star - gap_tol - fe[b_star - 2]
            if below <= 0:
                return SeparationReport(False, pts[j], b_star - 1,
                                        f"band {b_star - 1} reaches {fe[b_star - 2]:.6g} at k={pts[j]}")
            margin = min(margin, below)
        idx_above = b_star + N - 1
        if idx_above < bands.n_bands:
            above = fe[idx_above] - (E_star + gap_tol)
            if above <= 0:
                return SeparationReport(False, pts[j], b_star + N,
                                        f"band {b_star + N} dips to {fe[idx_above]:.6g} at k={pts[j]}")
            margin = min(margin, above)

    modes = fix_phases(fib.vectors[:, lo:hi + 1])
    info = DegeneracyInfo(k_star=k_star, E_star=E_star, b_star=b_star, N=N,
                          classification="unclassified", modes=modes,
                          margin=float(margin), potential=bands.potential, basis=bands.basis)
    if classify:
        _classify(info, bands)
    return info


def _classify(info: DegeneracyInfo, bands: BandStructure):
    """Fill in the classification tag and the derived local coefficients."""
    if info.N == 1:
        fib = assemble_fiber(bands.potential, bands.basis, info.k_star)
        grad = _velocity_fd(bands.potential, bands.basis, info.k_star, info.b_star)
        if np.linalg.norm(grad) > 1e-6:
            info.classification = "noncritical"
            c_raw, c = group_velocity(fib, info.b_star)
            info.c = c
        else:
            info.classification = "quadratic_simple"
            info.hessian = hessian(bands, info.k_star, info.b_star)
    elif info.N == 2:
        fit = dirac_fit(bands, info.k_star, info.b_star)
        if fit.splitting_order < 1.5 and fit.is_cone:
            info.classification = "dirac"
            info.v_D = fit.v_D
        else:
            info.classification = "quadratic_double"
            info.abg = fit_quadratic_touching(bands, info.k_star, info.b_star)
    else:
        info.classification = "unclassified"


def _velocity_fd(potential, basis, k, b, h_rel=1e-4):
    """Central-difference ∇E_b(k); step h = h_rel |b_1|."""
    h = h_rel * np.linalg.norm(basis.lattice.duals[0])
    n = basis.lattice.dim
    grad = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        Ep = assemble_fiber(potential, basis, k + e).energies[b - 1]
        Em = assemble_fiber(potential, basis, k - e).energies[b - 1]
        grad[i] = (Ep - Em) / (2 * h)
    return grad


def group_velocity(fib: FiberSystem, b_star: int, fd_tol: float = VELOCITY_FD_TOL):
    """Group velocity of a simple band, two ways.

    Returns (c_raw, c) with c_raw = ∇E computed from the diagonal matrix
    element Σ_G 2(k+G)|p̂(G)|² and c = -c_raw. A central-difference estimate
    must agree with the inner-product value to fd_tol, otherwise the band is
    either degenerate or the fiber is numerically sick.
    """
    if fib.band_gap(b_star) < 1e-8 * (1 + abs(fib.energies[b_star - 1])):
        raise ConfigError(f"band {b_star} is degenerate at k={fib.k}; group velocity undefined")
    p = fib.vectors[:, b_star - 1]
    c_raw = np.real(2.0 * (np.abs(p) ** 2) @ fib.kg)
    fd = _velocity_fd(fib.potential, fib.basis, fib.k, b_star)
    if np.max(np.abs(c_raw - fd)) > fd_tol:
        raise NumericError(
            f"velocity mismatch at k={fib.k}: inner product {c_raw}, finite difference {fd}"
        )
    return c_raw, -c_raw


def hessian(bands: BandStructure, k_star, b_star: int, h_rel: float = 1e-3) -> np.ndarray:
    """Symmetrized central second differences of E_b around k*; h = h_rel |b_1|."""
    k_star = np.atleast_1d(np.asarray(k_star, dtype=float))
    pot, basis = bands.potential, bands.basis
    h = h_rel * np.linalg.norm(basis.lattice.duals[0])
    n = basis.lattice.dim

    def E(k):
        return assemble_fiber(pot, basis, k).energies[b_star - 1]

    H = np.zeros((n, n))
    E0 = E(k_star)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (E(k_star + ei) - 2 * E0 + E(k_star - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            mixed = (E(k_star + ei + ej) + E(k_star - ei - ej)
                     - E(k_star + ei - ej) - E(k_star - ei + ej)) / (4 * h**2)
            H[i, j] = H[j, i] = mixed
    return 0.5 * (H + H.T)


@dataclass
class DiracFit:
    """Cone fit around a two-fold touching.

    v_D is the Richardson-extrapolated slope of (E_+ - E_-)/2 against ring
    radius; anisotropy is the worst relative spread of the splitting over ring
    directions; splitting_order is the log-log slope across the two radii
    (≈1 for a cone, ≈2 for a quadratic touching).
    """

    v_D: float
    slopes: tuple
    radii: tuple
    anisotropy: float
    residual: float
    splitting_order: float
    cone_tol: float = CONE_TOL_DEFAULT
    ring_anisotropies: tuple = ()

    @property
    def is_cone(self) -> bool:
        return self.anisotropy < self.cone_tol


def _ring_splittings(bands, k_star, b_star, r, n_dirs, with_guard=False):
    angles = 2 * np.pi * np.arange(n_dirs) / n_dirs
    if bands.basis.lattice.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    out = np.empty(len(dirs))
    guard = np.inf
    for j, w in enumerate(dirs):
        fib = assemble_fiber(bands.potential, bands.basis, np.atleast_1d(k_star) + r * w)
        out[j] = 0.5 * (fib.energies[b_star] - fib.energies[b_star - 1])
        if with_guard:
            # distance from the touching pair to the rest of the spectrum
            # along the ring; sorted-band labels stop tracking the cone
            # sheets once the pair and a neighbor band come this close
            if b_star + 1 < len(fib.energies):
                guard = min(guard, fib.energies[b_star + 1] - fib.energies[b_star])
            if b_star >= 2:
                guard = min(guard, fib.energies[b_star - 1] - fib.energies[b_star - 2])
    return (out, guard) if with_guard else out


def dirac_fit(bands: BandStructure, k_star, b_star: int, radius: float | None = None,
              n_dirs: int = 24, cone_tol: float = CONE_TOL_DEFAULT) -> DiracFit:
    """Fit E_± = E* ± v_D |k - k*| + O(|k - k*|²) on rings of radius r and r/2.

    Without an explicit radius, starts at 2% of the first dual vector and
    halves until the pair's splitting is small against the gap separating it
    from the neighboring bands everywhere on the ring.
    """
    k_star = np.atleast_1d(np.asarray(k_star, dtype=float))
    if radius is None:
        radius = 0.02 * np.linalg.norm(bands.basis.lattice.duals[0])
        for _ in range(8):
            s, guard = _ring_splittings(bands, k_star, b_star, radius, n_dirs,
                                        with_guard=True)
            if 4.0 * np.max(s) <= guard:
                break
            radius /= 2.0
    r1, r2 = radius, radius / 2
    s1 = _ring_splittings(bands, k_star, b_star, r1, n_dirs)
    s2 = _ring_splittings(bands, k_star, b_star, r2, n_dirs)
    slope1 = float(np.mean(s1) / r1)
    slope2 = float(np.mean(s2) / r2)
    # slope(r) = v_D + C r  =>  Richardson across r, r/2
    v_D = 2 * slope2 - slope1
    ring_aniso = tuple(
        float((np.max(s) - np.min(s)) / np.mean(s)) if np.mean(s) > 0 else np.inf
        for s in (s1, s2)
    )
    # level repulsion from neighboring bands modulates the ring splitting
    # linearly in r; the same extrapolation recovers the r -> 0 cone
    # anisotropy, which stays finite for a genuinely tilted cone
    if np.isfinite(ring_aniso).all():
        aniso = max(0.0, 2 * ring_aniso[1] - ring_aniso[0])
    else:
        aniso = np.inf
    order = float(np.log(np.mean(s1) / np.mean(s2)) / np.log(r1 / r2)) if np.mean(s2) > 0 else np.inf
    residual = abs(slope1 - slope2) / max(abs(v_D), 1e-300)
    return DiracFit(v_D=v_D, slopes=(slope1, slope2), radii=(r1, r2),
                    anisotropy=aniso, residual=residual, splitting_order=order,
                    cone_tol=cone_tol, ring_anisotropies=ring_aniso)


def fit_quadratic_touching(bands: BandStructure, k_star, b_star: int, radius: float | None = None):
    """Coefficients (alpha, gamma, beta) of a quadratic two-fold touching.

    The local model has eigenvalues alpha|κ|² ± sqrt(gamma²(κ_1²-κ_2²)² + 4β²κ_1²κ_2²).
    Along (s,0): E_± = (alpha ± gamma) s²; along the diagonal: E_± = (alpha ± β) s².
    Signs of gamma and beta are not identifiable from the spectra alone; the
    returned values are nonnegative, which suffices for spectral enclosures.
    """
    k_star = np.atleast_1d(np.asarray(k_star, dtype=float))
    if bands.basis.lattice.dim != 2:
        raise ConfigError("quadratic touching fit needs a 2D lattice")
    if radius is None:
        radius = 0.02 * np.linalg.norm(bands.basis.lattice.duals[0])

    fib0 = assemble_fiber(bands.potential, bands.basis, k_star)
    E_star = 0.5 * (fib0.energies[b_star - 1] + fib0.energies[b_star])

    def pair(k):
        f = assemble_fiber(bands.potential, bands.basis, k)
        return f.energies[b_star - 1], f.energies[b_star]

    def coeffs_at(r):
        em_a, ep_a = pair(k_star + np.array([r, 0.0]))
        alpha_a = (ep_a + em_a - 2 * E_star) / (2 * r * r)
        gamma = (ep_a - em_a) / (2 * r * r)
        d = np.array([r, r]) / np.sqrt(2.0)
        em_d, ep_d = pair(k_star + d)
        alpha_d = (ep_d + em_d - 2 * E_star) / (2 * r * r)
        beta = (ep_d - em_d) / (2 * r * r)
        return np.array([0.5 * (alpha_a + alpha_d), gamma, beta])

    c1 = coeffs_at(radius)
    c2 = coeffs_at(radius / 2)
    # quartic corrections scale like r²: Richardson with factor 4/3
    alpha, gamma, beta = (4 * c2 - c1) / 3
    return float(alpha), float(abs(gamma)), float(abs(beta))


def riesz_projector(fib: FiberSystem, E_star: float, radius: float,
                    n_quad: int = 64, ring_tol: float | None = None) -> np.ndarray:
    """Spectral projector by trapezoid contour integration of the resolvent.

    P = (1/2πi) ∮_{|ζ-E*|=radius} (ζ - H)^{-1} dζ, discretized with n_quad
    equispaced nodes. The trapezoid rule is spectrally accurate here because
    the resolvent is analytic in an annulus around the contour. Deliberately
    independent of the eigendecomposition so it can serve as a cross check.
    """
    if ring_tol is None:
        ring_tol = 1e-6 * (1 + radius)
    dist = np.abs(np.abs(fib.energies - E_star) - radius)
    if np.min(dist) < ring_tol:
        b = int(np.argmin(dist)) + 1
        raise ContourCollisionError(
            f"band {b} at E={fib.energies[b - 1]:.9g} lies within {ring_tol:.1e} of the contour"
        )
    M = fib.H.shape[0]
    P = np.zeros((M, M), dtype=complex)
    eye = np.eye(M, dtype=complex)
    for j in range(n_quad):
        phi = 2 * np.pi * j / n_quad
        zeta = E_star + radius * np.exp(1j * phi)
        P += np.exp(1j * phi) * np.linalg.solve(zeta * eye - fib.H, eye)
    P *= radius / n_quad
    return P
