"""Lattice geometry, truncated plane-wave bases, periodic potentials, zone grids.

Conventions used throughout the package:

* a lattice is Λ = Z v_1 ⊕ ... ⊕ Z v_n with primitive vectors stored as rows,
* dual vectors satisfy b_i · v_j = 2π δ_ij,
* the Brillouin zone is the parallelepiped {Σ t_i b_i : t_i ∈ [-1/2, 1/2)},
* dual-lattice vectors are addressed by their integer coordinates m, G = Σ m_i b_i.

Everything here is immutable after construction and safe to share between
parallel workers.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateLatticeError, NumericError, ResourceLimitError

DUALITY_TOL = 1e-12


class Lattice:
    """Bravais lattice in dimension 1 or 2 with its dual.

    Parameters
    ----------
    vectors : (n, n) array_like
        Primitive vectors as rows.

    Attributes
    ----------
    dim : int
    vectors : (n, n) ndarray, rows v_i
    duals : (n, n) ndarray, rows b_i with b_i · v_j = 2π δ_ij
    cell_volume : float, |det[v_1 .. v_n]|
    zone_volume : float, |det[b_1 .. b_n]| = (2π)^n / cell_volume
    """

    def __init__(self, vectors):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        n = vectors.shape[0]
        if n not in (1, 2) or vectors.shape != (n, n):
            raise ConfigError(f"need n x n primitive vectors with n in {{1, 2}}, got shape {vectors.shape}")
        det = np.linalg.det(vectors)
        scale = np.max(np.abs(vectors))
        if scale == 0.0 or abs(det) < 1e-12 * scale**n:
            raise DegenerateLatticeError("primitive vectors are (numerically) linearly dependent")
        self.dim = n
        self.vectors = vectors
        # rows b_i solve  B V^T = 2π I
        self.duals = 2.0 * np.pi * np.linalg.inv(vectors).T
        self.cell_volume = abs(det)
        self.zone_volume = abs(np.linalg.det(self.duals))
        self.vectors.setflags(write=False)
        self.duals.setflags(write=False)
        err = np.max(np.abs(self.duals @ self.vectors.T - 2.0 * np.pi * np.eye(n)))
        if err >= DUALITY_TOL:  # pragma: no cover - inv() is exact enough in 1D/2D
            raise NumericError(f"dual basis residual {err:.3e} exceeds {DUALITY_TOL}")

    def dual_vector(self, m) -> np.ndarray:
        """Return G = Σ m_i b_i for integer coordinates m."""
        return np.asarray(m, dtype=float) @ self.duals

    def shortest_dual_length(self) -> float:
        """Length of the shortest nonzero dual-lattice vector."""
        rng = range(-2, 3)
        if self.dim == 1:
            cands = [abs(m) * np.linalg.norm(self.duals[0]) for m in rng if m != 0]
        else:
            cands = [
                np.linalg.norm(m1 * self.duals[0] + m2 * self.duals[1])
                for m1 in rng
                for m2 in rng
                if (m1, m2) != (0, 0)
            ]
        return float(min(cands))

    def __repr__(self):
        return f"Lattice(dim={self.dim}, cell_volume={self.cell_volume:.6g})"


def make_lattice(primitive_vectors) -> Lattice:
    """Build a :class:`Lattice` from primitive vectors (rows)."""
    return Lattice(primitive_vectors)


class PlaneWaveBasis:
    """Truncated dual-lattice basis {G : |G| ≤ cutoff}, lexicographically ordered.

    The ordering is over the integer coordinates m, so matrices assembled on a
    basis are reproducible bit for bit. Contains G = 0 and is symmetric under
    G -> -G (the cutoff ball is symmetric, so this holds by construction).
    """

    def __init__(self, lattice: Lattice, cutoff: float, max_size: int = 4096):
        if cutoff <= 0:
            raise ConfigError("cutoff must be positive")
        self.lattice = lattice
        self.cutoff = float(cutoff)
        n = lattice.dim
        # bound per integer axis: m_i = G . v_i / 2π, so |m_i| ≤ cutoff |v_i| / 2π
        bounds = [int(np.floor(cutoff * np.linalg.norm(lattice.vectors[i]) / (2 * np.pi) + 1e-9)) for i in range(n)]
        coords = []
        # tiny relative slack so |G| exactly on the cutoff sphere is kept
        limit = cutoff * (1 + 1e-12)
        if n == 1:
            for m in range(-bounds[0], bounds[0] + 1):
                if abs(m) * np.linalg.norm(lattice.duals[0]) <= limit:
                    coords.append((m,))
        else:
            for m1 in range(-bounds[0], bounds[0] + 1):
                for m2 in range(-bounds[1], bounds[1] + 1):
                    g = m1 * lattice.duals[0] + m2 * lattice.duals[1]
                    if np.linalg.norm(g) <= limit:
                        coords.append((m1, m2))
        coords.sort()
        if len(coords) > max_size:
            raise ResourceLimitError(
                f"plane-wave basis would have {len(coords)} elements, exceeding max_size={max_size}"
            )
        self.coords = np.array(coords, dtype=int)
        self.vectors = self.coords @ lattice.duals
        self.index = {tuple(m): i for i, m in enumerate(coords)}
        self.coords.setflags(write=False)
        self.vectors.setflags(write=False)

    def __len__(self):
        return len(self.coords)

    def position(self, m):
        """Index of integer coordinates m, or None if outside the basis."""
        return self.index.get(tuple(int(x) for x in m))

    def __repr__(self):
        return f"PlaneWaveBasis(size={len(self)}, cutoff={self.cutoff:.6g})"


def plane_wave_basis(lattice: Lattice, cutoff: float, max_size: int = 4096) -> PlaneWaveBasis:
    """All dual-lattice vectors with |G| ≤ cutoff, in deterministic order."""
    return PlaneWaveBasis(lattice, cutoff, max_size)


class PotentialCoeffs:
    """Fourier coefficients of a real Λ-periodic potential.

    Stored as a map from integer dual coordinates m to complex V̂(G_m).
    Real-valuedness requires V̂(-G) = conj(V̂(G)); this is validated on
    construction and is the only structural assumption downstream code makes.
    """

    def __init__(self, lattice: Lattice, coeffs: dict):
        self.lattice = lattice
        clean = {}
        for m, v in coeffs.items():
            key = tuple(int(x) for x in (m if isinstance(m, (tuple, list, np.ndarray)) else (m,)))
            if len(key) != lattice.dim:
                raise ConfigError(f"coefficient index {key} does not match lattice dimension {lattice.dim}")
            clean[key] = complex(v)
        for m, v in clean.items():
            neg = tuple(-x for x in m)
            w = clean.get(neg)
            if w is None or abs(np.conj(v) - w) > 1e-12 * (1 + abs(v)):
                raise ConfigError(f"potential is not real: coefficient at {m} lacks conjugate partner at {neg}")
        self.coeffs = clean
        self._matrix_cache = {}

    def __getitem__(self, m):
        return self.coeffs.get(tuple(int(x) for x in m), 0.0 + 0.0j)

    def matrix(self, basis: PlaneWaveBasis) -> np.ndarray:
        """Dense matrix V̂(G - G') on the given basis. Cached per basis."""
        key = id(basis)
        mat = self._matrix_cache.get(key)
        if mat is None:
            M = len(basis)
            mat = np.zeros((M, M), dtype=complex)
            coords = basis.coords
            for m, v in self.coeffs.items():
                dm = np.array(m, dtype=int)
                # entry (i, j) gets V̂(G_i - G_j); loop over j, look up i = j + m
                for j in range(M):
                    tgt = tuple(coords[j] + dm)
                    i = basis.index.get(tgt)
                    if i is not None:
                        mat[i, j] += v
            mat.setflags(write=False)
            self._matrix_cache[key] = mat
        return mat

    def restricted_to_differences(self, basis: PlaneWaveBasis) -> "PotentialCoeffs":
        """Drop coefficients that can never appear as G - G' on this basis."""
        diffs = set()
        coords = [tuple(c) for c in basis.coords]
        for a in coords:
            for b in coords:
                diffs.add(tuple(x - y for x, y in zip(a, b)))
        kept = {m: v for m, v in self.coeffs.items() if m in diffs}
        out = PotentialCoeffs(self.lattice, kept)
        return out

    def __repr__(self):
        return f"PotentialCoeffs({len(self.coeffs)} nonzero)"


def honeycomb_wavevectors(lattice: Lattice):
    """Three shortest dual vectors closed under 120 degree rotation.

    Found by enumeration so either hexagonal orientation (primitive vectors at
    60 or 120 degrees) works; raises if the dual lattice has no such triple.
    """
    if lattice.dim != 2:
        raise ConfigError("honeycomb potential needs a 2D lattice")
    cands = {}
    for m1 in range(-1, 2):
        for m2 in range(-1, 2):
            if (m1, m2) != (0, 0):
                cands[(m1, m2)] = m1 * lattice.duals[0] + m2 * lattice.duals[1]
    lmin = min(np.linalg.norm(g) for g in cands.values())
    shortest = {m: g for m, g in cands.items() if np.linalg.norm(g) < lmin * (1 + 1e-9)}
    c, s = -0.5, np.sqrt(3) / 2
    rot = np.array([[c, -s], [s, c]])
    start = max(shortest)  # deterministic pick
    triple = [start]
    g = shortest[start]
    for _ in range(2):
        g = rot @ g
        hit = next((m for m, h in shortest.items() if np.linalg.norm(h - g) < 1e-9 * lmin), None)
        if hit is None:
            raise ConfigError("dual lattice has no 2pi/3-closed triple; not hexagonal")
        triple.append(hit)
    return triple


def potential_coefficients(spec: dict, lattice: Lattice, basis: PlaneWaveBasis | None = None) -> PotentialCoeffs:
    """Build potential coefficients from a named family spec.

    Families:
      {"family": "zero"}
      {"family": "cosine_sum", "terms": [{"m": [...], "amplitude": a}, ...]}
          V(x) = Σ a_j cos(G_{m_j} · x)
      {"family": "honeycomb", "amplitude": a}
          V(x) = Σ_{j=1..3} a cos(g_j · x) over the rotation-closed triple g_j

    If a basis is passed, coefficients that cannot occur as differences G - G'
    of basis vectors are dropped.
    """
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("potential spec must be a dict with a 'family' key")
    family = spec["family"]
    known = {"zero": {"family"}, "cosine_sum": {"family", "terms"}, "honeycomb": {"family", "amplitude"}}
    if family not in known:
        raise ConfigError(f"unknown potential family {family!r}")
    extra = set(spec) - known[family]
    if extra:
        raise ConfigError(f"unknown keys in potential spec: {sorted(extra)}")

    coeffs: dict = {}
    if family == "zero":
        pass
    elif family == "cosine_sum":
        for term in spec.get("terms", []):
            if set(term) != {"m", "amplitude"}:
                raise ConfigError("cosine_sum terms need exactly the keys 'm' and 'amplitude'")
            m = tuple(int(x) for x in term["m"])
            if len(m) != lattice.dim:
                raise ConfigError(f"term index {m} does not match lattice dimension")
            if all(x == 0 for x in m):
                raise ConfigError("cosine_sum term at m = 0 is a constant shift; fold it into E* instead")
            amp = float(term["amplitude"])
            # a cos(G·x) = (a/2) e^{iG·x} + (a/2) e^{-iG·x}
            neg = tuple(-x for x in m)
            coeffs[m] = coeffs.get(m, 0.0) + amp / 2.0
            coeffs[neg] = coeffs.get(neg, 0.0) + amp / 2.0
    else:  # honeycomb
        amp = float(spec.get("amplitude", 2.0))
        for m in honeycomb_wavevectors(lattice):
            neg = tuple(-x for x in m)
            coeffs[m] = coeffs.get(m, 0.0) + amp / 2.0
            coeffs[neg] = coeffs.get(neg, 0.0) + amp / 2.0

    out = PotentialCoeffs(lattice, coeffs)
    if basis is not None:
        out = out.restricted_to_differences(basis)
    return out


class BrillouinGrid:
    """Quadrature grid of quasi-momenta.

    Full-zone grids integrate to vol(B); window grids built as k* + ε ξ carry
    the scaled envelope weights instead and record their anchor so alignment
    with an envelope's ξ nodes can be checked exactly.
    """

    def __init__(self, lattice: Lattice, points, weights, anchor=None, eps=None, xi=None, xi_weights=None):
        self.lattice = lattice
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.points.shape[0] == 1 and self.points.shape[1] != lattice.dim:
            self.points = self.points.T
        self.weights = np.asarray(weights, dtype=float)
        if self.points.shape != (len(self.weights), lattice.dim):
            raise ConfigError("grid points and weights are inconsistent")
        if np.any(self.weights <= 0):
            raise ConfigError("quadrature weights must be positive")
        self.anchor = None if anchor is None else np.asarray(anchor, dtype=float)
        self.eps = eps
        self.xi = None if xi is None else np.atleast_2d(np.asarray(xi, dtype=float))
        if self.xi is not None and self.xi.shape[0] == 1 and self.xi.shape[1] != lattice.dim:
            self.xi = self.xi.T
        self.xi_weights = None if xi_weights is None else np.asarray(xi_weights, dtype=float)
        self.points.setflags(write=False)
        self.weights.setflags(write=False)
        # identity token: states and monodromy stacks check this before combining
        self.token = hash((self.points.tobytes(), self.weights.tobytes()))

    def __len__(self):
        return len(self.weights)

    def same_grid(self, other: "BrillouinGrid") -> bool:
        return self.token == other.token and len(self) == len(other)


def zone_grid(lattice: Lattice, counts) -> BrillouinGrid:
    """Uniform midpoint grid over the fundamental zone parallelepiped.

    counts: one integer per dimension. Weights sum to vol(B) exactly.
    """
    counts = [int(c) for c in (counts if np.iterable(counts) else [counts])]
    if len(counts) != lattice.dim or any(c < 1 for c in counts):
        raise ConfigError("zone_grid needs one positive count per dimension")
    axes = [(np.arange(c) + 0.5) / c - 0.5 for c in counts]
    if lattice.dim == 1:
        ts = axes[0][:, None]
    else:
        t1, t2 = np.meshgrid(axes[0], axes[1], indexing="ij")
        ts = np.column_stack([t1.ravel(), t2.ravel()])
    points = ts @ lattice.duals
    w = lattice.zone_volume / np.prod(counts)
    return BrillouinGrid(lattice, points, np.full(len(points), w))


def window_grid(lattice: Lattice, k_star, eps: float, xi, xi_weights) -> BrillouinGrid:
    """Fibers at k* + ε ξ_i with weights ε^n w_i^ξ (change of variables k = k* + εξ)."""
    k_star = np.asarray(k_star, dtype=float)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[0] == 1 and xi.shape[1] != lattice.dim:
        xi = xi.T
    xi_weights = np.asarray(xi_weights, dtype=float)
    points = k_star[None, :] + eps * xi
    weights = (eps ** lattice.dim) * xi_weights
    return BrillouinGrid(lattice, points, weights, anchor=k_star, eps=eps, xi=xi, xi_weights=xi_weights)


def ball_xi_grid(dim: int, radius: float, count: int):
    """Midpoint ξ grid filling the ball |ξ| ≤ radius.

    1D: `count` midpoint nodes on (-radius, radius); use an odd count to place
    ξ = 0 on the grid. 2D: midpoint product grid masked to the closed ball.
    Returns (xi, weights) with Σ w = covered volume.
    """
    if count < 1:
        raise ConfigError("need at least one xi node")
    h = 2.0 * radius / count
    axis = -radius + h * (np.arange(count) + 0.5)
    if dim == 1:
        xi = axis[:, None]
        w = np.full(count, h)
        return xi, w
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([x1.ravel(), x2.ravel()])
    mask = np.linalg.norm(pts, axis=1) <= radius + 1e-12
    return pts[mask], np.full(int(mask.sum()), h * h)
