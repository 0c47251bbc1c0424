"""Band-limited wavepackets, the quasi-momentum/energy window projector, the
wavepacket-window correspondence, the periodic-times-slow averaging identity,
and the near-invariance experiment harness.

Discretization convention that makes everything exact: the fiber grid near k*
is constructed as k* + ε ξ_i for the same ξ nodes the envelope lives on, so a
band-limited packet never needs interpolation between fibers. A packet with
envelope amplitudes α̂(ξ_i) over degenerate modes Φ* occupies fiber k* + ε ξ_i
with plane-wave vector ε^{-n/2} Φ* α̂(ξ_i); with the ε^n change-of-variables
quadrature weights this gives ||packet|| = ||α̂|| identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import DegeneracyInfo, assemble_fiber
from .drive import DrivingProfile
from .errors import ConfigError, GridMismatchError, HypothesisViolation
from .evolve import monodromy_stack
from .lattice import BrillouinGrid, PotentialCoeffs, ball_xi_grid, window_grid, zone_grid
from .spectral import Arc, StateFiberRep, apply_measure

NORM_IDENTITY_TOL = 1e-10
ALIGNMENT_TOL = 1e-9


class Envelope:
    """Envelope amplitudes α̂(ξ_i) over a quadrature grid in the ball |ξ| ≤ d0.

    amp has shape (nodes, N) with N the number of degenerate modes the packet
    rides on. ||α||² = Σ_i w_i Σ_a |amp_ia|².
    """

    def __init__(self, xi, weights, amp, d0: float):
        self.xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.xi.shape[0] == 1 and len(np.asarray(weights)) != 1:
            self.xi = self.xi.T
        self.weights = np.asarray(weights, dtype=float)
        amp = np.asarray(amp, dtype=complex)
        if amp.ndim == 1:
            amp = amp[:, None]
        self.amp = amp
        self.d0 = float(d0)
        if len(self.weights) != self.xi.shape[0] or self.amp.shape[0] != self.xi.shape[0]:
            raise ConfigError("envelope arrays are inconsistent")
        if np.any(np.linalg.norm(self.xi, axis=1) > self.d0 + 1e-12):
            raise ConfigError("envelope node outside the ball |ξ| ≤ d0")

    @property
    def n_modes(self) -> int:
        return self.amp.shape[1]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights[:, None] * np.abs(self.amp) ** 2)))

    def with_amp(self, amp) -> "Envelope":
        return Envelope(self.xi, self.weights, amp, self.d0)

    @classmethod
    def gaussian(cls, dim: int, d0: float, count: int, n_modes: int = 1,
                 width_frac: float = 0.4) -> "Envelope":
        """Truncated-Gaussian profile on a midpoint ball grid, unit norm.

        Mass sits on the first mode column; width_frac sets the Gaussian width
        as a fraction of d0.
        """
        xi, w = ball_xi_grid(dim, d0, count)
        prof = np.exp(-np.sum(xi**2, axis=1) / (2 * (width_frac * d0) ** 2))
        amp = np.zeros((len(w), n_modes), dtype=complex)
        amp[:, 0] = prof
        env = cls(xi, w, amp, d0)
        return env.with_amp(env.amp / env.norm())

    @classmethod
    def point_mass(cls, dim: int, d0: float, amp_vector) -> "Envelope":
        """Single node at ξ = 0 with unit weight; norm = |amp_vector|."""
        amp = np.atleast_1d(np.asarray(amp_vector, dtype=complex))[None, :]
        return cls(np.zeros((1, dim)), np.ones(1), amp, d0)


@dataclass(frozen=True)
class WindowSpec:
    """The window: fibers within ε of k*, bands within Lε of E*."""

    k_star: tuple
    E_star: float
    eps: float
    L: float = 1.0

    def __post_init__(self):
        if self.eps <= 0 or self.L <= 0:
            raise ConfigError("window needs eps > 0 and L > 0")

    def fiber_mask(self, points) -> np.ndarray:
        ks = np.asarray(self.k_star, dtype=float)
        return np.linalg.norm(np.atleast_2d(points) - ks[None, :], axis=1) < self.eps

    def band_mask(self, energies) -> np.ndarray:
        return np.abs(np.asarray(energies) - self.E_star) < self.L * self.eps


def window_fiber_grid(deg: DegeneracyInfo, eps: float, radius: float, count: int) -> BrillouinGrid:
    """Fiber grid k* + ε ξ over a midpoint ball ξ-grid of the given radius."""
    lattice = deg.basis.lattice
    xi, w = ball_xi_grid(lattice.dim, radius, count)
    return window_grid(lattice, deg.k_star, eps, xi, w)


def composite_window_zone_grid(lattice, k_star, eps: float, xi_count: int = 17,
                               zone_count: int = 32) -> BrillouinGrid:
    """Window fibers plus a uniform sample of the rest of the zone.

    Random states on this grid carry O(1) norm outside the window and O(ε)
    inside, which is the setting the window-correspondence residual is meant
    for. Zone nodes falling inside the window ball are dropped so no region is
    covered twice; quadrature exactness is not needed here, only the relative
    ε scaling of the two masses.
    """
    k_star = np.atleast_1d(np.asarray(k_star, dtype=float))
    xi, xi_w = ball_xi_grid(lattice.dim, 1.0, xi_count)
    win = window_grid(lattice, k_star, eps, xi, xi_w)
    zone = zone_grid(lattice, [zone_count] * lattice.dim)
    keep = np.linalg.norm(zone.points - k_star[None, :], axis=1) >= eps
    points = np.vstack([win.points, zone.points[keep]])
    weights = np.concatenate([win.weights, zone.weights[keep]])
    return BrillouinGrid(lattice, points, weights)


def fibers_for_grid(potential: PotentialCoeffs, basis, grid: BrillouinGrid):
    """Assemble (and diagonalize) one fiber per grid point."""
    return [assemble_fiber(potential, basis, k) for k in grid.points]


def state_from_fibers(grid: BrillouinGrid, fibers, coeffs) -> StateFiberRep:
    """Full-band state representation backed by precomputed fibers."""
    energies = np.stack([f.energies for f in fibers])
    vectors = np.stack([f.vectors for f in fibers])
    return StateFiberRep(grid, coeffs, energies, vectors)


def synthesize_bl(envelope: Envelope, deg: DegeneracyInfo, eps: float,
                  fiber_grid: BrillouinGrid | None = None, fibers=None) -> StateFiberRep:
    """Realize a band-limited packet on its aligned fiber grid.

    The periodic part at fiber k* + ε ξ_i is the unrotated k* mode combination
    Φ* α̂(ξ_i) (the envelope modulation shifts quasi-momentum, nothing else);
    it is then expanded in that fiber's own eigenbasis. Keeping every band of
    the discretization makes the expansion exact, so ||state|| = ||α̂||.
    """
    if envelope.n_modes != deg.N:
        raise ConfigError(f"envelope carries {envelope.n_modes} mode columns, degeneracy has N={deg.N}")
    if fiber_grid is None:
        fiber_grid = window_grid(deg.basis.lattice, deg.k_star, eps, envelope.xi, envelope.weights)
    else:
        _check_alignment(envelope, deg, eps, fiber_grid)
    if fibers is None:
        fibers = fibers_for_grid(deg.potential, deg.basis, fiber_grid)
    dim = deg.basis.lattice.dim
    scale = eps ** (-dim / 2.0)
    coeffs = np.empty((len(fiber_grid), len(deg.basis)), dtype=complex)
    for i, fib in enumerate(fibers):
        w = scale * (deg.modes @ envelope.amp[i])
        coeffs[i] = fib.vectors.conj().T @ w
    return state_from_fibers(fiber_grid, fibers, coeffs)


def _check_alignment(envelope, deg, eps, grid):
    if grid.xi is None or grid.anchor is None:
        raise GridMismatchError("fiber grid was not built as an anchored window grid")
    scale = 1 + np.max(np.abs(deg.k_star))
    if np.max(np.abs(grid.anchor - deg.k_star)) > ALIGNMENT_TOL * scale or grid.eps != eps:
        raise GridMismatchError("fiber grid anchor/spacing does not match the packet")
    if grid.xi.shape != envelope.xi.shape or np.max(np.abs(grid.xi - envelope.xi)) > ALIGNMENT_TOL:
        raise GridMismatchError("envelope ξ nodes do not coincide with the fiber grid")


def project_p0(state: StateFiberRep, window: WindowSpec) -> StateFiberRep:
    """Window projector: zero outside |k - k*| < ε, zero on bands off the
    energy window |E_b(k) - E*| < Lε. Diagonal in the band representation,
    hence an orthogonal projection; idempotence is exact."""
    keep_k = window.fiber_mask(state.grid.points)
    keep_b = window.band_mask(state.band_energies)
    mask = keep_k[:, None] & keep_b
    return state.copy_with(np.where(mask, state.coeffs, 0.0))


def bl_alignment(state_bl: StateFiberRep, window: WindowSpec) -> float:
    """ρ = ||(I - P0) u|| / ||u|| for a band-limited packet u."""
    n = state_bl.norm()
    if n == 0:
        raise ConfigError("cannot align a zero packet")
    return (state_bl - project_p0(state_bl, window)).norm() / n


def window_correspondence(state: StateFiberRep, window: WindowSpec, deg: DegeneracyInfo):
    """Forward direction of the wavepacket/window correspondence.

    Builds u_eps[f]: keep fibers |k - k*| < ε, replace each kept fiber vector
    by its projection onto span Φ*, drop everything else. Returns
    (u_eps, ||P0 f - u_eps[f]|| / ||f||).
    """
    n = state.norm()
    if n == 0:
        raise ConfigError("zero state")
    keep_k = window.fiber_mask(state.grid.points)
    coeffs = np.zeros_like(state.coeffs)
    for j in np.nonzero(keep_k)[0]:
        B = state.band_vectors[j]
        w = B @ state.coeffs[j]
        shadow = deg.modes @ (deg.modes.conj().T @ w)
        coeffs[j] = B.conj().T @ shadow
    u_eps = state.copy_with(coeffs)
    resid = (project_p0(state, window) - u_eps).norm() / n
    return u_eps, resid


# ---------------------------------------------------------------------------
# averaging identity
# ---------------------------------------------------------------------------


class BandlimitedProfile:
    """A slow envelope q with compactly supported Fourier transform.

    q̂(ξ) = exp(-|ξ|²/(2σ²)) for |ξ| ≤ d and 0 outside, with σ² = d / decay so
    the truncation jump and the real-space tails are both ~e^{-decay/2}. q(X)
    is evaluated by Gauss-Legendre quadrature of the inverse transform; in 2D
    the angular integral is a Bessel J0 and only the radial quadrature remains.
    """

    def __init__(self, dim: int, d: float, decay: float = 40.0, n_gl: int | None = None):
        if dim not in (1, 2):
            raise ConfigError("profile dimension must be 1 or 2")
        if d <= 0:
            raise ConfigError("support radius d must be positive")
        self.dim = dim
        self.d = float(d)
        self.decay = float(decay)
        self.sigma2 = d * d / decay
        self._n_gl = n_gl

    def tail_halfwidth(self, delta: float = 1e-13) -> float:
        """Radius beyond which |q| has dropped below delta relative to q(0)."""
        return float(np.sqrt(2.0 * np.log(1.0 / delta) / self.sigma2))

    def qhat(self, xi):
        """q̂ on vectors (or radii) ξ."""
        xi = np.asarray(xi, dtype=float)
        r = np.abs(xi) if xi.ndim <= 1 else np.linalg.norm(xi, axis=-1)
        out = np.exp(-(r**2) / (2 * self.sigma2))
        return np.where(r <= self.d, out, 0.0)

    def qhat_zero_integral(self) -> float:
        """∫ q dX = q̂(0) = 1 by the transform convention used here."""
        return 1.0

    def _nodes(self, x_max: float):
        n = self._n_gl or max(96, int(4 * self.d * max(x_max, 1.0)))
        return np.polynomial.legendre.leggauss(n)

    def q(self, X):
        """q at real-space points X (1D array of scalars, or (M, 2) in 2D)."""
        X = np.asarray(X, dtype=float)
        if self.dim == 1:
            x = np.atleast_1d(X).astype(float).ravel()
            nodes, wts = self._nodes(np.max(np.abs(x), initial=1.0))
            xi = 0.5 * self.d * (nodes + 1.0)          # map to [0, d]
            w = 0.5 * self.d * wts
            qh = np.exp(-(xi**2) / (2 * self.sigma2))
            out = np.empty(len(x))
            for lo in range(0, len(x), 4096):
                blk = x[lo:lo + 4096, None]
                out[lo:lo + 4096] = (np.cos(blk * xi[None, :]) @ (w * qh)) / np.pi
            return out.reshape(np.shape(X)) if np.shape(X) else float(out[0])
        pts = np.atleast_2d(X)
        r = np.linalg.norm(pts, axis=1)
        return self._q_radial_2d(r)

    def _q_radial_2d(self, r):
        from scipy.interpolate import CubicSpline
        from scipy.special import j0

        r = np.asarray(r, dtype=float)
        r_max = float(np.max(r, initial=1.0))
        nodes, wts = self._nodes(r_max)
        rho = 0.5 * self.d * (nodes + 1.0)
        w = 0.5 * self.d * wts
        qh = np.exp(-(rho**2) / (2 * self.sigma2))
        table_r = np.linspace(0.0, r_max * (1 + 1e-9), max(800, int(40 * r_max)))
        vals = (j0(np.outer(table_r, rho)) @ (w * qh * rho)) / (2 * np.pi)
        return CubicSpline(table_r, vals)(r)


def averaging_identity(periodic_p: PotentialCoeffs, q_profile: BandlimitedProfile, eps: float,
                       box_factor: float | None = None, n_nodes: int = 2**14):
    """The periodic-times-dilated-envelope product formula.

    lhs = ∫ p(x) q(εx) dx over a box of side box_factor/ε with midpoint
    quadrature; rhs = ε^{-n} (cell mean of p) q̂(0). Below the critical scale
    ε0 = |b_min| / (2 d) every nonzero dual vector aliases outside supp q̂ and
    the two sides agree to quadrature accuracy; at or above ε0 the identity
    genuinely fails, which is reported as a hypothesis violation.

    With box_factor=None the box is sized from the envelope's own spatial
    width so the truncated tail is below 1e-13 regardless of d.
    """
    lattice = periodic_p.lattice
    dim = lattice.dim
    if q_profile.dim != dim:
        raise ConfigError("envelope dimension does not match the lattice")
    eps0 = lattice.shortest_dual_length() / (2.0 * q_profile.d)
    if eps >= eps0:
        raise HypothesisViolation(
            f"eps={eps:.6g} is not below the critical scale eps0={eps0:.6g}; "
            "a nonzero dual vector falls inside the envelope's Fourier support"
        )
    if box_factor is None:
        box_factor = 2.0 * q_profile.tail_halfwidth(1e-13)
    side = box_factor / eps
    if dim == 1:
        h = side / n_nodes
        x = -side / 2 + h * (np.arange(n_nodes) + 0.5)
        p_vals = np.zeros(n_nodes, dtype=complex)
        for m, v in periodic_p.coeffs.items():
            G = lattice.dual_vector(m)[0]
            p_vals += v * np.exp(1j * G * x)
        lhs = float(np.real(h * np.sum(p_vals * q_profile.q(eps * x))))
    else:
        n_side = int(round(np.sqrt(n_nodes)))
        h = side / n_side
        axis = -side / 2 + h * (np.arange(n_side) + 0.5)
        X1, X2 = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([X1.ravel(), X2.ravel()])
        p_vals = np.zeros(len(pts), dtype=complex)
        for m, v in periodic_p.coeffs.items():
            G = lattice.dual_vector(m)
            p_vals += v * np.exp(1j * (pts @ G))
        lhs = float(np.real(h * h * np.sum(p_vals * q_profile.q(eps * pts))))
    mean_p = float(np.real(periodic_p[(0,) * dim]))
    rhs = eps ** (-dim) * mean_p * q_profile.qhat_zero_integral()
    return lhs, rhs


# ---------------------------------------------------------------------------
# near-invariance experiment
# ---------------------------------------------------------------------------


@dataclass
class InvarianceConfig:
    """Everything one near-invariance run needs.

    mode 'p0_random': probes are random states in ran(P0); the relevant
    envelope-momentum radius is the window radius 1 (fibers up to ε away).
    mode 'bl_packet': probes are random band-limited packets with ball radius
    d0. g must exceed the effective enclosure g0 computed for that radius.
    """

    deg: DegeneracyInfo
    profile: DrivingProfile
    g: float
    eps_list: tuple
    mode: str = "p0_random"
    L: float = 1.0
    d0: float = 0.4
    xi_count: int = 17
    n_probe: int = 16
    n_power: int = 8
    seed: int = 0
    dt: float = 2.5e-3
    sign_convention: str = "standard"
    threads: int = 1
    model: object = None        # EffectiveModel; derived from deg when None

    def steps_for(self, eps: float) -> int:
        T_eps = self.profile.driven_period(eps)
        return max(int(np.ceil(T_eps / self.dt)), 64 * max(self.profile.max_harmonic, 1))


@dataclass
class ResidualTable:
    """Outcome of a residual-decay experiment."""

    mode: str
    g: float
    g0: float
    eps: list
    residuals: list
    exponent: float | None
    probe_seeds: list
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mode": self.mode,
            "g": self.g,
            "g0": self.g0,
            "eps": [float(e) for e in self.eps],
            "residuals": [float(r) for r in self.residuals],
            "fitted_exponent": None if self.exponent is None else float(self.exponent),
            "probe_seeds": [int(s) for s in self.probe_seeds],
            "meta": self.meta,
        }

    def csv_rows(self):
        yield ("eps", "residual")
        for e, r in zip(self.eps, self.residuals):
            yield (f"{e:.17g}", f"{r:.17g}")


def fit_decay_exponent(eps, residuals):
    """Slope of log r against log ε; None when fewer than two positive residuals."""
    eps = np.asarray(eps, dtype=float)
    r = np.asarray(residuals, dtype=float)
    ok = r > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(eps[ok]), np.log(r[ok]), 1)[0])


def _require_arc_above_enclosure(cfg: InvarianceConfig, radius: float):
    from .effective import EffectiveModel, effective_monodromy_bound

    model = cfg.model
    if model is None:
        model = EffectiveModel.from_degeneracy(cfg.deg, cfg.profile.a, sign_convention=cfg.sign_convention)
    enc = effective_monodromy_bound(model, radius, cfg.profile)
    if cfg.g <= enc.g0:
        raise ConfigError(
            f"arc half-width g={cfg.g:.6g} must exceed the effective spectral enclosure "
            f"g0={enc.g0:.6g} (radius {radius:.3g}) for the invariance statement to apply"
        )
    if cfg.g >= np.pi:
        raise ConfigError("arc half-width g must be below π")
    return enc


def _random_window_probe(rng, grid, fibers, window):
    coeffs = rng.standard_normal((len(grid), fibers[0].size)) + 1j * rng.standard_normal((len(grid), fibers[0].size))
    state = state_from_fibers(grid, fibers, coeffs)
    probe = project_p0(state, window)
    n = probe.norm()
    return None if n < 1e-12 else probe.scaled(1.0 / n)


def _random_bl_probe(rng, envelope_grid, deg, eps, grid, fibers):
    xi, w = envelope_grid
    amp = rng.standard_normal((len(w), deg.N)) + 1j * rng.standard_normal((len(w), deg.N))
    env = Envelope(xi, w, amp, d0=np.max(np.linalg.norm(np.atleast_2d(xi), axis=1)) + 1e-9)
    state = synthesize_bl(env, deg, eps, fiber_grid=grid, fibers=fibers)
    n = state.norm()
    return None if n < 1e-12 else state.scaled(1.0 / n)


def _bl_subspace_project(state, deg, eps):
    """Orthogonal projection onto the band-limited subspace on this grid."""
    dim = deg.basis.lattice.dim
    up = eps ** (dim / 2.0)
    coeffs = np.empty_like(state.coeffs)
    for j in range(len(state.grid)):
        B = state.band_vectors[j]
        w = B @ state.coeffs[j]
        alpha = up * (deg.modes.conj().T @ w)
        coeffs[j] = B.conj().T @ (deg.modes @ alpha) * (eps ** (-dim / 2.0))
    return state.copy_with(coeffs)


def near_invariance_experiment(cfg: InvarianceConfig) -> ResidualTable:
    """Measure r(ε) = ||Π[complement of (-g, g)] ∘ (probe family)|| over ε.

    For each ε the probes are either random window states (ran P0) or random
    band-limited packets; the complement spectral measure is applied fiberwise
    through the per-fiber monodromies, and the reported residual is the max of
    the probe ratios and a power-iteration estimate on the composed projector.
    """
    if cfg.mode not in ("p0_random", "bl_packet"):
        raise ConfigError(f"unknown experiment mode {cfg.mode!r}")
    radius = 1.0 if cfg.mode == "p0_random" else cfg.d0
    enc = _require_arc_above_enclosure(cfg, radius)
    deg = cfg.deg
    out_arc = Arc.symmetric(cfg.g).complement()
    rng_root = np.random.default_rng(cfg.seed)
    seeds = [int(s) for s in rng_root.integers(0, 2**63 - 1, size=len(cfg.eps_list))]
    residuals = []
    for eps, seed in zip(cfg.eps_list, seeds):
        rng = np.random.default_rng(seed)
        grid = window_fiber_grid(deg, eps, radius, cfg.xi_count)
        fibers = fibers_for_grid(deg.potential, deg.basis, grid)
        monos = monodromy_stack(fibers, cfg.profile, eps, cfg.steps_for(eps),
                                e_star=deg.E_star, sign_convention=cfg.sign_convention,
                                threads=cfg.threads)
        window = WindowSpec(tuple(deg.k_star), deg.E_star, eps, cfg.L)
        if cfg.mode == "p0_random":
            def draw():
                return _random_window_probe(rng, grid, fibers, window)

            def reproject(state):
                return project_p0(state, window)
        else:
            env_grid = ball_xi_grid(deg.basis.lattice.dim, radius, cfg.xi_count)

            def draw():
                return _random_bl_probe(rng, env_grid, deg, eps, grid, fibers)

            def reproject(state):
                return _bl_subspace_project(state, deg, eps)

        best_r, best_probe = 0.0, None
        for _ in range(cfg.n_probe):
            probe = draw()
            if probe is None:
                continue
            r = apply_measure(probe, out_arc, monos).norm()
            if r >= best_r:
                best_r, best_probe = r, probe
        # power iteration on the composed projector sharpens the probe max
        if best_probe is not None and best_r > 0:
            v = best_probe
            for _ in range(cfg.n_power):
                w = reproject(apply_measure(v, out_arc, monos))
                n = w.norm()
                if n < 1e-300:
                    break
                v = w.scaled(1.0 / n)
            best_r = max(best_r, apply_measure(v, out_arc, monos).norm())
        residuals.append(best_r)
    exponent = fit_decay_exponent(cfg.eps_list, residuals)
    return ResidualTable(mode=cfg.mode, g=cfg.g, g0=enc.g0, eps=list(cfg.eps_list),
                         residuals=residuals, exponent=exponent, probe_seeds=seeds,
                         meta={"n_probe": cfg.n_probe, "n_power": cfg.n_power,
                               "xi_count": cfg.xi_count, "radius": radius,
                               "sign_convention": cfg.sign_convention})
