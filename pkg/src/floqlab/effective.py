"""Effective envelope dynamics near a band degeneracy.

Each local band classification gets a small model Hamiltonian acting on the
envelope amplitudes in slow time T: a transport phase for a noncritical band,
a free quadratic phase at a simple critical point, a two-mode Dirac generator
at a conical touching, and a two-mode quadratic generator at a double
touching. The drive enters minimally through the symbol argument ξ - s A(T),
with s = ±1 the overall sign convention shared with the full evolution.

Transport and the scalar quadratic model commute with themselves across time
and are integrated in closed form. The two-mode models use an exponential
midpoint rule built from exact 2x2 unitary steps; the quadratic two-mode
model first strips the scalar |ξ - s A|² phase, which is again closed form,
and integrates only the traceless remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import DegeneracyInfo
from .drive import DrivingProfile, drive_integral, drive_quadratic_integral, eval_drive
from .errors import ConfigError, HypothesisViolation, NumericError
from .evolve import SIGN_CONVENTIONS, convention_sign
from .lattice import window_grid
from .spectral import wrap_angle
from .wavepacket import Envelope, InvarianceConfig, fibers_for_grid, synthesize_bl

VARIANTS = ("transport", "dirac", "schrodinger", "matrix_schrodinger")
DEFAULT_STEPS = 2000
LOWER_BOUND_SLACK = 1e-10

_SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class EffectiveModel:
    """Envelope model attached to one band degeneracy.

    variant   one of VARIANTS
    dim       spatial dimension of ξ
    N         number of envelope components (1 or 2)
    a         drive-scale exponent, matching the driving profile
    c         transport velocity, symbol S(κ) = -c·κ               (transport)
    v_D       cone slope, S(κ) = v_D (κ1 σ1 + κ2 σ2)              (dirac)
    curvature C with S(κ) = κᵀCκ; equals half the band Hessian    (schrodinger)
    abg       (α, γ, β): S(κ) = α|κ|²σ0 + γ(κ1²-κ2²)σ2 + 2βκ1κ2σ1 (matrix_schrodinger)
    """

    variant: str
    dim: int
    N: int
    a: int
    c: tuple | None = None
    v_D: float | None = None
    curvature: tuple | None = None
    abg: tuple | None = None
    sign_convention: str = "standard"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown effective variant {self.variant!r}")
        if self.dim not in (1, 2) or self.a not in (1, 2):
            raise ConfigError("dim and a must be 1 or 2")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ConfigError(f"unknown sign convention {self.sign_convention!r}")
        if self.variant == "transport":
            if self.N != 1 or self.c is None:
                raise ConfigError("transport model needs N=1 and a velocity c")
            if np.linalg.norm(self.c_vec) == 0:
                raise ConfigError("transport model requires a nonzero velocity")
        elif self.variant == "schrodinger":
            if self.N != 1 or self.curvature is None:
                raise ConfigError("schrodinger model needs N=1 and a curvature matrix")
        elif self.variant == "dirac":
            if self.N != 2 or self.dim != 2 or self.v_D is None:
                raise ConfigError("dirac model needs N=2, dim=2 and a cone slope")
        else:
            if self.N != 2 or self.dim != 2 or self.abg is None:
                raise ConfigError("matrix_schrodinger model needs N=2, dim=2 and (α, γ, β)")

    @property
    def c_vec(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.c, dtype=float))

    @property
    def curvature_mat(self) -> np.ndarray:
        C = np.atleast_2d(np.asarray(self.curvature, dtype=float))
        return 0.5 * (C + C.T)

    @property
    def sign(self) -> float:
        return convention_sign(self.sign_convention)

    @classmethod
    def from_degeneracy(cls, deg: DegeneracyInfo, a: int,
                        sign_convention: str = "standard") -> "EffectiveModel":
        dim = int(np.atleast_1d(deg.k_star).size)
        if deg.classification == "noncritical":
            return cls("transport", dim, 1, a, c=tuple(np.atleast_1d(deg.c)),
                       sign_convention=sign_convention)
        if deg.classification == "quadratic_simple":
            C = 0.5 * np.atleast_2d(deg.hessian)
            return cls("schrodinger", dim, 1, a, curvature=tuple(map(tuple, C)),
                       sign_convention=sign_convention)
        if deg.classification == "dirac":
            return cls("dirac", dim, 2, a, v_D=float(deg.v_D), sign_convention=sign_convention)
        if deg.classification == "quadratic_double":
            return cls("matrix_schrodinger", dim, 2, a, abg=tuple(deg.abg),
                       sign_convention=sign_convention)
        raise ConfigError(f"no effective model for classification {deg.classification!r}")


def symbol_matrix(model: EffectiveModel, kappa) -> np.ndarray:
    """The N x N symbol S(κ)."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    if model.variant == "transport":
        return np.array([[-float(model.c_vec @ kappa)]], dtype=complex)
    if model.variant == "schrodinger":
        return np.array([[float(kappa @ model.curvature_mat @ kappa)]], dtype=complex)
    if model.variant == "dirac":
        return model.v_D * (kappa[0] * _SIGMA1 + kappa[1] * _SIGMA2)
    al, ga, be = model.abg
    return (al * (kappa @ kappa) * np.eye(2, dtype=complex)
            + ga * (kappa[0] ** 2 - kappa[1] ** 2) * _SIGMA2
            + 2.0 * be * kappa[0] * kappa[1] * _SIGMA1)


def _su2_steps(b1, b2, b3, dT):
    """Product of exp(-i (b·σ) dT) over the step axis, later steps on the left."""
    norm = np.sqrt(b1**2 + b2**2 + b3**2)
    phi = norm * dT
    sinc = np.where(norm > 0, np.sin(phi) / np.where(norm > 0, norm, 1.0), dT * np.ones_like(phi))
    cosphi = np.cos(phi)
    U = np.eye(2, dtype=complex)
    for j in range(len(phi)):
        step = cosphi[j] * np.eye(2, dtype=complex) - 1j * sinc[j] * (
            b1[j] * _SIGMA1 + b2[j] * _SIGMA2 + b3[j] * _SIGMA3)
        U = step @ U
    return U


def _scalar_quadratic_phase(model, xi, profile, T):
    """∫_0^T of the commuting quadratic generator s (ξ - sA)ᵀ C (ξ - sA)."""
    s = model.sign
    C = model.curvature_mat
    h = drive_integral(profile, T)
    Q = drive_quadratic_integral(profile, C, T)
    return s * float(xi @ C @ xi) * T - 2.0 * float(xi @ C @ h) + s * Q


def _two_mode_mu_grid(model, pts, drive, T, n_steps):
    """μ(ξ) of the traceless factor for a whole ξ grid at once.

    Both two-mode generators live in the (σ1, σ2) plane, so each step is
    cos φ · I - i sinc(b·σ); the 2x2 products are carried componentwise
    across the grid, one step at a time, which keeps memory at O(#nodes).
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    n = len(pts)
    dT = T / n_steps
    mids = (np.arange(n_steps) + 0.5) * dT
    A = eval_drive(drive, mids)
    s = model.sign
    u11 = np.ones(n, dtype=complex)
    u12 = np.zeros(n, dtype=complex)
    u21 = np.zeros(n, dtype=complex)
    u22 = np.ones(n, dtype=complex)
    if model.variant == "dirac":
        v = model.v_D
    else:
        _, ga, be = model.abg
    for j in range(n_steps):
        w = pts - s * A[j]
        if model.variant == "dirac":
            b1 = s * v * w[:, 0]
            b2 = s * v * w[:, 1]
        else:
            b1 = s * 2.0 * be * w[:, 0] * w[:, 1]
            b2 = s * ga * (w[:, 0] ** 2 - w[:, 1] ** 2)
        norm = np.hypot(b1, b2)
        phi = norm * dT
        sinc = np.where(norm > 0, np.sin(phi) / np.where(norm > 0, norm, 1.0), dT)
        c = np.cos(phi)
        s12 = -1j * sinc * (b1 - 1j * b2)
        s21 = -1j * sinc * (b1 + 1j * b2)
        n11 = c * u11 + s12 * u21
        n12 = c * u12 + s12 * u22
        n21 = s21 * u11 + c * u21
        n22 = s21 * u12 + c * u22
        u11, u12, u21, u22 = n11, n12, n21, n22
    return np.arccos(np.clip(0.5 * np.real(u11 + u22), -1.0, 1.0))


def effective_propagator(model: EffectiveModel, xi, drive: DrivingProfile, T: float,
                         n_steps: int = DEFAULT_STEPS, method: str = "auto") -> np.ndarray:
    """Slow-time propagator Û(T; ξ) of the effective model, an N x N unitary.

    The single-mode variants have closed-form phases (drive integrals done
    term-wise); method='integrator' forces the midpoint rule instead so the
    two routes can be compared. The two-mode variants always integrate.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != model.dim:
        raise ConfigError(f"ξ has dimension {xi.size}, model expects {model.dim}")
    if drive.dim != model.dim:
        raise ConfigError("drive dimension does not match the model")
    if method not in ("auto", "closed", "integrator"):
        raise ConfigError(f"unknown propagator method {method!r}")
    s = model.sign
    if model.N == 1 and method == "integrator":
        if T == 0:
            return np.eye(1, dtype=complex)
        dT = T / n_steps
        mids = (np.arange(n_steps) + 0.5) * dT
        w = xi[None, :] - s * eval_drive(drive, mids)
        if model.variant == "transport":
            gen = -s * (w @ model.c_vec)
        else:
            C = model.curvature_mat
            gen = s * np.einsum("ti,ij,tj->t", w, C, w)
        return np.array([[np.exp(-1j * float(np.sum(gen)) * dT)]], dtype=complex)
    if model.variant == "transport":
        h = drive_integral(drive, T)
        phase = s * float(model.c_vec @ xi) * T - float(model.c_vec @ h)
        return np.array([[np.exp(1j * phase)]], dtype=complex)
    if model.variant == "schrodinger":
        return np.array([[np.exp(-1j * _scalar_quadratic_phase(model, xi, drive, T))]], dtype=complex)
    if method == "closed":
        raise ConfigError(f"no closed form for the {model.variant} variant; use the integrator")
    if T == 0:
        return np.eye(2, dtype=complex)
    dT = T / n_steps
    mids = (np.arange(n_steps) + 0.5) * dT
    A = eval_drive(drive, mids)
    w = xi[None, :] - s * A
    if model.variant == "dirac":
        return _su2_steps(s * model.v_D * w[:, 0], s * model.v_D * w[:, 1],
                          np.zeros(n_steps), dT)
    al, ga, be = model.abg
    U_tl = _su2_steps(s * 2.0 * be * w[:, 0] * w[:, 1],
                      s * ga * (w[:, 0] ** 2 - w[:, 1] ** 2),
                      np.zeros(n_steps), dT)
    scalar_model = EffectiveModel("schrodinger", 2, 1, model.a,
                                  curvature=((al, 0.0), (0.0, al)),
                                  sign_convention=model.sign_convention)
    phase = _scalar_quadratic_phase(scalar_model, xi, drive, T)
    return np.exp(-1j * phase) * U_tl


def effective_multiplier(model: EffectiveModel, xi, drive: DrivingProfile,
                         n_steps: int = DEFAULT_STEPS, method: str = "auto") -> np.ndarray:
    """Monodromy of the effective model over one driving period."""
    return effective_propagator(model, xi, drive, drive.T_per, n_steps, method=method)


def traceless_exponents(model: EffectiveModel, xi, drive: DrivingProfile,
                        n_steps: int = DEFAULT_STEPS):
    """(scalar phase, μ) split of the two-mode quadratic multiplier.

    The multiplier factors as e^{-i phase} times an SU(2) matrix with
    eigenvalues e^{∓iμ}, μ ∈ [0, π]; exposing the split lets tests pin the
    scalar and traceless pieces separately.
    """
    if model.variant != "matrix_schrodinger":
        raise ConfigError("traceless split only applies to the matrix_schrodinger variant")
    U = effective_multiplier(model, xi, drive, n_steps)
    al, _, _ = model.abg
    scalar_model = EffectiveModel("schrodinger", 2, 1, model.a,
                                  curvature=((al, 0.0), (0.0, al)),
                                  sign_convention=model.sign_convention)
    phase = _scalar_quadratic_phase(scalar_model, np.atleast_1d(xi), drive, drive.T_per)
    U_tl = np.exp(1j * phase) * U
    mu = float(np.arccos(np.clip(np.real(np.trace(U_tl)) / 2.0, -1.0, 1.0)))
    return phase, mu


@dataclass(frozen=True)
class SpectralEnclosure:
    """All effective multipliers over |ξ| ≤ d0 lie in the arc (-g0, g0).

    margin is the rigor allowance already folded into g0: zero for the
    closed-form variants (the supremum is exact), a Lipschitz-times-spacing
    term for the swept two-mode variants.
    """

    d0: float
    g0: float
    margin: float
    variant: str
    resolution: int
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"d0": float(self.d0), "g0": float(self.g0), "margin": float(self.margin),
                "variant": self.variant, "resolution": int(self.resolution), "meta": self.meta}


def _enclosure_failure(g0, d0):
    return HypothesisViolation(
        f"effective exponents reach {g0:.6g} ≥ π over |ξ| ≤ {d0:.3g}; "
        "no proper invariant arc exists at this envelope radius")


def _sweep_xi(dim, d0, n_r):
    if dim == 1:
        r = d0 * (np.arange(1, n_r + 1) / n_r)
        pts = np.concatenate([[0.0], r, -r])[:, None]
        return pts, d0 / n_r
    n_ang = max(8, 4 * n_r)
    r = d0 * (np.arange(1, n_r + 1) / n_r)
    ang = 2 * np.pi * np.arange(n_ang) / n_ang
    pts = [np.zeros((1, 2))]
    for ri in r:
        pts.append(np.column_stack([ri * np.cos(ang), ri * np.sin(ang)]))
    spacing = max(d0 / n_r, d0 * 2 * np.pi / n_ang)
    return np.vstack(pts), spacing


def effective_monodromy_bound(model: EffectiveModel, d0: float, drive: DrivingProfile,
                              xi_grid_resolution: int = 33,
                              n_steps: int = DEFAULT_STEPS) -> SpectralEnclosure:
    """Smallest symmetric arc (-g0, g0) containing every effective multiplier
    exponent over the envelope ball |ξ| ≤ d0.

    Transport: the periodwise drive integral vanishes for any zero-mean drive,
    so the exponent is ±|c·ξ| T_per and the supremum d0 T_per |c| is exact and
    drive independent. Scalar quadratic: exact interval arithmetic on the
    quadratic form plus the drive's constant phase. Two-mode variants: grid
    sweep of the multiplier exponents plus a Lipschitz margin for the gaps.
    """
    if d0 <= 0:
        raise ConfigError("envelope radius d0 must be positive")
    if drive.dim != model.dim:
        raise ConfigError("drive dimension does not match the model")
    T = drive.T_per
    if model.variant == "transport":
        g0 = float(np.linalg.norm(model.c_vec) * d0 * T)
        if g0 >= np.pi:
            raise _enclosure_failure(g0, d0)
        return SpectralEnclosure(d0, g0, 0.0, model.variant, 0,
                                 meta={"T_per": T, "speed": float(np.linalg.norm(model.c_vec))})
    if model.variant == "schrodinger":
        lam = np.linalg.eigvalsh(model.curvature_mat)
        q_lo = min(0.0, float(lam[0]) * d0 * d0)
        q_hi = max(0.0, float(lam[-1]) * d0 * d0)
        Q = drive_quadratic_integral(drive, model.curvature_mat, T)
        s = model.sign
        ends = (s * (q_lo * T + Q), s * (q_hi * T + Q))
        g0 = max(abs(ends[0]), abs(ends[1]))
        if g0 >= np.pi:
            raise _enclosure_failure(g0, d0)
        return SpectralEnclosure(d0, g0, 0.0, model.variant, 0,
                                 meta={"T_per": T, "phase_interval": [min(ends), max(ends)]})
    pts, spacing = _sweep_xi(model.dim, d0, xi_grid_resolution)
    mu = _two_mode_mu_grid(model, pts, drive, T, n_steps)
    if model.variant == "dirac":
        worst = float(np.max(mu))
    else:
        al = model.abg[0]
        h = drive_integral(drive, T)
        Q = drive_quadratic_integral(drive, al * np.eye(2), T)
        s = model.sign
        phase = s * al * np.einsum("ni,ni->n", pts, pts) * T - 2.0 * al * (pts @ h) + s * Q
        worst = float(np.max(np.maximum(np.abs(wrap_angle(phase - mu)),
                                        np.abs(wrap_angle(phase + mu)))))
    a_dense = eval_drive(drive, drive.T_per * np.arange(1024) / 1024)
    a_max = float(np.max(np.linalg.norm(a_dense, axis=1)))
    if model.variant == "dirac":
        lip = model.v_D
    else:
        al, ga, be = model.abg
        lip = 2.0 * np.sqrt(2.0) * (abs(al) + abs(ga) + abs(be)) * (d0 + a_max)
    margin = (np.pi / 2.0) * lip * T * spacing + 1e-7
    g0 = worst + margin
    if g0 >= np.pi:
        raise _enclosure_failure(g0, d0)
    return SpectralEnclosure(d0, g0, margin, model.variant, xi_grid_resolution,
                             meta={"T_per": T, "grid_max": worst, "drive_sup": a_max})


def apply_effective(envelope: Envelope, model: EffectiveModel, drive: DrivingProfile,
                    t: float, eps: float, n_steps: int = DEFAULT_STEPS) -> Envelope:
    """Push envelope amplitudes through the effective flow up to lab time t.

    Slow time is T = ε^a t; each ξ node evolves by its own N x N propagator.
    """
    if envelope.n_modes != model.N:
        raise ConfigError("envelope mode count does not match the model")
    T = (eps ** model.a) * t
    amp = np.empty_like(envelope.amp)
    for i, xi in enumerate(envelope.xi):
        U = effective_propagator(model, xi, drive, T, n_steps)
        amp[i] = U @ envelope.amp[i]
    return envelope.with_amp(amp)


def validate_effective(cfg: InvarianceConfig, model: EffectiveModel | None, eps: float,
                       n_checkpoints: int = 8) -> dict:
    """Full versus effective evolution of one band-limited packet.

    Starts from a unit-norm Gaussian packet, runs the full fiberwise evolution
    across one driven period, and at each checkpoint compares against the
    packet synthesized from effectively-evolved amplitudes. Returns the
    checkpoint table and the sup discrepancy.
    """
    from .evolve import propagate

    deg = cfg.deg
    profile = cfg.profile
    if model is None:
        model = EffectiveModel.from_degeneracy(deg, profile.a, cfg.sign_convention)
    lattice = deg.basis.lattice
    env0 = Envelope.gaussian(lattice.dim, cfg.d0, cfg.xi_count, n_modes=deg.N)
    grid = window_grid(lattice, deg.k_star, eps, env0.xi, env0.weights)
    fibers = fibers_for_grid(deg.potential, deg.basis, grid)
    psi = synthesize_bl(env0, deg, eps, fiber_grid=grid, fibers=fibers)
    norm0 = psi.norm()
    T_eps = profile.driven_period(eps)
    times = T_eps * np.arange(1, n_checkpoints + 1) / n_checkpoints
    n_seg = max(int(np.ceil(cfg.steps_for(eps) / n_checkpoints)),
                64 * max(profile.max_harmonic, 1))
    coeffs = psi.coeffs.copy()
    t_prev = 0.0
    rows = []
    for t_j in times:
        for i, fib in enumerate(fibers):
            U = propagate(fib, profile, eps, t_prev, t_j, n_seg,
                          e_star=deg.E_star, sign_convention=cfg.sign_convention)
            w = fib.vectors @ coeffs[i]
            coeffs[i] = fib.vectors.conj().T @ (U @ w)
        t_prev = t_j
        state_full = psi.copy_with(coeffs)
        env_t = apply_effective(env0, model, profile, t_j, eps)
        u_eff = synthesize_bl(env_t, deg, eps, fiber_grid=grid, fibers=fibers)
        rows.append({"t": float(t_j), "error": float((state_full - u_eff).norm() / norm0)})
    return {"eps": float(eps), "variant": model.variant, "n_checkpoints": int(n_checkpoints),
            "checkpoints": rows, "max_error": max(r["error"] for r in rows)}


def lower_bound_check(model: EffectiveModel, nu0: float, envelope: Envelope,
                      drive: DrivingProfile, n_steps: int = DEFAULT_STEPS):
    """Resolvent-type lower bound at a reference exponent outside the enclosure.

    lhs = ||(e^{-i ν0} - M_eff) f|| over the envelope's quadrature, rhs =
    2 sin((ν0 - g0)/2) ||f||. Since every multiplier sits in (-g0, g0) and
    ν0 ∈ (g0, π], each node's multiplier is at least rhs/||f|| away from
    e^{-i ν0} on the circle, so lhs ≥ rhs up to roundoff; a violation beyond
    the slack is reported as a numeric failure.
    """
    enc = effective_monodromy_bound(model, envelope.d0, drive, n_steps=n_steps)
    if nu0 <= enc.g0:
        raise ConfigError(
            f"reference exponent ν0={nu0:.6g} must exceed the enclosure half-width g0={enc.g0:.6g}")
    if nu0 > np.pi:
        raise ConfigError("reference exponent must lie in (g0, π]")
    z0 = np.exp(-1j * nu0)
    acc = 0.0
    for i, xi in enumerate(envelope.xi):
        U = effective_multiplier(model, xi, drive, n_steps)
        v = z0 * envelope.amp[i] - U @ envelope.amp[i]
        acc += envelope.weights[i] * float(np.real(np.vdot(v, v)))
    lhs = float(np.sqrt(acc))
    rhs = 2.0 * np.sin((nu0 - enc.g0) / 2.0) * envelope.norm()
    if lhs < rhs - LOWER_BOUND_SLACK:
        raise NumericError(
            f"lower bound violated: lhs={lhs:.12g} < rhs={rhs:.12g} beyond slack")
    return lhs, rhs
