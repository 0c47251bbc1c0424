"""Built-in consistency suite: structural invariants that must hold on any
healthy installation, runnable from the command line in well under a minute.

Each check either returns a small detail dict (pass) or raises (fail); the
report collects both without aborting, so a broken install shows every
failing invariant at once.
"""

from __future__ import annotations

import numpy as np

from .bloch import assemble_fiber, band_structure, verify_separation
from .drive import DrivingProfile, drive_integral, eval_drive
from .effective import EffectiveModel, effective_multiplier, effective_monodromy_bound, lower_bound_check
from .evolve import monodromy
from .lattice import make_lattice, plane_wave_basis, potential_coefficients, zone_grid
from .spectral import Arc, StateFiberRep, arc_projector, centering_residual, pvm_checks, wrap_angle
from .wavepacket import Envelope, WindowSpec, project_p0, synthesize_bl, window_fiber_grid, fibers_for_grid


def _small_system():
    lat = make_lattice([[1.0]])
    pot = potential_coefficients(
        {"family": "cosine_sum", "terms": [{"m": [1], "amplitude": 1.0}]}, lat)
    basis = plane_wave_basis(lat, 3.5 * 2 * np.pi)
    return lat, pot, basis


def _drive():
    return DrivingProfile.real_harmonics(1.0, a=1, dim=1, terms=[(1, 0.0, 0.5)])


def check_lattice_duality():
    lat1 = make_lattice([[1.0]])
    lat2 = make_lattice([[np.sqrt(3) / 2, 0.5], [np.sqrt(3) / 2, -0.5]])
    worst = 0.0
    for lat in (lat1, lat2):
        gram = lat.vectors @ lat.duals.T
        worst = max(worst, float(np.max(np.abs(gram - 2 * np.pi * np.eye(lat.dim)))))
    return {"duality_defect": worst}


def check_drive_period():
    prof = _drive()
    T = np.linspace(0, 3.0, 301)
    shift = float(np.max(np.abs(eval_drive(prof, T + prof.T_per) - eval_drive(prof, T))))
    h_per = float(np.max(np.abs(drive_integral(prof, prof.T_per))))
    assert h_per == 0.0, f"periodwise drive integral {h_per} should vanish exactly"
    assert shift < 1e-12
    return {"periodicity_defect": shift, "period_integral": h_per}


def check_monodromy_unitarity():
    lat, pot, basis = _small_system()
    fib = assemble_fiber(pot, basis, [0.2 * 2 * np.pi])
    mono = monodromy(fib, _drive(), eps=0.5, n_steps=512)
    defect = float(np.linalg.norm(mono.M.conj().T @ mono.M - np.eye(fib.size)))
    mod = float(np.max(np.abs(np.abs(mono.multipliers) - 1.0)))
    return {"unitarity_defect": defect, "multiplier_modulus_defect": mod}


def check_pvm_axioms(rng):
    lat, pot, basis = _small_system()
    fib = assemble_fiber(pot, basis, [0.13 * 2 * np.pi])
    mono = monodromy(fib, _drive(), eps=0.5, n_steps=512)
    pvm_checks(mono, rng)
    return {"n_exponents": int(len(mono.exponents))}


def check_centering(rng):
    lat, pot, basis = _small_system()
    fib = assemble_fiber(pot, basis, [0.31 * 2 * np.pi])
    mono = monodromy(fib, _drive(), eps=0.5, n_steps=512)
    worst = 0.0
    for _ in range(16):
        lo = wrap_angle(rng.uniform(-np.pi, np.pi))
        hi = wrap_angle(lo + rng.uniform(0.3, 2.0))
        arc = Arc(lo, hi)
        if not np.any(mono.in_arc_mask(arc)):
            continue
        u = rng.standard_normal(fib.size) + 1j * rng.standard_normal(fib.size)
        u = arc_projector(mono, arc) @ u
        if np.linalg.norm(u) < 1e-9:
            continue
        resid, bound = centering_residual(mono, arc, u)
        worst = max(worst, resid - bound)
    assert worst <= 1e-10, f"centering bound violated by {worst}"
    return {"worst_excess": worst}


def check_window_projector(rng):
    lat, pot, basis = _small_system()
    deg = _degeneracy(lat, pot, basis)
    eps = 0.1
    grid = window_fiber_grid(deg, eps, 1.0, 9)
    fibers = fibers_for_grid(pot, basis, grid)
    window = WindowSpec(tuple(deg.k_star), deg.E_star, eps)
    coeffs = rng.standard_normal((len(grid), fibers[0].size)) + 1j * rng.standard_normal((len(grid), fibers[0].size))
    energies = np.stack([f.energies for f in fibers])
    vectors = np.stack([f.vectors for f in fibers])
    state = StateFiberRep(grid, coeffs, energies, vectors)
    p1 = project_p0(state, window)
    p2 = project_p0(p1, window)
    idem = (p1 - p2).norm()
    cross = abs(p1.inner(state - p1))
    assert idem == 0.0 and cross < 1e-10
    return {"idempotence_defect": idem, "orthogonality_defect": cross}


def check_packet_isometry(rng):
    lat, pot, basis = _small_system()
    deg = _degeneracy(lat, pot, basis)
    env = Envelope.gaussian(1, 0.4, 9)
    state = synthesize_bl(env, deg, eps=0.05)
    defect = abs(state.norm() - env.norm())
    assert defect < 1e-10
    return {"norm_defect": float(defect)}


def check_effective(rng):
    lat, pot, basis = _small_system()
    deg = _degeneracy(lat, pot, basis)
    model = EffectiveModel.from_degeneracy(deg, a=1)
    prof = _drive()
    worst_unit = 0.0
    worst_mean = 0.0
    undriven = DrivingProfile.zero(prof.T_per, prof.a, 1)
    for _ in range(8):
        xi = rng.uniform(-0.5, 0.5, size=1)
        U = effective_multiplier(model, xi, prof)
        worst_unit = max(worst_unit, float(np.max(np.abs(U.conj().T @ U - np.eye(model.N)))))
        U0 = effective_multiplier(model, xi, undriven)
        worst_mean = max(worst_mean, float(np.max(np.abs(U - U0))))
    assert worst_unit < 1e-10 and worst_mean < 1e-12
    return {"unitarity_defect": worst_unit, "zero_mean_invariance_defect": worst_mean}


def check_lower_bound(rng):
    lat, pot, basis = _small_system()
    deg = _degeneracy(lat, pot, basis)
    model = EffectiveModel.from_degeneracy(deg, a=1)
    prof = _drive()
    d0 = 0.25
    enc = effective_monodromy_bound(model, d0, prof)
    worst = 0.0
    for _ in range(8):
        env = Envelope.gaussian(1, d0, 9).with_amp(
            rng.standard_normal((9, 1)) + 1j * rng.standard_normal((9, 1)))
        nu0 = rng.uniform(enc.g0 * 1.05 + 1e-6, np.pi)
        lhs, rhs = lower_bound_check(model, nu0, env, prof)
        worst = max(worst, rhs - lhs)
    return {"worst_excess": worst, "g0": enc.g0}


def _degeneracy(lat, pot, basis):
    k_star = np.array([0.15 * 2 * np.pi])
    grid = zone_grid(lat, [17])
    bands = band_structure(pot, basis, grid, n_bands=4)
    deg = verify_separation(bands, k_star, b_star=1, N=1, radius=1.0)
    if not hasattr(deg, "classification"):
        raise RuntimeError(f"separation scan failed: {deg}")
    return deg


def run_selftest(seed: int = 0) -> dict:
    """Run every structural invariant; returns {"ok", "seed", "checks": [...]}."""
    rng = np.random.default_rng(seed)
    named = [
        ("lattice_duality", check_lattice_duality),
        ("drive_periodicity", check_drive_period),
        ("monodromy_unitarity", check_monodromy_unitarity),
        ("pvm_axioms", lambda: check_pvm_axioms(rng)),
        ("centering_inequality", lambda: check_centering(rng)),
        ("window_projector", lambda: check_window_projector(rng)),
        ("packet_isometry", lambda: check_packet_isometry(rng)),
        ("effective_multipliers", lambda: check_effective(rng)),
        ("lower_bound", lambda: check_lower_bound(rng)),
    ]
    checks = []
    for name, fn in named:
        try:
            detail = fn()
            checks.append({"name": name, "ok": True, "detail": detail})
        except Exception as exc:   # report, never abort: the point is the full picture
            checks.append({"name": name, "ok": False, "detail": f"{type(exc).__name__}: {exc}"})
    return {"seed": int(seed), "ok": all(c["ok"] for c in checks), "checks": checks}
