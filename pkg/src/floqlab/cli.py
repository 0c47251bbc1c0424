"""Command-line front end.

Subcommands map one-to-one onto the library's experiment entry points:

  bands              band structure over a zone grid         -> CSV
  degeneracy         window isolation scan + classification  -> JSON
  monodromy          per-fiber driven exponents              -> CSV
  enclosure          effective multiplier arc bound          -> JSON
  invariance         residual decay experiment               -> CSV or JSON
  effective-validate full vs effective packet evolution      -> JSON
  selftest           structural invariant suite              -> JSON

All configuration comes from one JSON file; unknown keys anywhere are
rejected. Exit codes: 0 success, 2 configuration problem, 3 numerical
failure, 4 hypothesis violation. Artifacts embed the sha256 of the canonical
configuration text and are byte-identical across reruns (thread count
included), so diffing two runs answers "same inputs?" directly.

Band indices are 1-based in ascending energy order throughout: the lowest
band is b_star = 1, and a two-fold touching of the lowest pair is b_star = 1,
N = 2.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .bloch import band_structure, verify_separation
from .drive import DrivingProfile
from .effective import EffectiveModel, effective_monodromy_bound, validate_effective
from .errors import ConfigError, FloqlabError
from .evolve import monodromy_stack
from .lattice import make_lattice, plane_wave_basis, potential_coefficients, zone_grid
from .selftest import run_selftest
from .wavepacket import InvarianceConfig, fibers_for_grid, near_invariance_experiment

_SECTION_KEYS = {
    "lattice": {"vectors"},
    "basis": {"cutoff", "max_size"},
    "grid": {"counts", "n_bands"},
    "window": {"k_star", "b_star", "N", "radius", "n_bands", "scan_counts"},
    "drive": {"T_per", "a", "terms"},
    "evolution": {"dt", "sign_convention", "eps", "e_star", "n_steps"},
    "experiment": {"mode", "g", "eps_list", "d0", "xi_count", "n_probe", "n_power", "L"},
    "effective": {"d0", "resolution", "eps", "n_checkpoints", "xi_count"},
}
_TOP_KEYS = set(_SECTION_KEYS) | {"potential", "seed"}


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    return cfg


def _section(cfg: dict, name: str, required=()) -> dict:
    if name not in cfg:
        raise ConfigError(f"config is missing the {name!r} section")
    sec = cfg[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    if name in _SECTION_KEYS:
        unknown = set(sec) - _SECTION_KEYS[name]
        if unknown:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    missing = [k for k in required if k not in sec]
    if missing:
        raise ConfigError(f"section {name!r} is missing required keys: {missing}")
    return sec


def _optional_section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        return {}
    return _section(cfg, name)


def _config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _seed_of(cfg: dict, args) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def _system_from(cfg: dict):
    lat = make_lattice(_section(cfg, "lattice", ["vectors"])["vectors"])
    pot = potential_coefficients(cfg.get("potential", {"family": "zero"}), lat)
    bsec = _section(cfg, "basis", ["cutoff"])
    basis = plane_wave_basis(lat, float(bsec["cutoff"]), int(bsec.get("max_size", 4096)))
    return lat, pot, basis


def _drive_from(cfg: dict, dim: int) -> DrivingProfile:
    d = _section(cfg, "drive", ["T_per", "a", "terms"])
    terms = []
    for i, t in enumerate(d["terms"]):
        if not isinstance(t, dict) or set(t) - {"m", "cos", "sin"}:
            raise ConfigError(f"drive term {i} must be an object with keys m/cos/sin")
        terms.append((int(t["m"]),
                      np.asarray(t.get("cos", 0.0), dtype=float),
                      np.asarray(t.get("sin", 0.0), dtype=float)))
    return DrivingProfile.real_harmonics(float(d["T_per"]), int(d["a"]), dim, terms)


def _degeneracy_from(cfg: dict, lat, pot, basis):
    win = _section(cfg, "window", ["k_star", "b_star", "radius", "n_bands"])
    counts = win.get("scan_counts", [17] * lat.dim)
    bands = band_structure(pot, basis, zone_grid(lat, counts), int(win["n_bands"]))
    return verify_separation(bands, np.asarray(win["k_star"], dtype=float),
                             int(win["b_star"]), int(win.get("N", 1)), float(win["radius"]))


def _require_degeneracy(cfg, lat, pot, basis):
    deg = _degeneracy_from(cfg, lat, pot, basis)
    if not hasattr(deg, "classification"):
        raise ConfigError(f"window does not isolate the requested bands: {deg.message}")
    return deg


def _emit_json(obj, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)


def _emit_csv(rows, comments, out: str | None) -> None:
    lines = [f"# {c}" for c in comments]
    lines += [",".join(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)


def _f(x: float) -> str:
    return f"{float(x):.17g}"


def _cmd_bands(cfg, args):
    lat, pot, basis = _system_from(cfg)
    gsec = _section(cfg, "grid", ["counts"])
    grid = zone_grid(lat, gsec["counts"])
    n_bands = int(gsec.get("n_bands", 4))
    bands = band_structure(pot, basis, grid, n_bands)
    header = [f"k_{i + 1}" for i in range(lat.dim)] + [f"E_{b + 1}" for b in range(n_bands)]
    rows = [tuple(header)]
    for j in range(len(grid)):
        rows.append(tuple(_f(v) for v in grid.points[j]) + tuple(_f(e) for e in bands.energies[j]))
    _emit_csv(rows, [f"config_sha256={_config_hash(cfg)}", f"seed={_seed_of(cfg, args)}",
                     f"n_waves={len(basis)}"], args.out)
    return 0


def _cmd_degeneracy(cfg, args):
    lat, pot, basis = _system_from(cfg)
    deg = _degeneracy_from(cfg, lat, pot, basis)
    if hasattr(deg, "classification"):
        payload = {"ok": True, "degeneracy": deg.to_dict()}
    else:
        payload = {"ok": False, "message": deg.message,
                   "offending_k": None if deg.offending_k is None else list(map(float, np.atleast_1d(deg.offending_k))),
                   "offending_band": deg.offending_band}
    payload["config_sha256"] = _config_hash(cfg)
    payload["seed"] = _seed_of(cfg, args)
    payload["n_waves"] = len(basis)
    _emit_json(payload, args.out)
    return 0


def _cmd_monodromy(cfg, args):
    lat, pot, basis = _system_from(cfg)
    grid = zone_grid(lat, _section(cfg, "grid", ["counts"])["counts"])
    drive = _drive_from(cfg, lat.dim)
    ev = _section(cfg, "evolution", ["eps"])
    eps = float(ev["eps"])
    dt = float(ev.get("dt", 2.5e-3))
    n_steps = int(ev.get("n_steps", max(int(np.ceil(drive.driven_period(eps) / dt)),
                                        64 * max(drive.max_harmonic, 1))))
    fibers = fibers_for_grid(pot, basis, grid)
    monos = monodromy_stack(fibers, drive, eps, n_steps,
                            e_star=float(ev.get("e_star", 0.0)),
                            sign_convention=ev.get("sign_convention", "standard"),
                            threads=args.threads)
    header = [f"k_{i + 1}" for i in range(lat.dim)] + [f"theta_{j + 1}" for j in range(len(basis))]
    rows = [tuple(header)]
    for m in monos:
        rows.append(tuple(_f(v) for v in np.atleast_1d(m.k)) + tuple(_f(t) for t in m.exponents))
    _emit_csv(rows, [f"config_sha256={_config_hash(cfg)}", f"seed={_seed_of(cfg, args)}",
                     f"eps={_f(eps)}", f"n_steps={n_steps}",
                     f"T_eps={_f(drive.driven_period(eps))}"], args.out)
    return 0


def _cmd_enclosure(cfg, args):
    lat, pot, basis = _system_from(cfg)
    deg = _require_degeneracy(cfg, lat, pot, basis)
    drive = _drive_from(cfg, lat.dim)
    esec = _section(cfg, "effective", ["d0"])
    model = EffectiveModel.from_degeneracy(deg, drive.a)
    enc = effective_monodromy_bound(model, float(esec["d0"]), drive,
                                    int(esec.get("resolution", 33)))
    _emit_json({"enclosure": enc.to_dict(),
                "model": {"variant": model.variant, "N": model.N, "a": model.a},
                "degeneracy": deg.to_dict(),
                "config_sha256": _config_hash(cfg),
                "seed": _seed_of(cfg, args)}, args.out)
    return 0


def _cmd_invariance(cfg, args):
    lat, pot, basis = _system_from(cfg)
    deg = _require_degeneracy(cfg, lat, pot, basis)
    drive = _drive_from(cfg, lat.dim)
    ex = _section(cfg, "experiment", ["g", "eps_list"])
    ev = _optional_section(cfg, "evolution")
    seed = _seed_of(cfg, args)
    icfg = InvarianceConfig(
        deg=deg, profile=drive, g=float(ex["g"]),
        eps_list=tuple(float(e) for e in ex["eps_list"]),
        mode=ex.get("mode", "p0_random"), L=float(ex.get("L", 1.0)),
        d0=float(ex.get("d0", 0.4)), xi_count=int(ex.get("xi_count", 17)),
        n_probe=int(ex.get("n_probe", 16)), n_power=int(ex.get("n_power", 8)),
        seed=seed, dt=float(ev.get("dt", 2.5e-3)),
        sign_convention=ev.get("sign_convention", "standard"), threads=args.threads)
    table = near_invariance_experiment(icfg)
    if args.out and args.out.endswith(".csv"):
        comments = [f"config_sha256={_config_hash(cfg)}", f"seed={seed}", f"mode={table.mode}",
                    f"g={_f(table.g)}", f"g0={_f(table.g0)}",
                    "fitted_exponent=" + ("none" if table.exponent is None else _f(table.exponent))]
        _emit_csv(list(table.csv_rows()), comments, args.out)
    else:
        payload = table.to_dict()
        payload["config_sha256"] = _config_hash(cfg)
        payload["seed"] = seed
        _emit_json(payload, args.out)
    return 0


def _cmd_effective_validate(cfg, args):
    lat, pot, basis = _system_from(cfg)
    deg = _require_degeneracy(cfg, lat, pot, basis)
    drive = _drive_from(cfg, lat.dim)
    esec = _section(cfg, "effective", ["eps"])
    ev = _optional_section(cfg, "evolution")
    icfg = InvarianceConfig(
        deg=deg, profile=drive, g=np.pi / 2, eps_list=(float(esec["eps"]),),
        d0=float(esec.get("d0", 0.4)), xi_count=int(esec.get("xi_count", 17)),
        dt=float(ev.get("dt", 2.5e-3)),
        sign_convention=ev.get("sign_convention", "standard"))
    model = EffectiveModel.from_degeneracy(deg, drive.a, icfg.sign_convention)
    report = validate_effective(icfg, model, float(esec["eps"]),
                                int(esec.get("n_checkpoints", 8)))
    report["config_sha256"] = _config_hash(cfg)
    report["seed"] = _seed_of(cfg, args)
    _emit_json(report, args.out)
    return 0


def _cmd_selftest(cfg, args):
    seed = int(args.seed if args.seed is not None else 0)
    report = run_selftest(seed)
    _emit_json(report, args.out)
    return 0 if report["ok"] else 3


_COMMANDS = {
    "bands": (_cmd_bands, True),
    "degeneracy": (_cmd_degeneracy, True),
    "monodromy": (_cmd_monodromy, True),
    "enclosure": (_cmd_enclosure, True),
    "invariance": (_cmd_invariance, True),
    "effective-validate": (_cmd_effective_validate, True),
    "selftest": (_cmd_selftest, False),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floqlab",
                                     description="Floquet band laboratory for driven periodic media")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, needs_config) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config,
                       help="path to the JSON experiment configuration")
        p.add_argument("--out", default=None, help="artifact path (.csv selects CSV where supported)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for fiber sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, needs_config = _COMMANDS[args.command]
    try:
        cfg = _load_config(args.config) if args.config else {}
        return fn(cfg, args)
    except FloqlabError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
