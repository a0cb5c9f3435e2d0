"""Command-line front end.

Usage::

    tangent-harmonic COMMAND [--config PATH] [--out DIR] [--threads N]
                             [--deterministic] [--json] [command options]

Commands: ``solve2d``, ``solve3d``, ``bounds``, ``extend-check``,
``monotonicity``, ``symmetrize``, ``defects``.

Configuration files are flat ``section.key = value`` lines; ``#`` starts a
comment. Unknown keys are a usage error (exit status 2). Every command
writes a ``summary.txt`` of ``key: value`` lines and its own CSV, SVG and
checkpoint files into ``--out``. The exit status is 0 exactly when all
enabled checks pass.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, svg_heatmap, svg_lines

__all__ = ["main", "DEFAULTS", "ConfigError", "parse_config"]


class ConfigError(ValueError):
    """Malformed configuration or unknown key."""


def _bool(s):
    s = str(s).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _vec3(s):
    v = [float(t) for t in str(s).replace(",", " ").split()]
    if len(v) != 3:
        raise ValueError("expected three numbers")
    return tuple(v)


def _opt_path(s):
    return str(s).strip()


# key -> (type, default)
DEFAULTS = {
    "grid.m": (int, 128),
    "grid.n": (int, 24),
    "grid.coarsest": (int, 32),
    "solver.max_iters": (int, 500),
    "solver.step": (float, 1.0),
    "solver.grad_tol": (float, 1e-7),
    "solver.init": (str, "u0"),
    "solver.branch": (int, -1),
    "solver.seed": (int, 0),
    "solver3d.max_iters": (int, 200),
    "solver3d.grad_tol": (float, 1e-4),
    "solver3d.init": (str, "u0"),
    "tol.tangency": (float, 1e-6),
    "tol.bracket": (float, 0.02),
    "tol.quadrature": (float, 1e-3),
    "tol.lower_integral": (float, 1e-10),
    "tol.identity": (float, 1e-5),
    "tol.monotone": (float, 1e-3),
    "tol.symmetric": (float, 1e-6),
    "tol.energy_increase": (float, 0.005),
    "input.checkpoint": (_opt_path, ""),
    "extend.n_points": (int, 1000),
    "extend.seed": (int, 0),
    "extend.fd_step": (float, 1e-4),
    "extend.residual_h": (float, 1.0 / 256),
    "extend.residual_tol": (float, 1e-2),
    "analysis.n": (int, 128),
    "analysis.R": (float, 1.3),
    "monotonicity.x0": (_vec3, (0.0, 0.0, 1.0)),
    "monotonicity.r_max": (float, 0.12),
    "monotonicity.n_radii": (int, 12),
    "monotonicity.weight_power": (float, 2.0),
    "defects.threshold": (float, float(np.pi)),
    "defects.scan_radius": (float, 0.1),
    "defects.expect_boundary": (int, 2),
    "defects.expect_interior": (int, 0),
    "symmetrize.amplitude": (float, 0.1),
    "symmetrize.n_rho": (int, 32),
    "symmetrize.n_theta": (int, 64),
    "symmetrize.n_z": (int, 64),
    "bounds.levelset_c": (str, "0.25 0.5 0.75"),
}


CHOICES = {
    "solver.init": ("u0", "random", "zero"),
    "solver.branch": (-1, 1),
    "solver3d.init": ("u0", "random", "reduced"),
}


def parse_config(text: str) -> dict:
    """Parse ``section.key = value`` lines into a typed dict with defaults.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys, duplicates or bad values.
    """
    cfg = {k: d for k, (_, d) in DEFAULTS.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        typ = DEFAULTS[key][0]
        try:
            cfg[key] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        if key in CHOICES and cfg[key] not in CHOICES[key]:
            raise ConfigError(f"line {lineno}: {key!r} must be one of {CHOICES[key]}")
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


class _Run:
    """Collects checks, values and staged output files of one command."""

    def __init__(self, name, out: Path):
        self.name = name
        self.out = out
        self.checks = {}
        self.values = {}
        self.files = []

    def check(self, name, ok, detail=""):
        self.checks[name] = (bool(ok), detail)

    def value(self, name, v):
        self.values[name] = v

    def write(self, fname, text):
        self.files.append(str(atomic_write_text(self.out / fname, text)))

    def plot(self, fn, fname, *args, **kw):
        self.files.append(str(fn(self.out / fname, *args, **kw)))

    @property
    def ok(self):
        return all(ok for ok, _ in self.checks.values())

    def summary_text(self):
        lines = [f"command: {self.name}"]
        for k, v in self.values.items():
            lines.append(f"{k}: {_fmt(v)}")
        for k, (ok, detail) in self.checks.items():
            lines.append(f"check.{k}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
        lines.append(f"status: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def as_json(self):
        return {
            "command": self.name,
            "values": {k: _jsonable(v) for k, v in self.values.items()},
            "checks": {k: {"pass": ok, "detail": d} for k, (ok, d) in self.checks.items()},
            "status": "PASS" if self.ok else "FAIL",
            "files": self.files,
        }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (tuple, list)):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    return v


def _params(**kw):
    from .solvers import SolveParams

    try:
        return SolveParams(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _solve_params(cfg):
    return _params(
        max_iters=cfg["solver.max_iters"],
        step=cfg["solver.step"],
        grad_tol=cfg["solver.grad_tol"],
        seed=cfg["solver.seed"],
    )


def _reduced_field(cfg, run=None):
    """PsiField from ``input.checkpoint`` or a fresh multilevel solve."""
    from .fields import PsiField, load_checkpoint
    from .solvers import solve_reduced_multilevel

    if cfg["input.checkpoint"]:
        try:
            p = load_checkpoint(cfg["input.checkpoint"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read input.checkpoint: {exc}") from None
        if not isinstance(p, PsiField):
            raise ConfigError("input.checkpoint must hold a psi field")
        return p
    p, _ = solve_reduced_multilevel(
        cfg["grid.m"], _solve_params(cfg), branch=cfg["solver.branch"], coarsest=cfg["grid.coarsest"],
        init=cfg["solver.init"], seed=cfg["solver.seed"],
    )
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve2d(cfg, run: _Run, args):
    from .bounds import E_LOWER, E_UPPER
    from .energy import EnergyReport, reduced_energy
    from .fields import save_checkpoint
    from .solvers import solve_reduced_multilevel

    m = args.resolution or cfg["grid.m"]
    p, traces = solve_reduced_multilevel(
        m, _solve_params(cfg), branch=cfg["solver.branch"], coarsest=cfg["grid.coarsest"],
        init=cfg["solver.init"], seed=cfg["solver.seed"],
    )
    E = reduced_energy(p)
    rep = EnergyReport(E=E, E_red=E, resolution=f"m={m}", scheme="reduced polar finite volume")
    run.value("m", m)
    run.value("energy", E)
    run.value("iterations", [t.iterations for t in traces])
    run.value("reason", traces[-1].reason)
    tol = cfg["tol.bracket"]
    run.check("bracket", E_LOWER * (1 - tol) <= E <= E_UPPER * (1 + tol), f"[{E_LOWER * (1 - tol):.6g}, {E_UPPER * (1 + tol):.6g}]")
    run.check("monotone", all(t.is_monotone() for t in traces))
    psi = p.psi if cfg["solver.branch"] == -1 else p.psi - np.pi
    run.check("psi_bounds", bool(np.all(np.abs(psi) <= np.pi / 2 + 0.05)))
    save_checkpoint(p, run.out / "psi_checkpoint.txt")
    run.files.append(str(run.out / "psi_checkpoint.txt"))
    run.write("trace.csv", traces[-1].to_csv())
    run.write("energy_report.txt", rep.to_text())
    mesh = p.mesh
    run.plot(svg_heatmap, "psi.svg", mesh.rho, mesh.z, p.psi, title=f"psi, m={m}", xlabel="rho", ylabel="z", cbar="psi")


def cmd_solve3d(cfg, run: _Run, args):
    from .bounds import competitor_u0
    from .energy import EnergyReport
    from .fields import BallGrid3, Field3, PsiField, field_from_closed_form, lift_equivariant, load_checkpoint, save_checkpoint, tangency_residual
    from .solvers import solve_full3d

    g = BallGrid3(cfg["grid.n"])
    init = cfg["solver3d.init"]
    if cfg["input.checkpoint"]:
        obj = load_checkpoint(cfg["input.checkpoint"])
        f0 = lift_equivariant(obj, g) if isinstance(obj, PsiField) else obj
        if isinstance(f0, Field3) and f0.grid != g:
            raise ConfigError("checkpoint grid does not match grid.n")
    elif init == "u0":
        f0 = field_from_closed_form(competitor_u0, g)
    elif init == "random":
        rng = np.random.default_rng(cfg["solver.seed"])
        v = rng.normal(size=g.shape + (3,))
        f0 = Field3(g, v / np.linalg.norm(v, axis=-1, keepdims=True))
    elif init == "reduced":
        f0 = lift_equivariant(_reduced_field(cfg), g)
    else:
        raise ConfigError(f"unknown solver3d.init {init!r}")
    params = _params(
        max_iters=cfg["solver3d.max_iters"], step=cfg["solver.step"], grad_tol=cfg["solver3d.grad_tol"],
        projection_tol=cfg["tol.tangency"],
    )
    f, tr = solve_full3d(f0, params, threads=args.threads)
    res = tangency_residual(f)
    run.value("n", g.n)
    run.value("energy_initial", tr.energy[0])
    run.value("energy", tr.energy[-1])
    run.value("iterations", tr.iterations)
    run.value("reason", tr.reason)
    run.value("tangency_residual", res)
    run.check("monotone", tr.is_monotone())
    run.check("tangency", res < cfg["tol.tangency"], f"< {cfg['tol.tangency']:g}")
    save_checkpoint(f, run.out / "field3_checkpoint.txt")
    run.files.append(str(run.out / "field3_checkpoint.txt"))
    run.write("trace.csv", tr.to_csv())
    run.write("energy_report.txt", EnergyReport(E=tr.energy[-1], resolution=f"n={g.n}", scheme="cut-cell edge energy").to_text())
    it = np.arange(len(tr.energy))
    run.plot(svg_lines, "energy_trace.svg", {"energy": (it, tr.energy)}, title="3D solve", xlabel="iteration", ylabel="energy")


def cmd_bounds(cfg, run: _Run, args):
    from .bounds import LevelSetParams, level_set_ode_solve, lower_bound, upper_bound

    pert = args.perturb
    up_exact, up_quad, det = upper_bound(return_details=True)
    lo_exact, lo_quad, integral = lower_bound(return_integral=True)
    # the checker compares against the closed forms, shifted by --perturb
    ref_up = 5 * np.pi - np.pi**3 / 4 + pert
    ref_dir = 10 * np.pi - np.pi**3 / 2 + pert
    ref_lo = (4.0 / 3.0) * np.pi * (2 * np.sqrt(2.0) - 1) + pert
    ref_int = (2.0 / 3.0) * (2 * np.sqrt(2.0) - 1) + pert
    run.value("upper_exact", float(up_exact))
    run.value("upper_quadrature", up_quad)
    run.value("dirichlet_exact", float(det['dirichlet_integral_exact']))
    run.value("dirichlet_quadrature", det["dirichlet_integral"])
    run.value("lower_exact", float(lo_exact))
    run.value("lower_quadrature", lo_quad)
    run.value("lower_integral", float(integral))
    if pert:
        run.value("perturbation", pert)
    tq = cfg["tol.quadrature"]
    run.check("upper", abs(up_quad - ref_up) / abs(ref_up) < tq, f"rel < {tq:g}")
    run.check("dirichlet", abs(det["dirichlet_integral"] - ref_dir) / abs(ref_dir) < tq, f"rel < {tq:g}")
    run.check("lower", abs(lo_quad - ref_lo) / abs(ref_lo) < tq, f"rel < {tq:g}")
    run.check("lower_integral", abs(integral - ref_int) < cfg["tol.lower_integral"], f"abs < {cfg['tol.lower_integral']:g}")
    rows = ["c,alpha,b,departure_angle,expected_angle,implicit_residual"]
    for c in (float(t) for t in cfg["bounds.levelset_c"].split()):
        prm = LevelSetParams(c)
        tr = level_set_ode_solve(prm)
        ang = tr.departure_angle()
        expected = float(np.arctan(c / np.sqrt(1 - c * c)))
        res = float(np.abs(tr.relative_implicit_residual).max())
        rows.append(f"{c:.17g},{prm.alpha:.17g},{prm.b:.17g},{ang:.17g},{expected:.17g},{res:.17g}")
        run.check(f"levelset_c{c:g}", res < 1e-8 and abs(np.tan(ang) - np.tan(expected)) < 1e-3)
    run.write("levelset.csv", "\n".join(rows) + "\n")


def cmd_extend_check(cfg, run: _Run, args):
    from .analysis import ExtendedField
    from .energy import reflected_el_residual
    from .geometry import reflection_identity_checks

    res = reflection_identity_checks(cfg["extend.n_points"], cfg["extend.seed"], cfg["extend.fd_step"])
    tol = cfg["tol.identity"]
    for k, v in res.items():
        run.value(k, v)
        run.check(k, v < tol, f"< {tol:g}")
    hedgehog = lambda x: x / np.linalg.norm(x, axis=-1, keepdims=True)  # noqa: E731
    rng = np.random.default_rng(cfg["extend.seed"])
    d = rng.normal(size=(200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = d * rng.uniform(1.1, 1.9, 200)[:, None]
    h = cfg["extend.residual_h"]
    w = ExtendedField(hedgehog)
    r1 = float(np.abs(reflected_el_residual(w, x, h)).max())
    r2 = float(np.abs(reflected_el_residual(w, x, h / 2)).max())
    run.value("reflected_residual", r1)
    run.value("reflected_residual_refined", r2)
    run.check("reflected_residual", r1 < cfg["extend.residual_tol"] and r2 < r1)
    run.write("identities.csv", "check,max_rel_error\n" + "".join(f"{k},{v:.17g}\n" for k, v in res.items()))


def cmd_monotonicity(cfg, run: _Run, args):
    from .analysis import density_profile, extended_field3
    from .fields import EquivariantLift

    p = _reduced_field(cfg)
    f = extended_field3(EquivariantLift(p), cfg["analysis.n"], cfg["analysis.R"])
    h = f.grid.h
    radii = np.linspace(3 * h, cfg["monotonicity.r_max"], cfg["monotonicity.n_radii"])
    prof = density_profile(f, cfg["monotonicity.x0"], radii, cfg["monotonicity.weight_power"], tol=cfg["tol.monotone"])
    run.value("C1", prof.C1)
    run.value("C2", prof.C2)
    run.value("violation", prof.violation)
    run.check("monotone", prof.monotone, f"violation <= {cfg['tol.monotone']:g}")
    run.write("density_profile.csv", prof.to_csv())
    run.write("density_profile.txt", prof.to_text())
    run.plot(svg_lines, "density_profile.svg", {"Theta": (prof.radii, prof.theta), "f": (prof.radii, prof.f)}, title="density profile", xlabel="r", ylabel="density")


def cmd_symmetrize(cfg, run: _Run, args):
    from .fields import CylGrid
    from .symmetrization import make_example_fixture, symmetrize

    grid = CylGrid(cfg["symmetrize.n_rho"], cfg["symmetrize.n_theta"], cfg["symmetrize.n_z"])
    f = make_example_fixture(grid, cfg["symmetrize.amplitude"])
    out, rep = symmetrize(f, tol=cfg["tol.symmetric"])
    from .energy import theta_derivative_energy

    th = theta_derivative_energy(out)
    seq = rep.esym_sequence()
    run.value("T_input", rep.T_input)
    run.value("E_input", rep.E_input)
    run.value("E_output", rep.E_output)
    run.value("theta_energy", th)
    run.value("levels", len(rep.levels))
    run.check("T_zero", abs(rep.T_input) < cfg["tol.symmetric"])
    run.check("equivariant", th < cfg["tol.symmetric"])
    run.check("energy", rep.E_output <= rep.E_input * (1 + cfg["tol.energy_increase"]))
    run.check("esym_nonincreasing", all(b <= a + 1e-12 * abs(a) for a, b in zip(seq[:-1], seq[1:])))
    run.write("symmetrize_report.txt", rep.to_text())
    if seq:
        run.plot(svg_lines, "esym.svg", {"E_sym": (np.arange(len(seq)), seq)}, title="symmetrization", xlabel="level", ylabel="E_sym")


def cmd_defects(cfg, run: _Run, args):
    from .analysis import detect_defects, extended_field3
    from .fields import EquivariantLift

    p = _reduced_field(cfg)
    f = extended_field3(EquivariantLift(p), cfg["analysis.n"], cfg["analysis.R"])
    d = detect_defects(f, cfg["defects.threshold"], cfg["defects.scan_radius"])
    nb = sum(1 for e in d if e.kind == "boundary")
    ni = len(d) - nb
    run.value("count", len(d))
    run.value("boundary", nb)
    run.value("interior", ni)
    if cfg["defects.expect_boundary"] >= 0:
        run.check("boundary_count", nb == cfg["defects.expect_boundary"])
    if cfg["defects.expect_interior"] >= 0:
        run.check("interior_count", ni == cfg["defects.expect_interior"])
    run.write("defects.csv", d.to_csv())
    run.write("defects.txt", d.to_text())


COMMANDS = {
    "solve2d": cmd_solve2d,
    "solve3d": cmd_solve3d,
    "bounds": cmd_bounds,
    "extend-check": cmd_extend_check,
    "monotonicity": cmd_monotonicity,
    "symmetrize": cmd_symmetrize,
    "defects": cmd_defects,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tangent-harmonic", description="Tangential harmonic maps on the unit ball.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="key = value configuration file")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--deterministic", action="store_true", help="single-threaded, fixed-order reductions")
        sp.add_argument("--json", action="store_true", help="print the summary as JSON")
        if name == "solve2d":
            sp.add_argument("--resolution", type=int, help="radial resolution m (overrides grid.m)")
        if name == "bounds":
            sp.add_argument("--perturb", type=float, default=0.0, help="shift the exact values (checker self-test)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        print(f"tangent-harmonic: config error: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("tangent-harmonic: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.deterministic:
        args.threads = 1
    run = _Run(args.command, args.out)
    t0 = time.perf_counter()
    try:
        COMMANDS[args.command](cfg, run, args)
    except ConfigError as exc:
        print(f"tangent-harmonic: config error: {exc}", file=sys.stderr)
        return 2
    if not args.deterministic:
        run.value("seconds", round(time.perf_counter() - t0, 3))
    atomic_write_text(args.out / "summary.txt", run.summary_text())
    if args.json:
        print(json.dumps(run.as_json(), indent=2, sort_keys=True))
    else:
        sys.stdout.write(run.summary_text())
    return 0 if run.ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
