"""Command-line entry point.

    willmore-lab <command> --config run.toml [--radius R] [--band-limit L]
                 [--area A] [--out DIR] [--export-mesh FILE] [--threads N]

Commands: geom, energy, minimize, sweep, gradient, hawking, verify.
Exit codes: 0 success, 2 validation error, 3 numerical failure.

Config document (TOML)::

    command = "energy"            # optional if given on the command line
    output_dir = "out"
    format = "structured-text"    # or "csv" (energy output on stdout)
    seed = 0

    [metric]                      # kind = flat | spaceform | quadratic
    kind = "spaceform"
    k = 0.5
    rho = 1.0                     # ric0 = 9 reals row-major, scal_grad0 = 3 reals

    [surface]                     # either file = "surface.toml" or a round sphere
    radius = 0.1
    center = [0.0, 0.0, 0.0]
    band_limit = 8
    n_theta = 24
    n_phi = 48

    [optimizer]                   # OptimizeOptions fields; area_target defaults
    el_tol = 1e-6                 # to the initial surface area

    [sweep]                       # also [gradient] (plus b) and [hawking]
    radii = [0.16, 0.08, 0.04, 0.02]
    mode = "geodesic_spheres"
    band_limit = 6

Tables are CSV with a ``#`` header carrying the version and config hash;
summaries and reports are TOML.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, checks
from . import experiments as ex
from . import functionals as fn
from . import serialize as io
from .ambient import DomainError, MetricModel
from .optimize import GradientCheckError, OptimizeOptions, solve
from .surface import ImmersionError, build_round_sphere, export_obj, geometry, perturbed_sphere

COMMANDS = ("geom", "energy", "minimize", "sweep", "gradient", "hawking", "verify")
FORMATS = ("csv", "structured-text")
TOP_KEYS = {"command", "output_dir", "format", "seed", "threads", "metric", "surface",
            "optimizer", "sweep", "gradient", "hawking", "verify"}
SURFACE_KEYS = {"file", "radius", "center", "band_limit", "n_theta", "n_phi",
                "amplitude", "seed"}
EXPERIMENT_KEYS = {"radii", "mode", "band_limit", "n_theta", "n_phi", "center",
                   "freeze_center", "b"}
VERIFY_KEYS = {"n_random", "amplitude"}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class NumericalFailure(RuntimeError):
    """Non-convergence or a violated hypothesis during a run."""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="willmore-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--radius", type=float, help="override surface.radius")
    p.add_argument("--band-limit", type=int, help="override surface/sweep band_limit")
    p.add_argument("--area", type=float, help="override optimizer.area_target")
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--export-mesh", help="write the surface as an OBJ mesh")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--version", action="version", version=f"willmore-lab {__version__}")
    return p


def _check_keys(section: dict, allowed: set, prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}: unknown key")


def resolve_config(args: argparse.Namespace) -> dict:
    """Config document with command-line overrides applied."""
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"--config: file not found: {path}")
        try:
            cfg = io.read_toml(path)
        except Exception as exc:  # tomli raises its own decode error type
            raise ConfigError(f"--config: malformed document: {exc}") from None
        base = path.parent
        surf = cfg.get("surface", {})
        if isinstance(surf, dict) and "file" in surf and not Path(surf["file"]).is_absolute():
            surf["file"] = str(base / surf["file"])
    _check_keys(cfg, TOP_KEYS, "")
    for name in ("metric", "surface", "optimizer", "sweep", "gradient", "hawking", "verify"):
        if not isinstance(cfg.setdefault(name, {}), dict):
            raise ConfigError(f"{name}: expected a section")
    _check_keys(cfg["surface"], SURFACE_KEYS, "surface.")
    for name in ("sweep", "gradient", "hawking"):
        _check_keys(cfg[name], EXPERIMENT_KEYS, f"{name}.")
    _check_keys(cfg["verify"], VERIFY_KEYS, "verify.")
    known_opt = {f.name for f in fields(OptimizeOptions)}
    _check_keys(cfg["optimizer"], known_opt, "optimizer.")

    cmd = args.command or cfg.get("command")
    if cmd is None:
        raise ConfigError("command: none given (positional argument or config key)")
    if args.command and cfg.get("command") and cfg["command"] != args.command:
        raise ConfigError(f"command: config says {cfg['command']!r}, command line says {args.command!r}")
    if cmd not in COMMANDS:
        raise ConfigError(f"command: unknown command {cmd!r}")
    cfg["command"] = cmd
    cfg.setdefault("format", "structured-text")
    if cfg["format"] not in FORMATS:
        raise ConfigError(f"format: expected one of {FORMATS}")
    if args.radius is not None:
        cfg["surface"]["radius"] = args.radius
    if args.band_limit is not None:
        cfg["surface"]["band_limit"] = args.band_limit
        for name in ("sweep", "gradient", "hawking"):
            cfg[name]["band_limit"] = args.band_limit
    if args.area is not None:
        cfg["optimizer"]["area_target"] = args.area
    if args.out is not None:
        cfg["output_dir"] = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg["threads"] = args.threads
    return cfg


def build_metric(cfg: dict) -> MetricModel:
    return MetricModel.from_dict(cfg["metric"])


def build_surface(cfg: dict, model: MetricModel):
    s = cfg["surface"]
    if "file" in s:
        if not Path(s["file"]).is_file():
            raise ConfigError(f"surface.file: not found: {s['file']}")
        return io.load_surface(s["file"])
    if "radius" not in s:
        raise ConfigError("surface.radius: required when surface.file is not given")
    L = int(s.get("band_limit", 8))
    n_theta = int(s.get("n_theta", 3 * L))
    n_phi = int(s.get("n_phi", 2 * n_theta))
    center = s.get("center", [0.0, 0.0, 0.0])
    if float(s.get("amplitude", 0.0)) > 0:
        rng = np.random.default_rng(int(s.get("seed", cfg.get("seed", 0))))
        return perturbed_sphere(rng, center, float(s["radius"]), L, n_theta, n_phi,
                                float(s["amplitude"]))
    return build_round_sphere(center, float(s["radius"]), L, n_theta, n_phi, model)


def _out_dir(cfg: dict) -> Path:
    return io.ensure_dir(cfg.get("output_dir", "."))


def _config_hash(cfg: dict) -> str:
    # where outputs go and how many threads run do not change results
    return io.config_hash({k: v for k, v in cfg.items() if k not in ("output_dir", "threads")})


def _header(cfg: dict) -> dict:
    return {"command": cfg["command"], "config_sha256": _config_hash(cfg)}


# -- commands ---------------------------------------------------------------

def cmd_geom(cfg, args, model) -> int:
    param = build_surface(cfg, model)
    geom = geometry(param, model)
    summary = {
        "band_limit": param.band_limit, "n_theta": param.n_theta, "n_phi": param.n_phi,
        "area": geom.area, "areaE": geom.areaE,
        "min_H": float(geom.H.min()), "max_H": float(geom.H.max()),
        "gauss_bonnet": geom.integrate(0.5 * geom.sigma_scal) - 4 * math.pi,
        "gauss_residual_max": float(np.max(np.abs(fn.gauss_residual(geom)))),
    }
    print(io.dumps_toml(summary), end="")
    if args.export_mesh:
        export_obj(param, args.export_mesh)
    return EXIT_OK


def cmd_energy(cfg, args, model) -> int:
    param = build_surface(cfg, model)
    rep = fn.evaluate(geometry(param, model), model)
    if cfg["format"] == "csv":
        row = io.report_row(rep)
        print(",".join(io.REPORT_COLUMNS))
        print(",".join(io._cell(row[c]) for c in io.REPORT_COLUMNS))
    else:
        print(io.dumps_toml(rep.as_dict()), end="")
    if "output_dir" in cfg:
        io.write_report(_out_dir(cfg) / "report.toml", rep)
    if args.export_mesh:
        export_obj(param, args.export_mesh)
    if rep.min_H <= 0:
        raise NumericalFailure(f"min H = {rep.min_H:.6g} <= 0")
    return EXIT_OK


def cmd_minimize(cfg, args, model) -> int:
    param = build_surface(cfg, model)
    opt = dict(cfg["optimizer"])
    opt.setdefault("seed", cfg.get("seed", 0))
    if "area_target" not in opt:
        opt["area_target"] = geometry(param, model).area
    res = solve(model, param, OptimizeOptions(**opt))
    out = _out_dir(cfg)
    io.save_surface(res.surface, out / "surface.toml")
    io.write_report(out / "report.toml", res.report,
                    {"converged": res.converged, "lambda": res.lam,
                     "scaled_residual": res.scaled_residual, "message": res.message,
                     "kappa": [] if res.kappa is None else list(res.kappa)})
    io.write_history(out / "history.csv", res.history, _header(cfg))
    if args.export_mesh:
        export_obj(res.surface, args.export_mesh)
    print(io.dumps_toml({"converged": res.converged, "lambda": res.lam, "W": res.report.W,
                         "area": res.report.area, "scaled_residual": res.scaled_residual,
                         "output_dir": str(out)}), end="")
    if not res.converged:
        raise NumericalFailure(f"optimizer did not converge: {res.message}")
    return EXIT_OK


def _experiment_args(cfg: dict, name: str) -> dict:
    s = dict(cfg[name])
    if "radii" not in s:
        raise ConfigError(f"{name}.radii: required")
    return s


def _write_table(cfg, table: ex.ConvergenceTable, stem: str) -> int:
    out = _out_dir(cfg)
    io.write_csv(out / f"{stem}.csv", table.columns, table.rows, _header(cfg))
    summary = table.summary()
    summary.update(version=__version__, config_sha256=_config_hash(cfg),
                   slopes={c: {"slope": f.slope, "n_used": f.n_used, "rms": f.rms,
                               "floor_limited": f.floor_limited, "unstable": f.unstable,
                               "refinement_shift": f.refinement_shift}
                           for c, f in table.slopes.items()})
    io.write_toml(out / f"{stem}_summary.toml", summary)
    for c, fit in table.slopes.items():
        print(f"{c}: {fit.describe()}")
    failed = [row["r"] for row in table.rows if not row.get("converged", True) or "failure" in row]
    if failed:
        raise NumericalFailure(f"{stem}: no converged surface at r = {failed}")
    bad_h = [row["r"] for row in table.rows if row.get("min_H", 1.0) <= 0]
    if bad_h:
        raise NumericalFailure(f"{stem}: min H <= 0 at r = {bad_h}")
    return EXIT_OK


def cmd_sweep(cfg, args, model) -> int:
    s = _experiment_args(cfg, "sweep")
    s.pop("b", None)
    spec = ex.SweepSpec(model=model, optimizer=dict(cfg["optimizer"]), **s)
    return _write_table(cfg, ex.sweep(spec, threads=cfg.get("threads", os.cpu_count() or 1)), "sweep")


def cmd_gradient(cfg, args, model) -> int:
    s = _experiment_args(cfg, "gradient")
    for key in ("center", "freeze_center"):
        s.pop(key, None)
    table = ex.gradient_experiment(model, s.pop("radii"), optimizer=dict(cfg["optimizer"]), **s)
    return _write_table(cfg, table, "gradient")


def cmd_hawking(cfg, args, model) -> int:
    s = _experiment_args(cfg, "hawking")
    for key in ("center", "freeze_center", "b"):
        s.pop(key, None)
    table = ex.hawking_experiment(model, s.pop("radii"), optimizer=dict(cfg["optimizer"]), **s)
    return _write_table(cfg, table, "hawking")


def cmd_verify(cfg, args, model) -> int:
    v = cfg["verify"]
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    param = build_surface(cfg, model)
    surfaces = [param]
    r = math.sqrt(geometry(param, model).area / (4 * math.pi))
    center = geometry(param, model).F.mean(axis=0)
    for _ in range(int(v.get("n_random", 2))):
        surfaces.append(perturbed_sphere(rng, center, r, param.band_limit, param.n_theta,
                                         param.n_phi, float(v.get("amplitude", 0.05))))
    failures = 0
    for i, p in enumerate(surfaces):
        for c in checks.run_all(p, model, rng):
            status = "ok" if c.ok else "FAIL"
            failures += not c.ok
            print(f"surface {i} {c.name:18s} {c.value:.3e} (tol {c.tol:.1e}) {status}")
    if failures:
        raise NumericalFailure(f"verify: {failures} check(s) failed")
    print("all checks passed")
    return EXIT_OK


DISPATCH = {"geom": cmd_geom, "energy": cmd_energy, "minimize": cmd_minimize,
            "sweep": cmd_sweep, "gradient": cmd_gradient, "hawking": cmd_hawking,
            "verify": cmd_verify}


def run(argv: list[str]) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports unknown flags with code 2
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        model = build_metric(cfg)
        return DISPATCH[cfg["command"]](cfg, args, model)
    except (NumericalFailure, fn.HypothesisError, ImmersionError, GradientCheckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DomainError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
