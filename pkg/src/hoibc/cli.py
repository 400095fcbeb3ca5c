"""Command-line front end.

Subcommands: ``mesh-info``, ``coeffs``, ``solve``, ``mie``, ``sweep``,
``compare``. Exit codes: 0 success, 2 invalid input, 3 solver failure
(non-convergence or singular system), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .coefficients import CoefficientError, HoibcCoefficients, check_uniqueness_condition
from .config import ConfigError, RunConfig, load_config
from .mesh import MeshError, load_mesh, mesh_info
from .solver import SolverError

log = logging.getLogger("hoibc")

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _outdir(args, cfg: Optional[RunConfig]) -> Path:
    if args.output_dir:
        d = Path(args.output_dir)
    elif cfg is not None:
        d = Path(cfg.output.directory)
        if not d.is_absolute():
            d = Path.cwd() / d
    else:
        d = Path.cwd()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _need_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config", "this command needs a configuration file")
    return load_config(args.config)


def _coeff_report(h: HoibcCoefficients, cfg: RunConfig) -> dict:
    u = check_uniqueness_condition(h)
    return {
        "mode": cfg.bc,
        "normalized": h.as_dict(),
        "physical": h.physical(cfg.k0),
        "fit_max_residual": h.residual,
        "fit_rms_residual": h.rms_residual,
        "warnings": list(h.warnings),
        "uniqueness": u.as_dict(),
    }


def _base_report(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": cfg.name,
        "config_hash": cfg.config_hash,
        "k0": cfg.k0,
        "wavelength": cfg.wavelength,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_mesh_info(args) -> int:
    if args.mesh:
        mesh = load_mesh(args.mesh)
        cfg = None
    else:
        cfg = _need_config(args)
        mesh = cfg.mesh.build(cfg.base_dir)
    info = mesh_info(mesh)
    print(json.dumps(_jsonable(info), indent=2, sort_keys=True))
    if args.output_dir:
        _write_json(_outdir(args, cfg) / "mesh_info.json", info)
    return EXIT_OK


def cmd_coeffs(args) -> int:
    cfg = _need_config(args)
    h = cfg.coefficients()
    rep = dict(_base_report(cfg, "coeffs"), coefficients=_coeff_report(h, cfg))
    out = _outdir(args, cfg)
    _write_json(out / "coefficients.json", rep)
    print(json.dumps(_jsonable(rep["coefficients"]), indent=2, sort_keys=True))
    return EXIT_OK


def _plot_curves(path, title, series):
    from .plotting import plot_rcs

    plot_rcs(series, path, title)


def cmd_solve(args) -> int:
    from .assembly import PlaneWave
    from .hmatrix import partition_rows, write_partition_csv
    from .postprocess import bistatic_rcs
    from .solver import Scatterer

    cfg = _need_config(args)
    out = _outdir(args, cfg)
    t0 = time.perf_counter()
    mesh = cfg.mesh.build(cfg.base_dir)
    h = cfg.coefficients()
    sc = Scatterer(mesh, h, cfg.k0, cfg.solver, cfg.quad, cfg.hmatrix, args.threads)
    wave = PlaneWave.from_angles(cfg.wave["theta_deg"], cfg.wave["phi_deg"], cfg.wave["pol"], cfg.k0)
    res = sc.solve(wave)
    report = _base_report(cfg, "solve")
    report.update(
        mesh=mesh_info(mesh),
        coefficients=_coeff_report(h, cfg),
        solver=res.summary(),
    )
    res.write(out)
    files = ["coefficients.csv", "solve.json"]
    meta = {"config_hash": cfg.config_hash, "k0": cfg.k0, "mesh": mesh.name, "bc": cfg.bc}
    series = []
    for plane in cfg.output.planes:
        curve = bistatic_rcs(res, mesh, sc.basis, cfg.output.bistatic, plane, cfg.quad.farfield_order, meta)
        name = f"bistatic_{plane}.csv"
        curve.to_csv(out / name)
        files.append(name)
        comp = next(iter(curve.sigma))
        series.append((f"{cfg.bc.upper()} {plane}", curve.theta_deg, curve.dbsm(comp)))
    if sc.hbuild is not None:
        write_partition_csv(out / "partition.csv", sc.hbuild.tree, sc.hbuild.blocks, sc.hbuild.bs.data)
        files.append("partition.csv")
    if cfg.output.plots:
        _plot_curves(out / "bistatic_rcs.png", f"{cfg.name}: bistatic RCS", series)
        files.append("bistatic_rcs.png")
        if sc.hbuild is not None:
            from .plotting import plot_partition

            plot_partition(partition_rows(sc.hbuild.tree, sc.hbuild.blocks, sc.hbuild.bs.data), mesh.n_edges, out / "partition.png")
            files.append("partition.png")
    report["outputs"] = files
    report["wall_time_s"] = time.perf_counter() - t0
    _write_json(out / "report.json", report)
    print(f"solve: {res.mode}, residual {res.residual:.2e}, {res.iterations} iterations -> {out}")
    if not res.converged:
        print(f"error: solver did not converge (relative residual {res.residual:.2e})", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .postprocess import monostatic_sweep
    from .solver import Scatterer

    cfg = _need_config(args)
    if cfg.output.monostatic is None:
        raise ConfigError("output.monostatic", "required for the sweep command")
    out = _outdir(args, cfg)
    t0 = time.perf_counter()
    mesh = cfg.mesh.build(cfg.base_dir)
    h = cfg.coefficients()
    sc = Scatterer(mesh, h, cfg.k0, cfg.solver, cfg.quad, cfg.hmatrix, args.threads)
    meta = {"config_hash": cfg.config_hash, "mesh": mesh.name, "bc": cfg.bc}
    curve = monostatic_sweep(sc, cfg.output.monostatic, cfg.output.mono_phi, cfg.output.mono_pol, cfg.quad.farfield_order, meta)
    curve.to_csv(out / "monostatic.csv")
    files = ["monostatic.csv"]
    comp = next(iter(curve.sigma))
    if cfg.output.plots:
        from .plotting import plot_rcs

        plot_rcs([(f"{cfg.bc.upper()} {comp}", curve.theta_deg, curve.dbsm(comp))], out / "monostatic_rcs.png",
                 f"{cfg.name}: monostatic RCS", xlabel="incidence theta (deg)")
        files.append("monostatic_rcs.png")
    report = _base_report(cfg, "sweep")
    report.update(
        mesh=mesh_info(mesh),
        coefficients=_coeff_report(h, cfg),
        timings=sc.timings,
        failures=curve.metadata["failures"],
        outputs=files,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_json(out / "report.json", report)
    print(f"sweep: {len(curve.theta_deg)} angles, {len(curve.metadata['failures'])} failures -> {out}")
    return EXIT_SOLVER if curve.metadata["failures"] else EXIT_OK


def cmd_mie(args) -> int:
    from .coefficients import hoibc_coefficients
    from .mie import SphereConfig, equivalent_sibc_sphere, mie_bistatic_rcs, mie_coefficients
    from .postprocess import RcsCurve

    cfg = _need_config(args)
    if cfg.mesh.generator not in ("geodesic-sphere", "icosphere"):
        raise ConfigError("mesh.generator", "the mie command needs a sphere")
    if cfg.coating is None:
        raise ConfigError("coating", "the mie command needs a coating block")
    outer = cfg.mesh.params["radius"]
    core = outer - cfg.coating.d
    if core <= 0:
        raise ConfigError("coating.thickness", "must be smaller than the sphere radius")
    c = cfg.coating
    exact = SphereConfig(core, cfg.k0, coating=(c.eps_r, c.mu_r, c.d))
    models = {
        "exact": exact,
        "sibc": equivalent_sibc_sphere(exact),
        "hoibc": SphereConfig(outer, cfg.k0, hoibc=hoibc_coefficients(c, cfg.fit)),
    }
    out = _outdir(args, cfg)
    th = cfg.output.bistatic
    files = []
    series = {p: [] for p in cfg.output.planes}
    for name, sph in models.items():
        mc = mie_coefficients(sph)
        sig = {}
        for plane in cfg.output.planes:
            comp = "theta-theta" if plane == "E-plane" else "phi-phi"
            sig[comp] = mie_bistatic_rcs(mc, th, comp).sigma
            series[plane].append((f"Mie {name}", th, 10 * np.log10(sig[comp])))
        curve = RcsCurve(th, np.zeros_like(th), sig, {"config_hash": cfg.config_hash, "model": name, "k0": cfg.k0})
        curve.to_csv(out / f"mie_{name}.csv")
        files.append(f"mie_{name}.csv")
    if cfg.output.plots:
        from .plotting import plot_rcs

        for plane, s in series.items():
            plot_rcs(s, out / f"mie_{plane}.png", f"{cfg.name}: Mie series, {plane}")
            files.append(f"mie_{plane}.png")
    rep = dict(_base_report(cfg, "mie"), outputs=files)
    _write_json(out / "report.json", rep)
    print(f"mie: wrote {len(files)} files -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .postprocess import RcsCurve, compare_curves

    try:
        a = RcsCurve.from_csv(args.curve_a)
        b = RcsCurve.from_csv(args.curve_b)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError("curve", f"cannot read curve: {exc}") from None
    try:
        cmp = compare_curves(a, b, args.component, args.floor, args.interpolate)
    except (KeyError, ValueError) as exc:
        raise ConfigError("curve", str(exc)) from None
    out = _outdir(args, None)
    cmp.to_csv(out / "comparison.csv")
    summary = {
        "curve_a": str(args.curve_a),
        "curve_b": str(args.curve_b),
        "component": args.component,
        "floor_dbsm": args.floor,
        "rms_db": cmp.rms_db,
        "max_abs_db": cmp.max_abs_db,
        "included_angles": int(cmp.mask.sum()),
    }
    _write_json(out / "comparison.json", summary)
    print(f"RMS difference {cmp.rms_db:.4f} dB over {int(cmp.mask.sum())} angles (max {cmp.max_abs_db:.4f} dB)")
    return EXIT_OK


COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "coeffs": cmd_coeffs,
    "solve": cmd_solve,
    "mie": cmd_mie,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: HOIBC_THREADS or all cores)")
    common.add_argument("--output-dir", help="output directory (default: output.directory of the config)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p = argparse.ArgumentParser(prog="hoibc", description="Scattering by coated conductors with impedance boundary conditions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    m = sub.add_parser("mesh-info", parents=[common], help="mesh statistics")
    m.add_argument("mesh", nargs="?", help="mesh file (instead of --config)")
    sub.add_parser("coeffs", parents=[common], help="impedance coefficients and uniqueness check")
    sub.add_parser("solve", parents=[common], help="solve one incidence and write bistatic RCS")
    sub.add_parser("mie", parents=[common], help="Mie series curves for a sphere configuration")
    sub.add_parser("sweep", parents=[common], help="monostatic RCS sweep")
    c = sub.add_parser("compare", parents=[common], help="compare two RCS curve files")
    c.add_argument("curve_a")
    c.add_argument("curve_b")
    c.add_argument("--component", default="theta-theta", choices=["theta-theta", "phi-phi"])
    c.add_argument("--floor", type=float, default=-60.0, help="exclusion floor in dBsm")
    c.add_argument("--interpolate", action="store_true", help="interpolate curve B onto the grid of curve A")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INVALID
        os.environ["HOIBC_THREADS"] = str(args.threads)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MeshError, CoefficientError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"error: solver failure {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # pragma: no cover - last resort
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
