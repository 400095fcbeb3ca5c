"""YAML run configuration: parsing, validation and construction of pipeline objects.

Schema (all lengths in metres)::

    mesh:                      # exactly one of file / generator
      file: body.off           # OFF or Gmsh v2 ASCII; format inferred from suffix
      generator: geodesic-sphere | icosphere | spheroid
      radius: 0.5075           # spheres
      frequency: 5             # geodesic subdivision frequency
      subdivisions: 2          # icosphere / spheroid
      a: 0.5                   # spheroid semi-axes (a, a, c)
      c: 1.0
      volume_equivalent: true  # rescale to the enclosed volume of the smooth body
    wavelength: 1.0            # or frequency_hz
    coating: {eps_r: 5, mu_r: 1, thickness: 0.0075}   # complex values as "5+0.1j"
    boundary_condition: hoibc  # sibc | hoibc
    coefficients:              # optional
      mode: fit                # fit | explicit
      theta_max_deg: 80
      samples: 21
      values: {a0: "-0.047j", a1: ..., a2: ..., b1: ..., b2: ...}   # explicit mode
    wave: {theta_deg: 0, phi_deg: 0, polarization: theta}
    solver: {mode: auto, tol: 1.0e-6, restart: 50, max_iter: 1000,
             preconditioner: near-field-block-jacobi, dense_threshold: 1500,
             precond_eta: 4.0}
    hmatrix: {enabled: true, eps: 1.0e-4, eta: 2.0, leaf_size: 32, recompress: false}
    quadrature: {far_order: 3, smooth_order: 7, outer_near: 12, farfield_order: 3}
    output:
      directory: out
      bistatic: {start: 0, stop: 180, step: 1, planes: [E-plane, H-plane]}
      monostatic: {start: 0, stop: 180, step: 5, phi_deg: 0, polarization: theta}
      plots: true
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .coefficients import (
    CoatingSpec,
    CoefficientError,
    FitSettings,
    HoibcCoefficients,
    hoibc_coefficients,
    sibc_coefficients,
    wavenumber,
)
from .hmatrix import HSettings
from .kernels import QuadSettings
from .mesh import (
    TriangleMesh,
    gen_geodesic_sphere,
    gen_icosphere,
    gen_spheroid,
    load_mesh,
    rescale_to_volume,
)
from .solver import SolveSettings


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_TOP = {
    "mesh", "wavelength", "frequency_hz", "coating", "boundary_condition", "coefficients",
    "wave", "solver", "hmatrix", "quadrature", "output", "name",
}


def _section(raw: dict, key: str, allowed: set) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(key, "must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
    return sec


def _num(sec: dict, path: str, key: str, default=None, positive=False, nonneg=False, integer=False):
    name = key if path == "<root>" else f"{path}.{key}"
    if key not in sec:
        if default is None:
            raise ConfigError(name, "required")
        return default
    v = sec[key]
    try:
        v = int(v) if integer else float(v)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number, got {v!r}") from None
    if integer and float(sec[key]) != v:
        raise ConfigError(name, "expected an integer")
    if not math.isfinite(v):
        raise ConfigError(name, "must be finite")
    if positive and not v > 0:
        raise ConfigError(name, f"must be > 0 (got {v})")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be >= 0 (got {v})")
    return v


def _complex(sec: dict, path: str, key: str, default=None) -> complex:
    if key not in sec:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return complex(default)
    v = sec[key]
    try:
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(float(v[0]), float(v[1]))
        return complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", f"expected a complex number, got {v!r}") from None


def _grid(sec: dict, path: str, start=0.0, stop=180.0, step=1.0) -> np.ndarray:
    a = _num(sec, path, "start", start)
    b = _num(sec, path, "stop", stop)
    s = _num(sec, path, "step", step, positive=True)
    if b < a:
        raise ConfigError(f"{path}.stop", "must be >= start")
    n = int(math.floor((b - a) / s + 1e-9)) + 1
    return a + s * np.arange(n)


@dataclass
class MeshSource:
    file: Optional[str] = None
    generator: Optional[str] = None
    params: dict = field(default_factory=dict)
    volume_equivalent: bool = False

    def build(self, base: Path = Path(".")) -> TriangleMesh:
        if self.file is not None:
            p = Path(self.file)
            return load_mesh(p if p.is_absolute() else base / p)
        g, q = self.generator, self.params
        if g == "geodesic-sphere":
            m = gen_geodesic_sphere(q["radius"], int(q["frequency"]))
            vol = 4.0 / 3.0 * math.pi * q["radius"] ** 3
        elif g == "icosphere":
            m = gen_icosphere(q["radius"], int(q["subdivisions"]))
            vol = 4.0 / 3.0 * math.pi * q["radius"] ** 3
        else:
            freq = int(q["frequency"]) if "frequency" in q else None
            m = gen_spheroid(q["a"], q["c"], int(q.get("subdivisions", 2)), freq)
            vol = 4.0 / 3.0 * math.pi * q["a"] ** 2 * q["c"]
        return rescale_to_volume(m, vol) if self.volume_equivalent else m


@dataclass
class OutputSettings:
    directory: str = "out"
    bistatic: Optional[np.ndarray] = None
    planes: tuple = ("E-plane", "H-plane")
    monostatic: Optional[np.ndarray] = None
    mono_phi: float = 0.0
    mono_pol: str = "theta"
    plots: bool = True


@dataclass
class RunConfig:
    name: str
    mesh: MeshSource
    k0: float
    coating: Optional[CoatingSpec]
    bc: str
    coef_mode: str
    fit: FitSettings
    explicit: Optional[dict]
    wave: dict
    solver: SolveSettings
    hmatrix: HSettings
    quad: QuadSettings
    output: OutputSettings
    raw: dict
    base_dir: Path = Path(".")

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.k0

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def coefficients(self) -> HoibcCoefficients:
        if self.coef_mode == "explicit":
            h = HoibcCoefficients(**self.explicit)
            if self.bc == "sibc" and not h.is_sibc:
                raise ConfigError("coefficients.values", "sibc mode allows only a0")
            return h
        if self.bc == "sibc":
            return sibc_coefficients(self.coating)
        return hoibc_coefficients(self.coating, self.fit)


def parse_config(raw: Any, base_dir: Path = Path(".")) -> RunConfig:
    """Validate a parsed YAML document."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    # mesh
    ms = _section(raw, "mesh", {"file", "format", "generator", "radius", "frequency", "subdivisions", "a", "c", "volume_equivalent"})
    if ("file" in ms) == ("generator" in ms):
        raise ConfigError("mesh", "give exactly one of file and generator")
    vol_eq = bool(ms.get("volume_equivalent", False))
    if "file" in ms:
        mesh = MeshSource(file=str(ms["file"]), volume_equivalent=False)
        if vol_eq:
            raise ConfigError("mesh.volume_equivalent", "only available for generated meshes")
    else:
        g = ms["generator"]
        params = {}
        if g == "geodesic-sphere":
            params["radius"] = _num(ms, "mesh", "radius", positive=True)
            params["frequency"] = _num(ms, "mesh", "frequency", integer=True, positive=True)
        elif g == "icosphere":
            params["radius"] = _num(ms, "mesh", "radius", positive=True)
            params["subdivisions"] = _num(ms, "mesh", "subdivisions", integer=True, nonneg=True)
        elif g == "spheroid":
            params["a"] = _num(ms, "mesh", "a", positive=True)
            params["c"] = _num(ms, "mesh", "c", positive=True)
            if "frequency" in ms:
                params["frequency"] = _num(ms, "mesh", "frequency", integer=True, positive=True)
            else:
                params["subdivisions"] = _num(ms, "mesh", "subdivisions", 2, integer=True, nonneg=True)
        else:
            raise ConfigError("mesh.generator", f"unknown generator {g!r}")
        mesh = MeshSource(generator=g, params=params, volume_equivalent=vol_eq)

    # frequency
    if ("wavelength" in raw) == ("frequency_hz" in raw):
        raise ConfigError("wavelength", "give exactly one of wavelength and frequency_hz")
    try:
        if "wavelength" in raw:
            k0 = wavenumber(wavelength=_num(raw, "<root>", "wavelength", positive=True))
        else:
            k0 = wavenumber(frequency=_num(raw, "<root>", "frequency_hz", positive=True))
    except CoefficientError as exc:
        raise ConfigError("wavelength", str(exc)) from None

    # boundary condition and coefficients
    bc = raw.get("boundary_condition", "hoibc")
    if bc not in ("sibc", "hoibc"):
        raise ConfigError("boundary_condition", f"must be sibc or hoibc (got {bc!r})")
    cs = _section(raw, "coefficients", {"mode", "theta_max_deg", "samples", "values"})
    coef_mode = cs.get("mode", "fit")
    if coef_mode not in ("fit", "explicit"):
        raise ConfigError("coefficients.mode", f"must be fit or explicit (got {coef_mode!r})")
    fit = FitSettings(
        theta_max_deg=_num(cs, "coefficients", "theta_max_deg", 80.0),
        samples=_num(cs, "coefficients", "samples", 21, integer=True),
    )
    if not 0 < fit.theta_max_deg < 90:
        raise ConfigError("coefficients.theta_max_deg", "must lie in (0, 90)")
    if fit.samples < 5:
        raise ConfigError("coefficients.samples", "must be >= 5")
    explicit = None
    coating = None
    if coef_mode == "explicit":
        vals = cs.get("values")
        if not isinstance(vals, dict) or "a0" not in vals:
            raise ConfigError("coefficients.values", "explicit mode needs a mapping with at least a0")
        bad = set(vals) - {"a0", "a1", "a2", "b1", "b2"}
        if bad:
            raise ConfigError(f"coefficients.values.{sorted(bad)[0]}", "unknown coefficient")
        explicit = {k: _complex(vals, "coefficients.values", k) for k in vals}
        if bc == "sibc" and any(explicit.get(k, 0) != 0 for k in ("a1", "a2", "b1", "b2")):
            raise ConfigError("coefficients.values", "sibc mode allows only a0")
        if explicit["a0"] == 0:
            raise ConfigError("coefficients.values.a0", "must be nonzero")
    if "coating" in raw or coef_mode == "fit":
        co = _section(raw, "coating", {"eps_r", "mu_r", "thickness"})
        d = _num(co, "coating", "thickness", nonneg=False)
        if d < 0:
            raise ConfigError("coating.thickness", f"must be >= 0 (got {d})")
        eps = _complex(co, "coating", "eps_r")
        mu = _complex(co, "coating", "mu_r", 1.0)
        try:
            coating = CoatingSpec(eps, mu, d, k0)
        except CoefficientError as exc:
            field_name = "coating.eps_r" if "eps" in str(exc) else "coating.mu_r" if "mu" in str(exc) else "coating"
            raise ConfigError(field_name, str(exc)) from None
        if coef_mode == "fit" and d == 0:
            raise ConfigError("coating.thickness", "must be > 0 to derive an impedance")

    # wave
    ws = _section(raw, "wave", {"theta_deg", "phi_deg", "polarization"})
    pol = ws.get("polarization", "theta")
    if pol not in ("theta", "phi"):
        raise ConfigError("wave.polarization", f"must be theta or phi (got {pol!r})")
    wave = {"theta_deg": _num(ws, "wave", "theta_deg", 0.0), "phi_deg": _num(ws, "wave", "phi_deg", 0.0), "pol": pol}

    # solver
    ss = _section(raw, "solver", {"mode", "tol", "restart", "max_iter", "preconditioner", "dense_threshold", "precond_eta"})
    try:
        solver = SolveSettings(
            mode=ss.get("mode", "auto"),
            tol=_num(ss, "solver", "tol", 1e-6, positive=True),
            restart=_num(ss, "solver", "restart", 50, integer=True, positive=True),
            max_iter=_num(ss, "solver", "max_iter", 1000, integer=True, positive=True),
            preconditioner=ss.get("preconditioner", "near-field-block-jacobi"),
            dense_threshold=_num(ss, "solver", "dense_threshold", 1500, integer=True, nonneg=True),
            precond_eta=_num(ss, "solver", "precond_eta", 4.0, positive=True),
        )
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    hs = _section(raw, "hmatrix", {"enabled", "eps", "eta", "leaf_size", "max_rank", "recompress"})
    hm = HSettings(
        eps=_num(hs, "hmatrix", "eps", 1e-4, positive=True),
        eta=_num(hs, "hmatrix", "eta", 2.0, positive=True),
        leaf_size=_num(hs, "hmatrix", "leaf_size", 32, integer=True, positive=True),
        max_rank=int(hs["max_rank"]) if hs.get("max_rank") else None,
        recompress=bool(hs.get("recompress", False)),
    )
    if hm.eps >= 1:
        raise ConfigError("hmatrix.eps", "must be < 1")
    if not hs.get("enabled", True):
        solver = replace(solver, hmatrix=False)

    qs = _section(raw, "quadrature", {"far_order", "smooth_order", "outer_near", "rhs_order", "farfield_order", "near_factor"})
    try:
        quad = QuadSettings(**{k: (float(v) if k == "near_factor" else int(v)) for k, v in qs.items()})
        for k in ("far_order", "smooth_order", "outer_near", "rhs_order", "farfield_order"):
            from .quadrature import gauss_rule

            gauss_rule(getattr(quad, k))
    except (TypeError, ValueError) as exc:
        raise ConfigError("quadrature", str(exc)) from None

    os_ = _section(raw, "output", {"directory", "bistatic", "monostatic", "plots"})
    out = OutputSettings(directory=str(os_.get("directory", "out")), plots=bool(os_.get("plots", True)))
    if os_.get("bistatic") is not None:
        b = os_["bistatic"]
        if not isinstance(b, dict):
            raise ConfigError("output.bistatic", "must be a mapping")
        out.bistatic = _grid(b, "output.bistatic")
        planes = tuple(b.get("planes", ("E-plane", "H-plane")))
        for p in planes:
            if p not in ("E-plane", "H-plane"):
                raise ConfigError("output.bistatic.planes", f"unknown plane {p!r}")
        out.planes = planes
    else:
        out.bistatic = _grid({}, "output.bistatic")
    if os_.get("monostatic") is not None:
        mo = os_["monostatic"]
        if not isinstance(mo, dict):
            raise ConfigError("output.monostatic", "must be a mapping")
        out.monostatic = _grid(mo, "output.monostatic", step=5.0)
        out.mono_phi = _num(mo, "output.monostatic", "phi_deg", 0.0)
        out.mono_pol = mo.get("polarization", "theta")
        if out.mono_pol not in ("theta", "phi"):
            raise ConfigError("output.monostatic.polarization", "must be theta or phi")

    return RunConfig(
        name=str(raw.get("name", "run")),
        mesh=mesh,
        k0=k0,
        coating=coating,
        bc=bc,
        coef_mode=coef_mode,
        fit=fit,
        explicit=explicit,
        wave=wave,
        solver=solver,
        hmatrix=hm,
        quad=quad,
        output=out,
        raw=raw,
        base_dir=Path(base_dir),
    )


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_config(raw, p.parent)
