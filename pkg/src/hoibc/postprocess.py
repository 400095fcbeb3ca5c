"""Far-field radiation of surface currents and radar cross sections."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assembly import PlaneWave
from .basis import BasisSet
from .coefficients import Z0
from .mesh import TriangleMesh
from .quadrature import gauss_rule

log = logging.getLogger(__name__)

COMPONENTS = ("theta-theta", "phi-phi")
_ALIASES = {"tt": "theta-theta", "E-plane": "theta-theta", "pp": "phi-phi", "H-plane": "phi-phi"}


def component_name(c: str) -> str:
    c = _ALIASES.get(c, c)
    if c not in COMPONENTS:
        raise ValueError(f"unknown RCS component {c!r}")
    return c


def spherical_frame(theta_deg, phi_deg):
    """``r_hat``, ``theta_hat`` and ``phi_hat`` for broadcast angle arrays (..., 3)."""
    th = np.radians(np.asarray(theta_deg, dtype=float))
    ph = np.radians(np.asarray(phi_deg, dtype=float))
    th, ph = np.broadcast_arrays(th, ph)
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    r = np.stack([st * cp, st * sp, ct], axis=-1)
    et = np.stack([ct * cp, ct * sp, -st], axis=-1)
    ep = np.stack([-sp, cp, np.zeros_like(th)], axis=-1)
    return r, et, ep


def _current_samples(mesh: TriangleMesh, basis: BasisSet, coeffs, order: int):
    """Points, weights and current vectors at the quadrature points of every triangle."""
    rule = gauss_rule(order)
    y = rule.map(mesh.corners)  # (t, q, 3)
    w = mesh.areas[:, None] * rule.weights
    c = np.asarray(coeffs, dtype=complex)[basis.tri_edges] * basis.coef  # (t, 3)
    vec = np.einsum("ta,tqak->tqk", c, y[:, :, None, :] - basis.corners[:, None, :, :])
    return y.reshape(-1, 3), w.ravel(), vec.reshape(-1, 3)


def far_vector(mesh, basis, J, M, k0: float, directions, order: int = 3, chunk: int = 256) -> np.ndarray:
    """Cartesian far-field pattern ``F`` with ``E_s ~ F exp(i k0 r) / r``.

    ``F = (i k0 / 4 pi) [Z0 N_t - r_hat x L]`` where ``N`` and ``L`` are the
    radiation vectors of the electric (A/m) and magnetic (V/m) currents.
    """
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    if not np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12):
        raise ValueError("observation directions must be unit vectors")
    y, w, jv = _current_samples(mesh, basis, Z0 * np.asarray(J, dtype=complex), order)
    _, _, mv = _current_samples(mesh, basis, M, order)
    out = np.empty((len(d), 3), dtype=complex)
    for lo in range(0, len(d), chunk):
        r = d[lo : lo + chunk]
        ph = w[None, :] * np.exp(-1j * k0 * (r @ y.T))
        N = ph @ jv
        L = ph @ mv
        Nt = N - r * np.einsum("nk,nk->n", r, N)[:, None]
        out[lo : lo + chunk] = (1j * k0 / (4 * np.pi)) * (Nt - np.cross(r, L))
    return out


def far_field(mesh, basis, J, M, k0: float, direction, order: int = 3, phi_deg: Optional[float] = None) -> np.ndarray:
    """Far-zone ``(E_theta, E_phi)`` scaled by ``r exp(-i k0 r)`` for one direction.

    At the poles the azimuth of the angular frame is ambiguous; ``phi_deg``
    fixes it (default 0).
    """
    d = np.asarray(direction, dtype=float)
    F = far_vector(mesh, basis, J, M, k0, d[None], order)[0]
    th = np.degrees(np.arccos(np.clip(d[2], -1.0, 1.0)))
    if phi_deg is None:
        phi_deg = 0.0 if np.hypot(d[0], d[1]) < 1e-12 else np.degrees(np.arctan2(d[1], d[0]))
    _, et, ep = spherical_frame(th, phi_deg)
    return np.array([F @ et, F @ ep])


# ---------------------------------------------------------------------------
# curves


@dataclass
class RcsCurve:
    """RCS samples along a cut; ``sigma`` maps component name to m^2 values."""

    theta_deg: np.ndarray
    phi_deg: np.ndarray
    sigma: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta_deg = np.asarray(self.theta_deg, dtype=float)
        self.phi_deg = np.broadcast_to(np.asarray(self.phi_deg, dtype=float), self.theta_deg.shape).copy()
        if self.theta_deg.size > 1 and np.any(np.diff(self.theta_deg) <= 0):
            raise ValueError("theta grid must be strictly increasing")
        sig = {}
        for k, v in self.sigma.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.theta_deg.shape:
                raise ValueError(f"component {k} has the wrong length")
            if np.any(v[np.isfinite(v)] < 0):
                raise ValueError("RCS must be non-negative")
            sig[component_name(k)] = v
        self.sigma = sig

    def dbsm(self, component: str = "theta-theta") -> np.ndarray:
        return to_dbsm(self.sigma[component_name(component)])

    def to_csv(self, path) -> None:
        """Header lines ``# key: value`` followed by one row per angle."""
        lines = [f"# {k}: {self.metadata[k]}" for k in sorted(self.metadata)]
        comps = list(self.sigma)
        cols = ["theta_deg", "phi_deg"]
        for c in comps:
            tag = "tt" if c == "theta-theta" else "pp"
            cols += [f"sigma_{tag}_m2", f"sigma_{tag}_dbsm"]
        lines.append(",".join(cols))
        for i in range(len(self.theta_deg)):
            row = [f"{self.theta_deg[i]:.10g}", f"{self.phi_deg[i]:.10g}"]
            for c in comps:
                s = self.sigma[c][i]
                row += [f"{s:.12e}", f"{to_dbsm(s):.8f}"]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "RcsCurve":
        meta = {}
        rows = []
        header = None
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif header is None:
                header = line.split(",")
            elif line.strip():
                rows.append([float(v) for v in line.split(",")])
        if header is None:
            raise ValueError(f"{path}: no header row")
        data = np.array(rows, dtype=float).reshape(-1, len(header))
        col = {h: data[:, i] for i, h in enumerate(header)}
        sigma = {}
        if "sigma_tt_m2" in col:
            sigma["theta-theta"] = col["sigma_tt_m2"]
        if "sigma_pp_m2" in col:
            sigma["phi-phi"] = col["sigma_pp_m2"]
        return cls(col["theta_deg"], col["phi_deg"], sigma, meta)


def to_dbsm(sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10.0 * np.log10(sigma)


def from_dbsm(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


# ---------------------------------------------------------------------------
# RCS


def _sigma(F: np.ndarray, receive: np.ndarray, amplitude: complex) -> np.ndarray:
    return 4.0 * np.pi * np.abs(np.einsum("nk,nk->n", F, receive)) ** 2 / abs(amplitude) ** 2


def bistatic_rcs(
    result,
    mesh: TriangleMesh,
    basis: BasisSet,
    theta_deg: Sequence[float],
    plane: str = "E-plane",
    order: int = 3,
    metadata: Optional[dict] = None,
) -> RcsCurve:
    """Bistatic RCS along a cut through the z axis.

    The E plane contains the incident polarization (receive ``theta_hat``,
    component ``theta-theta``); the H plane is rotated by 90 degrees
    (receive ``phi_hat``, component ``phi-phi``).
    """
    wave: PlaneWave = result.wave
    p = np.real(wave.polarization)
    phi_e = np.degrees(np.arctan2(p[1], p[0])) if np.hypot(p[0], p[1]) > 1e-12 else 0.0
    if plane in ("E-plane", "theta-theta", "tt"):
        phi, comp = phi_e, "theta-theta"
    elif plane in ("H-plane", "phi-phi", "pp"):
        phi, comp = phi_e + 90.0, "phi-phi"
    else:
        raise ValueError(f"unknown plane {plane!r}")
    theta = np.asarray(theta_deg, dtype=float)
    r, et, ep = spherical_frame(theta, phi)
    F = far_vector(mesh, basis, result.J, result.M, result.k, r, order)
    sig = _sigma(F, et if comp == "theta-theta" else ep, wave.amplitude)
    meta = {"k0": result.k, "plane": plane, "mesh": mesh.name}
    meta.update(metadata or {})
    return RcsCurve(theta, np.full_like(theta, phi), {comp: sig}, meta)


def monostatic_sweep(
    scatterer,
    theta_deg: Sequence[float],
    phi_deg: float = 0.0,
    pol: str = "theta",
    order: int = 3,
    metadata: Optional[dict] = None,
) -> RcsCurve:
    """Backscatter RCS for each incidence angle; the operator is built once.

    A failed solve is logged and its sample recorded as NaN; the sweep
    continues.
    """
    theta = np.asarray(theta_deg, dtype=float)
    if theta.size == 0:
        raise ValueError("incidence grid is empty")
    comp = "theta-theta" if pol == "theta" else "phi-phi"
    sig = np.full(theta.shape, np.nan)
    failures = []
    for i, th in enumerate(theta):
        try:
            wave = PlaneWave.from_angles(th, phi_deg, pol, scatterer.k)
            res = scatterer.solve(wave)
            if not res.converged:
                raise RuntimeError(f"no convergence (residual {res.residual:.2e})")
            r, et, ep = spherical_frame(th, phi_deg)
            F = far_vector(scatterer.mesh, scatterer.basis, res.J, res.M, scatterer.k, r[None], order)
            sig[i] = _sigma(F, (et if pol == "theta" else ep)[None], wave.amplitude)[0]
        except Exception as exc:  # recorded, sweep continues
            log.warning("incidence theta=%g failed: %s", th, exc)
            failures.append(float(th))
    meta = {"k0": scatterer.k, "pol": pol, "mesh": scatterer.mesh.name, "failures": failures}
    meta.update(metadata or {})
    return RcsCurve(theta, np.full_like(theta, phi_deg), {comp: sig}, meta)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class CurveComparison:
    theta_deg: np.ndarray
    db_a: np.ndarray
    db_b: np.ndarray
    mask: np.ndarray
    rms_db: float
    max_abs_db: float
    floor_dbsm: float

    @property
    def delta_db(self) -> np.ndarray:
        return self.db_a - self.db_b

    def to_csv(self, path) -> None:
        lines = [
            f"# rms_db: {self.rms_db:.8f}",
            f"# max_abs_db: {self.max_abs_db:.8f}",
            f"# floor_dbsm: {self.floor_dbsm}",
            "theta_deg,a_dbsm,b_dbsm,delta_db,included",
        ]
        for t, a, b, m in zip(self.theta_deg, self.db_a, self.db_b, self.mask):
            lines.append(f"{t:.10g},{a:.8f},{b:.8f},{a - b:.8f},{int(m)}")
        Path(path).write_text("\n".join(lines) + "\n")


def rms_db(db_a, db_b, floor_dbsm: float = -60.0) -> float:
    a = np.asarray(db_a, dtype=float)
    b = np.asarray(db_b, dtype=float)
    m = np.isfinite(a) & np.isfinite(b) & (a >= floor_dbsm) & (b >= floor_dbsm)
    if not m.any():
        return float("nan")
    return float(np.sqrt(np.mean((a[m] - b[m]) ** 2)))


def compare_curves(
    a: RcsCurve,
    b: RcsCurve,
    component: str = "theta-theta",
    floor_dbsm: float = -60.0,
    interpolate: bool = False,
) -> CurveComparison:
    """Per-angle dB difference and RMS over angles where both curves exceed the floor."""
    component = component_name(component)
    ta, tb = a.theta_deg, b.theta_deg
    da, db = a.dbsm(component), b.dbsm(component)
    if ta.shape == tb.shape and np.allclose(ta, tb, atol=1e-9):
        theta, ya, yb = ta, da, db
    elif interpolate:
        lo, hi = max(ta.min(), tb.min()), min(ta.max(), tb.max())
        if lo > hi:
            raise ValueError("angle grids do not overlap")
        keep = (ta >= lo) & (ta <= hi)
        theta, ya = ta[keep], da[keep]
        yb = np.interp(theta, tb, db)
    else:
        raise ValueError("angle grids differ; enable interpolation to compare")
    mask = np.isfinite(ya) & np.isfinite(yb) & (ya >= floor_dbsm) & (yb >= floor_dbsm)
    r = rms_db(ya, yb, floor_dbsm)
    mx = float(np.max(np.abs(ya[mask] - yb[mask]))) if mask.any() else float("nan")
    return CurveComparison(theta, ya, yb, mask, r, mx, floor_dbsm)
