"""Impedance coefficients of a PEC body with one dielectric coating.

Coefficients are stored normalized: ``a0`` is an impedance divided by
``Z0``; ``a1``, ``a2``, ``b1``, ``b2`` multiply ``(k_t / k0)**2`` in the
spectral forms::

    Z_TM / Z0 = (a0 - a1 s^2) / (1 - b1 s^2)
    Z_TE / Z0 = (a0 - a2 s^2) / (1 - b2 s^2),      s = k_t / k0

so that all five numbers are O(1). ``physical`` converts to ohms and square
metres. Time dependence is ``exp(-i w t)``: a passive coating has
``Re(Z) >= 0`` and a thin lossless layer is inductive (``Im(Z) < 0``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

log = logging.getLogger(__name__)

Z0 = 376.730313668
C0 = 299792458.0


class CoefficientError(ValueError):
    """Invalid coating or coefficient input."""


@dataclass(frozen=True)
class CoatingSpec:
    """Dielectric layer of thickness ``d`` (m) on a perfect conductor."""

    eps_r: complex
    mu_r: complex
    d: float
    k0: float
    z0: float = Z0

    def __post_init__(self):
        object.__setattr__(self, "eps_r", complex(self.eps_r))
        object.__setattr__(self, "mu_r", complex(self.mu_r))
        self.validate()

    def validate(self):
        if not np.isfinite(self.d) or self.d < 0:
            raise CoefficientError(f"coating thickness d must be >= 0 (got {self.d})")
        if not np.isfinite(self.k0) or self.k0 <= 0:
            raise CoefficientError(f"wavenumber k0 must be > 0 (got {self.k0})")
        if self.eps_r.imag < 0:
            raise CoefficientError(f"eps_r must have Im >= 0 for a passive layer (got {self.eps_r})")
        if self.mu_r.imag < 0:
            raise CoefficientError(f"mu_r must have Im >= 0 for a passive layer (got {self.mu_r})")
        if self.eps_r == 0 or self.mu_r == 0:
            raise CoefficientError("eps_r and mu_r must be nonzero")

    @classmethod
    def from_wavelength(cls, eps_r, mu_r, d_over_lambda: float, wavelength: float = 1.0):
        k0 = 2.0 * np.pi / wavelength
        return cls(eps_r, mu_r, d_over_lambda * wavelength, k0)

    @property
    def electrical_thickness(self) -> complex:
        return self.k0 * self.d * np.sqrt(self.eps_r * self.mu_r)


@dataclass(frozen=True)
class HoibcCoefficients:
    """Normalized coefficients ``(a0, a1, a2, b1, b2)`` plus fit diagnostics."""

    a0: complex
    a1: complex = 0j
    a2: complex = 0j
    b1: complex = 0j
    b2: complex = 0j
    residual: Optional[float] = None
    rms_residual: Optional[float] = None
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "b1", "b2"):
            v = complex(getattr(self, name))
            if not np.isfinite(v):
                raise CoefficientError(f"coefficient {name} is not finite")
            object.__setattr__(self, name, v)
        if self.a0 == 0:
            raise CoefficientError("a0 must be nonzero (a zero impedance is the PEC limit)")

    @property
    def is_sibc(self) -> bool:
        return self.a1 == 0 and self.a2 == 0 and self.b1 == 0 and self.b2 == 0

    def as_dict(self) -> dict:
        return {n: getattr(self, n) for n in ("a0", "a1", "a2", "b1", "b2")}

    def physical(self, k0: float, z0: float = Z0) -> dict:
        """Coefficients in ohms (a) and square metres (b)."""
        return {
            "a0": self.a0 * z0,
            "a1": self.a1 * z0 / k0**2,
            "a2": self.a2 * z0 / k0**2,
            "b1": self.b1 / k0**2,
            "b2": self.b2 / k0**2,
        }

    def z_tm(self, s):
        s2 = np.asarray(s) ** 2
        return (self.a0 - self.a1 * s2) / (1.0 - self.b1 * s2)

    def z_te(self, s):
        s2 = np.asarray(s) ** 2
        return (self.a0 - self.a2 * s2) / (1.0 - self.b2 * s2)

    def sphere_mode_impedance(self, n, radius: float, k0: float):
        """Normalized (TM, TE) impedance seen by spherical mode ``n``.

        The surface operators act on mode ``n`` with eigenvalue
        ``n (n + 1) / radius^2``, i.e. ``s^2 = n (n + 1) / (k0 radius)^2``.
        """
        s2 = np.asarray(n) * (np.asarray(n) + 1.0) / (k0 * radius) ** 2
        tm = (self.a0 - self.a1 * s2) / (1.0 - self.b1 * s2)
        te = (self.a0 - self.a2 * s2) / (1.0 - self.b2 * s2)
        return tm, te


@dataclass(frozen=True)
class FitSettings:
    """Sampling and solver options for the spectral rational fit."""

    theta_max_deg: float = 80.0
    samples: int = 21
    refine: bool = True
    residual_bound: float = 1e-3
    zeroth_order: bool = False
    ridge: float = 0.0
    s_values: Optional[tuple] = None

    def sample_points(self) -> np.ndarray:
        if self.s_values is not None:
            s = np.asarray(self.s_values, dtype=float)
        else:
            if self.samples < 5:
                raise CoefficientError(f"fit needs at least 5 samples (got {self.samples})")
            if not 0.0 < self.theta_max_deg < 90.0:
                raise CoefficientError("theta_max_deg must be in (0, 90)")
            s = np.sin(np.radians(np.linspace(0.0, self.theta_max_deg, self.samples)))
        if np.any(s < 0) or np.any(s >= 1.0):
            raise CoefficientError("spectral samples k_t/k0 must lie in [0, 1)")
        return s


def _check_pole(x: complex):
    # tan(x) has poles at pi/2 + m pi; the coating is then a resonant open circuit
    m = np.round((x.real - np.pi / 2) / np.pi)
    dist = abs(x - (np.pi / 2 + m * np.pi))
    if dist < 1e-6:
        raise CoefficientError("coating thickness at resonance: tan(k0 d sqrt(eps mu)) has a pole")


def sibc_impedance(c: CoatingSpec) -> complex:
    """Normalized normal-incidence impedance ``-i sqrt(mu/eps) tan(k0 d sqrt(eps mu))``."""
    x = complex(c.electrical_thickness)
    _check_pole(x)
    return -1j * np.sqrt(c.mu_r / c.eps_r) * np.tan(x)


def sibc_coefficients(c: CoatingSpec) -> HoibcCoefficients:
    """Leontovich coefficients: ``a0`` from the normal-incidence impedance, the rest zero."""
    a0 = sibc_impedance(c)
    if a0 == 0:
        raise CoefficientError("a0 = 0 for d = 0 (PEC limit); use a PEC solver or a nonzero thickness")
    return HoibcCoefficients(a0=a0)


def planar_impedances(c: CoatingSpec, s):
    """Exact normalized TM and TE impedances of the grounded slab at ``s = k_t / k0``."""
    s = np.asarray(s, dtype=float)
    N = np.sqrt(c.eps_r * c.mu_r - s * s + 0j)
    arg = c.k0 * c.d * N
    for x in np.atleast_1d(arg):
        _check_pole(complex(x))
    t = np.tan(arg)
    z_tm = -1j * (N / c.eps_r) * t
    z_te = -1j * (c.mu_r / N) * t
    return z_tm, z_te


def _relative_errors(h: HoibcCoefficients, s, z_tm, z_te) -> np.ndarray:
    return np.concatenate([(h.z_tm(s) - z_tm) / z_tm, (h.z_te(s) - z_te) / z_te])


def hoibc_coefficients(c: CoatingSpec, fit: FitSettings = FitSettings()) -> HoibcCoefficients:
    """Rational least-squares fit of the exact planar impedances.

    A linearized fit ``Z = a0 - a s^2 + b s^2 Z`` (shared ``a0``, rows weighted
    by ``1/|Z|``) gives the starting point; with ``fit.refine`` the summed
    relative squared error is then minimized directly.
    """
    s = fit.sample_points()
    z_tm, z_te = planar_impedances(c, s)
    n = len(s)
    if fit.zeroth_order:
        w = np.concatenate([1 / np.abs(z_tm), 1 / np.abs(z_te)])
        z = np.concatenate([z_tm, z_te])
        a0 = np.sum(w * w * z) / np.sum(w * w)
        h = HoibcCoefficients(a0=a0)
    else:
        s2 = s * s
        A = np.zeros((2 * n, 5), dtype=complex)
        rhs = np.concatenate([z_tm, z_te])
        A[:, 0] = 1.0
        A[:n, 1] = -s2
        A[:n, 3] = s2 * z_tm
        A[n:, 2] = -s2
        A[n:, 4] = s2 * z_te
        wgt = 1.0 / np.abs(rhs)
        Aw = A * wgt[:, None]
        bw = rhs * wgt
        if fit.ridge > 0:
            Aw = np.vstack([Aw, np.sqrt(fit.ridge) * np.eye(5)[1:]])
            bw = np.concatenate([bw, np.zeros(4)])
        sv = np.linalg.svd(Aw, compute_uv=False)
        if sv[-1] <= 1e-13 * sv[0]:
            raise CoefficientError("singular normal equations: the sample set cannot determine five coefficients")
        x = np.linalg.lstsq(Aw, bw, rcond=None)[0]
        h = HoibcCoefficients(a0=x[0], a1=x[1], a2=x[2], b1=x[3], b2=x[4])
        if fit.refine:
            h = _refine(h, s, z_tm, z_te)
    err = _relative_errors(h, s, z_tm, z_te)
    resid = float(np.sum(np.abs(err) ** 2))
    rms = float(np.sqrt(np.mean(np.abs(err) ** 2)))
    warnings = []
    if rms > fit.residual_bound:
        msg = f"fit rms relative residual {rms:.3e} exceeds bound {fit.residual_bound:.1e}"
        log.warning(msg)
        warnings.append(msg)
    return replace(h, residual=resid, rms_residual=rms, warnings=tuple(warnings))


def _refine(h: HoibcCoefficients, s, z_tm, z_te) -> HoibcCoefficients:
    x0 = np.array([h.a0, h.a1, h.a2, h.b1, h.b2])

    def unpack(v):
        return v[:5] + 1j * v[5:]

    def fun(v):
        z = unpack(v)
        try:
            trial = HoibcCoefficients(*z)
        except Exception:
            return np.full(4 * len(s), 1e6)
        e = _relative_errors(trial, s, z_tm, z_te)
        return np.concatenate([e.real, e.imag])

    start = np.concatenate([x0.real, x0.imag])
    res = least_squares(fun, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    better = np.sum(res.fun**2) <= np.sum(fun(start) ** 2)
    return HoibcCoefficients(*unpack(res.x)) if better else h


@dataclass(frozen=True)
class UniquenessReport:
    """Residuals ``r_j = Re(a_j) + |a0| |b_j + conj(a_j)/conj(a0)| / 2`` of the solvability condition."""

    r1: float
    r2: float
    scale1: float
    scale2: float
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.r1) <= self.tol * self.scale1 and abs(self.r2) <= self.tol * self.scale2

    def as_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "tol": self.tol, "passed": self.passed}


def uniqueness_residual(a0: complex, a: complex, b: complex) -> float:
    return float(a.real + abs(a0) * abs(b + np.conj(a) / np.conj(a0)) / 2.0)


def check_uniqueness_condition(h: HoibcCoefficients, tol: float = 1e-8, eps: float = 1e-300) -> UniquenessReport:
    """Evaluate the solvability condition for ``j = 1, 2``.

    A failing check is reported (and logged) but never raised: it is a
    sufficient condition only.
    """
    r1 = uniqueness_residual(h.a0, h.a1, h.b1)
    r2 = uniqueness_residual(h.a0, h.a2, h.b2)
    s1 = abs(h.a1) + abs(h.a0 * h.b1) + eps
    s2 = abs(h.a2) + abs(h.a0 * h.b2) + eps
    rep = UniquenessReport(r1, r2, s1, s2, tol)
    if not rep.passed:
        log.warning("uniqueness condition not met: r1=%.3e r2=%.3e", r1, r2)
    return rep


def coefficients_from_config(c: CoatingSpec, mode: str, fit: FitSettings = FitSettings(), explicit=None):
    """Dispatch on ``mode`` in {'sibc', 'hoibc-fit', 'explicit'}."""
    if mode == "sibc":
        return sibc_coefficients(c)
    if mode == "hoibc-fit":
        return hoibc_coefficients(c, fit)
    if mode == "explicit":
        if not explicit:
            raise CoefficientError("explicit mode requires a coefficient block")
        return HoibcCoefficients(**{k: complex(v) for k, v in explicit.items()})
    raise CoefficientError(f"unknown coefficient mode {mode!r}")


def wavenumber(frequency: Optional[float] = None, wavelength: Optional[float] = None) -> float:
    if (frequency is None) == (wavelength is None):
        raise CoefficientError("give exactly one of frequency and wavelength")
    if wavelength is not None:
        if wavelength <= 0:
            raise CoefficientError("wavelength must be > 0")
        return 2 * math.pi / wavelength
    if frequency <= 0:
        raise CoefficientError("frequency must be > 0")
    return 2 * math.pi * frequency / C0
