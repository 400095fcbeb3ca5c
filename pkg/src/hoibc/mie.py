"""Series solutions for plane-wave scattering by spheres.

Supported boundaries: perfect conductor, uniform surface impedance, a
conductor with one dielectric coating, and an impedance sphere whose
impedance depends on the mode through the second-order spectral forms.

Conventions: time factor ``exp(-i w t)``; the incident wave travels along
``-z`` (it arrives from ``theta = 0``) and is polarized along ``x``.
Observation angle ``theta`` is measured from ``+z``, so backscatter is at
``theta = 0`` and forward scatter at ``theta = 180`` degrees. ``a_n`` are
the electric (TM) and ``b_n`` the magnetic (TE) multipole coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coefficients import Z0, CoatingSpec, HoibcCoefficients, sibc_impedance

log = logging.getLogger(__name__)


class MieError(ValueError):
    """Invalid sphere configuration or unconverged series."""


# ---------------------------------------------------------------------------
# spherical Bessel functions by recurrence


def spherical_jn_all(nmax: int, x, start: Optional[int] = None) -> np.ndarray:
    """``j_0 .. j_nmax`` at scalar ``x`` (real or complex) by downward recurrence.

    The recurrence starts at ``start`` (default ``nmax + 15``, raised to
    ``|x| + 4 |x|^(1/3) + 15`` for large arguments) from an arbitrary seed and
    is normalized with ``j_0`` or ``j_1``.
    """
    x = complex(x)
    if x == 0:
        out = np.zeros(nmax + 1, dtype=complex)
        out[0] = 1.0
        return out
    if start is None:
        # the seed must sit well inside the decaying range n > |x|
        ax = abs(x)
        top = max(nmax, int(ax + 4.0 * ax ** (1 / 3))) + 15
    else:
        top = start
    vals = np.zeros(top + 2, dtype=complex)
    vals[top + 1] = 0.0
    vals[top] = 1e-30
    for n in range(top, 0, -1):
        vals[n - 1] = (2 * n + 1) / x * vals[n] - vals[n + 1]
        if abs(vals[n - 1]) > 1e250:
            vals[n - 1 :] *= 1e-250
    j0 = np.sin(x) / x
    j1 = np.sin(x) / x**2 - np.cos(x) / x
    # normalize with whichever of j0, j1 is better conditioned
    if abs(j0) >= abs(j1):
        scale = j0 / vals[0]
    else:
        scale = j1 / vals[1]
    return vals[: nmax + 1] * scale


def spherical_yn_all(nmax: int, x) -> np.ndarray:
    """``y_0 .. y_nmax`` by upward recurrence (stable for ``y_n``)."""
    x = complex(x)
    out = np.zeros(nmax + 1, dtype=complex)
    out[0] = -np.cos(x) / x
    if nmax >= 1:
        out[1] = -np.cos(x) / x**2 - np.sin(x) / x
    for n in range(1, nmax):
        out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
    return out


def riccati(nmax: int, x):
    """Riccati functions ``psi = x j_n``, ``chi = x y_n`` and derivatives for n = 1..nmax."""
    j = spherical_jn_all(nmax, x)
    y = spherical_yn_all(nmax, x)
    x = complex(x)
    psi_all = x * j
    chi_all = x * y
    n = np.arange(1, nmax + 1)
    psi = psi_all[1:]
    chi = chi_all[1:]
    dpsi = psi_all[:-1] - n * psi / x
    dchi = chi_all[:-1] - n * chi / x
    return psi, dpsi, chi, dchi


# ---------------------------------------------------------------------------
# configurations and coefficients


@dataclass(frozen=True)
class SphereConfig:
    """Sphere of core radius ``a`` (m) in free space at wavenumber ``k0``.

    Exactly one of: perfect conductor (no extra field), ``coating`` (eps_r,
    mu_r, thickness), ``impedance`` (normalized Z/Z0), or ``hoibc``
    (mode-dependent second-order impedance). The scattering radius is
    ``a + d`` for a coating and ``a`` otherwise.
    """

    a: float
    k0: float
    coating: Optional[tuple] = None
    impedance: Optional[complex] = None
    hoibc: Optional[HoibcCoefficients] = None
    n_max: Optional[int] = None

    def __post_init__(self):
        if not self.a > 0:
            raise MieError("core radius must be positive")
        if not self.k0 > 0:
            raise MieError("wavenumber must be positive")
        active = sum(v is not None for v in (self.coating, self.impedance, self.hoibc))
        if active > 1:
            raise MieError("choose at most one of coating, impedance and hoibc")
        if self.coating is not None:
            eps, mu, d = self.coating
            if d < 0:
                raise MieError("coating thickness must be >= 0")
        min_n = self.default_n_max()
        if self.n_max is not None and self.n_max < min_n:
            raise MieError(f"n_max must be >= k0 * radius + 10 = {min_n}")

    @property
    def kind(self) -> str:
        if self.coating is not None:
            return "coated"
        if self.impedance is not None:
            return "impedance"
        if self.hoibc is not None:
            return "hoibc"
        return "pec"

    @property
    def outer_radius(self) -> float:
        return self.a + (self.coating[2] if self.coating is not None else 0.0)

    def default_n_max(self) -> int:
        return int(math.ceil(self.k0 * self.outer_radius + 10))

    @property
    def order(self) -> int:
        if self.n_max is not None:
            return self.n_max
        x = self.k0 * self.outer_radius
        return max(self.default_n_max(), int(math.ceil(x + 4.05 * x ** (1 / 3) + 10)))


@dataclass(frozen=True)
class MieCoefficients:
    a: np.ndarray
    b: np.ndarray
    k0: float
    converged: bool = True

    @property
    def n(self) -> np.ndarray:
        return np.arange(1, len(self.a) + 1)


def _impedance_ab(psi, dpsi, xi, dxi, eta_tm, eta_te):
    a = (dpsi + 1j * eta_tm * psi) / (dxi + 1j * eta_tm * xi)
    b = (psi - 1j * eta_te * dpsi) / (xi - 1j * eta_te * dxi)
    return a, b


def mie_coefficients(cfg: SphereConfig, tol: float = 1e-12) -> MieCoefficients:
    """Scattering coefficients ``a_n``, ``b_n`` for n = 1..order."""
    nmax = cfg.order
    k0 = cfg.k0
    x = k0 * cfg.outer_radius
    psi, dpsi, chi, dchi = riccati(nmax, x)
    xi, dxi = psi + 1j * chi, dpsi + 1j * dchi
    kind = cfg.kind
    if kind == "pec":
        a, b = dpsi / dxi, psi / xi
    elif kind == "impedance":
        eta = complex(cfg.impedance)
        a, b = _impedance_ab(psi, dpsi, xi, dxi, eta, eta)
    elif kind == "hoibc":
        eta_tm, eta_te = cfg.hoibc.sphere_mode_impedance(np.arange(1, nmax + 1), cfg.a, k0)
        a, b = _impedance_ab(psi, dpsi, xi, dxi, eta_tm, eta_te)
    else:
        eps, mu, d = cfg.coating
        eps, mu = complex(eps), complex(mu)
        if d == 0:
            a, b = dpsi / dxi, psi / xi
        else:
            m = np.sqrt(eps * mu)
            zeta = np.sqrt(mu / eps)
            p_in, dp_in, c_in, dc_in = riccati(nmax, k0 * m * cfg.a)
            p_out, dp_out, c_out, dc_out = riccati(nmax, k0 * m * cfg.outer_radius)
            # radial functions of the layer meeting the conductor condition at r = a
            u = p_out * c_in - c_out * p_in
            du = dp_out * c_in - dc_out * p_in
            v = p_out * dc_in - c_out * dp_in
            dv = dp_out * dc_in - dc_out * dp_in
            b = (du * psi - zeta * u * dpsi) / (du * xi - zeta * u * dxi)
            a = (v * dpsi - zeta * dv * psi) / (v * dxi - zeta * dv * xi)
    tail = max(abs(a[-1]), abs(b[-1]))
    head = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    converged = bool(tail <= tol * head or tail < 1e-15)
    if not converged:
        log.warning("Mie series not converged: last coefficient %.2e relative", tail / head)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise MieError("recurrence overflow: reduce n_max")
    return MieCoefficients(a, b, k0, converged)


def equivalent_sibc_sphere(cfg: SphereConfig) -> SphereConfig:
    """Impedance sphere of radius ``a + d`` using the normal-incidence coating impedance."""
    if cfg.coating is None:
        raise MieError("equivalent impedance needs a coated configuration")
    eps, mu, d = cfg.coating
    if d == 0:
        return SphereConfig(cfg.a, cfg.k0, impedance=0j, n_max=cfg.n_max)
    z = sibc_impedance(CoatingSpec(eps, mu, d, cfg.k0))
    return SphereConfig(cfg.a + d, cfg.k0, impedance=z, n_max=cfg.n_max)


# ---------------------------------------------------------------------------
# far field and cross sections


def angular_functions(nmax: int, mu) -> tuple:
    """``pi_n`` and ``tau_n`` at ``mu = cos(Theta)`` for n = 1..nmax; shapes (len(mu), nmax)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    pi = np.zeros((mu.size, nmax + 1))
    tau = np.zeros_like(pi)
    pi[:, 1] = 1.0
    tau[:, 1] = mu
    for n in range(2, nmax + 1):
        pi[:, n] = (2 * n - 1) / (n - 1) * mu * pi[:, n - 1] - n / (n - 1) * pi[:, n - 2]
        tau[:, n] = n * mu * pi[:, n] - (n + 1) * pi[:, n - 1]
    return pi[:, 1:], tau[:, 1:]


def amplitudes(c: MieCoefficients, scatter_angle_rad) -> tuple:
    """``S1`` and ``S2`` at scattering angles measured from the forward direction."""
    n = c.n
    pi, tau = angular_functions(len(n), np.cos(scatter_angle_rad))
    w = (2 * n + 1) / (n * (n + 1))
    s1 = (pi * (w * c.a) + tau * (w * c.b)).sum(axis=1)
    s2 = (tau * (w * c.a) + pi * (w * c.b)).sum(axis=1)
    return s1, s2


@dataclass
class MieCurve:
    theta_deg: np.ndarray
    sigma: np.ndarray
    component: str

    @property
    def dbsm(self) -> np.ndarray:
        return 10 * np.log10(np.maximum(self.sigma, 1e-300))


def mie_bistatic_rcs(c: MieCoefficients, theta_deg, component: str = "theta-theta") -> MieCurve:
    """Bistatic RCS (m^2) for observation angles ``theta_deg`` (backscatter at 0).

    The incident wave travels along -z, polarized along x. ``theta-theta``:
    observation in the xz plane (E plane); ``phi-phi``: observation in the yz
    plane, received along x (H plane).
    """
    theta = np.radians(np.asarray(theta_deg, dtype=float))
    s1, s2 = amplitudes(c, np.pi - theta)
    s = s2 if component in ("theta-theta", "tt", "E-plane") else s1
    if component not in ("theta-theta", "tt", "E-plane", "phi-phi", "pp", "H-plane"):
        raise MieError(f"unknown component {component!r}")
    sigma = 4 * np.pi * np.abs(s) ** 2 / c.k0**2
    return MieCurve(np.asarray(theta_deg, dtype=float), sigma, component)


def monostatic_rcs(c: MieCoefficients) -> float:
    n = c.n
    s = np.sum((2 * n + 1) * (-1.0) ** n * (c.a - c.b))
    return float(np.pi * abs(s) ** 2 / c.k0**2)


def scattering_cross_section(c: MieCoefficients) -> float:
    n = c.n
    return float(2 * np.pi / c.k0**2 * np.sum((2 * n + 1) * (np.abs(c.a) ** 2 + np.abs(c.b) ** 2)))


def extinction_cross_section(c: MieCoefficients) -> float:
    n = c.n
    return float(2 * np.pi / c.k0**2 * np.sum((2 * n + 1) * (c.a + c.b).real))


def integrated_scattered_power(c: MieCoefficients, n_theta: int = 400) -> float:
    """Scattering cross section by Gauss-Legendre integration of the far-field intensity."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    s1, s2 = amplitudes(c, np.arccos(x))
    # azimuthal average of |S2|^2 cos^2 + |S1|^2 sin^2 gives half of each
    return float(np.pi / c.k0**2 * np.sum(w * (np.abs(s1) ** 2 + np.abs(s2) ** 2)))


def impedance_from_si(z_ohm: complex) -> complex:
    """Normalize an impedance in ohms by ``Z0``."""
    return complex(z_ohm) / Z0
