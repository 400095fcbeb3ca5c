"""Triangle quadrature rules, barycentric coordinates and the Helmholtz kernel."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import beta, betainc


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights normalized so that ``sum(weights) == 1``.

    Integrate ``f`` over a triangle of area ``A`` as ``A * sum(w * f(x))``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def map(self, corners: np.ndarray) -> np.ndarray:
        """Physical points for ``corners`` of shape (..., 3, 3) -> (..., n, 3)."""
        return np.einsum("qa,...ak->...qk", self.points, corners)


def _orbit3(a, w):
    b = (1.0 - a) / 2.0
    return [(a, b, b), (b, a, b), (b, b, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _build(orbits, degree):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return QuadratureRule(np.array(pts, dtype=float), np.array(wts, dtype=float), degree)


_S15 = np.sqrt(15.0)

# Symmetric Gauss rules (Strang-Fix / Dunavant); 6- and 12-point values
# re-solved from the moment equations to full double precision.
_RULES = {
    1: lambda: _build([([(1 / 3, 1 / 3, 1 / 3)], [1.0])], 1),
    3: lambda: _build([_orbit3(2.0 / 3.0, 1.0 / 3.0)], 2),
    6: lambda: _build(
        [
            _orbit3(0.10810301816807022736334149223390, 0.22338158967801146569500700843312),
            _orbit3(0.81684757298045851308085707319560, 0.10995174365532186763832632490021),
        ],
        4,
    ),
    7: lambda: _build(
        [
            ([(1 / 3, 1 / 3, 1 / 3)], [9.0 / 40.0]),
            _orbit3((9.0 + 2.0 * _S15) / 21.0, (155.0 - _S15) / 1200.0),
            _orbit3((9.0 - 2.0 * _S15) / 21.0, (155.0 + _S15) / 1200.0),
        ],
        5,
    ),
    12: lambda: _build(
        [
            _orbit3(0.50142650965817915741672289378596, 0.11678627572637936602528961138558),
            _orbit3(0.87382197101699554331933679425836, 0.050844906370206816920936809106869),
            _orbit6(
                0.053145049844816947353249671631398,
                0.31035245103378440541660773395655,
                0.082851075618373575193553456420442,
            ),
        ],
        6,
    ),
}

SUPPORTED_ORDERS = tuple(sorted(_RULES))


@lru_cache(maxsize=None)
def gauss_rule(order: int) -> QuadratureRule:
    """Symmetric Gauss rule with ``order`` points (1, 3, 6, 7 or 12)."""
    try:
        return _RULES[int(order)]()
    except KeyError:
        raise ValueError(f"unsupported triangle rule order {order!r}; choose from {SUPPORTED_ORDERS}") from None


@lru_cache(maxsize=None)
def graded_rule(n: int = 8, grading: int = 3) -> QuadratureRule:
    """Composite rule for integrands with edge and corner singularities.

    The triangle is split into three sub-triangles at the centroid; each is
    mapped from the unit square with Gauss-Legendre points that are clustered
    polynomially toward the outer edge and its two corners.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    p = grading
    s = 1.0 - (1.0 - x) ** p
    ds = p * (1.0 - x) ** (p - 1)
    # polynomial map clustered at both ends, so the rule stays exact for the weights
    u = betainc(p, p, x)
    du = (x * (1.0 - x)) ** (p - 1) / beta(p, p)
    centroid = np.full(3, 1.0 / 3.0)
    eye = np.eye(3)
    pts, wts = [], []
    for i in range(3):
        a, b = eye[i], eye[(i + 1) % 3]
        for si, dsi, wi in zip(s, ds, w):
            for uj, duj, wj in zip(u, du, w):
                pts.append((1.0 - si) * centroid + si * ((1.0 - uj) * a + uj * b))
                # sub-triangle area is 1/3 of the parent; polar Jacobian 2*s
                wts.append((2.0 / 3.0) * si * dsi * duj * wi * wj)
    return QuadratureRule(np.array(pts), np.array(wts), degree=-1)


def barycentric(corners, point, plane_tol: float = 1e-9) -> np.ndarray:
    """Barycentric coordinates of ``point`` relative to a triangle.

    Raises ``ValueError`` for degenerate triangles or points off the plane.
    """
    p = np.asarray(corners, dtype=float)
    x = np.asarray(point, dtype=float)
    e1, e2 = p[1] - p[0], p[2] - p[0]
    n = np.cross(e1, e2)
    twice = np.linalg.norm(n)
    scale = np.ptp(p, axis=0).max()
    if twice <= 2e-14 * scale**2:
        raise ValueError("degenerate triangle")
    n /= twice
    d = x - p[0]
    if abs(d @ n) > plane_tol * max(scale, 1.0):
        raise ValueError("point is not in the triangle plane")
    w1 = np.cross(d, e2) @ n / twice
    w2 = np.cross(e1, d) @ n / twice
    return np.array([1.0 - w1 - w2, w1, w2])


def green(k, x, y):
    """Outgoing free-space kernel ``exp(ikR) / (4 pi R)`` (time factor exp(-i w t))."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r < 1e-15):
        raise ValueError("Green kernel evaluated at coincident points; use the singular integration path")
    return np.exp(1j * k * r) / (4.0 * np.pi * r)
