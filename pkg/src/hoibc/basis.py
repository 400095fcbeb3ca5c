"""RWG current basis and the edge-based Lagrange multiplier basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh
from .quadrature import barycentric

PLUS, MINUS = +1, -1


@dataclass(frozen=True)
class RwgFunction:
    """RWG function of one interior edge.

    On ``T+`` the function is ``l / (2 |T+|) (x - v+)``; on ``T-`` it is
    ``l / (2 |T-|) (v- - x)``.
    """

    edge: int
    tri_plus: int
    tri_minus: int
    v_plus: np.ndarray
    v_minus: np.ndarray
    length: float
    area_plus: float
    area_minus: float

    def divergence(self, side: int) -> float:
        if side == PLUS:
            return self.length / self.area_plus
        return -self.length / self.area_minus


@dataclass(frozen=True)
class LagrangeFunction:
    """Multiplier function ``(1 - 2 w_opp(x)) (nu x n)`` on the two triangles of an edge.

    ``w_opp`` is the barycentric coordinate of the vertex opposite the edge.
    """

    edge: int
    tri_plus: int
    tri_minus: int
    local_plus: int
    local_minus: int
    direction: np.ndarray


class BasisSet:
    """RWG and Lagrange functions of a closed mesh plus per-triangle lookup tables.

    The per-triangle arrays describe the three half-functions living on each
    triangle ``t``: local function ``a`` belongs to edge ``tri_edges[t, a]``,
    has free vertex ``corners[t, a]`` and coefficient ``coef[t, a]`` so that
    ``f(x) = coef[t, a] * (x - corners[t, a])`` and ``div f = 2 coef[t, a]``.
    """

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        self.topology = topo = mesh.topology
        self.n = topo.n_edges
        self.tri_edges = topo.tri_edges
        self.corners = mesh.corners
        areas = mesh.areas
        self.coef = topo.tri_signs * topo.length[topo.tri_edges] / (2.0 * areas[:, None])
        # nu_n x n_t for the edge opposite each local vertex; uses the global edge direction
        nu = topo.direction[topo.tri_edges]
        self.lagrange_dir = np.cross(nu, mesh.normals[:, None, :])

    def rwg(self, n: int) -> RwgFunction:
        t = self.topology
        v = self.mesh.vertices
        return RwgFunction(
            edge=n,
            tri_plus=int(t.tri_plus[n]),
            tri_minus=int(t.tri_minus[n]),
            v_plus=v[t.opp_plus[n]],
            v_minus=v[t.opp_minus[n]],
            length=float(t.length[n]),
            area_plus=float(self.mesh.areas[t.tri_plus[n]]),
            area_minus=float(self.mesh.areas[t.tri_minus[n]]),
        )

    def lagrange(self, n: int) -> LagrangeFunction:
        t = self.topology
        return LagrangeFunction(
            edge=n,
            tri_plus=int(t.tri_plus[n]),
            tri_minus=int(t.tri_minus[n]),
            local_plus=int(t.local_plus[n]),
            local_minus=int(t.local_minus[n]),
            direction=t.direction[n],
        )


def rwg_eval(f: RwgFunction, x, side: int, mesh: TriangleMesh | None = None) -> np.ndarray:
    """Value of ``f`` at ``x`` on the given side.

    When ``mesh`` is supplied, a point outside the indicated triangle yields
    the zero vector.
    """
    x = np.asarray(x, dtype=float)
    if mesh is not None:
        tri = f.tri_plus if side == PLUS else f.tri_minus
        w = barycentric(mesh.corners[tri], x)
        if np.any(w < -1e-12):
            return np.zeros(3)
    if side == PLUS:
        return f.length / (2.0 * f.area_plus) * (x - f.v_plus)
    return f.length / (2.0 * f.area_minus) * (f.v_minus - x)


def lagrange_eval(g: LagrangeFunction, x, mesh: TriangleMesh, side: int | None = None) -> np.ndarray:
    """Value of ``g`` at ``x``; the side is detected from ``x`` when omitted."""
    x = np.asarray(x, dtype=float)
    candidates = [(PLUS, g.tri_plus, g.local_plus), (MINUS, g.tri_minus, g.local_minus)]
    for s, tri, local in candidates:
        if side is not None and s != side:
            continue
        w = barycentric(mesh.corners[tri], x)
        if side is None and np.any(w < -1e-12):
            continue
        return (1.0 - 2.0 * w[local]) * np.cross(g.direction, mesh.normals[tri])
    return np.zeros(3)
