"""Double-surface integrals of the Helmholtz kernel over triangle pairs.

Three raw quantities are computed for a pair ``(P, Q)`` of triangles with
corners ``P_a`` and ``Q_b`` (unit basis coefficients; the assembly scales them
by the RWG coefficients)::

    S       = int_P int_Q G(x, y)
    V[a, b] = int_P int_Q G(x, y) (x - P_a) . (y - Q_b)
    K[a, b] = int_P int_Q grad_y G(x, y) . ((x - P_a) x (y - Q_b))

Separated pairs use product Gauss rules. Touching and nearby pairs use
singularity subtraction: the first non-smooth terms of the kernel expansion,
``(1/R - k^2 R/2) / (4 pi)``, are integrated over the source triangle in
closed form at each outer quadrature point, and the remaining C^1 part is
integrated with product Gauss rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .quadrature import QuadratureRule, gauss_rule, graded_rule

FOUR_PI = 4.0 * np.pi

FAR, SELF, EDGE, VERTEX, NEAR = 0, 1, 2, 3, 4
CLASS_NAMES = {FAR: "separated", SELF: "self", EDGE: "shared-edge", VERTEX: "shared-vertex", NEAR: "near"}


@dataclass(frozen=True)
class QuadSettings:
    """Quadrature choices per pair class.

    ``outer_self``, ``outer_edge`` and ``outer_vertex`` are ``(points per
    side, grading)`` of the graded observation-triangle rule used for touching
    pairs; ``outer_near`` is the Gauss order for nearby non-touching pairs.
    ``smooth_order`` sets the product rule for the regular remainder and
    ``far_order`` the product rule for separated pairs. Pairs whose centroids
    are closer than ``near_factor`` times the largest edge length, but which
    do not touch, go through the singular path.
    """

    far_order: int = 3
    outer_self: tuple = (10, 2)
    outer_edge: tuple = (10, 3)
    outer_vertex: tuple = (8, 3)
    outer_near: int = 12
    smooth_order: int = 7
    near_factor: float = 1.5
    rhs_order: int = 7
    farfield_order: int = 3
    point_budget: int = 300_000

    def outer_rule(self, cls: int) -> QuadratureRule:
        if cls == NEAR:
            return gauss_rule(self.outer_near)
        n, g = {SELF: self.outer_self, EDGE: self.outer_edge, VERTEX: self.outer_vertex}[cls]
        return graded_rule(int(n), int(g))


def static_potentials(x, corners, linear: bool = False):
    """Closed-form integrals of ``1/R`` (and optionally ``R``) over flat triangles.

    Parameters
    ----------
    x : (..., 3) observation points
    corners : (..., 3, 3) triangle corners, broadcast against ``x``

    Returns
    -------
    I0 : int_T 1/R dy
    Iv : int_T (y - x)/R dy
    grad : gradient of I0 with respect to ``x``
    IR, IvR : int_T R dy and int_T R (y - x) dy, only when ``linear`` is set

    The normal part of ``grad`` is the principal value (zero) for points
    lying in the triangle plane.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(corners, dtype=float)
    x, p0 = np.broadcast_arrays(x, p[..., 0, :])
    p1 = np.broadcast_to(p[..., 1, :], x.shape)
    p2 = np.broadcast_to(p[..., 2, :], x.shape)
    nrm = np.cross(p1 - p0, p2 - p0)
    nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
    h = np.einsum("...k,...k->...", x - p0, nrm)
    # coplanar points: snap rounding noise so the principal value is taken
    scale = np.maximum(np.linalg.norm(p1 - p0, axis=-1), np.linalg.norm(p2 - p0, axis=-1))
    h = np.where(np.abs(h) <= 1e-12 * scale, 0.0, h)
    rho = x - h[..., None] * nrm
    ah = np.abs(h)

    starts = np.stack([p0, p1, p2], axis=-2)
    ends = np.stack([p1, p2, p0], axis=-2)
    edge = ends - starts
    lhat = edge / np.linalg.norm(edge, axis=-1, keepdims=True)
    uhat = np.cross(lhat, nrm[..., None, :])
    r = rho[..., None, :]
    lm = np.einsum("...ik,...ik->...i", starts - r, lhat)
    lp = np.einsum("...ik,...ik->...i", ends - r, lhat)
    t0 = np.einsum("...ik,...ik->...i", starts - r, uhat)
    rm = np.linalg.norm(starts - x[..., None, :], axis=-1)
    rp = np.linalg.norm(ends - x[..., None, :], axis=-1)
    r0sq = t0 * t0 + (h * h)[..., None]

    with np.errstate(divide="ignore", invalid="ignore"):
        negative = (lp + lm) < 0.0
        f_pos = np.log((rp + lp) / (rm + lm))
        f_neg = np.log((rm - lm) / (rp - lp))
        f = np.where(negative, f_neg, f_pos)
        f = np.where(np.isfinite(f), f, 0.0)
        den_p = r0sq + ah[..., None] * rp
        den_m = r0sq + ah[..., None] * rm
        beta = np.arctan2(t0 * lp, den_p) - np.arctan2(t0 * lm, den_m)
    beta = np.where((den_p > 0) & (den_m > 0), beta, 0.0)
    sum_beta = beta.sum(axis=-1)

    i0 = np.einsum("...i,...i->...", t0, f) - ah * sum_beta
    coeff = 0.5 * (r0sq * f + lp * rp - lm * rm)
    irho = np.einsum("...i,...ik->...k", coeff, uhat)
    iv = irho - (h * i0)[..., None] * nrm
    grad = -np.einsum("...i,...ik->...k", f, uhat) - (np.sign(h) * sum_beta)[..., None] * nrm
    if not linear:
        return i0, iv, grad
    # surface divergence identities reduce both to edge integrals of R and R^3
    ir = (np.einsum("...i,...i->...", t0, coeff) + h * h * i0) / 3.0
    e3 = (
        (lp * rp**3 - lm * rm**3) / 4.0
        + 3.0 * r0sq * (lp * rp - lm * rm) / 8.0
        + 3.0 * r0sq * r0sq * f / 8.0
    )
    ivr = np.einsum("...i,...ik->...k", e3, uhat) / 3.0 - (h * ir)[..., None] * nrm
    return i0, iv, grad, ir, ivr


def _series_gprime(u):
    # (1 - u) e^u - 1 + u^2/2 = -sum_{n>=3} (n - 1) u^n / n!
    out = np.zeros_like(u)
    term = u**3 / 6.0
    for n in range(3, 14):
        out -= (n - 1) * term
        term = term * u / (n + 1)
    return out


def kernel_values(k, R, smooth: bool = False):
    """``G`` and ``g'`` with ``grad_y G = (x - y) g'``.

    With ``smooth`` the static kernel ``(1/R - k^2 R/2) / (4 pi)`` is removed,
    which leaves a remainder with continuous first derivatives.
    """
    k = complex(k)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e = np.exp(1j * k * R)
        if not smooth:
            return e / (FOUR_PI * R), (1.0 - 1j * k * R) * e / (FOUR_PI * R**3)
        u = 1j * k * R
        small = np.abs(u) < 0.1
        # e^u - 1 - u^2/2 = u + sum_{n>=3} u^n / n!
        ser_g = u * (1 + u * u / 6 * (1 + u / 4 * (1 + u / 5 * (1 + u / 6 * (1 + u / 7)))))
        num_g = np.where(small, ser_g, e - 1.0 - 0.5 * u * u)
        gs = np.where(R > 0, num_g / (FOUR_PI * R), 1j * k / FOUR_PI)
        num_d = np.where(small, _series_gprime(u), (1.0 - u) * e - 1.0 + 0.5 * u * u)
        gd = np.where(R > 0, num_d / (FOUR_PI * R**3), 1j * k**3 / (3.0 * FOUR_PI))
    return gs, gd


def _moments(x, wx, y, wy, G, gd):
    """Weighted sums used to build S, V and K from kernel samples."""
    W = wx[:, :, None] * wy[:, None, :]
    WG = W * G
    S = WG.sum(axis=(1, 2))
    Sx = np.einsum("pnm,pnk->pk", WG, x)
    Ty = np.einsum("pnm,pmk->pnk", WG, y)
    Sy = Ty.sum(axis=1)
    Sxy = np.einsum("pnk,pnk->p", Ty, x)
    Wg = W * gd
    Ky = np.einsum("pnm,pmk->pnk", Wg, y)
    Kc = np.cross(x, Ky).sum(axis=1)
    Kd = np.einsum("pnm,pnk->pk", Wg, x) - Ky.sum(axis=1)
    return S, Sx, Sy, Sxy, Kc, Kd


def _assemble_local(S, Sx, Sy, Sxy, Kc, Kd, P, Q):
    V = (
        Sxy[:, None, None]
        - np.einsum("pk,pbk->pb", Sx, Q)[:, None, :]
        - np.einsum("pak,pk->pa", P, Sy)[:, :, None]
        + np.einsum("pak,pbk->pab", P, Q) * S[:, None, None]
    )
    diff = P[:, :, None, :] - Q[:, None, :, :]
    K = np.einsum("pk,pabk->pab", Kc, diff) + np.einsum(
        "pabk,pk->pab", np.cross(P[:, :, None, :], Q[:, None, :, :]), Kd
    )
    return V, K


def far_pairs(k, P, Q, rule_x: QuadratureRule, rule_y: QuadratureRule):
    """S, V, K for separated pairs with product Gauss rules. ``P``, ``Q``: (n, 3, 3)."""
    origin = P.mean(axis=1)
    P = P - origin[:, None, :]
    Q = Q - origin[:, None, :]
    ap = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
    aq = 0.5 * np.linalg.norm(np.cross(Q[:, 1] - Q[:, 0], Q[:, 2] - Q[:, 0]), axis=1)
    x = rule_x.map(P)
    y = rule_y.map(Q)
    wx = ap[:, None] * rule_x.weights
    wy = aq[:, None] * rule_y.weights
    R = np.linalg.norm(x[:, :, None, :] - y[:, None, :, :], axis=-1)
    G, gd = kernel_values(k, R)
    mom = _moments(x, wx, y, wy, G, gd)
    V, K = _assemble_local(*mom, P, Q)
    return mom[0], V, K


def singular_pairs(k, P, Q, outer: QuadratureRule, smooth_rule: QuadratureRule):
    """S, V, K for touching or nearby pairs via singularity subtraction."""
    origin = P.mean(axis=1)
    P = P - origin[:, None, :]
    Q = Q - origin[:, None, :]
    ap = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
    aq = 0.5 * np.linalg.norm(np.cross(Q[:, 1] - Q[:, 0], Q[:, 2] - Q[:, 0]), axis=1)

    # static part: closed-form inner integral, numerical outer integral
    x = outer.map(P)
    w = ap[:, None] * outer.weights
    i0, iv, grad, ir, ivr = static_potentials(x, Q[:, None, :, :], linear=True)
    half_k2 = 0.5 * complex(k) ** 2
    grad = grad + half_k2 * iv
    i0 = i0 - half_k2 * ir
    iv = iv - half_k2 * ivr
    wi0 = w * i0
    S_st = wi0.sum(axis=1)
    A = np.einsum("pn,pnk,pnk->p", w, x, iv) + np.einsum("pn,pnk,pnk->p", wi0, x, x)
    Bv = np.einsum("pn,pnk->pk", w, iv)
    C = np.einsum("pn,pnk->pk", wi0, x)
    V_st = (
        A[:, None, None]
        - np.einsum("pak,pk->pa", P, Bv + C)[:, :, None]
        - np.einsum("pbk,pk->pb", Q, C)[:, None, :]
        + np.einsum("pak,pbk->pab", P, Q) * S_st[:, None, None]
    )
    gx = np.einsum("pn,pnk->pk", w, np.cross(grad, x))
    gs = np.einsum("pn,pnk->pk", w, grad)
    diff = P[:, :, None, :] - Q[:, None, :, :]
    K_st = -(
        np.einsum("pabk,pk->pab", diff, gx)
        + np.einsum("pabk,pk->pab", np.cross(P[:, :, None, :], Q[:, None, :, :]), gs)
    )

    # regular remainder
    xs = smooth_rule.map(P)
    ys = smooth_rule.map(Q)
    wx = ap[:, None] * smooth_rule.weights
    wy = aq[:, None] * smooth_rule.weights
    R = np.linalg.norm(xs[:, :, None, :] - ys[:, None, :, :], axis=-1)
    G, gd = kernel_values(k, R, smooth=True)
    mom = _moments(xs, wx, ys, wy, G, gd)
    V_sm, K_sm = _assemble_local(*mom, P, Q)
    return S_st / FOUR_PI + mom[0], V_st / FOUR_PI + V_sm, K_st / FOUR_PI + K_sm


def classify_pair(Ti, Tj, tol: float = 1e-12) -> int:
    """Pair class from shared corner coordinates (self / shared-edge / shared-vertex / separated)."""
    Ti = np.asarray(Ti, dtype=float)
    Tj = np.asarray(Tj, dtype=float)
    scale = max(np.ptp(np.vstack([Ti, Tj]), axis=0).max(), 1e-300)
    d = np.linalg.norm(Ti[:, None, :] - Tj[None, :, :], axis=-1) <= tol * scale
    shared = int(d.any(axis=1).sum())
    return {3: SELF, 2: EDGE, 1: VERTEX, 0: FAR}[shared]


def singular_pair_integral(Ti, Tj, k, kind: str = "scalar-G", settings: Optional[QuadSettings] = None):
    """Double integral over a touching or identical triangle pair.

    ``kind`` selects ``"scalar-G"`` (returns ``int int G``), ``"vector-G"``
    (3x3 array of ``int int G (x - Ti_a).(y - Tj_b)``) or ``"grad-G-cross"``
    (3x3 array of ``int int grad_y G . ((x - Ti_a) x (y - Tj_b))``).
    """
    settings = settings or QuadSettings()
    Ti = np.asarray(Ti, dtype=float)[None]
    Tj = np.asarray(Tj, dtype=float)[None]
    cls = classify_pair(Ti[0], Tj[0])
    if cls == FAR:
        cls = NEAR
    S, V, K = singular_pairs(k, Ti, Tj, settings.outer_rule(cls), gauss_rule(settings.smooth_order))
    if kind == "scalar-G":
        return complex(S[0])
    if kind == "vector-G":
        return V[0]
    if kind == "grad-G-cross":
        return K[0]
    raise ValueError(f"unknown integrand kind {kind!r}")


class PairIntegrator:
    """Routes triangle pairs of one mesh to the far or singular integration path."""

    def __init__(self, mesh, k: float, settings: Optional[QuadSettings] = None, chunk: int = 20000):
        self.mesh = mesh
        self.k = float(k)
        self.settings = settings or QuadSettings()
        self.chunk = chunk
        self.corners = mesh.corners
        topo = mesh.topology
        reach = self.settings.near_factor * float(topo.length.max())
        tree = cKDTree(mesh.centroids)
        pairs = tree.query_pairs(reach, output_type="ndarray")
        n = mesh.n_triangles
        rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
        tris = mesh.triangles
        shared = (tris[rows][:, :, None] == tris[cols][:, None, :]).any(axis=2).sum(axis=1)
        code = np.select([shared == 3, shared == 2, shared == 1], [SELF, EDGE, VERTEX], NEAR)
        self.pair_class = sparse.csr_matrix((code.astype(np.int8), (rows, cols)), shape=(n, n))

    def classes(self, tp, tq) -> np.ndarray:
        return self.pair_class[tp][:, tq].toarray()

    def raw(self, tp, tq):
        """S (np, nq), V and K (np, nq, 3, 3) for every pair in ``tp x tq``."""
        tp = np.asarray(tp)
        tq = np.asarray(tq)
        cls = self.classes(tp, tq)
        shape = (len(tp), len(tq))
        S = np.empty(shape, dtype=complex)
        V = np.empty(shape + (3, 3), dtype=complex)
        K = np.empty(shape + (3, 3), dtype=complex)
        st = self.settings
        far_rule = gauss_rule(st.far_order)
        smooth = gauss_rule(st.smooth_order)
        for c in (FAR, SELF, EDGE, VERTEX, NEAR):
            ii, jj = np.nonzero(cls == c)
            if not len(ii):
                continue
            if c == FAR:
                step = self.chunk
            else:
                outer = st.outer_rule(c)
                step = max(1, st.point_budget // (outer.size + smooth.size**2))
            for lo in range(0, len(ii), step):
                i = ii[lo : lo + step]
                j = jj[lo : lo + step]
                P = self.corners[tp[i]]
                Q = self.corners[tq[j]]
                if c == FAR:
                    s, v, kk = far_pairs(self.k, P, Q, far_rule, far_rule)
                else:
                    s, v, kk = singular_pairs(self.k, P, Q, outer, smooth)
                S[i, j] = s
                V[i, j] = v
                K[i, j] = kk
        return S, V, K
