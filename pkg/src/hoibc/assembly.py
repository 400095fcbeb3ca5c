"""Galerkin blocks, the six-block constrained system and its two-block reduction.

Unknowns are ``j = Z0 J`` and ``m = M`` (both V/m) so that electric and
magnetic rows share one scale. Kernel blocks::

    BS[i, j] = -i int int G (k f_i . f_j - div f_i div f_j / k)
    Q[i, j]  =    int int grad_y G . (f_i(x) x f_j(y))

Sparse blocks: ``I`` (Gram), ``D`` (divergence Gram), ``C_H = <g_i, f_j>``
and ``C_K = <g_i, n x f_j>``. The coefficient-weighted divergence terms use
``D / k**2`` because the stored coefficients are normalized by ``k0``.
"""

from __future__ import annotations

import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.io import mmwrite

from .basis import BasisSet
from .coefficients import Z0, HoibcCoefficients
from .kernels import PairIntegrator, QuadSettings, far_pairs
from .mesh import TriangleMesh
from .quadrature import gauss_rule

log = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    """Raised when a block cannot be assembled."""


def resolve_threads(threads: Optional[int] = None) -> int:
    """Thread count from the argument, ``HOIBC_THREADS`` or the CPU count."""
    if threads is None:
        env = os.environ.get("HOIBC_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


# ---------------------------------------------------------------------------
# sparse blocks


def _scatter(basis: BasisSet, local: np.ndarray) -> sparse.csr_matrix:
    """Sum per-triangle (T, 3, 3) contributions into an edge-indexed sparse matrix."""
    te = basis.tri_edges
    rows = np.broadcast_to(te[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(te[:, None, :], local.shape).ravel()
    n = basis.n
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def gram_blocks(basis: BasisSet, order: int = 7):
    """``I`` and ``D`` as sparse matrices (real)."""
    mesh = basis.mesh
    rule = gauss_rule(order)
    x = rule.map(mesh.corners)  # (T, q, 3)
    w = mesh.areas[:, None] * rule.weights
    c = basis.coef
    d = x[:, :, None, :] - basis.corners[:, None, :, :]  # (T, q, a, 3)
    gram = np.einsum("tq,tqak,tqbk->tab", w, d, d) * c[:, :, None] * c[:, None, :]
    div = 4.0 * c[:, :, None] * c[:, None, :] * mesh.areas[:, None, None]
    return _scatter(basis, gram), _scatter(basis, div)


def constraint_blocks(basis: BasisSet, order: int = 7):
    """``C_H[i, j] = <g_i, f_j>`` and ``C_K[i, j] = <g_i, n x f_j>``."""
    mesh = basis.mesh
    rule = gauss_rule(order)
    x = rule.map(mesh.corners)
    w = mesh.areas[:, None] * rule.weights
    c = basis.coef
    f = c[:, None, :, None] * (x[:, :, None, :] - basis.corners[:, None, :, :])  # (T, q, b, 3)
    nf = np.cross(mesh.normals[:, None, None, :], f)
    scal = 1.0 - 2.0 * rule.points  # (q, a): factor of the function attached to local edge a
    g = scal[None, :, :, None] * basis.lagrange_dir[:, None, :, :]  # (T, q, a, 3)
    ch = np.einsum("tq,tqak,tqbk->tab", w, g, f)
    ck = np.einsum("tq,tqak,tqbk->tab", w, g, nf)
    return _scatter(basis, ch), _scatter(basis, ck)


@dataclass
class ConstraintDiagnostics:
    """Comparison of the quadrature ``C_H`` with its closed-form diagonal."""

    max_diag_rel_error: float
    max_offdiag_rel: float
    ok: bool

    def as_dict(self):
        return {"max_diag_rel_error": self.max_diag_rel_error, "max_offdiag_rel": self.max_offdiag_rel, "ok": self.ok}


def closed_form_ch_diagonal(mesh: TriangleMesh) -> np.ndarray:
    topo = mesh.topology
    return (mesh.areas[topo.tri_plus] + mesh.areas[topo.tri_minus]) / 3.0


def assemble_CH_CK(mesh: TriangleMesh, basis: BasisSet, settings: QuadSettings = QuadSettings(), tol: float = 1e-8):
    """``C_H``, ``C_K`` and the diagonal check of ``C_H``."""
    ch, ck = constraint_blocks(basis, settings.rhs_order)
    ref = closed_form_ch_diagonal(mesh)
    diag = ch.diagonal()
    rel = float(np.max(np.abs(diag - ref) / ref))
    off = ch - sparse.diags(diag)
    off_rel = float(np.max(np.abs(off.data)) / ref.max()) if off.nnz else 0.0
    diag_ok = rel <= tol and off_rel <= tol
    if not diag_ok:
        log.warning("C_H differs from its closed-form diagonal: diag %.2e, off-diagonal %.2e", rel, off_rel)
    return ch, ck, ConstraintDiagnostics(rel, off_rel, diag_ok)


# ---------------------------------------------------------------------------
# kernel blocks


class KernelAssembler:
    """Evaluates ``BS`` and ``Q`` entries on edge index sets or as dense matrices."""

    def __init__(self, mesh: TriangleMesh, basis: BasisSet, k: float, settings: QuadSettings = QuadSettings(), threads=None):
        self.mesh = mesh
        self.basis = basis
        self.k = float(k)
        self.settings = settings
        self.threads = resolve_threads(threads)
        self.pairs = PairIntegrator(mesh, k, settings)
        topo = mesh.topology
        self._tri = np.stack([topo.tri_plus, topo.tri_minus], axis=1)
        self._loc = np.stack([topo.local_plus, topo.local_minus], axis=1)

    def local(self, tp, tq):
        """Per-triangle-pair (np, nq, 3, 3) blocks of ``BS`` and ``Q`` including RWG coefficients."""
        S, V, K = self.pairs.raw(tp, tq)
        k = self.k
        cc = self.basis.coef[tp][:, None, :, None] * self.basis.coef[tq][None, :, None, :]
        bs = -1j * (k * V - (4.0 / k) * S[:, :, None, None]) * cc
        q = K * cc
        return bs, q

    def block(self, rows, cols):
        """Edge-indexed dense sub-blocks ``BS[rows][:, cols]`` and ``Q[rows][:, cols]``."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        tr = self._tri[rows]
        tc = self._tri[cols]
        up, ir = np.unique(tr, return_inverse=True)
        uq, ic = np.unique(tc, return_inverse=True)
        ir = ir.reshape(tr.shape)
        ic = ic.reshape(tc.shape)
        bs_l, q_l = self.local(up, uq)
        la, lb = self._loc[rows], self._loc[cols]
        bs = np.zeros((len(rows), len(cols)), dtype=complex)
        q = np.zeros_like(bs)
        for s in range(2):
            for t in range(2):
                idx = (ir[:, s][:, None], ic[:, t][None, :], la[:, s][:, None], lb[:, t][None, :])
                bs += bs_l[idx]
                q += q_l[idx]
        return bs, q

    def sampler(self, rows, cols) -> "BlockSampler":
        return BlockSampler(self, rows, cols)

    def _selection(self):
        n_t = self.mesh.n_triangles
        te = self.basis.tri_edges
        ones = np.ones(n_t)
        return [sparse.csr_matrix((ones, (np.arange(n_t), te[:, a])), shape=(n_t, self.basis.n)) for a in range(3)]

    def dense(self, chunk: int = 48):
        """Full ``BS`` and ``Q`` (N_e x N_e), triangle row chunks reduced in fixed order."""
        n = self.basis.n
        n_t = self.mesh.n_triangles
        sel = self._selection()
        all_t = np.arange(n_t)
        starts = list(range(0, n_t, chunk))

        def work(lo):
            tp = all_t[lo : lo + chunk]
            bs_l, q_l = self.local(tp, all_t)
            out = []
            for loc in (bs_l, q_l):
                parts = []
                for a in range(3):
                    ca = sum((sel[b].T @ loc[:, :, a, b].T).T for b in range(3))  # (chunk, n)
                    parts.append(ca)
                out.append(parts)
            return lo, tp, out

        BS = np.zeros((n, n), dtype=complex)
        Q = np.zeros((n, n), dtype=complex)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            for lo, tp, (bs_parts, q_parts) in pool.map(work, starts):
                for a in range(3):
                    ra = sel[a][tp]  # (chunk, n) selection of edge of local index a
                    BS += ra.T @ bs_parts[a]
                    Q += ra.T @ q_parts[a]
        return BS, Q


class BlockSampler:
    """Single rows and columns of ``BS[rows][:, cols]`` and ``Q[rows][:, cols]``.

    When every triangle pair of the block is separated the entries come
    straight from the far-field rule; otherwise they go through the
    generic path. Both matrices are produced by one evaluation and cached.
    """

    def __init__(self, assembler: KernelAssembler, rows, cols):
        self.asm = assembler
        self.rows = np.asarray(rows)
        self.cols = np.asarray(cols)
        tr = assembler._tri[self.rows]
        tc = assembler._tri[self.cols]
        self.up, ir = np.unique(tr, return_inverse=True)
        self.uq, ic = np.unique(tc, return_inverse=True)
        self.ir = ir.reshape(tr.shape)
        self.ic = ic.reshape(tc.shape)
        self.la = assembler._loc[self.rows]
        self.lc = assembler._loc[self.cols]
        self.far = not assembler.pairs.classes(self.up, self.uq).any()
        st = assembler.settings
        self._rule = gauss_rule(st.far_order)
        self._row_cache: dict = {}
        self._col_cache: dict = {}
        self.evaluations = 0

    def _local(self, tp, tq):
        if not self.far:
            return self.asm.local(tp, tq)
        corners = self.asm.mesh.corners
        P = np.repeat(corners[tp], len(tq), axis=0)
        Q = np.tile(corners[tq], (len(tp), 1, 1))
        S, V, K = far_pairs(self.asm.k, P, Q, self._rule, self._rule)
        shape = (len(tp), len(tq))
        S, V, K = S.reshape(shape), V.reshape(shape + (3, 3)), K.reshape(shape + (3, 3))
        k = self.asm.k
        coef = self.asm.basis.coef
        cc = coef[tp][:, None, :, None] * coef[tq][None, :, None, :]
        return -1j * (k * V - (4.0 / k) * S[:, :, None, None]) * cc, K * cc

    def row(self, i: int):
        if i not in self._row_cache:
            self.evaluations += 1
            tp = self.up[self.ir[i]]
            bs_l, q_l = self._local(tp, self.uq)
            bs = np.zeros(len(self.cols), dtype=complex)
            q = np.zeros_like(bs)
            for a in range(2):
                for b in range(2):
                    idx = (a, self.ic[:, b], self.la[i, a], self.lc[:, b])
                    bs += bs_l[idx]
                    q += q_l[idx]
            self._row_cache[i] = (bs, q)
        return self._row_cache[i]

    def col(self, j: int):
        if j not in self._col_cache:
            self.evaluations += 1
            tq = self.uq[self.ic[j]]
            bs_l, q_l = self._local(self.up, tq)
            bs = np.zeros(len(self.rows), dtype=complex)
            q = np.zeros_like(bs)
            for a in range(2):
                for b in range(2):
                    idx = (self.ir[:, a], b, self.la[:, a], self.lc[j, b])
                    bs += bs_l[idx]
                    q += q_l[idx]
            self._col_cache[j] = (bs, q)
        return self._col_cache[j]


# ---------------------------------------------------------------------------
# plane wave and right-hand side


@dataclass(frozen=True)
class PlaneWave:
    """``E = amplitude * pol * exp(i k dir . x)``; ``Z0 H = dir x E``."""

    direction: np.ndarray
    polarization: np.ndarray
    k: float
    amplitude: complex = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        p = np.asarray(self.polarization, dtype=complex)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("propagation direction must be a unit vector")
        if abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise ValueError("polarization must be a unit vector")
        if abs(np.dot(d, p)) > 1e-12:
            raise ValueError("polarization must be perpendicular to the propagation direction")
        if self.k <= 0:
            raise ValueError("wavenumber must be positive")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "polarization", p)

    @classmethod
    def from_angles(cls, theta_deg: float, phi_deg: float, pol: str, k: float, amplitude: complex = 1.0):
        """Wave arriving from direction (theta, phi): it travels along ``-r_hat(theta, phi)``.

        ``pol`` is ``"theta"`` or ``"phi"`` (unit vectors of the arrival direction).
        """
        th, ph = np.radians(theta_deg), np.radians(phi_deg)
        r = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        e_th = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        e_ph = np.array([-np.sin(ph), np.cos(ph), 0.0])
        p = {"theta": e_th, "phi": e_ph}[pol]
        return cls(-r, p, k, amplitude)

    def e_field(self, x):
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * self.k * (x @ self.direction))
        return self.amplitude * phase[..., None] * self.polarization

    def z0h_field(self, x):
        return np.cross(self.direction, self.e_field(x))


def assemble_rhs(mesh: TriangleMesh, basis: BasisSet, wave: PlaneWave, order: int = 7, full: bool = True):
    """``<E_inc, f_i>`` and ``<Z0 H_inc, f_i>``; zero-padded to 6 N_e when ``full``."""
    rule = gauss_rule(order)
    x = rule.map(mesh.corners)
    w = mesh.areas[:, None] * rule.weights
    f = basis.coef[:, None, :, None] * (x[:, :, None, :] - basis.corners[:, None, :, :])
    e = wave.e_field(x)
    h = wave.z0h_field(x)
    n = basis.n
    te = basis.tri_edges.ravel()
    re = np.bincount(te, weights=np.einsum("tq,tqak,tqk->ta", w, f, e).ravel().real, minlength=n)
    ie = np.bincount(te, weights=np.einsum("tq,tqak,tqk->ta", w, f, e).ravel().imag, minlength=n)
    rh = np.bincount(te, weights=np.einsum("tq,tqak,tqk->ta", w, f, h).ravel().real, minlength=n)
    ih = np.bincount(te, weights=np.einsum("tq,tqak,tqk->ta", w, f, h).ravel().imag, minlength=n)
    v = np.concatenate([re + 1j * ie, rh + 1j * ih])
    if full:
        v = np.concatenate([v, np.zeros(4 * n, dtype=complex)])
    return v


# ---------------------------------------------------------------------------
# block set and systems


@dataclass
class BlockSet:
    """All Galerkin blocks of one mesh and frequency."""

    BS: Optional[np.ndarray]
    Q: Optional[np.ndarray]
    I: sparse.csr_matrix
    D: sparse.csr_matrix
    C_H: sparse.csr_matrix
    C_K: sparse.csr_matrix
    k: float
    coefficients: HoibcCoefficients
    ch_diagonal: Optional[np.ndarray] = None
    z0: float = Z0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ch_diagonal is None:
            self.ch_diagonal = self.C_H.diagonal().real.copy()

    @property
    def n(self) -> int:
        return self.I.shape[0]

    @property
    def Dn(self) -> sparse.csr_matrix:
        """Divergence Gram in units matching the normalized coefficients."""
        return self.D / self.k**2


def assemble_blocks(
    mesh: TriangleMesh,
    basis: BasisSet,
    k: float,
    coefficients: HoibcCoefficients,
    settings: QuadSettings = QuadSettings(),
    kernel: bool = True,
    threads=None,
) -> BlockSet:
    """Assemble every block; ``kernel=False`` skips the dense kernel blocks."""
    if k <= 0:
        raise AssemblyError("wavenumber must be positive")
    I, D = gram_blocks(basis, settings.rhs_order)
    ch, ck, diag = assemble_CH_CK(mesh, basis, settings)
    BS = Q = None
    if kernel:
        try:
            BS, Q = KernelAssembler(mesh, basis, k, settings, threads).dense()
        except Exception as exc:  # pragma: no cover - context for unexpected failures
            raise AssemblyError(f"kernel block assembly failed: {exc}") from exc
    return BlockSet(
        BS, Q, I, D, ch, ck, float(k), coefficients,
        ch_diagonal=closed_form_ch_diagonal(mesh),
        diagnostics={"C_H": diag.as_dict()},
    )


@dataclass
class FullSystem:
    """Dense 6 N_e system in the unknown order (J, M, J~, M~, lambda_J, lambda_M)."""

    matrix: np.ndarray
    rhs: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 6


def build_full_system(blocks: BlockSet, rhs: np.ndarray) -> FullSystem:
    """Assemble the constrained six-block system as a dense matrix."""
    h = blocks.coefficients
    a0, a1, a2, b1, b2 = h.a0, h.a1, h.a2, h.b1, h.b2
    if a0 == 0:
        raise AssemblyError("a0 must be nonzero")
    if blocks.BS is None:
        raise AssemblyError("the full system needs dense kernel blocks")
    n = blocks.n
    I = blocks.I.toarray()
    D = blocks.Dn.toarray()
    CH = blocks.C_H.toarray()
    CK = blocks.C_K.toarray()
    BS, Q = blocks.BS, blocks.Q
    Z = np.zeros((n, n))
    A1 = BS + (a0 / 2) * I - (a1 / 2) * D
    A2 = BS + I / (2 * a0) - (b2 / (2 * a0)) * D
    rows = [
        [A1, Q, Z, (b1 / 2) * D, -CK.T, Z],
        [-Q.T, A2, -(a2 / (2 * a0)) * D, Z, Z, -CK.T],
        [Z, -(b2 / 2) * D, -(a2 / 2) * D, Z, CH.T, Z],
        [(a1 / (2 * a0)) * D, Z, Z, -(b1 / (2 * a0)) * D, Z, CH.T],
        [-CK, Z, CH, Z, Z, Z],
        [Z, -CK, Z, CH, Z, Z],
    ]
    M = np.block([[np.asarray(b, dtype=complex) for b in r] for r in rows])
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.shape[0] == 2 * n:
        rhs = np.concatenate([rhs, np.zeros(4 * n, dtype=complex)])
    return FullSystem(M, rhs)


class DenseKernel:
    """Kernel-block operator backed by dense matrices."""

    def __init__(self, BS: np.ndarray, Q: np.ndarray):
        self.BS = BS
        self.Q = Q

    def bs(self, v):
        return self.BS @ v

    def q(self, v):
        return self.Q @ v

    def qt(self, v):
        return self.Q.T @ v


@dataclass
class ReducedSystem:
    """Two-block system in (J, M) after eliminating the auxiliary unknowns.

    ``matvec`` applies ``[[BS, Q], [-Q^T, BS]] + local`` where ``local`` holds
    every sparse coupling. ``E = C_H^{-1} C_K`` maps J to J~ and M to M~.
    """

    kernel: object
    local: sparse.csr_matrix
    rhs: np.ndarray
    E: sparse.csr_matrix
    blocks: BlockSet

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def shape(self):
        return (2 * self.n, 2 * self.n)

    def matvec(self, x):
        n = self.n
        x = np.asarray(x)
        xj, xm = x[:n], x[n:]
        k = self.kernel
        top = k.bs(xj) + k.q(xm)
        bot = -k.qt(xj) + k.bs(xm)
        return np.concatenate([top, bot]) + self.local @ x

    def dense(self) -> np.ndarray:
        if not isinstance(self.kernel, DenseKernel):
            raise AssemblyError("dense form requires dense kernel blocks")
        BS, Q = self.kernel.BS, self.kernel.Q
        return np.block([[BS, Q], [-Q.T, BS]]) + self.local.toarray()

    def recover(self, x) -> dict:
        """Auxiliary unknowns from the reduced solution ``x = (J, M)``."""
        h = self.blocks.coefficients
        n = self.n
        J, M = x[:n], x[n:]
        D = self.blocks.Dn
        chd = self.blocks.ch_diagonal
        Jt = self.E @ J
        Mt = self.E @ M
        lam_j = ((h.b2 / 2) * (D @ M) + (h.a2 / 2) * (D @ Jt)) / chd
        lam_m = (-(h.a1 / (2 * h.a0)) * (D @ J) + (h.b1 / (2 * h.a0)) * (D @ Mt)) / chd
        return {"J": J, "M": M, "Jt": Jt, "Mt": Mt, "lam_J": lam_j, "lam_M": lam_m}

    def expand(self, x) -> np.ndarray:
        r = self.recover(x)
        return np.concatenate([r[k] for k in ("J", "M", "Jt", "Mt", "lam_J", "lam_M")])


def elimination_map(blocks: BlockSet, use_closed_form: bool = True) -> sparse.csr_matrix:
    """``E = C_H^{-1} C_K`` with the diagonal of ``C_H``."""
    d = blocks.ch_diagonal if use_closed_form else blocks.C_H.diagonal()
    if np.any(np.abs(d) <= 1e-14 * np.mean(np.abs(d))):
        raise AssemblyError("C_H is singular")
    return sparse.diags(1.0 / d) @ blocks.C_K


def reduce_system(blocks: BlockSet, rhs: np.ndarray, kernel=None) -> ReducedSystem:
    """Eliminate (J~, M~, lambda_J, lambda_M) and return the (J, M) system."""
    h = blocks.coefficients
    a0, a1, a2, b1, b2 = h.a0, h.a1, h.a2, h.b1, h.b2
    if kernel is None:
        if blocks.BS is None:
            raise AssemblyError("no kernel operator available")
        kernel = DenseKernel(blocks.BS, blocks.Q)
    E = elimination_map(blocks).tocsr()
    E.eliminate_zeros()
    I, D = blocks.I, blocks.Dn
    EtDE = (E.T @ D @ E).tocsr()
    DE = (D @ E).tocsr()
    EtD = (E.T @ D).tocsr()
    L11 = (a0 / 2) * I - (a1 / 2) * D - (a2 / 2) * EtDE
    L12 = (b1 / 2) * DE - (b2 / 2) * EtD
    L21 = -(a2 / (2 * a0)) * DE + (a1 / (2 * a0)) * EtD
    L22 = I / (2 * a0) - (b2 / (2 * a0)) * D - (b1 / (2 * a0)) * EtDE
    local = sparse.bmat([[L11, L12], [L21, L22]], format="csr")
    rhs = np.asarray(rhs, dtype=complex)[: 2 * blocks.n]
    return ReducedSystem(kernel, local, rhs, E, blocks)


def sibc_system(BS: np.ndarray, Q: np.ndarray, mesh: TriangleMesh, a0: complex) -> np.ndarray:
    """Leontovich system assembled directly, without the constrained machinery.

    The Gram matrix comes from the closed-form second moment of each triangle
    rather than from quadrature.
    """
    topo = mesh.topology
    n = topo.n_edges
    gram = np.zeros((n, n))
    for t in range(mesh.n_triangles):
        p = mesh.corners[t]
        c = p.mean(axis=0)
        area = mesh.areas[t]
        spread = np.sum((p - c) ** 2) / 12.0
        edges = topo.tri_edges[t]
        for a in range(3):
            ea = edges[a]
            sa = 1.0 if topo.tri_plus[ea] == t else -1.0
            for b in range(3):
                eb = edges[b]
                sb = 1.0 if topo.tri_plus[eb] == t else -1.0
                coef = sa * sb * topo.length[ea] * topo.length[eb] / (4.0 * area * area)
                gram[ea, eb] += coef * area * ((c - p[a]) @ (c - p[b]) + spread)
    return np.block([[BS + (a0 / 2) * gram, Q], [-Q.T, BS + gram / (2 * a0)]])


# ---------------------------------------------------------------------------
# diagnostic dumps

_MAGIC = b"HOIBCMAT"


def dump_binary(path, matrix) -> None:
    """Write ``matrix`` as: 8-byte magic, int64 rows, int64 cols, row-major complex128."""
    a = np.ascontiguousarray(np.asarray(matrix.toarray() if sparse.issparse(matrix) else matrix, dtype="<c16"))
    if a.ndim == 1:
        a = a[:, None]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qq", *a.shape))
        fh.write(a.tobytes(order="C"))


def load_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a matrix dump")
        rows, cols = struct.unpack("<qq", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated matrix dump")
    return data.reshape(rows, cols).copy()


def dump_matrix_market(path, matrix) -> None:
    mmwrite(str(path), sparse.coo_matrix(matrix) if sparse.issparse(matrix) else np.asarray(matrix))
