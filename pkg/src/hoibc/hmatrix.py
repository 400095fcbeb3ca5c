"""Hierarchical matrices for the kernel blocks: cluster tree, block partition, ACA.

Matrix indices are RWG edges; clusters are built over edge midpoints. Each
admissible block is compressed with partially pivoted adaptive cross
approximation; the remaining near-field blocks are stored densely.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

log = logging.getLogger(__name__)


@dataclass
class Cluster:
    """Contiguous range ``[start, stop)`` of the tree ordering plus its bounding box."""

    start: int
    stop: int
    lo: np.ndarray
    hi: np.ndarray
    level: int
    children: List["Cluster"] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass
class ClusterTree:
    root: Cluster
    perm: np.ndarray  # tree position -> original index
    leaf_size: int

    def indices(self, c: Cluster) -> np.ndarray:
        return self.perm[c.start : c.stop]

    def leaves(self) -> List[Cluster]:
        out, stack = [], [self.root]
        while stack:
            c = stack.pop()
            if c.is_leaf:
                out.append(c)
            else:
                stack.extend(reversed(c.children))
        return sorted(out, key=lambda c: c.start)

    def depth(self) -> int:
        def d(c):
            return 1 + max((d(ch) for ch in c.children), default=0)

        return d(self.root)


def build_cluster_tree(points, leaf_size: int = 32) -> ClusterTree:
    """Median bisection along the longest bounding-box axis."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 1:
        raise ValueError("need at least one point")
    if leaf_size < 1:
        raise ValueError("leaf size must be >= 1")
    perm = np.arange(len(pts))

    def build(start, stop, level):
        idx = perm[start:stop]
        sub = pts[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        node = Cluster(start, stop, lo, hi, level)
        if stop - start > leaf_size:
            axis = int(np.argmax(hi - lo))
            order = np.argsort(sub[:, axis], kind="stable")
            perm[start:stop] = idx[order]
            mid = start + (stop - start) // 2
            node.children = [build(start, mid, level + 1), build(mid, stop, level + 1)]
        return node

    root = build(0, len(pts), 0)
    return ClusterTree(root, perm, leaf_size)


def box_distance(a: Cluster, b: Cluster) -> float:
    gap = np.maximum(0.0, np.maximum(a.lo - b.hi, b.lo - a.hi))
    return float(np.linalg.norm(gap))


def admissible(a: Cluster, b: Cluster, eta: float) -> bool:
    dist = box_distance(a, b)
    return dist > 0 and min(a.diameter, b.diameter) <= eta * dist


@dataclass
class Block:
    rows: Cluster
    cols: Cluster
    admissible: bool


def partition_blocks(tree: ClusterTree, eta: float = 2.0) -> List[Block]:
    """Recursive block partition; leaf-level inadmissible blocks stay dense."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    out: List[Block] = []

    def rec(s: Cluster, t: Cluster):
        if admissible(s, t, eta):
            out.append(Block(s, t, True))
        elif s.is_leaf and t.is_leaf:
            out.append(Block(s, t, False))
        elif s.is_leaf:
            for ct in t.children:
                rec(s, ct)
        elif t.is_leaf:
            for cs in s.children:
                rec(cs, t)
        else:
            for cs in s.children:
                for ct in t.children:
                    rec(cs, ct)

    rec(tree.root, tree.root)
    return out


@dataclass
class LowRankFactor:
    """``A ~ U @ V`` with ``U`` (m, r) and ``V`` (r, n)."""

    U: np.ndarray
    V: np.ndarray
    residual: float
    converged: bool

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def to_dense(self) -> np.ndarray:
        return self.U @ self.V


def aca_compress(
    row: Callable[[int], np.ndarray],
    col: Callable[[int], np.ndarray],
    m: int,
    n: int,
    eps: float = 1e-4,
    max_rank: Optional[int] = None,
) -> LowRankFactor:
    """Partially pivoted adaptive cross approximation.

    ``row(i)`` and ``col(j)`` return full rows/columns of the block. Stops when
    ``|u_r| |v_r| <= eps * |S_r|_F`` (Frobenius norm of the running
    approximation, updated incrementally).
    """
    max_rank = min(m, n) if max_rank is None else min(max_rank, m, n)
    us: List[np.ndarray] = []
    vs: List[np.ndarray] = []
    norm2 = 0.0
    used = np.zeros(m, dtype=bool)
    i = 0
    residual = 0.0
    converged = False
    while len(us) < max_rank:
        used[i] = True
        r = np.array(row(i), dtype=complex)
        for u, v in zip(us, vs):
            r -= u[i] * v
        j = int(np.argmax(np.abs(r)))
        if abs(r[j]) <= 1e-300 or abs(r[j]) <= 1e-15 * math.sqrt(norm2):
            # exhausted row: try another one
            if used.all():
                converged = True
                break
            i = int(np.argmin(used))
            continue
        v = r / r[j]
        c = np.array(col(j), dtype=complex)
        for u, vv in zip(us, vs):
            c -= vv[j] * u
        nu, nv = np.linalg.norm(c), np.linalg.norm(v)
        cross = 0.0
        for u, vv in zip(us, vs):
            cross += 2.0 * ((np.vdot(u, c)) * (np.vdot(v, vv))).real
        norm2 = max(norm2 + cross + (nu * nv) ** 2, 0.0)
        us.append(c)
        vs.append(v)
        residual = nu * nv / math.sqrt(norm2) if norm2 > 0 else 0.0
        if nu * nv <= eps * math.sqrt(norm2):
            converged = True
            break
        cand = np.abs(c)
        cand[used] = -1.0
        if np.all(cand < 0):
            converged = True
            break
        i = int(np.argmax(cand))
    else:
        converged = converged or len(us) == min(m, n)
    U = np.array(us).T if us else np.zeros((m, 0), dtype=complex)
    V = np.array(vs) if vs else np.zeros((0, n), dtype=complex)
    return LowRankFactor(U.reshape(m, -1), V.reshape(-1, n), float(residual), bool(converged))


def recompress(f: LowRankFactor, eps: float) -> LowRankFactor:
    """Truncated SVD of ``U V`` through QR factors of both sides."""
    if f.rank == 0:
        return f
    qu, ru = np.linalg.qr(f.U)
    qv, rv = np.linalg.qr(f.V.T)
    w, s, zh = np.linalg.svd(ru @ rv.T)
    tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
    r = int(np.sum(tail > eps * tail[0])) if tail[0] > 0 else 0
    U = qu @ (w[:, :r] * s[:r])
    V = zh[:r] @ qv.T
    return LowRankFactor(U, V, f.residual, f.converged)


@dataclass
class HSettings:
    eps: float = 1e-4
    eta: float = 2.0
    leaf_size: int = 32
    max_rank: Optional[int] = None
    recompress: bool = False


class HMatrix:
    """Block storage of one N x N matrix over a cluster tree."""

    def __init__(self, tree: ClusterTree, blocks: List[Block], data: list, n: int):
        self.tree = tree
        self.blocks = blocks
        self.data = data  # LowRankFactor or ndarray per block
        self.n = n
        self._rows = [tree.indices(b.rows) for b in blocks]
        self._cols = [tree.indices(b.cols) for b in blocks]

    def _check(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: operator is {self.n}, vector is {x.shape[0]}")
        return x

    def matvec(self, x) -> np.ndarray:
        x = self._check(x)
        y = np.zeros(self.n, dtype=complex)
        for r, c, d in zip(self._rows, self._cols, self.data):
            if isinstance(d, LowRankFactor):
                if d.rank:
                    y[r] += d.U @ (d.V @ x[c])
            else:
                y[r] += d @ x[c]
        return y

    def rmatvec(self, x) -> np.ndarray:
        """Product with the (unconjugated) transpose."""
        x = self._check(x)
        y = np.zeros(self.n, dtype=complex)
        for r, c, d in zip(self._rows, self._cols, self.data):
            if isinstance(d, LowRankFactor):
                if d.rank:
                    y[c] += d.V.T @ (d.U.T @ x[r])
            else:
                y[c] += d.T @ x[r]
        return y

    def submatrix(self, rows, cols) -> np.ndarray:
        """Entries ``A[rows][:, cols]`` (original indices) rebuilt from the stored blocks."""
        rows, cols = np.asarray(rows), np.asarray(cols)
        inv = np.empty(self.n, dtype=int)
        inv[self.tree.perm] = np.arange(self.n)
        rp, cp = inv[rows], inv[cols]
        out = np.zeros((rows.size, cols.size), dtype=complex)
        for b, d in zip(self.blocks, self.data):
            ri = np.nonzero((rp >= b.rows.start) & (rp < b.rows.stop))[0]
            if ri.size == 0:
                continue
            ci = np.nonzero((cp >= b.cols.start) & (cp < b.cols.stop))[0]
            if ci.size == 0:
                continue
            lr, lc = rp[ri] - b.rows.start, cp[ci] - b.cols.start
            if isinstance(d, LowRankFactor):
                if d.rank:
                    out[np.ix_(ri, ci)] = d.U[lr] @ d.V[:, lc]
            else:
                out[np.ix_(ri, ci)] = d[np.ix_(lr, lc)]
        return out

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=complex)
        for r, c, d in zip(self._rows, self._cols, self.data):
            out[np.ix_(r, c)] = d.to_dense() if isinstance(d, LowRankFactor) else d
        return out

    @property
    def storage(self) -> int:
        s = 0
        for b, d in zip(self.blocks, self.data):
            if isinstance(d, LowRankFactor):
                s += d.rank * (b.rows.size + b.cols.size)
            else:
                s += b.rows.size * b.cols.size
        return s

    @property
    def compression_ratio(self) -> float:
        return self.storage / float(self.n * self.n)

    def stats(self) -> dict:
        ranks = [d.rank for d in self.data if isinstance(d, LowRankFactor)]
        return {
            "n": self.n,
            "blocks": len(self.blocks),
            "admissible_blocks": int(sum(b.admissible for b in self.blocks)),
            "dense_blocks": int(sum(not b.admissible for b in self.blocks)),
            "low_rank_blocks": len(ranks),
            # admissible blocks stored dense because ACA gave no saving
            "dense_fallback_blocks": int(sum(b.admissible for b in self.blocks)) - len(ranks),
            "max_rank": int(max(ranks, default=0)),
            "mean_rank": float(np.mean(ranks)) if ranks else 0.0,
            "storage_entries": int(self.storage),
            "compression_ratio": float(self.compression_ratio),
        }


def partition_rows(tree: ClusterTree, blocks: List[Block], data=None):
    """Rows of the partition dump: tree-order ranges, admissibility and rank."""
    rows = []
    for i, b in enumerate(blocks):
        d = None if data is None else data[i]
        rank = d.rank if isinstance(d, LowRankFactor) else (min(b.rows.size, b.cols.size) if d is not None else "")
        rows.append(
            {
                "row_start": b.rows.start,
                "row_stop": b.rows.stop,
                "col_start": b.cols.start,
                "col_stop": b.cols.stop,
                "admissible": int(b.admissible),
                "rank": rank,
            }
        )
    return rows


def write_partition_csv(path, tree: ClusterTree, blocks: List[Block], data=None) -> None:
    rows = partition_rows(tree, blocks, data)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["row_start", "row_stop", "col_start", "col_stop", "admissible", "rank"])
        w.writeheader()
        w.writerows(rows)


@dataclass
class HKernelBuild:
    bs: HMatrix
    q: HMatrix
    tree: ClusterTree
    blocks: List[Block]
    flagged: int


def _compress_block(row, col, m: int, n: int, settings: HSettings):
    """ACA of one admissible block; ``None`` when a dense block is cheaper or required."""
    limit = min(m, n) if settings.max_rank is None else settings.max_rank
    # factors with rank above this use more memory than the dense block
    useful = (m * n) // (m + n)
    f = aca_compress(row, col, m, n, settings.eps, min(limit, useful + 1))
    if f.converged and settings.recompress:
        f = recompress(f, settings.eps)
    if not f.converged or f.rank > useful:
        return None
    return f


def build_hmatrix(
    tree: ClusterTree,
    entries: Callable[[np.ndarray, np.ndarray], np.ndarray],
    settings: HSettings = HSettings(),
    blocks: Optional[List[Block]] = None,
) -> HMatrix:
    """H-matrix of a generic operator given ``entries(rows, cols) -> ndarray``.

    Indices passed to ``entries`` are original (not tree-ordered) indices.
    """
    blocks = partition_blocks(tree, settings.eta) if blocks is None else blocks
    n = tree.perm.size
    data = []
    for b in blocks:
        r, c = tree.indices(b.rows), tree.indices(b.cols)
        f = None
        if b.admissible:
            f = _compress_block(lambda i: entries(r[i : i + 1], c)[0], lambda j: entries(r, c[j : j + 1])[:, 0], r.size, c.size, settings)
        data.append(f if f is not None else np.asarray(entries(r, c), dtype=complex))
    return HMatrix(tree, blocks, data, n)


def build_kernel_hmatrices(assembler, settings: HSettings = HSettings(), threads: Optional[int] = None) -> HKernelBuild:
    """Compress ``BS`` and ``Q`` of a ``KernelAssembler`` block by block.

    Each admissible block is sampled through one ``BlockSampler`` shared by
    the two ACA runs. A factorization that fails to reach the tolerance, or
    that would need more storage than the block itself, is replaced by the
    dense block.
    """
    topo = assembler.mesh.topology
    n = topo.n_edges
    tree = build_cluster_tree(topo.midpoint, settings.leaf_size)
    blocks = partition_blocks(tree, settings.eta)
    threads = threads or assembler.threads

    def work(b: Block):
        r = tree.indices(b.rows)
        c = tree.indices(b.cols)
        if not b.admissible:
            bs, q = assembler.block(r, c)
            return bs, q, 0
        smp = assembler.sampler(r, c)
        out = [
            _compress_block(lambda i: smp.row(i)[w], lambda j: smp.col(j)[w], len(r), len(c), settings)
            for w in (0, 1)
        ]
        flagged = sum(f is None for f in out)
        if flagged:
            dense = assembler.block(r, c)
            out = [dense[w] if f is None else f for w, f in enumerate(out)]
        return out[0], out[1], flagged

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(work, blocks))
    bs = HMatrix(tree, blocks, [x[0] for x in results], n)
    q = HMatrix(tree, blocks, [x[1] for x in results], n)
    flagged = sum(x[2] for x in results)
    if flagged:
        log.info("%d admissible factors stored densely (tolerance not reached within the useful rank)", flagged)
    return HKernelBuild(bs, q, tree, blocks, flagged)


class HKernel:
    """Kernel-block operator backed by H-matrices (drop-in for the dense one)."""

    def __init__(self, build: HKernelBuild):
        self.build = build

    def bs(self, v):
        return self.build.bs.matvec(v)

    def q(self, v):
        return self.build.q.matvec(v)

    def qt(self, v):
        return self.build.q.rmatvec(v)


class NearFieldPreconditioner:
    """Overlapping block-Jacobi inverse of the reduced operator.

    Each leaf cluster is extended by the clusters it meets in inadmissible
    blocks. The (J, M) system on the extended set is factored and only the
    rows of the leaf itself are kept (restricted additive Schwarz). Plain
    leaf-diagonal blocks were found to slow GMRES down on this operator.

    ``kernel_block(rows, cols)`` returns the ``(BS, Q)`` sub-blocks.
    """

    def __init__(self, reduced, tree: ClusterTree, kernel_block: Callable, eta: float = 4.0, blocks=None):
        n = reduced.n
        self.n = n
        self.parts = []
        local = reduced.local.tocsr()
        blocks = partition_blocks(tree, eta) if blocks is None else blocks
        near = {}
        for b in blocks:
            if not b.admissible:
                near.setdefault(id(b.rows), []).append(tree.indices(b.cols))
        for leaf in tree.leaves():
            own = tree.indices(leaf)
            ext = np.unique(np.concatenate([own] + near.get(id(leaf), [])))
            bs, q = kernel_block(ext, ext)
            both = np.concatenate([ext, ext + n])
            A = np.block([[bs, q], [-q.T, bs]]) + local[both][:, both].toarray()
            pos = np.searchsorted(ext, own)
            keep = np.concatenate([pos, pos + ext.size])
            self.parts.append((both, lu_factor(A), keep, np.concatenate([own, own + n])))

    @property
    def size(self) -> int:
        """Stored LU entries (for reporting)."""
        return int(sum(p[0].size ** 2 for p in self.parts))

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        y = np.zeros_like(x)
        for both, lu, keep, dest in self.parts:
            y[dest] = lu_solve(lu, x[both])[keep]
        return y
