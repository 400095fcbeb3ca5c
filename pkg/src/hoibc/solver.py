"""Linear solvers and the end-to-end scattering pipeline."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .assembly import (
    DenseKernel,
    KernelAssembler,
    PlaneWave,
    ReducedSystem,
    assemble_blocks,
    assemble_rhs,
    reduce_system,
    resolve_threads,
)
from .basis import BasisSet
from .coefficients import Z0, HoibcCoefficients
from .hmatrix import HKernel, HSettings, NearFieldPreconditioner, build_kernel_hmatrices
from .kernels import QuadSettings
from .mesh import TriangleMesh

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Solver failure; ``stage`` names the pipeline step."""

    def __init__(self, message: str, stage: str = "solve"):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class SingularMatrixError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


@dataclass(frozen=True)
class SolveSettings:
    mode: str = "auto"  # auto | dense-lu | gmres
    restart: int = 50
    max_iter: int = 1000
    tol: float = 1e-6
    preconditioner: str = "near-field-block-jacobi"  # or none
    dense_threshold: int = 1500
    hmatrix: bool = True
    precond_eta: float = 4.0  # admissibility used to pick each leaf's overlap

    def __post_init__(self):
        if self.mode not in ("auto", "dense-lu", "gmres"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if not 0 < self.tol < 1:
            raise ValueError("residual target must be in (0, 1)")
        if self.restart < 1 or self.max_iter < 1:
            raise ValueError("restart and max_iter must be >= 1")
        if self.preconditioner not in ("none", "near-field-block-jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.precond_eta <= 0:
            raise ValueError("precond_eta must be positive")

    def resolved_mode(self, n_edges: int) -> str:
        if self.mode != "auto":
            return self.mode
        return "dense-lu" if n_edges <= self.dense_threshold else "gmres"


# ---------------------------------------------------------------------------
# dense


class DenseFactorization:
    """LU factors with a pivot-size check; reusable for many right-hand sides."""

    def __init__(self, A: np.ndarray, pivot_tol: float = 1e-14):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SolverError("matrix must be square")
        if not np.all(np.isfinite(A)):
            raise SolverError("matrix has non-finite entries")
        self.A = A
        with warnings.catch_warnings():
            # singular input is reported below through the pivot check
            warnings.simplefilter("ignore", LinAlgWarning)
            self.lu = lu_factor(A, check_finite=False)
        piv = np.abs(np.diag(self.lu[0]))
        scale = np.abs(A).max() if A.size else 0.0
        if A.size and piv.min() < pivot_tol * scale:
            raise SingularMatrixError(f"numerically singular: smallest pivot {piv.min():.2e}")

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b)
        x = lu_solve(self.lu, b, check_finite=False)
        nb = np.linalg.norm(b)
        if nb > 0:
            res = np.linalg.norm(self.A @ x - b) / nb
            if res > 1e-10:
                log.warning("dense solve residual %.2e", res)
        return x


def dense_solve(A, b) -> np.ndarray:
    """Partial-pivoting LU solve."""
    return DenseFactorization(A).solve(b)


# ---------------------------------------------------------------------------
# GMRES


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False
    history: list = field(default_factory=list)


def gmres_solve(
    matvec: Callable,
    b,
    tol: float = 1e-6,
    restart: int = 50,
    max_iter: int = 1000,
    precond: Optional[Callable] = None,
    x0=None,
) -> GmresResult:
    """Restarted GMRES with right preconditioning.

    Solves ``A M^-1 y = b`` and returns ``x = M^-1 y``, so the monitored
    residual is the true residual of ``A x = b``. The reported residual is
    recomputed from scratch at the end.
    """
    b = np.asarray(b, dtype=complex)
    nb = np.linalg.norm(b)
    if nb == 0:
        raise SolverError("right-hand side is zero")
    M = precond if precond is not None else (lambda v: v)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    history = []
    total = 0
    breakdown = False
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    while total < max_iter:
        if beta / nb <= tol:
            break
        m = min(restart, max_iter - total)
        n = len(b)
        Vk = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        Vk[0] = r / beta
        steps = 0
        for j in range(m):
            w = matvec(M(Vk[j]))
            for i in range(j + 1):
                H[i, j] = np.vdot(Vk[i], w)
                w = w - H[i, j] * Vk[i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = np.conj(cs[i]) * H[i, j] + np.conj(sn[i]) * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            a, c = H[j, j], H[j + 1, j]
            den = np.sqrt(abs(a) ** 2 + abs(c) ** 2)
            if den == 0:
                breakdown = True
                break
            cs[j] = a / den
            sn[j] = c / den
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = np.conj(cs[j]) * g[j]
            steps = j + 1
            total += 1
            history.append(abs(g[j + 1]) / nb)
            if abs(g[j + 1]) / nb <= tol:
                break
            if abs(c) <= 1e-14 * den:
                # Krylov space is invariant: the current iterate is exact
                breakdown = abs(g[j + 1]) / nb > tol
                break
            Vk[j + 1] = w / c
        if steps:
            y = np.linalg.solve(np.triu(H[:steps, :steps]), g[:steps])
            x = x + M(Vk[:steps].T @ y)
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if breakdown or steps == 0:
            break
    res = float(np.linalg.norm(b - matvec(x)) / nb)
    converged = res <= 1.5 * tol
    return GmresResult(x, total, res, converged, breakdown, history)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class SolveResult:
    """Solution of one scattering problem.

    ``j`` and ``m`` are the normalized unknowns (``j = Z0 J``); ``J`` is in A/m
    and ``M`` in V/m.
    """

    j: np.ndarray
    m: np.ndarray
    Jt: np.ndarray
    Mt: np.ndarray
    lam_J: np.ndarray
    lam_M: np.ndarray
    iterations: int
    residual: float
    converged: bool
    mode: str
    timings: dict
    k: float
    wave: Optional[PlaneWave] = None
    info: dict = field(default_factory=dict)

    @property
    def J(self) -> np.ndarray:
        return self.j / Z0

    @property
    def M(self) -> np.ndarray:
        return self.m

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "relative_residual": self.residual,
            "converged": self.converged,
            "n_edges": int(len(self.j)),
            "timings_s": self.timings,
            **self.info,
        }

    def write(self, directory) -> None:
        """Write ``coefficients.csv`` (per-edge unknowns) and ``solve.json`` (statistics)."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        cols = {"J": self.J, "M": self.M, "Jt": self.Jt / Z0, "Mt": self.Mt, "lam_J": self.lam_J, "lam_M": self.lam_M}
        with open(d / "coefficients.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge"] + [f"{k}_{p}" for k in cols for p in ("re", "im")])
            for i in range(len(self.j)):
                w.writerow([i] + [f"{v:.17g}" for k in cols for v in (cols[k][i].real, cols[k][i].imag)])
        with open(d / "solve.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


class Scatterer:
    """Assembled and factorized (or compressed) operator for one mesh and frequency.

    ``solve`` may be called for many incident waves; the matrix work is
    done once.
    """

    def __init__(
        self,
        mesh: TriangleMesh,
        coefficients: HoibcCoefficients,
        k: float,
        settings: SolveSettings = SolveSettings(),
        quad: QuadSettings = QuadSettings(),
        hsettings: HSettings = HSettings(),
        threads: Optional[int] = None,
    ):
        self.mesh = mesh
        self.k = float(k)
        self.settings = settings
        self.threads = resolve_threads(threads)
        self.timings = {}
        self.info = {}
        t0 = time.perf_counter()
        try:
            self.basis = BasisSet(mesh)
            self.assembler = KernelAssembler(mesh, self.basis, k, quad, self.threads)
            self.mode = settings.resolved_mode(self.basis.n)
            blocks = assemble_blocks(mesh, self.basis, k, coefficients, quad, kernel=False)
            self.info["C_H"] = blocks.diagnostics["C_H"]
            use_h = self.mode == "gmres" and settings.hmatrix
            if not use_h:
                blocks.BS, blocks.Q = self.assembler.dense()
        except SolverError:
            raise
        except Exception as exc:
            raise SolverError(str(exc), "assembly") from exc
        self.blocks = blocks
        self.timings["assembly"] = time.perf_counter() - t0
        self.hbuild = None
        t1 = time.perf_counter()
        try:
            if use_h:
                self.hbuild = build_kernel_hmatrices(self.assembler, hsettings, self.threads)
                kernel = HKernel(self.hbuild)
                self.info["hmatrix"] = {"BS": self.hbuild.bs.stats(), "Q": self.hbuild.q.stats()}
            else:
                kernel = DenseKernel(blocks.BS, blocks.Q)
        except Exception as exc:
            raise SolverError(str(exc), "compression") from exc
        self.timings["compression"] = time.perf_counter() - t1
        n = self.basis.n
        self.reduced: ReducedSystem = reduce_system(blocks, np.zeros(2 * n), kernel)
        t2 = time.perf_counter()
        self.factor = None
        self.precond = None
        try:
            if self.mode == "dense-lu":
                self.factor = DenseFactorization(self.reduced.dense())
            elif settings.preconditioner == "near-field-block-jacobi":
                from .hmatrix import build_cluster_tree

                tree = self.hbuild.tree if self.hbuild else build_cluster_tree(mesh.topology.midpoint, hsettings.leaf_size)
                if self.hbuild is not None:
                    hb = self.hbuild

                    def kblock(r, c):
                        return hb.bs.submatrix(r, c), hb.q.submatrix(r, c)

                elif blocks.BS is not None:
                    BS, Q = blocks.BS, blocks.Q

                    def kblock(r, c):
                        return BS[np.ix_(r, c)], Q[np.ix_(r, c)]

                else:
                    kblock = self.assembler.block
                self.precond = NearFieldPreconditioner(self.reduced, tree, kblock, settings.precond_eta)
                self.info["preconditioner_entries"] = self.precond.size
        except SolverError:
            raise
        except Exception as exc:
            raise SolverError(str(exc), "factorization") from exc
        self.timings["factorization"] = time.perf_counter() - t2

    def rhs(self, wave: PlaneWave) -> np.ndarray:
        return assemble_rhs(self.mesh, self.basis, wave, self.blocks_order, full=False)

    @property
    def blocks_order(self) -> int:
        return self.assembler.settings.rhs_order

    def solve(self, wave: PlaneWave) -> SolveResult:
        if abs(wave.k - self.k) > 1e-12 * self.k:
            raise SolverError("wave and operator wavenumbers differ", "solve")
        b = self.rhs(wave)
        n = self.basis.n
        t = time.perf_counter()
        if self.mode == "dense-lu":
            x = self.factor.solve(b)
            A = self.factor.A
            res = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
            iters, conv = 1, True
        else:
            if np.linalg.norm(b) == 0:
                x = np.zeros_like(b)
                res, iters, conv = 0.0, 0, True
            else:
                s = self.settings
                g = gmres_solve(self.reduced.matvec, b, s.tol, s.restart, s.max_iter, self.precond)
                x, res, iters, conv = g.x, g.residual, g.iterations, g.converged
        elapsed = time.perf_counter() - t
        rec = self.reduced.recover(x)
        timings = dict(self.timings, solve=elapsed)
        return SolveResult(
            rec["J"], rec["M"], rec["Jt"], rec["Mt"], rec["lam_J"], rec["lam_M"],
            iters, res, conv, self.mode, timings, self.k, wave, dict(self.info),
        )


def solve_scattering(
    mesh: TriangleMesh,
    coefficients: HoibcCoefficients,
    wave: PlaneWave,
    settings: SolveSettings = SolveSettings(),
    quad: QuadSettings = QuadSettings(),
    hsettings: HSettings = HSettings(),
    threads: Optional[int] = None,
) -> SolveResult:
    """Assemble, reduce and solve for one incident wave."""
    return Scatterer(mesh, coefficients, wave.k, settings, quad, hsettings, threads).solve(wave)
