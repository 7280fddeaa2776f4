"""Two-stage CPR preconditioning with adaptive setup reuse, and restarted
right-preconditioned GMRES.

One application of the preconditioner B runs the pressure correction first
and the global block-ILU relaxation second, so the error propagation matrix
factorizes as (I - R A)(I - Pi B_P Pi^T A).  The adaptive-setup rule keeps
the previous B while the previous solve's iteration count stays at or below
the threshold mu and the system shape is unchanged; mu = 0 therefore rebuilds
every time (plain CPR-GMRES).

GMRES follows the restarted right-preconditioned formulation with modified
Gram-Schmidt and Givens rotations for the running least-squares residual;
convergence is always confirmed against the explicitly recomputed residual,
relative to the initial one.
"""

from __future__ import annotations

import time
from collections import namedtuple
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
import scipy.linalg

from .amg import AmgHierarchy, AmgParams, amg_cycle, build_hierarchy
from .ilu import BiluFactors, bilu0_factorize, bilu_apply
from .sparse import BlockCsrMatrix, CsrMatrix, dot, norm2, spmv

__all__ = [
    "PressureProjector",
    "CprPreconditioner",
    "AscprCache",
    "GmresParams",
    "GmresResult",
    "SolverConfig",
    "build_cpr",
    "apply_cpr",
    "ascpr_decide",
    "gmres_solve",
    "ascpr_gmres_sequence",
    "Decision",
    "SolveRecord",
    "SequenceResult",
    "fingerprint_of",
]


@dataclass
class GmresParams:
    m: int = 28
    max_restarts: int = 100
    tol: float = 1e-5

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("restart length m must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass
class SolverConfig:
    """Full solver configuration (the TOML/JSON `solver` block)."""

    theta: float = 0.0
    mu: int = 0
    m: int = 28
    tol: float = 1e-5
    max_restarts: int = 100
    cycle: str = "k"
    coarsest_size: int = 200
    sweeps: int = 1
    smoother_kind: str = "pgs-scm"
    workers: int = 1
    mu_counter: str = "inner"  # which iteration count feeds the reuse test
    theta_amg: float = 0.08
    max_levels: int = 25
    krylov: str = "auto"

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.mu_counter not in ("inner", "outer"):
            raise ValueError("mu_counter must be 'inner' or 'outer'")

    def gmres_params(self) -> GmresParams:
        return GmresParams(m=self.m, max_restarts=self.max_restarts, tol=self.tol)

    def amg_params(self) -> AmgParams:
        return AmgParams(coarsest_size=self.coarsest_size, max_levels=self.max_levels,
                         theta_amg=self.theta_amg, smoother_theta=self.theta,
                         smoother_kind=self.smoother_kind, pre_sweeps=self.sweeps,
                         post_sweeps=self.sweeps, cycle=self.cycle, krylov=self.krylov)

    def replace(self, **kw) -> "SolverConfig":
        d = self.to_dict()
        d.update(kw)
        return SolverConfig(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PressureProjector:
    """Selects the pressure unknown (block offset 0) of every cell."""

    pressure_indices: np.ndarray
    fine_size: int

    @property
    def pressure_size(self) -> int:
        return int(self.pressure_indices.shape[0])

    @classmethod
    def for_matrix(cls, A: CsrMatrix | BlockCsrMatrix) -> "PressureProjector":
        if isinstance(A, BlockCsrMatrix):
            b = A.block_size
            return cls(np.arange(A.nrows, dtype=np.int64) * b, A.nrows * b)
        return cls(np.arange(A.nrows, dtype=np.int64), A.nrows)

    def restrict(self, r: np.ndarray) -> np.ndarray:
        return r[self.pressure_indices]

    def prolong(self, zp: np.ndarray) -> np.ndarray:
        z = np.zeros(self.fine_size)
        z[self.pressure_indices] = zp
        return z


def fingerprint_of(A: CsrMatrix | BlockCsrMatrix) -> tuple[int, int]:
    """(scalar dimension, stored pattern size) -- the Remark-4.2 size check."""
    if isinstance(A, BlockCsrMatrix):
        return (A.nrows * A.block_size, A.nnz)
    return (A.nrows, A.nnz)


def pressure_matrix(A: CsrMatrix | BlockCsrMatrix) -> CsrMatrix:
    """A_PP = Pi^T A Pi: the (0, 0) scalar of every block."""
    if isinstance(A, BlockCsrMatrix):
        return CsrMatrix(A.nrows, A.ncols, A.row_ptr.copy(), A.col_idx.copy(),
                         A.values[:, 0, 0].copy())
    return A


@dataclass
class CprPreconditioner:
    projector: PressureProjector
    pressure_solver: AmgHierarchy
    relaxation: BiluFactors
    A: CsrMatrix | BlockCsrMatrix
    fingerprint: tuple[int, int]

    def apply(self, r: np.ndarray, workers: int = 1) -> np.ndarray:
        return apply_cpr(self, r, workers=workers)


def build_cpr(A: CsrMatrix | BlockCsrMatrix, config: SolverConfig | None = None) -> CprPreconditioner:
    """Assemble the two-stage preconditioner: AMG on the extracted pressure
    operator, block ILU(0) on the full matrix."""
    config = config or SolverConfig()
    proj = PressureProjector.for_matrix(A)
    hierarchy = build_hierarchy(pressure_matrix(A), config.amg_params())
    factors = bilu0_factorize(A)
    return CprPreconditioner(proj, hierarchy, factors, A, fingerprint_of(A))


def apply_cpr(B: CprPreconditioner, r: np.ndarray, workers: int = 1) -> np.ndarray:
    """z = B r with a zero initial guess: pressure correction, fresh residual,
    then the global relaxation."""
    if r.shape != (B.projector.fine_size,):
        raise ValueError(f"dimension mismatch: expected residual of length {B.projector.fine_size}")
    zp = amg_cycle(B.pressure_solver, B.projector.restrict(r), workers=workers)
    z1 = B.projector.prolong(zp)
    r2 = r - spmv(B.A, z1, workers)
    return z1 + bilu_apply(B.relaxation, r2, workers)


@dataclass
class AscprCache:
    mu: int
    prev_preconditioner: Optional[CprPreconditioner] = None
    prev_iters: Optional[int] = None
    setup_calls: int = 0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


Decision = namedtuple("Decision", ["reuse", "preconditioner"])


def ascpr_decide(cache: AscprCache, k: int, A: CsrMatrix | BlockCsrMatrix) -> Decision:
    """Reuse iff k > 1, a previous preconditioner exists, its solve took at
    most mu iterations, and the system shape is unchanged; otherwise rebuild.
    mu = 0 never reuses (the plain CPR-GMRES degeneration)."""
    if (k > 1 and cache.prev_preconditioner is not None
            and cache.prev_iters is not None and cache.prev_iters <= cache.mu
            and cache.prev_preconditioner.fingerprint == fingerprint_of(A)):
        return Decision(True, cache.prev_preconditioner)
    return Decision(False, None)


@dataclass
class GmresResult:
    x: np.ndarray
    outer: int          # restart-loop count (the algorithm's It)
    inner: int          # cumulative Arnoldi steps
    converged: bool
    rel_residual: float


def _solve_upper(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    if np.all(np.abs(np.diag(R)) > 0.0):
        return scipy.linalg.solve_triangular(R, g)
    y, *_ = np.linalg.lstsq(R, g, rcond=None)
    return y


def gmres_solve(A: CsrMatrix | BlockCsrMatrix, b: np.ndarray, x0: np.ndarray | None,
                B: CprPreconditioner | None, params: GmresParams | None = None,
                workers: int = 1) -> GmresResult:
    """Restarted right-preconditioned GMRES.

    The Givens-rotation residual estimate ends an Arnoldi cycle early, but
    convergence is only declared by the explicit test
    ||b - A x_m|| / ||r_0|| < tol against the *initial* residual.  An exact
    happy breakdown (h_{j+1,j} = 0) shrinks the restart length to the
    current cycle.  A non-finite residual raises FloatingPointError.
    """
    params = params or GmresParams()
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    b = np.asarray(b, dtype=np.float64)
    r = b - spmv(A, x, workers)
    beta0 = norm2(r)
    if not np.isfinite(beta0):
        raise FloatingPointError("non-finite initial residual in gmres_solve")
    if beta0 == 0.0:
        return GmresResult(x, 0, 0, True, 0.0)
    m = params.m
    inner_total = 0
    converged = False
    rel = 1.0
    outer = 0
    for outer in range(1, params.max_restarts + 1):
        beta = norm2(r)
        if beta == 0.0:
            converged = True
            break
        V = np.zeros((m + 1, n))
        V[0] = r / beta
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        j_used = 0
        shrink = None
        for j in range(m):
            z = V[j] if B is None else B.apply(V[j], workers=workers)
            w = spmv(A, z, workers)
            if not np.isfinite(w).all():
                raise FloatingPointError("non-finite Krylov vector in gmres_solve")
            for i in range(j + 1):  # modified Gram-Schmidt
                H[i, j] = dot(w, V[i])
                w = w - H[i, j] * V[i]
            H[j + 1, j] = norm2(w)
            j_used = j + 1
            inner_total += 1
            breakdown = H[j + 1, j] == 0.0
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):  # previous rotations
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            if breakdown:
                shrink = j + 1
                break
            if abs(g[j + 1]) < params.tol * beta0:
                break
        y = _solve_upper(H[:j_used, :j_used], g[:j_used])
        u = y @ V[:j_used]
        x_new = x + (u if B is None else B.apply(u, workers=workers))
        r_new = b - spmv(A, x_new, workers)
        if not np.isfinite(r_new).all():
            raise FloatingPointError("non-finite residual in gmres_solve (divergence)")
        x, r = x_new, r_new
        rel = norm2(r) / beta0
        if shrink is not None:
            m = shrink
        if rel < params.tol:
            converged = True
            break
    return GmresResult(x, outer, inner_total, converged, rel)


@dataclass
class SolveRecord:
    outer: int
    inner: int
    converged: bool
    rel_residual: float
    rebuilt: bool
    x: np.ndarray = field(repr=False, default=None)


@dataclass
class SequenceResult:
    records: list[SolveRecord]
    setup_calls: int
    setup_time: float
    solve_time: float

    @property
    def total_inner(self) -> int:
        return sum(r.inner for r in self.records)

    @property
    def total_outer(self) -> int:
        return sum(r.outer for r in self.records)

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)


def ascpr_gmres_sequence(systems, mu: int, config: SolverConfig | None = None,
                         keep_solutions: bool = True) -> SequenceResult:
    """Drive the adaptive-setup solver over an ordered Jacobian sequence.

    Each step consults the reuse rule, rebuilds when required (counted and
    timed as SETUP), solves with GMRES (timed as SOLVE), and feeds the chosen
    iteration counter forward for the next decision.
    """
    config = (config or SolverConfig()).replace(mu=mu)
    cache = AscprCache(mu=mu)
    records: list[SolveRecord] = []
    setup_time = 0.0
    solve_time = 0.0
    params = config.gmres_params()
    for k, (A, rhs) in enumerate(systems, start=1):
        decision = ascpr_decide(cache, k, A)
        if decision.reuse:
            B = decision.preconditioner
            rebuilt = False
        else:
            t0 = time.perf_counter()
            B = build_cpr(A, config)
            setup_time += time.perf_counter() - t0
            cache.setup_calls += 1
            rebuilt = True
        t0 = time.perf_counter()
        res = gmres_solve(A, rhs, None, B, params, workers=config.workers)
        solve_time += time.perf_counter() - t0
        cache.prev_preconditioner = B
        cache.prev_iters = res.inner if config.mu_counter == "inner" else res.outer
        records.append(SolveRecord(res.outer, res.inner, res.converged,
                                   res.rel_residual, rebuilt,
                                   res.x if keep_solutions else None))
    return SequenceResult(records, cache.setup_calls, setup_time, solve_time)
