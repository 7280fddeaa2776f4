"""Unsmoothed-aggregation AMG for the pressure operator.

Coarsening is greedy pairwise matching over strong connections; prolongation
is piecewise constant (one unit entry per row), so the Galerkin triple
product P^T A P collapses to summing fine entries into aggregate bins, which
is done with a deterministic lexsort/reduceat accumulation.  Cycles are V or
K (the K-cycle wraps each coarse recursion in two flexible Krylov steps);
the coarsest level is factored densely once at setup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .coloring import ColorPartition, strong_connections, vertices_grouping
from .smoothers import SmootherSpec, make_smoother
from .sparse import CsrMatrix, dot, norm2, spmv

__all__ = [
    "AggregationMap",
    "AmgParams",
    "AmgLevel",
    "AmgHierarchy",
    "pairwise_aggregate",
    "build_hierarchy",
    "amg_cycle",
    "hierarchy_summary",
]


@dataclass
class AggregationMap:
    aggregate_of: np.ndarray
    n_aggregates: int


@dataclass
class AmgParams:
    """Knobs for the pressure hierarchy.

    coarsest_size defaults to the desk-scale 200; production-scale runs of
    the kind the solver is meant for use 10000.  The aggregation strength
    theta_amg and the V(1,1) sweep counts are conventions, exposed here
    because no single canonical value exists.
    """

    coarsest_size: int = 200
    max_levels: int = 25
    theta_amg: float = 0.08
    smoother_theta: float = 0.0
    smoother_kind: str = "pgs-scm"
    pre_sweeps: int = 1
    post_sweeps: int = 1
    cycle: str = "k"
    krylov: str = "auto"  # auto | fcg | fgmres

    def __post_init__(self):
        if self.cycle not in ("v", "k"):
            raise ValueError(f"cycle must be 'v' or 'k', got {self.cycle!r}")
        if self.krylov not in ("auto", "fcg", "fgmres"):
            raise ValueError(f"unknown krylov selector {self.krylov!r}")


@dataclass
class AmgLevel:
    A: CsrMatrix
    partition: Optional[ColorPartition]
    smoother: object
    P: Optional[CsrMatrix] = None
    aggregates: Optional[np.ndarray] = None


@dataclass
class AmgHierarchy:
    levels: list[AmgLevel]
    coarsest_lu: tuple
    params: AmgParams
    symmetric: bool = False

    @property
    def fine_size(self) -> int:
        return self.levels[0].A.nrows


def pairwise_aggregate(A: CsrMatrix, theta_amg: float) -> AggregationMap:
    """Greedy pairwise matching: visit unaggregated vertices in ascending
    index, pair each with its unaggregated strong neighbour of largest
    |a_ij| + |a_ji| (ties to the lowest index); leftovers become singletons.
    """
    if A.nrows != A.ncols:
        raise ValueError("aggregation needs a square matrix")
    n = A.nrows
    S = strong_connections(A, theta_amg)
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(A.row_ptr))
    # symmetric weight |a_ij| + |a_ji| through a duplicate-summing build
    W = CsrMatrix.from_coo(np.concatenate([rows, A.col_idx]),
                           np.concatenate([A.col_idx, rows]),
                           np.concatenate([np.abs(A.values), np.abs(A.values)]),
                           (n, n), sum_duplicates=True)
    agg = np.full(n, -1, dtype=np.int64)
    na = 0
    for i in range(n):
        if agg[i] >= 0:
            continue
        cand = S.neighbors(i)
        cand = cand[agg[cand] < 0]
        if cand.size:
            wcols, wvals = W.row(i)
            pos = np.searchsorted(wcols, cand)
            weights = wvals[pos]
            j = int(cand[int(np.argmax(weights))])
            agg[j] = na
        agg[i] = na
        na += 1
    return AggregationMap(agg, na)


def _prolongation(agg: AggregationMap, n: int) -> CsrMatrix:
    return CsrMatrix(n, agg.n_aggregates, np.arange(n + 1, dtype=np.int64),
                     agg.aggregate_of.copy(), np.ones(n))


def _galerkin(A: CsrMatrix, agg: AggregationMap) -> CsrMatrix:
    """A_coarse[I, J] = sum of A_ij over aggregate pair (I, J)."""
    rows = np.repeat(np.arange(A.nrows, dtype=np.int64), np.diff(A.row_ptr))
    m = agg.aggregate_of
    return CsrMatrix.from_coo(m[rows], m[A.col_idx], A.values,
                              (agg.n_aggregates, agg.n_aggregates), sum_duplicates=True)


def _is_symmetric(A: CsrMatrix, tol: float = 1e-12) -> bool:
    At = A.transpose()
    if not (np.array_equal(A.row_ptr, At.row_ptr) and np.array_equal(A.col_idx, At.col_idx)):
        return False
    scale = np.abs(A.values).max(initial=0.0)
    return bool(np.abs(A.values - At.values).max(initial=0.0) <= tol * max(scale, 1.0))


def build_hierarchy(A_p: CsrMatrix, params: AmgParams | None = None) -> AmgHierarchy:
    """Aggregate / project until the coarsest target, a level cap, or a
    coarsening stall (ratio > 0.9); the coarsest operator is LU-factored
    densely and each smoothed level carries its own color partition."""
    params = params or AmgParams()
    if A_p.nrows != A_p.ncols:
        raise ValueError("hierarchy needs a square matrix")
    levels: list[AmgLevel] = []
    A_l = A_p
    sym = _is_symmetric(A_p)
    while True:
        at_bottom = (A_l.nrows <= params.coarsest_size
                     or len(levels) + 1 >= params.max_levels)
        if at_bottom:
            levels.append(AmgLevel(A_l, None, None))
            break
        agg = pairwise_aggregate(A_l, params.theta_amg)
        if agg.n_aggregates > 0.9 * A_l.nrows:  # coarsening stalled
            levels.append(AmgLevel(A_l, None, None))
            break
        partition = vertices_grouping(strong_connections(A_l, params.smoother_theta))
        spec = SmootherSpec(kind=params.smoother_kind, partition=partition
                            if params.smoother_kind == "pgs-scm" else None)
        smoother = make_smoother(A_l, spec)
        levels.append(AmgLevel(A_l, partition, smoother, P=_prolongation(agg, A_l.nrows),
                               aggregates=agg.aggregate_of))
        A_l = _galerkin(A_l, agg)
    try:
        lu = scipy.linalg.lu_factor(levels[-1].A.to_dense())
    except (ValueError, scipy.linalg.LinAlgError) as exc:
        raise RuntimeError(f"coarsest-level dense factorization failed: {exc}") from exc
    return AmgHierarchy(levels, lu, params, symmetric=sym)


def _fcg_steps(A: CsrMatrix, rhs: np.ndarray, precond, workers: int, steps: int = 2) -> np.ndarray:
    x = np.zeros_like(rhs)
    r = rhs.copy()
    dirs: list[tuple[np.ndarray, np.ndarray, float]] = []
    for _ in range(steps):
        if norm2(r) == 0.0:
            break
        z = precond(r)
        p = z
        for pj, apj, pap in dirs:
            p = p - (dot(z, apj) / pap) * pj
        ap = spmv(A, p, workers)
        pap = dot(p, ap)
        if pap <= 0.0 or not np.isfinite(pap):
            break
        alpha = dot(p, r) / pap
        x = x + alpha * p
        r = r - alpha * ap
        dirs.append((p, ap, pap))
    return x


def _fgmres_steps(A: CsrMatrix, rhs: np.ndarray, precond, workers: int, steps: int = 2) -> np.ndarray:
    beta = norm2(rhs)
    if beta == 0.0:
        return np.zeros_like(rhs)
    basis = [rhs / beta]
    zs = []
    H = np.zeros((steps + 1, steps))
    m_eff = steps
    for j in range(steps):
        z = precond(basis[j])
        zs.append(z)
        w = spmv(A, z, workers)
        for i in range(j + 1):
            H[i, j] = dot(w, basis[i])
            w = w - H[i, j] * basis[i]
        H[j + 1, j] = norm2(w)
        if H[j + 1, j] == 0.0:
            m_eff = j + 1
            break
        basis.append(w / H[j + 1, j])
    e1 = np.zeros(m_eff + 1)
    e1[0] = beta
    y, *_ = np.linalg.lstsq(H[:m_eff + 1, :m_eff], e1, rcond=None)
    x = np.zeros_like(rhs)
    for i in range(m_eff):
        x = x + y[i] * zs[i]
    return x


def amg_cycle(h: AmgHierarchy, r: np.ndarray, cycle: str | None = None,
              workers: int = 1) -> np.ndarray:
    """One multigrid cycle from a zero initial guess: z ~= A^{-1} r.

    V-cycle: pre-smooth, restrict, recurse once, prolong-correct,
    post-smooth.  K-cycle: the coarse recursion is wrapped in two flexible
    Krylov steps (CG form when the fine operator is symmetric, GMRES form
    otherwise) except directly above the coarsest level.
    """
    if r.shape != (h.fine_size,):
        raise ValueError(f"dimension mismatch: expected residual of length {h.fine_size}")
    cycle = cycle or h.params.cycle
    use_fcg = (h.params.krylov == "fcg"
               or (h.params.krylov == "auto" and h.symmetric))
    return _cycle_at(h, 0, np.asarray(r, dtype=np.float64), cycle, use_fcg, workers)


def _cycle_at(h: AmgHierarchy, l: int, r: np.ndarray, cycle: str, use_fcg: bool,
              workers: int) -> np.ndarray:
    lvl = h.levels[l]
    if l == len(h.levels) - 1:
        return scipy.linalg.lu_solve(h.coarsest_lu, r)
    params = h.params
    x = lvl.smoother.apply(r, np.zeros_like(r), workers=workers,
                           sweeps=params.pre_sweeps, direction="forward")
    resid = r - spmv(lvl.A, x, workers)
    rc = np.bincount(lvl.aggregates, weights=resid,
                     minlength=h.levels[l + 1].A.nrows)
    coarse_is_last = (l + 1 == len(h.levels) - 1)
    if cycle == "v" or coarse_is_last:
        ec = _cycle_at(h, l + 1, rc, cycle, use_fcg, workers)
    else:
        A_c = h.levels[l + 1].A
        precond = lambda s: _cycle_at(h, l + 1, s, cycle, use_fcg, workers)
        krylov = _fcg_steps if use_fcg else _fgmres_steps
        ec = krylov(A_c, rc, precond, workers)
    x = x + ec[lvl.aggregates]
    x = lvl.smoother.apply(r, x, workers=workers,
                           sweeps=params.post_sweeps, direction="backward")
    return x


def hierarchy_summary(h: AmgHierarchy) -> dict:
    """Level sizes and complexities for the harness JSON report."""
    sizes = [lvl.A.nrows for lvl in h.levels]
    nnzs = [lvl.A.nnz for lvl in h.levels]
    return {
        "levels": len(h.levels),
        "sizes": sizes,
        "nnz": nnzs,
        "colors": [lvl.partition.c if lvl.partition is not None else None
                   for lvl in h.levels],
        "operator_complexity": float(sum(nnzs)) / max(nnzs[0], 1),
        "grid_complexity": float(sum(sizes)) / max(sizes[0], 1),
        "cycle": h.params.cycle,
        "coarsest_size": sizes[-1],
        "symmetric": h.symmetric,
    }
