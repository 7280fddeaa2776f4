"""Strong-connection graph construction and greedy multi-color grouping.

An off-diagonal entry is a strong connection when its magnitude exceeds
``theta`` times the full absolute row sum (diagonal included).  Groups are
grown by repeated greedy independent-set extraction over the strong graph:
the highest-influence vertex wins, its strong neighbours are deferred to the
next round, and the "second circle" of neighbours-of-neighbours is promoted
into the candidate frontier.

Grouping runs single-threaded (the setup phase is sequential by nature); the
resulting partition is immutable and safe to share across workers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from ._kernels import segment_sums
from .parallel import chunk_ranges, run_chunks
from .sparse import BlockCsrMatrix, CsrMatrix

__all__ = [
    "StrongConnectionMatrix",
    "ColorPartition",
    "SplitState",
    "strong_connections",
    "vertices_splitting",
    "vertices_grouping",
    "verify_partition",
    "PartitionReport",
    "dump_partition",
    "load_partition",
]


@dataclass
class StrongConnectionMatrix:
    """Pattern-only CSR of the strong-connection graph; no self edges."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    theta: float

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @property
    def n_edges(self) -> int:
        return int(self.col_idx.shape[0])

    def symmetrized(self) -> "StrongConnectionMatrix":
        """Union with the transpose pattern (undirected strong graph)."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))
        rr = np.concatenate([rows, self.col_idx])
        cc = np.concatenate([self.col_idx, rows])
        order = np.lexsort((cc, rr))
        rr, cc = rr[order], cc[order]
        if rr.size:
            keep = np.concatenate(([True], (np.diff(rr) != 0) | (np.diff(cc) != 0)))
            rr, cc = rr[keep], cc[keep]
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(ptr[1:], rr, 1)
        np.cumsum(ptr, out=ptr)
        return StrongConnectionMatrix(self.n, ptr, cc, self.theta)

    def has_edge(self, i: int, j: int) -> bool:
        cols = self.neighbors(i)
        k = np.searchsorted(cols, j)
        return bool(k < cols.shape[0] and cols[k] == j)


def strong_connections(A: CsrMatrix | BlockCsrMatrix, theta: float,
                       workers: int = 1) -> StrongConnectionMatrix:
    """Build S(A, theta): S_ij = 1 iff |a_ij| > theta * sum_k |a_ik|, i != j.

    Block matrices are filtered through the scalar matrix of block Frobenius
    norms.  Rows are independent, so the computation chunks freely.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if isinstance(A, BlockCsrMatrix):
        A = A.frobenius()
    if A.nrows != A.ncols:
        raise ValueError("strong connections need a square matrix")
    n = A.nrows
    absvals = np.abs(A.values)
    row_sums = np.zeros(n)

    def sum_work(s, e):
        lo = int(A.row_ptr[s])
        segment_sums(absvals[lo:int(A.row_ptr[e])], A.row_ptr[s:e + 1] - lo,
                     out=row_sums[s:e])

    run_chunks(sum_work, chunk_ranges(n, workers))
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(A.row_ptr))
    strong = np.zeros(A.nnz, dtype=bool)

    def mask_work(s, e):
        lo, hi = int(A.row_ptr[s]), int(A.row_ptr[e])
        sl = slice(lo, hi)
        strong[sl] = (absvals[sl] > theta * row_sums[rows[sl]]) & (A.col_idx[sl] != rows[sl])

    run_chunks(mask_work, chunk_ranges(n, workers))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr[1:], rows[strong], 1)
    np.cumsum(ptr, out=ptr)
    return StrongConnectionMatrix(n, ptr, A.col_idx[strong].copy(), theta)


@dataclass
class ColorPartition:
    """Ordered disjoint vertex groups; colors are 1-based in vertex_color."""

    groups: list[np.ndarray]
    n: int
    vertex_color: np.ndarray

    @property
    def c(self) -> int:
        return len(self.groups)

    def perm(self) -> np.ndarray:
        """Concatenated color order (ascending inside each group)."""
        return np.concatenate(self.groups) if self.groups else np.zeros(0, dtype=np.int64)

    @classmethod
    def from_groups(cls, groups: list[np.ndarray], n: int) -> "ColorPartition":
        vertex_color = np.zeros(n, dtype=np.int64)
        for c, g in enumerate(groups, start=1):
            vertex_color[g] = c
        return cls([np.asarray(g, dtype=np.int64) for g in groups], n, vertex_color)


@dataclass
class SplitState:
    """Working sets for one splitting round.

    ``undetermined`` mirrors membership in V; ``deferred`` is this round's
    W-bar; the frontier heap holds (negative influence, vertex) candidates
    with stale entries filtered lazily at pop time.
    """

    n: int
    influence: np.ndarray
    undetermined: np.ndarray          # bool mask: still in V
    deferred: np.ndarray = field(default=None)      # bool mask: in W-bar this round
    in_frontier: np.ndarray = field(default=None)   # bool mask: in W-hat
    frontier_heap: list = field(default_factory=list)

    def __post_init__(self):
        if self.deferred is None:
            self.deferred = np.zeros(self.n, dtype=bool)
        if self.in_frontier is None:
            self.in_frontier = np.zeros(self.n, dtype=bool)

    @classmethod
    def for_vertices(cls, vertices: np.ndarray, influence: np.ndarray) -> "SplitState":
        n = influence.shape[0]
        und = np.zeros(n, dtype=bool)
        und[vertices] = True
        return cls(n=n, influence=influence, undetermined=und)


def vertices_splitting(state: SplitState, S: StrongConnectionMatrix):
    """One greedy round: extract an independent set W and the deferred set W-bar.

    Candidates come from the frontier when it is nonempty, otherwise from V;
    the highest influence |S_i| wins with ties broken by lowest index.  An
    accepted vertex removes its strong neighbours from V into W-bar and
    pushes its second circle onto the frontier.
    """
    influence = state.influence
    und = state.undetermined
    deferred = state.deferred
    in_frontier = state.in_frontier
    heap = state.frontier_heap

    # V candidates by (influence desc, index asc); lazily skipped when gone
    v_heap = [(-int(influence[v]), int(v)) for v in np.flatnonzero(und)]
    heapq.heapify(v_heap)
    in_w = np.zeros(state.n, dtype=bool)
    w_list: list[int] = []
    remaining = int(und.sum())

    while remaining > 0:
        v = -1
        while heap:
            _, cand = heapq.heappop(heap)
            if in_frontier[cand] and und[cand]:
                in_frontier[cand] = False
                v = cand
                break
            in_frontier[cand] = False
        if v < 0:
            while v_heap:
                _, cand = heapq.heappop(v_heap)
                if und[cand]:
                    v = cand
                    break
            if v < 0:
                break
        neigh = S.neighbors(v)
        if in_w[neigh].any():
            # strongly connected to the current W: defer
            deferred[v] = True
            und[v] = False
            remaining -= 1
            continue
        in_w[v] = True
        w_list.append(v)
        und[v] = False
        remaining -= 1
        live = neigh[und[neigh]]
        deferred[live] = True
        und[live] = False
        remaining -= live.shape[0]
        # second circle: strong neighbours of strong neighbours, minus
        # S_v and v itself, still undetermined
        for k in neigh:
            for j in S.neighbors(int(k)):
                j = int(j)
                if und[j] and not in_frontier[j] and j != v:
                    in_frontier[j] = True
                    heapq.heappush(heap, (-int(influence[j]), j))

    w = np.array(sorted(w_list), dtype=np.int64)
    w_bar = np.flatnonzero(deferred).astype(np.int64)
    return w, w_bar


def vertices_grouping(S: StrongConnectionMatrix) -> ColorPartition:
    """Repeated splitting rounds until every vertex is colored.

    The graph is symmetrized first (Eq.-style filtering of a nonsymmetric
    matrix can drop one direction of an edge); groups come out sorted
    ascending, which is also the in-color sweep order downstream.
    """
    Ssym = S.symmetrized()
    influence = Ssym.degrees()
    vertices = np.arange(Ssym.n, dtype=np.int64)
    groups: list[np.ndarray] = []
    while vertices.size:
        state = SplitState.for_vertices(vertices, influence)
        w, w_bar = vertices_splitting(state, Ssym)
        if w.size == 0:  # cannot happen: splitting always accepts >= 1 vertex
            raise RuntimeError("vertices_splitting returned an empty group")
        groups.append(w)
        vertices = w_bar
    return ColorPartition.from_groups(groups, Ssym.n)


@dataclass
class PartitionReport:
    checks: dict[str, bool]
    details: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        return [f"{'PASS' if v else 'FAIL'} {k}" + (f" ({self.details[k]})" if k in self.details else "")
                for k, v in self.checks.items()]


def verify_partition(A: CsrMatrix | BlockCsrMatrix, theta: float,
                     partition: ColorPartition) -> PartitionReport:
    """Audit a partition against the grouping contracts.

    Checks: (a) the groups cover every vertex, (b) they are pairwise
    disjoint, (c') no strong edge joins two vertices of one group, the color
    count is at most max strong degree + 1, and each group's principal
    submatrix has a diagonal strong pattern.  With theta = 0 the principal
    submatrix of A itself must be value-diagonal.
    """
    S = strong_connections(A, theta).symmetrized()
    checks: dict[str, bool] = {}
    details: dict[str, str] = {}
    n = S.n

    counts = np.zeros(n, dtype=np.int64)
    for g in partition.groups:
        np.add.at(counts, g, 1)
    checks["cover"] = bool((counts >= 1).all()) and partition.n == n
    checks["disjoint"] = bool((counts <= 1).all())

    ok_c = True
    color = partition.vertex_color
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(S.row_ptr))
    if S.n_edges:
        same = color[rows] == color[S.col_idx]
        ok_c = not bool(same.any())
        if not ok_c:
            k = int(np.flatnonzero(same)[0])
            details["independent_groups"] = f"strong edge ({rows[k]}, {S.col_idx[k]}) inside color {color[rows[k]]}"
    checks["independent_groups"] = ok_c

    bound = int(S.degrees().max(initial=0)) + 1
    checks["color_bound"] = partition.c <= bound
    details["color_bound"] = f"c={partition.c} bound={bound}"

    scalar = A.frobenius() if isinstance(A, BlockCsrMatrix) else A
    ok_blocks = True
    ok_theta0 = True
    for g in partition.groups:
        sub = scalar.submatrix(g)
        r = np.repeat(np.arange(sub.nrows, dtype=np.int64), np.diff(sub.row_ptr))
        offdiag = r != sub.col_idx
        if offdiag.any():
            # strong-pattern restriction of the group block must be diagonal
            gi, gj = g[r[offdiag]], g[sub.col_idx[offdiag]]
            if any(S.has_edge(int(a), int(b)) for a, b in zip(gi, gj)):
                ok_blocks = False
            if theta == 0.0 and np.any(sub.values[offdiag] != 0.0):
                ok_theta0 = False
    checks["group_strong_blocks_diagonal"] = ok_blocks
    if theta == 0.0:
        checks["theta0_group_value_diagonal"] = ok_theta0
    return PartitionReport(checks, details)


def dump_partition(partition: ColorPartition, fh) -> None:
    """One line per color: space-separated vertex indices."""
    for g in partition.groups:
        fh.write(" ".join(str(int(v)) for v in g) + "\n")


def load_partition(fh, n: int) -> ColorPartition:
    groups = []
    for line in fh:
        line = line.strip()
        if line:
            groups.append(np.array([int(tok) for tok in line.split()], dtype=np.int64))
    return ColorPartition.from_groups(groups, n)
