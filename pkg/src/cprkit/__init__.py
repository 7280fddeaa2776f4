"""cprkit: parallel CPR/ASCPR preconditioning with a multi-color GS smoother.

The package is organized around the solver stack:

- :mod:`cprkit.sparse` -- CSR / block-CSR storage and deterministic kernels
- :mod:`cprkit.mmio` -- MatrixMarket I/O
- :mod:`cprkit.coloring` -- strong-connection graph and vertex grouping
- :mod:`cprkit.smoothers` -- Gauss-Seidel sweep variants
- :mod:`cprkit.ilu` -- block ILU(0) with level-scheduled solves
- :mod:`cprkit.amg` -- unsmoothed-aggregation AMG for the pressure block
- :mod:`cprkit.cpr` -- two-stage preconditioner, adaptive setup, GMRES
- :mod:`cprkit.problems` / :mod:`cprkit.bench` / :mod:`cprkit.cli` -- harness
"""

from .sparse import BlockCsrMatrix, CsrMatrix, axpy, dot, norm2, spmv
from .coloring import ColorPartition, strong_connections, vertices_grouping, verify_partition
from .cpr import (
    AscprCache,
    GmresParams,
    SolverConfig,
    apply_cpr,
    ascpr_decide,
    ascpr_gmres_sequence,
    build_cpr,
    gmres_solve,
)
from .bench import BenchConfig, RunReport, run_benchmark
from .problems import ProblemSequence, generate_blackoil_like_sequence

__all__ = [
    "BlockCsrMatrix",
    "CsrMatrix",
    "axpy",
    "dot",
    "norm2",
    "spmv",
    "ColorPartition",
    "strong_connections",
    "vertices_grouping",
    "verify_partition",
    "AscprCache",
    "GmresParams",
    "SolverConfig",
    "apply_cpr",
    "ascpr_decide",
    "ascpr_gmres_sequence",
    "build_cpr",
    "gmres_solve",
    "BenchConfig",
    "RunReport",
    "run_benchmark",
    "ProblemSequence",
    "generate_blackoil_like_sequence",
]
