"""Command-line front end: generate / solve / bench / verify.

Exit codes: 0 success, 1 solver or property-check failure, 2 bad input
(argparse uses 2 for usage errors already).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .amg import AmgParams, build_hierarchy
from .bench import BenchConfig, run_benchmark, write_report_csv, write_report_json
from .coloring import dump_partition, strong_connections, verify_partition, vertices_grouping
from .cpr import SolverConfig, build_cpr, gmres_solve
from .ilu import bilu0_factorize, bilu_apply
from .mmio import MatrixMarketError, read_block_matrix_market, read_matrix_market, read_vector
from .problems import generate_blackoil_like_sequence, save_sequence
from .smoothers import gs_sweep, pgs_scm_sweep
from .sparse import BlockCsrMatrix


def _read_any_matrix(path):
    """Read scalar or block MatrixMarket (block when the sidecar is present)."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("%") and "block_size:" in line:
                return read_block_matrix_market(path)
            if not line.startswith("%"):
                break
    return read_matrix_market(path)


def _parse_list(text, cast):
    return [cast(tok) for tok in str(text).split(",") if tok != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cprkit",
                                     description="CPR/ASCPR sparse solver benchmark kit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic problem sequence to disk")
    g.add_argument("--nx", type=int, default=16)
    g.add_argument("--ny", type=int, default=16)
    g.add_argument("--nz", type=int, default=2)
    g.add_argument("--nsteps", type=int, default=5)
    g.add_argument("--drift", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("solve", help="solve one system from a MatrixMarket file")
    s.add_argument("--matrix", required=True)
    s.add_argument("--rhs", help="MatrixMarket array vector (defaults to ones)")
    s.add_argument("--config", help="TOML/JSON benchmark config supplying the solver block")
    s.add_argument("--theta", type=float)
    s.add_argument("--mu", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--tol", type=float)

    b = sub.add_parser("bench", help="run the (theta, mu, workers) benchmark grid")
    b.add_argument("--config", required=True, help="TOML or JSON config file")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int)
    b.add_argument("--theta", help="comma list overriding the theta grid")
    b.add_argument("--mu", help="comma list overriding the mu grid")
    b.add_argument("--workers", help="comma list overriding the worker grid")

    v = sub.add_parser("verify", help="run coloring/smoother/ILU/AMG property checks")
    v.add_argument("--matrix", required=True)
    v.add_argument("--theta", type=float, default=0.0)
    v.add_argument("--out", help="directory for the partition dump")
    return parser


def cmd_generate(args) -> int:
    seq = generate_blackoil_like_sequence(args.nx, args.ny, args.nz,
                                          args.nsteps, args.drift, args.seed)
    manifest = save_sequence(seq, args.out)
    print(f"wrote {len(seq)} systems; manifest at {manifest}")
    return 0


def _solver_config_from(args) -> SolverConfig:
    cfg = SolverConfig()
    if getattr(args, "config", None):
        cfg = BenchConfig.from_file(args.config).solver
    overrides = {}
    for name in ("theta", "mu", "workers", "tol"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return cfg.replace(**overrides) if overrides else cfg


def cmd_solve(args) -> int:
    A = _read_any_matrix(args.matrix)
    n = A.nrows * (A.block_size if isinstance(A, BlockCsrMatrix) else 1)
    rhs = read_vector(args.rhs) if args.rhs else np.ones(n)
    if rhs.shape != (n,):
        raise MatrixMarketError(f"{args.rhs}: rhs length {rhs.shape[0]} does not match system size {n}")
    cfg = _solver_config_from(args)
    t0 = time.perf_counter()
    B = build_cpr(A, cfg)
    setup_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = gmres_solve(A, rhs, None, B, cfg.gmres_params(), workers=cfg.workers)
    solve_s = time.perf_counter() - t0
    print(json.dumps({
        "n": n, "converged": res.converged, "outer_restarts": res.outer,
        "inner_iterations": res.inner, "rel_residual": res.rel_residual,
        "setup_time_s": setup_s, "solve_time_s": solve_s,
    }, indent=2))
    return 0 if res.converged else 1


def cmd_bench(args) -> int:
    config = BenchConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.theta:
        config.thetas = _parse_list(args.theta, float)
    if args.mu:
        config.mus = _parse_list(args.mu, int)
    if args.workers:
        config.workers = _parse_list(args.workers, int)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_benchmark(config, progress=lambda row: print(
        f"theta={row.theta} mu={row.mu} workers={row.workers} "
        f"setup_calls={row.setup_calls} iter={row.iter} time={row.time_s:.3f}s"))
    write_report_csv(report, out / "report.csv")
    write_report_json(report, out / "report.json")
    if "hierarchy" in report.details:
        (out / "hierarchy.json").write_text(
            json.dumps(report.details["hierarchy"], indent=2) + "\n")
    print(f"report written to {out}")
    if report.failures:
        print(f"{len(report.failures)} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    A = _read_any_matrix(args.matrix)
    theta = args.theta
    rng = np.random.default_rng(0)
    checks: list[tuple[str, bool, str]] = []

    S = strong_connections(A, theta)
    part = vertices_grouping(S)
    report = verify_partition(A, theta, part)
    for name, ok in report.checks.items():
        checks.append((f"partition.{name}", ok, report.details.get(name, "")))

    n = A.nrows * (A.block_size if isinstance(A, BlockCsrMatrix) else 1)
    x0 = rng.standard_normal(n)
    rhs = rng.standard_normal(n)
    try:
        sweeps = [pgs_scm_sweep(A, rhs, x0, part, workers=w) for w in (1, 2, 8)]
        checks.append(("smoother.worker_invariance",
                       all(np.array_equal(sweeps[0], s) for s in sweeps[1:]), ""))
        if theta == 0.0:
            perm = part.perm()
            bsz = A.block_size if isinstance(A, BlockCsrMatrix) else 1
            perm_s = (perm[:, None] * bsz + np.arange(bsz)).reshape(-1)
            ref = np.empty(n)
            ref[perm_s] = gs_sweep(A.permuted(perm), rhs[perm_s], x0[perm_s])
            checks.append(("smoother.permuted_gs_equivalence",
                           np.array_equal(sweeps[0], ref), ""))
    except np.linalg.LinAlgError as exc:
        checks.append(("smoother.sweeps", False, str(exc)))

    try:
        F = bilu0_factorize(A)
        S_exp = A.expanded() if isinstance(A, BlockCsrMatrix) else A
        P = F.L.to_dense() @ F.U.to_dense()
        rows = np.repeat(np.arange(S_exp.nrows, dtype=np.int64), np.diff(S_exp.row_ptr))
        diff = np.abs(P[rows, S_exp.col_idx] - S_exp.values).max(initial=0.0)
        scale = max(1.0, float(np.abs(S_exp.values).max(initial=0.0)))
        checks.append(("ilu.pattern_reconstruction", diff <= 1e-12 * scale, f"max diff {diff:.2e}"))
        seq = bilu_apply(F, rhs, sequential=True)
        par = all(np.array_equal(bilu_apply(F, rhs, workers=w), seq) for w in (1, 2, 8))
        checks.append(("ilu.level_solve_bitwise", par, ""))
    except (np.linalg.LinAlgError, ValueError) as exc:
        checks.append(("ilu.factorize", False, str(exc)))

    try:
        from .cpr import pressure_matrix
        h = build_hierarchy(pressure_matrix(A), AmgParams(smoother_theta=theta))
        ok = True
        for lvl, nxt in zip(h.levels, h.levels[1:]):
            Pd = lvl.P.to_dense()
            oracle = Pd.T @ lvl.A.to_dense() @ Pd
            stored = nxt.A.to_dense()
            if np.abs(stored - oracle).max() > 1e-13 * max(1.0, np.abs(stored).max()):
                ok = False
        checks.append(("amg.galerkin_identity", ok, f"{len(h.levels)} levels"))
    except (RuntimeError, ValueError) as exc:
        checks.append(("amg.build", False, str(exc)))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "partition.txt", "w") as fh:
            dump_partition(part, fh)

    failed = 0
    for name, ok, detail in checks:
        suffix = f" ({detail})" if detail else ""
        print(f"{'PASS' if ok else 'FAIL'} {name}{suffix}")
        failed += 0 if ok else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_verify(args)
    except (MatrixMarketError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    console_main()
