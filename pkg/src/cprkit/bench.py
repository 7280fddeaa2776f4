"""Benchmark orchestration over (theta, mu, workers) grids.

Each grid cell runs the adaptive-setup solver over the whole problem
sequence with wall time split into SETUP (preconditioner builds) and SOLVE
(everything else in the solver).  Speedup compares against the same-theta,
same-mu single-worker cell; the starred variant compares against the
theta-matched mu=0 single-worker cell, so it prices the adaptive setup and
the parallelism together.  Cells run strictly one at a time so timings never
interleave.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from .amg import hierarchy_summary
from .cpr import SolverConfig, ascpr_gmres_sequence, build_cpr
from .problems import generate_blackoil_like_sequence, load_sequence

__all__ = ["BenchConfig", "BenchRow", "RunReport", "run_benchmark",
           "write_report_csv", "read_report_csv", "write_report_json"]

CSV_SCHEMA = 1
CSV_COLUMNS = ["theta", "mu", "workers", "setup_calls", "setup_ratio", "iter",
               "time_s", "speedup", "speedup_star"]


@dataclass
class BenchConfig:
    nx: int = 16
    ny: int = 16
    nz: int = 2
    nsteps: int = 5
    drift: float = 0.01
    seed: int = 0
    thetas: list = field(default_factory=lambda: [0.0])
    mus: list = field(default_factory=lambda: [0])
    workers: list = field(default_factory=lambda: [1])
    manifest: str | None = None  # load systems from disk instead of generating
    solver: SolverConfig = field(default_factory=SolverConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        solver = SolverConfig.from_dict(d.pop("solver", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown bench config keys: {sorted(unknown)}")
        return cls(solver=solver, **d)

    @classmethod
    def from_file(cls, path) -> "BenchConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return cls.from_dict(json.loads(text))
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return cls.from_dict(tomllib.loads(text))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "solver"}
        d["solver"] = self.solver.to_dict()
        return d


@dataclass
class BenchRow:
    theta: float
    mu: int
    workers: int
    setup_calls: int
    setup_ratio: float
    iter: int
    time_s: float
    speedup: float | None = None
    speedup_star: float | None = None

    def as_record(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


@dataclass
class RunReport:
    rows: list[BenchRow]
    failures: list[dict] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def find(self, theta, mu, workers) -> BenchRow | None:
        for r in self.rows:
            if r.theta == theta and r.mu == mu and r.workers == workers:
                return r
        return None


def run_benchmark(config: BenchConfig, progress=None) -> RunReport:
    """Run every (theta, mu, workers) cell sequentially and fill in both
    speedup columns from the recorded baselines."""
    if config.manifest:
        seq = load_sequence(config.manifest)
    else:
        seq = generate_blackoil_like_sequence(config.nx, config.ny, config.nz,
                                              config.nsteps, config.drift, config.seed)
    report = RunReport(rows=[])
    report.details["provenance"] = seq.provenance
    report.details["config"] = config.to_dict()
    report.details["cells"] = []
    first_hierarchy = None
    for theta in config.thetas:
        for mu in config.mus:
            for workers in config.workers:
                cell_cfg = config.solver.replace(theta=theta, mu=mu, workers=workers)
                t0 = time.perf_counter()
                try:
                    out = ascpr_gmres_sequence(seq.systems, mu, cell_cfg,
                                               keep_solutions=False)
                except (FloatingPointError, RuntimeError) as exc:
                    report.failures.append({"theta": theta, "mu": mu,
                                            "workers": workers, "error": str(exc)})
                    continue
                total = time.perf_counter() - t0
                solver_time = out.setup_time + out.solve_time
                row = BenchRow(
                    theta=theta, mu=mu, workers=workers,
                    setup_calls=out.setup_calls,
                    setup_ratio=out.setup_time / solver_time if solver_time > 0 else 0.0,
                    iter=out.total_inner,
                    time_s=solver_time,
                )
                report.rows.append(row)
                report.details["cells"].append({
                    "theta": theta, "mu": mu, "workers": workers,
                    "outer_restarts": out.total_outer,
                    "per_system_inner": [r.inner for r in out.records],
                    "converged": out.all_converged,
                    "setup_time_s": out.setup_time,
                    "solve_time_s": out.solve_time,
                    "overhead_s": total - solver_time,
                })
                if first_hierarchy is None:
                    first_hierarchy = hierarchy_summary(
                        build_cpr(seq.systems[0][0], cell_cfg).pressure_solver)
                if progress:
                    progress(row)
    for row in report.rows:
        base = report.find(row.theta, row.mu, 1)
        if base is not None and row.time_s > 0:
            row.speedup = base.time_s / row.time_s
        star = report.find(row.theta, 0, 1)
        if star is not None and row.time_s > 0:
            row.speedup_star = star.time_s / row.time_s
    if first_hierarchy is not None:
        report.details["hierarchy"] = first_hierarchy
    return report


def _format_cell(value):
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def write_report_csv(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"schema={CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([_format_cell(row.as_record()[c]) for c in CSV_COLUMNS])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        schema = fh.readline().strip()
        if schema != f"schema={CSV_SCHEMA}":
            raise ValueError(f"unsupported report schema line {schema!r}")
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append({
                "theta": float(rec["theta"]),
                "mu": int(rec["mu"]),
                "workers": int(rec["workers"]),
                "setup_calls": int(rec["setup_calls"]),
                "setup_ratio": float(rec["setup_ratio"]),
                "iter": int(rec["iter"]),
                "time_s": float(rec["time_s"]),
                "speedup": float(rec["speedup"]) if rec["speedup"] else None,
                "speedup_star": float(rec["speedup_star"]) if rec["speedup_star"] else None,
            })
        return rows


def write_report_json(report: RunReport, path) -> None:
    payload = {
        "schema": CSV_SCHEMA,
        "rows": [row.as_record() for row in report.rows],
        "failures": report.failures,
        "details": report.details,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
