"""Head-to-head INS vs IPM benchmarks, sensitivity sweeps and report files.

Every result is a pure function of the configurations and seeds except the
wall-time fields (``time_ms``, ``total_time_ms``, ``wall_ms``).  Sample
``i`` (1-based) is generated with seed ``base_seed + i``.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .catalog import KnownOptimum, SampleSpec, generate_sample
from .errors import IpminsError
from .ins import InsConfig, ins_solve
from .ipm import IpmConfig, ipm_solve, make_centered_start
from .trace import format_float

log = logging.getLogger(__name__)

ALGORITHMS = ("ins", "ipm")
EPS_CHOICES = (1e-4, 1e-6, 1e-8)
LAMBDA_CHOICES = (1e-3, 1e-2, 1e-1)
AGGREGATE_KEYS = (
    "avg_f_opt", "avg_iterations", "avg_accuracy", "avg_time_ms",
    "avg_inner_iterations", "pct_termination_I", "pct_relaxed_I",
)


def accuracy_metric(found_f: float, true_f: float) -> float:
    """Proximity score ``1 / (1 + |found - true|)`` in ``(0, 1]``."""
    if not math.isfinite(true_f):
        raise ValueError("true objective value must be finite")
    if found_f is None or not math.isfinite(found_f):
        return 0.0
    return 1.0 / (1.0 + abs(found_f - true_f))


@dataclass
class BenchRow:
    sample_id: int
    algorithm: str
    x_opt: Optional[list]
    lambda_opt: Optional[list]  # equality dual y, primal-dual sign convention
    f_opt: Optional[float]
    f_true: Optional[float]
    iterations: int
    inner_iterations: int
    accuracy: Optional[float]
    time_ms: float
    termination_test_I: bool
    relaxed_I: bool
    status: str


def _mean(vals) -> Optional[float]:
    vals = [v for v in vals if v is not None]
    return float(sum(vals) / len(vals)) if vals else None


def aggregate(rows: Sequence[BenchRow]) -> dict:
    """Arithmetic means over rows; percentages over all rows."""
    n = len(rows)
    return {
        "n_samples": n,
        "avg_f_opt": _mean(r.f_opt for r in rows),
        "avg_iterations": _mean(r.iterations for r in rows),
        "avg_accuracy": _mean(r.accuracy for r in rows),
        "avg_time_ms": _mean(r.time_ms for r in rows),
        "avg_inner_iterations": _mean(r.inner_iterations for r in rows),
        "pct_termination_I": 100.0 * sum(r.termination_test_I for r in rows) / n if n else None,
        "pct_relaxed_I": 100.0 * sum(r.relaxed_I for r in rows) / n if n else None,
    }


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict, repr=False)  # (sample_id, alg) -> SolveTrace

    @property
    def algorithms(self) -> list:
        seen = []
        for r in self.rows:
            if r.algorithm not in seen:
                seen.append(r.algorithm)
        return seen

    def rows_for(self, algorithm: str) -> list:
        return [r for r in self.rows if r.algorithm == algorithm]

    def refresh_aggregates(self) -> None:
        self.aggregates = {alg: aggregate(self.rows_for(alg)) for alg in self.algorithms}

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "aggregates": self.aggregates,
            "rows": [asdict(r) for r in self.rows],
        }


def _config_dict(cfg) -> dict:
    return json.loads(json.dumps(asdict(cfg)))


def _solve_one(algorithm: str, prog, opt: KnownOptimum, cfg, sample_id: int):
    """Run one solver from the centered start; failures become non-convergent rows."""
    trace = None
    try:
        start = make_centered_start(prog)
        t0 = time.perf_counter()
        if algorithm == "ipm":
            it, trace = ipm_solve(prog, start, cfg)
            y = it.y
        else:
            it, trace = ins_solve(prog, start, cfg)
            y = -it.y  # Lagrangian -> primal-dual sign convention
        elapsed = (time.perf_counter() - t0) * 1e3
    except (IpminsError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("sample %d, %s failed: %s", sample_id, algorithm, exc)
        row = BenchRow(sample_id, algorithm, None, None, None, opt.f, 0, 0,
                       0.0 if opt.f is not None else None, 0.0, False, False, f"error: {exc}")
        return row, trace
    f = prog.objective(it.x)
    row = BenchRow(
        sample_id=sample_id,
        algorithm=algorithm,
        x_opt=it.x.tolist(),
        lambda_opt=y.tolist(),
        f_opt=float(f),
        f_true=opt.f,
        iterations=trace.iterations,
        inner_iterations=trace.inner_iterations,
        accuracy=accuracy_metric(f, opt.f) if opt.f is not None else None,
        time_ms=elapsed,
        termination_test_I=trace.termination["termination_test_I"],
        relaxed_I=trace.termination["relaxed_I"],
        status=trace.status,
    )
    return row, trace


def _run_sample(job):
    spec, solvers = job
    prog, opt = generate_sample(spec)
    return [_solve_one(alg, prog, opt, cfg, spec.sample_id) for alg, cfg in solvers]


def _map(jobs: list, n_workers: int) -> list:
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(_run_sample, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))
    return [_run_sample(j) for j in jobs]


def sample_specs(n_samples: int, base_seed: int, family: str = "simplex-qp",
                 n_variables: int = 2, n_constraints: int = 1) -> list:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    return [
        SampleSpec(sample_id=i, seed=base_seed + i, family=family,
                   n_variables=n_variables, n_constraints=n_constraints)
        for i in range(1, n_samples + 1)
    ]


def run_solvers(specs: list, solvers: list, jobs: int = 1, keep_traces: bool = True) -> BenchmarkReport:
    """Run each ``(algorithm, config)`` pair on every sample; rows ordered by sample then solver."""
    report = BenchmarkReport()
    for spec, results in zip(specs, _map([(s, solvers) for s in specs], jobs)):
        for row, trace in results:
            report.rows.append(row)
            if keep_traces and trace is not None:
                report.traces[(spec.sample_id, row.algorithm)] = trace
    report.refresh_aggregates()
    return report


def run_comparison(
    n_samples: int,
    ins_cfg: InsConfig,
    ipm_cfg: IpmConfig,
    base_seed: int = 0,
    family: str = "simplex-qp",
    n_variables: int = 2,
    n_constraints: int = 1,
    bfgs_cfg: Optional[InsConfig] = None,
    jobs: int = 1,
    keep_traces: bool = True,
) -> BenchmarkReport:
    """INS and IPM on the same seeded instances from the same starts.

    With ``bfgs_cfg`` a third solver ``ins-bfgs`` is run and reported
    alongside.
    """
    solvers = [("ins", ins_cfg), ("ipm", ipm_cfg)]
    if bfgs_cfg is not None:
        solvers.append(("ins-bfgs", replace(bfgs_cfg, hessian_mode="bfgs")))
    specs = sample_specs(n_samples, base_seed, family, n_variables, n_constraints)
    report = run_solvers(specs, solvers, jobs, keep_traces)
    report.meta = {
        "n_samples": n_samples,
        "base_seed": base_seed,
        "family": family,
        "n_variables": n_variables,
        "n_constraints": n_constraints,
        "configs": {alg: _config_dict(cfg) for alg, cfg in solvers},
    }
    return report


# ------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    alpha_grid: tuple = (0.1, 0.6, 1.0)
    eps_grid: tuple = EPS_CHOICES
    lambda_grid: tuple = LAMBDA_CHOICES
    algorithms: tuple = ALGORITHMS

    def __post_init__(self):
        for name in ("alpha_grid", "eps_grid", "lambda_grid", "algorithms"):
            vals = tuple(getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ValueError(f"{name} must be non-empty")
        if any(not 0.1 <= a <= 1.0 for a in self.alpha_grid):
            raise ValueError("alpha values must lie in [0.1, 1.0]")
        if any(not any(math.isclose(e, c) for c in EPS_CHOICES) for e in self.eps_grid):
            raise ValueError(f"eps values must be drawn from {EPS_CHOICES}")
        if any(not any(math.isclose(l, c) for c in LAMBDA_CHOICES) for l in self.lambda_grid):
            raise ValueError(f"lambda values must be drawn from {LAMBDA_CHOICES}")
        if any(a not in ALGORITHMS for a in self.algorithms):
            raise ValueError(f"algorithms must be drawn from {ALGORITHMS}")

    @property
    def cells(self) -> list:
        return [
            (alg, a, e, l)
            for alg in self.algorithms
            for a, e, l in itertools.product(self.alpha_grid, self.eps_grid, self.lambda_grid)
        ]


@dataclass
class SweepReport:
    sweep: SweepSpec
    cells: dict = field(default_factory=dict)  # (alg, alpha, eps, lambda) -> BenchmarkReport
    stability: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def avg_iterations(self, key) -> float:
        alg = key[0]
        return self.cells[key].aggregates[alg]["avg_iterations"]

    def to_dict(self) -> dict:
        cells = []
        for (alg, a, e, l), rep in self.cells.items():
            cells.append({"algorithm": alg, "alpha": a, "eps": e, "lambda": l, **rep.aggregates[alg]})
        return {"meta": self.meta, "sweep": asdict(self.sweep), "cells": cells,
                "stability": self.stability}


def axis_variance(values: dict, axis: int, grids: Sequence[Sequence[float]]) -> float:
    """Variance along one grid axis, averaged over all settings of the other axes.

    ``values`` maps ``(alpha, eps, lambda)`` tuples to a scalar.
    """
    others = [g for i, g in enumerate(grids) if i != axis]
    variances = []
    for rest in itertools.product(*others):
        line = []
        for v in grids[axis]:
            key = list(rest)
            key.insert(axis, v)
            line.append(values[tuple(key)])
        # identical runs must give exactly zero, not a rounding residue
        variances.append(float(np.var(line)) if len(set(line)) > 1 else 0.0)
    return float(np.mean(variances))


def stability_summary(report: SweepReport) -> dict:
    """Per-algorithm variance of ``avg_iterations`` along each axis and overall."""
    sw = report.sweep
    grids = (sw.alpha_grid, sw.eps_grid, sw.lambda_grid)
    summary = {}
    for alg in sw.algorithms:
        vals = {k[1:]: report.avg_iterations(k) for k in report.cells if k[0] == alg}
        summary[alg] = {
            "alpha": axis_variance(vals, 0, grids),
            "eps": axis_variance(vals, 1, grids),
            "lambda": axis_variance(vals, 2, grids),
            "overall": float(np.var(list(vals.values()))) if len(set(vals.values())) > 1 else 0.0,
        }
    return summary


def run_sensitivity(
    sweep: SweepSpec,
    n_samples: int,
    base_seed: int = 0,
    ins_base: Optional[InsConfig] = None,
    ipm_base: Optional[IpmConfig] = None,
    family: str = "simplex-qp",
    n_variables: int = 2,
    jobs: int = 1,
) -> SweepReport:
    """Full Cartesian sweep over ``(algorithm, alpha, eps, lambda)``.

    ``alpha`` is INS's step scaling and ``lambda`` its Tikhonov shift
    ``theta``; IPM takes neither, so its runs depend on ``eps`` alone and are
    computed once per tolerance.  The centering ``sigma`` follows each
    tolerance as ``tau (1 - eps)``.
    """
    ins_base = ins_base or InsConfig()
    ipm_base = ipm_base or IpmConfig()
    specs = sample_specs(n_samples, base_seed, family, n_variables)
    out = SweepReport(sweep=sweep)
    ipm_cache = {}
    for key in sweep.cells:
        alg, a, e, l = key
        if alg == "ipm":
            if e not in ipm_cache:
                cfg = replace(ipm_base, eps_tol=e, sigma=None)
                ipm_cache[e] = run_solvers(specs, [("ipm", cfg)], jobs, keep_traces=False)
            out.cells[key] = ipm_cache[e]
        else:
            cfg = replace(ins_base, alpha_scale=a, theta=l, eps_tol=e, sigma=None)
            out.cells[key] = run_solvers(specs, [("ins", cfg)], jobs, keep_traces=False)
    out.stability = stability_summary(out)
    out.meta = {"n_samples": n_samples, "base_seed": base_seed, "family": family,
                "n_variables": n_variables}
    return out


# ------------------------------------------------------------- output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _per_sample_table(rows: list) -> tuple[list, list]:
    n = max((len(r.x_opt) for r in rows if r.x_opt is not None), default=0)
    m = max((len(r.lambda_opt) for r in rows if r.lambda_opt is not None), default=0)
    header = (["sample_id"] + [f"x_opt_{j + 1}" for j in range(n)]
              + [f"lambda_opt_{i + 1}" for i in range(m)]
              + ["f_opt", "iterations", "inner_iterations", "accuracy", "termination_test_I", "status"])
    body = []
    for r in rows:
        x = r.x_opt if r.x_opt is not None else [None] * n
        lam = r.lambda_opt if r.lambda_opt is not None else [None] * m
        body.append([r.sample_id, *x, *lam, r.f_opt, r.iterations, r.inner_iterations,
                     r.accuracy, r.termination_test_I, r.status])
    return header, body


def _by_sample(report: BenchmarkReport, alg: str) -> dict:
    return {r.sample_id: r for r in report.rows_for(alg)}


def emit_figures(report: BenchmarkReport, out_dir: Union[str, Path]) -> list:
    out = Path(out_dir) / "figures"
    ins, ipm = _by_sample(report, "ins"), _by_sample(report, "ipm")
    ids = sorted(set(ins) | set(ipm))

    def val(d, i, attr):
        return getattr(d[i], attr) if i in d else None

    write_csv(out / "fig1_fopt.csv", ["sample_id", "ins_f_opt", "ipm_f_opt"],
              [[i, val(ins, i, "f_opt"), val(ipm, i, "f_opt")] for i in ids])
    write_csv(out / "fig2_iterations.csv", ["sample_id", "ins_iterations", "ipm_iterations"],
              [[i, val(ins, i, "iterations"), val(ipm, i, "iterations")] for i in ids])
    return [out / "fig1_fopt.csv", out / "fig2_iterations.csv"]


def emit_tables(report: BenchmarkReport, out_dir: Union[str, Path], write_traces: bool = True) -> list:
    """Write the table, figure, report and trace files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for alg, name in (("ins", "table2_ins.csv"), ("ipm", "table3_ipm.csv"),
                      ("ins-bfgs", "table2_ins_bfgs.csv")):
        rows = report.rows_for(alg)
        if not rows and alg == "ins-bfgs":
            continue
        header, body = _per_sample_table(rows)
        write_csv(out / name, header, body)
        written.append(out / name)

    ins, ipm = _by_sample(report, "ins"), _by_sample(report, "ipm")
    ids = sorted(set(ins) | set(ipm))
    write_csv(out / "table4_times.csv", ["sample_id", "ins_time_ms", "ipm_time_ms"],
              [[i, ins[i].time_ms if i in ins else None, ipm[i].time_ms if i in ipm else None]
               for i in ids])
    written.append(out / "table4_times.csv")

    agg = report.aggregates
    write_csv(out / "table5_termination.csv",
              ["algorithm", "pct_termination_I", "pct_relaxed_I", "n_runs"],
              [[alg, agg[alg]["pct_termination_I"], agg[alg]["pct_relaxed_I"], agg[alg]["n_samples"]]
               for alg in ALGORITHMS if alg in agg])
    written.append(out / "table5_termination.csv")

    cols = [alg for alg in ALGORITHMS if alg in agg]
    write_csv(out / "table6_averages.csv", ["metric", *cols],
              [[key, *(agg[alg][key] for alg in cols)] for key in AGGREGATE_KEYS])
    written.append(out / "table6_averages.csv")

    written += emit_figures(report, out)

    if write_traces and report.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for (sid, alg), trace in sorted(report.traces.items()):
            path = tdir / f"sample_{sid}_{alg}.jsonl"
            trace.to_jsonl(path)
            written.append(path)

    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    written.append(out / "report.json")
    return written


def emit_sweep(report: SweepReport, out_dir: Union[str, Path]) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    header = ["algorithm", "alpha", "eps", "lambda", *AGGREGATE_KEYS]
    write_csv(out / "sweep.csv", header, [[c[h] for h in header] for c in doc["cells"]])
    axes = ("alpha", "eps", "lambda", "overall")
    write_csv(out / "sweep_stability.csv", ["algorithm", *(f"var_iterations_{a}" for a in axes)],
              [[alg, *(s[a] for a in axes)] for alg, s in report.stability.items()])
    (out / "sweep_report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return [out / "sweep.csv", out / "sweep_stability.csv", out / "sweep_report.json"]


def load_report(path: Union[str, Path]) -> BenchmarkReport:
    """Rebuild a report (without traces) from ``report.json``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rep = BenchmarkReport(rows=[BenchRow(**r) for r in doc["rows"]], meta=doc.get("meta", {}))
    rep.refresh_aggregates()
    return rep
