"""Command-line entry point: ``ipmins solve|bench|sweep|verify|plot-data``.

Exit codes: 0 success, 1 usage or I/O error, 2 non-convergence,
3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import catalog
from .bench import emit_figures, emit_sweep, emit_tables, load_report, run_comparison, run_sensitivity
from .config import RunConfig, load_config, parse_overrides
from .errors import ConfigError, IpminsError
from .ins import ins_solve
from .ipm import ipm_solve, make_centered_start
from .oracles import lemma1_grid, lemma2_check
from .problem import load_problem
from .trace import SolveTrace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_VERIFY_FAILED = 3

log = logging.getLogger("ipmins")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", default=default(None), help="JSON file of dotted config keys")
    parser.add_argument("--seed", type=int, default=default(0), help="base seed (default 0)")
    parser.add_argument("--out", default=default("ipmins-out"), help="output directory")
    parser.add_argument("--jobs", type=int, default=default(os.cpu_count() or 1),
                        help="worker processes for bench/sweep (default: logical cores)")
    parser.add_argument("--log-level", default=default("WARNING"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--set", action="append", default=default([]), metavar="KEY=VALUE",
                        help="override a config key, e.g. --set ins.theta=0.01")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipmins", description=__doc__.split("\n")[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        return p

    p = add("solve", "solve one problem and write its trace")
    p.add_argument("problem", nargs="?", help="problem JSON file with keys Q, A, b, c")
    p.add_argument("--catalog", help=f"built-in problem, one of {sorted(catalog.CATALOG)}")
    p.add_argument("--alg", choices=["ipm", "ins"], default="ipm")
    p.add_argument("--variant", choices=["long-step", "short-step"])
    p.add_argument("--hessian", choices=["exact", "bfgs"])
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--eps", type=float, help="termination tolerance")

    p = add("bench", "INS vs IPM comparison tables")
    p.add_argument("--samples", type=int)
    p.add_argument("--family", help="sample family or catalog name")
    p.add_argument("--n-variables", type=int)
    p.add_argument("--no-bfgs", action="store_true", help="skip the BFGS-mode INS runs")
    p.add_argument("--no-traces", action="store_true", help="do not write per-sample traces")

    p = add("sweep", "sensitivity sweep over alpha, eps and lambda")
    p.add_argument("--samples", type=int)
    p.add_argument("--alpha", type=float, nargs="+")
    p.add_argument("--eps", type=float, nargs="+")
    p.add_argument("--lambda", dest="lam", type=float, nargs="+")

    p = add("verify", "check lemma bounds on a trace or on the synthetic grid")
    p.add_argument("trace", nargs="?", help="trace JSONL written by solve or bench")
    p.add_argument("--lemma1-grid", action="store_true", help="run the synthetic recursion grid")

    p = add("plot-data", "regenerate figure series from a bench report.json")
    p.add_argument("report", nargs="?", help="report.json (default: <out>/report.json)")
    return parser


def _config(args) -> RunConfig:
    overrides = parse_overrides(args.set)
    if args.command == "solve":
        prefix = "ipm" if args.alg == "ipm" else "ins"
        if args.variant:
            overrides["ipm.variant"] = args.variant
        if args.hessian:
            overrides["ins.hessian_mode"] = args.hessian
        if args.max_iterations is not None:
            overrides[f"{prefix}.max_iterations"] = args.max_iterations
        if args.eps is not None:
            overrides[f"{prefix}.eps_tol"] = args.eps
    elif args.command == "bench":
        for flag, key in (("samples", "samples"), ("family", "family"), ("n_variables", "n_variables")):
            if getattr(args, flag) is not None:
                overrides[f"bench.{key}"] = getattr(args, flag)
        if args.no_bfgs:
            overrides["bench.bfgs"] = False
    elif args.command == "sweep":
        for flag, key in (("samples", "samples"), ("alpha", "alpha_grid"), ("eps", "eps_grid"),
                          ("lam", "lambda_grid")):
            if getattr(args, flag) is not None:
                overrides[f"sweep.{key}"] = getattr(args, flag)
    return load_config(args.config, overrides)


def _load_problem(args):
    if args.catalog and args.problem:
        raise ConfigError("give either a problem file or --catalog, not both")
    if args.catalog:
        return catalog.get(args.catalog)[0]
    if not args.problem:
        raise ConfigError("solve needs a problem file or --catalog NAME")
    path = Path(args.problem)
    if not path.is_file():
        raise FileNotFoundError(f"problem file not found: {path}")
    return load_problem(path)


def cmd_solve(args, cfg: RunConfig, out: Path) -> int:
    prog = _load_problem(args)
    start = make_centered_start(prog)
    if args.alg == "ipm":
        it, trace = ipm_solve(prog, start, cfg.ipm)
    else:
        it, trace = ins_solve(prog, start, cfg.ins)
    out.mkdir(parents=True, exist_ok=True)
    name = prog.name or "problem"
    path = out / f"solve_{name}_{trace.algorithm}.jsonl"
    trace.to_jsonl(path)
    print(f"{name} {trace.algorithm} status={trace.status} iterations={trace.iterations} "
          f"mu={it.mu:.6g} time_ms={trace.total_time_ms:.3f} trace={path}")
    converged = trace.termination.get("termination_test_I", False)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_bench(args, cfg: RunConfig, out: Path) -> int:
    b = cfg.bench
    report = run_comparison(
        b["samples"], cfg.ins, cfg.ipm, base_seed=args.seed, family=b["family"],
        n_variables=b["n_variables"], n_constraints=b["n_constraints"],
        bfgs_cfg=cfg.ins if b["bfgs"] else None, jobs=args.jobs,
    )
    written = emit_tables(report, out, write_traces=not args.no_traces)
    for alg, agg in report.aggregates.items():
        print(f"{alg}: avg_iterations={agg['avg_iterations']:.6g} "
              f"pct_termination_I={agg['pct_termination_I']:.6g} avg_time_ms={agg['avg_time_ms']:.6g}")
    print(f"wrote {len(written)} files under {out}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    report = run_sensitivity(cfg.sweep_spec(), int(cfg.sweep["samples"]), base_seed=args.seed,
                             ins_base=cfg.ins, ipm_base=cfg.ipm, jobs=args.jobs)
    emit_sweep(report, out)
    for alg, s in report.stability.items():
        print(f"{alg}: " + " ".join(f"var_{k}={v:.6g}" for k, v in s.items()))
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig, out: Path) -> int:
    if not args.trace and not args.lemma1_grid:
        raise ConfigError("verify needs a trace file or --lemma1-grid")
    out.mkdir(parents=True, exist_ok=True)
    verdicts = []
    if args.lemma1_grid:
        verdict = lemma1_grid()
        path = out / "verdict_lemma1_grid.json"
        path.write_text(json.dumps(verdict, indent=2) + "\n", encoding="utf-8")
        print(f"lemma1 grid: cells={verdict['n_cells']} bound_violations={verdict['bound_violations']} "
              f"estimate_failures={verdict['estimate_failures']} -> {path}")
        verdicts.append(verdict)
    if args.trace:
        src = Path(args.trace)
        if not src.is_file():
            raise FileNotFoundError(f"trace file not found: {src}")
        try:
            trace = SolveTrace.from_jsonl(src)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{src}: malformed trace ({exc})") from None
        verdict = lemma2_check(trace)
        path = out / f"verdict_{src.stem}.json"
        path.write_text(json.dumps(verdict, indent=2) + "\n", encoding="utf-8")
        print(f"lemma2 {src.name}: steps={len(verdict['per_step'])} "
              f"first_violation={verdict['first_violation']} -> {path}")
        verdicts.append(verdict)
    return EXIT_OK if all(v["passed"] for v in verdicts) else EXIT_VERIFY_FAILED


def cmd_plot_data(args, cfg: RunConfig, out: Path) -> int:
    src = Path(args.report) if args.report else out / "report.json"
    if not src.is_file():
        raise FileNotFoundError(f"report not found: {src}")
    for path in emit_figures(load_report(src), out):
        print(path)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "plot-data": cmd_plot_data,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg, Path(args.out))
    except (IpminsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
