"""Run configuration: a flat JSON document of dotted keys plus overrides.

Example::

    {
      "ipm.variant": "long-step",
      "ins.theta": 0.01,
      "ins.alpha_scale": 0.6,
      "ins.solver.preconditioner": "jacobi",
      "bench.samples": 20
    }

``solver.*`` keys apply to both solvers; ``ipm.solver.*`` and
``ins.solver.*`` take precedence over them.  Unknown keys are rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from .bench import SweepSpec
from .errors import ConfigError
from .ins import InsConfig
from .ipm import IpmConfig
from .kkt import SolverPolicy

SOLVER_KEYS = {f.name: f.name for f in fields(SolverPolicy)}
IPM_KEYS = {k: k for k in ("variant", "gamma", "tau", "eps_tol", "sigma", "eta", "max_iterations")}
INS_KEYS = {
    "theta": "theta",
    "alpha_scale": "alpha_scale",
    "tau": "tau",
    "eps_tol": "eps_tol",
    "sigma": "sigma",
    "gamma": "gamma",
    "max_iterations": "max_iterations",
    "max_inner_total": "max_inner_total",
    "hessian_mode": "hessian_mode",
    "ecnp.enabled": "ecnp",
    "ecnp.max_iterations": "ecnp_max_iterations",
    "backtracking.beta": "beta",
    "backtracking.c": "c_armijo",
    "backtracking.max_backtracks": "max_backtracks",
}
BENCH_DEFAULTS = {
    "samples": 100,
    "family": "simplex-qp",
    "n_variables": 2,
    "n_constraints": 1,
    "bfgs": True,
}
SWEEP_DEFAULTS = {
    "samples": 100,
    "alpha_grid": [0.1, 0.6, 1.0],
    "eps_grid": [1e-4, 1e-6, 1e-8],
    "lambda_grid": [1e-3, 1e-2, 1e-1],
    "algorithms": ["ins", "ipm"],
}


def known_keys() -> list:
    keys = [f"solver.{k}" for k in SOLVER_KEYS]
    keys += [f"ipm.{k}" for k in IPM_KEYS] + [f"ipm.solver.{k}" for k in SOLVER_KEYS]
    keys += [f"ins.{k}" for k in INS_KEYS] + [f"ins.solver.{k}" for k in SOLVER_KEYS]
    keys += [f"bench.{k}" for k in BENCH_DEFAULTS] + [f"sweep.{k}" for k in SWEEP_DEFAULTS]
    return keys


@dataclass
class RunConfig:
    ipm: IpmConfig = field(default_factory=IpmConfig)
    ins: InsConfig = field(default_factory=InsConfig)
    bench: dict = field(default_factory=lambda: dict(BENCH_DEFAULTS))
    sweep: dict = field(default_factory=lambda: {k: list(v) if isinstance(v, list) else v
                                                 for k, v in SWEEP_DEFAULTS.items()})

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(
            alpha_grid=tuple(self.sweep["alpha_grid"]),
            eps_grid=tuple(self.sweep["eps_grid"]),
            lambda_grid=tuple(self.sweep["lambda_grid"]),
            algorithms=tuple(self.sweep["algorithms"]),
        )


def parse_value(text: str) -> Any:
    """JSON literal if it parses, else the raw string (``--set ipm.variant=short-step``)."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = parse_value(value.strip())
    return out


def read_config_file(path: Union[str, Path]) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object of dotted keys")
    return doc


def _policy(base: SolverPolicy, values: dict) -> SolverPolicy:
    return replace(base, **values) if values else base


def build_config(values: dict) -> RunConfig:
    """Validate dotted keys and build the typed configuration."""
    unknown = sorted(set(values) - set(known_keys()))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    shared = {k[len("solver."):]: v for k, v in values.items() if k.startswith("solver.")}
    ipm_solver = {**shared, **{k[len("ipm.solver."):]: v for k, v in values.items()
                               if k.startswith("ipm.solver.")}}
    ins_solver = {**shared, **{k[len("ins.solver."):]: v for k, v in values.items()
                               if k.startswith("ins.solver.")}}
    ipm_args = {IPM_KEYS[k[4:]]: v for k, v in values.items()
                if k.startswith("ipm.") and k[4:] in IPM_KEYS}
    ins_args = {INS_KEYS[k[4:]]: v for k, v in values.items()
                if k.startswith("ins.") and k[4:] in INS_KEYS}
    try:
        ipm = IpmConfig(**ipm_args)
        ipm = replace(ipm, solver_policy=_policy(ipm.solver_policy, ipm_solver))
        ins = InsConfig(**ins_args)
        ins = replace(ins, solver_policy=_policy(ins.solver_policy, ins_solver))
        cfg = RunConfig(ipm=ipm, ins=ins)
        for k, v in values.items():
            if k.startswith("bench."):
                cfg.bench[k[6:]] = v
            elif k.startswith("sweep."):
                cfg.sweep[k[6:]] = v
        _check_bench(cfg.bench)
        if int(cfg.sweep["samples"]) < 1:
            raise ValueError("sweep.samples must be at least 1")
        cfg.sweep_spec()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    return cfg


def _check_bench(bench: dict) -> None:
    for key in ("samples", "n_variables", "n_constraints"):
        if not isinstance(bench[key], int) or bench[key] < 1:
            raise ValueError(f"bench.{key} must be a positive integer")
    if not isinstance(bench["bfgs"], bool):
        raise ValueError("bench.bfgs must be true or false")


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[dict] = None) -> RunConfig:
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return build_config(values)
