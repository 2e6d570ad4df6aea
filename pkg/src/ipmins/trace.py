"""Per-iteration solve traces and the termination test they are judged by."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .problem import Iterate, Residuals

CSV_COLUMNS = (
    "k", "mu", "alpha", "r_p_inf", "r_d_inf", "r_c_inf",
    "nbhd_dist", "inner_iters", "inexactness", "wall_ms",
)
TIME_KEYS = frozenset({"wall_ms", "total_time_ms", "time_ms", "avg_time_ms"})
RELAXED_FACTOR = 10.0


def termination_flags(res: Residuals, mu: float, eps_tol: float) -> dict:
    """Termination Test I: ``||r_p||_inf, ||r_d||_inf, mu`` all ``<= eps_tol``.

    ``relaxed_I`` is the same test at ``10 * eps_tol``.
    """
    worst = max(res.norms["r_p_inf"], res.norms["r_d_inf"], mu)
    return {
        "termination_test_I": bool(worst <= eps_tol),
        "relaxed_I": bool(worst <= RELAXED_FACTOR * eps_tol),
        "r_p_inf": res.norms["r_p_inf"],
        "r_d_inf": res.norms["r_d_inf"],
        "mu": float(mu),
    }


def residual_fields(res: Residuals) -> dict:
    return {key: float(val) for key, val in res.norms.items()}


@dataclass
class SolveTrace:
    """Iteration records plus a terminal summary.

    Each record is a flat dict.  Interior steps (``phase`` ``ipm`` or
    ``ins``) carry ``mu``, ``mu_next``, ``alpha``, ``sigma``, the measured
    ``kappa1``/``kappa2`` and the iterate vectors ``x``, ``s`` they started
    from; ``ecnp`` records carry merit data instead.
    """

    algorithm: str
    records: list = field(default_factory=list)
    status: str = "running"
    total_time_ms: float = 0.0
    termination: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def inner_iterations(self) -> int:
        return int(sum(r.get("inner_iters", 0) for r in self.records))

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def interior_records(self) -> list:
        return [r for r in self.records if r.get("phase") in ("ipm", "ins")]

    def append(self, record: dict) -> None:
        if self.records and record["k"] <= self.records[-1]["k"]:
            raise ValueError("trace records must be strictly ordered by k")
        self.records.append(record)

    def finish(self, status: str, it: Iterate, res: Residuals, eps_tol: float,
               elapsed_ms: float) -> None:
        self.status = status
        self.total_time_ms = elapsed_ms
        self.termination = termination_flags(res, it.mu, eps_tol)
        self.final = {**it.to_dict(), **residual_fields(res)}

    def summary(self) -> dict:
        return {
            "type": "summary",
            "algorithm": self.algorithm,
            "status": self.status,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "total_time_ms": self.total_time_ms,
            "termination_test_flags": self.termination,
            "final": self.final,
            "meta": self.meta,
        }

    def to_jsonl(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for rec in self.records:
                fh.write(json.dumps({"type": "step", **rec}) + "\n")
            fh.write(json.dumps(self.summary()) + "\n")

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "SolveTrace":
        records, summary = [], None
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                doc = json.loads(line)
                kind = doc.pop("type", "step")
                if kind == "summary":
                    summary = doc
                else:
                    records.append(doc)
        if summary is None:
            raise ValueError(f"{path}: no summary record")
        trace = cls(algorithm=summary.get("algorithm", "unknown"), meta=summary.get("meta", {}))
        for rec in records:
            trace.append(rec)
        trace.status = summary.get("status", "unknown")
        trace.total_time_ms = summary.get("total_time_ms", 0.0)
        trace.termination = summary.get("termination_test_flags", {})
        trace.final = summary.get("final", {})
        return trace

    def to_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for rec in self.records:
                row = []
                for col in CSV_COLUMNS:
                    val = rec.get(col, "")
                    row.append(format_float(val) if isinstance(val, float) else val)
                writer.writerow(row)


def format_float(v) -> str:
    """Six significant digits, the CSV convention."""
    if v is None:
        return ""
    return f"{float(v):.6g}"


def vec(a: Iterable) -> list:
    return [float(v) for v in np.asarray(a, dtype=float)]
