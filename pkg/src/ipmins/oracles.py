"""Empirical verifiers for the gap-recursion lemmas and the complexity trend.

Everything here is a pure function of its inputs: simulated recursions,
solve traces, or seeded problem families.  Verdicts serialize to JSON with
the keys ``lemma``, ``per_step``, ``first_violation``,
``empirical_kappa1_max`` and ``empirical_kappa2_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .catalog import SampleSpec, generate_sample
from .errors import IncompleteTrace, PreconditionUnmet
from .ipm import IpmConfig, ipm_solve, make_centered_start
from .trace import SolveTrace

LEMMA2_RTOL = 1e-10
LEMMA2_FIELDS = ("k", "mu", "mu_next", "alpha", "sigma", "kappa1", "kappa2")
GRID_OMEGAS = tuple(round(0.1 * i, 2) for i in range(1, 10))
GRID_CMU0_STEP = 0.05
GRID_HORIZON = 200
GRID_MU0 = 0.5
GRID_EPS_FRACTIONS = (1e-3, 1e-6, 1e-9)


@dataclass(frozen=True)
class RecursionParams:
    """Parameters of ``mu_{k+1} <= (1 - omega) mu_k + C mu_k^2``.

    ``C = 0`` is admitted: the recursion is then purely geometric.
    """

    omega: float
    C: float
    mu0: float
    horizon: int = GRID_HORIZON

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")
        if self.C < 0:
            raise ValueError(f"C must be non-negative, got {self.C}")
        if self.mu0 <= 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    @property
    def rate(self) -> float:
        """Contraction factor ``1 - omega + C mu0`` of the bound."""
        return 1.0 - self.omega + self.C * self.mu0

    def require_hypothesis(self) -> None:
        if self.C > 0 and self.mu0 >= self.omega / self.C:
            raise PreconditionUnmet(
                f"mu0={self.mu0:g} is not below omega/C={self.omega / self.C:g}; bound not applicable"
            )


def simulate_recursion(params: RecursionParams, steps: Optional[int] = None) -> np.ndarray:
    """The recursion taken with equality, ``steps + 1`` terms starting at ``mu0``."""
    steps = params.horizon if steps is None else steps
    mu = np.empty(steps + 1)
    mu[0] = params.mu0
    for k in range(steps):
        mu[k + 1] = (1.0 - params.omega) * mu[k] + params.C * mu[k] * mu[k]
    return mu


def lemma1_bound(params: RecursionParams, mu_seq: Sequence[float]) -> dict:
    """Check ``mu_k <= (1 - omega + C mu0)^k mu0`` index by index."""
    params.require_hypothesis()
    mu = np.asarray(mu_seq, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise ValueError("mu_seq must be a non-empty sequence")
    if np.any(mu < 0):
        raise ValueError("mu_seq must be nonnegative")
    if not math.isclose(mu[0], params.mu0, rel_tol=1e-12):
        raise ValueError(f"mu_seq[0]={mu[0]} differs from params.mu0={params.mu0}")
    bound = params.mu0 * params.rate ** np.arange(mu.size)
    ok = mu <= bound * (1.0 + 1e-12)
    bad = np.flatnonzero(~ok)
    return {
        "lemma": "lemma1",
        "per_step": [
            {"k": int(k), "mu": float(m), "bound": float(b), "passed": bool(p)}
            for k, (m, b, p) in enumerate(zip(mu, bound, ok))
        ],
        "first_violation": int(bad[0]) if bad.size else None,
        "passed": bool(ok.all()),
    }


def lemma1_iteration_estimate(params: RecursionParams, eps: float) -> int:
    """``ceil(log(eps / mu0) / log(1 - omega + C mu0))``."""
    params.require_hypothesis()
    if not 0.0 < eps <= params.mu0:
        raise PreconditionUnmet(f"eps must lie in (0, mu0={params.mu0:g}], got {eps:g}")
    if eps == params.mu0:
        return 0
    return max(0, math.ceil(math.log(eps / params.mu0) / math.log(params.rate)))


def _first_below(seq: np.ndarray, eps: float) -> Optional[int]:
    hits = np.flatnonzero(seq <= eps)
    return int(hits[0]) if hits.size else None


def lemma1_grid(
    omegas: Sequence[float] = GRID_OMEGAS,
    mu0: float = GRID_MU0,
    horizon: int = GRID_HORIZON,
    eps_fractions: Sequence[float] = GRID_EPS_FRACTIONS,
) -> dict:
    """Exhaustive check over ``omega`` and ``C mu0 in {0, 0.05, ..., omega - 0.05}``.

    For each cell the equality recursion is checked against the bound for
    ``horizon`` steps, and the iteration estimate is compared with the first
    index at which the geometric majorant ``rate^k mu0`` reaches ``eps``
    (tightness, at most one step of slack) and with the first index at which
    the simulated recursion does (soundness).
    """
    cells = []
    largest_cmu0 = {}
    for omega in omegas:
        n_steps = int(round(omega / GRID_CMU0_STEP))
        for j in range(n_steps):
            cmu0 = round(j * GRID_CMU0_STEP, 10)
            params = RecursionParams(omega=omega, C=cmu0 / mu0, mu0=mu0, horizon=horizon)
            verdict = lemma1_bound(params, simulate_recursion(params))
            estimates = []
            for frac in eps_fractions:
                eps = frac * mu0
                k_est = lemma1_iteration_estimate(params, eps)
                majorant = mu0 * params.rate ** np.arange(k_est + 2)
                k_major = _first_below(majorant, eps)
                sim = simulate_recursion(params, k_est)
                estimates.append({
                    "eps": eps,
                    "estimate": k_est,
                    "majorant_first_hit": k_major,
                    "simulated_first_hit": _first_below(sim, eps),
                    "tight": k_major is not None and 0 <= k_est - k_major <= 1,
                    "sound": bool(sim[k_est] <= eps),
                })
            geometric = verdict["passed"]
            if geometric:
                largest_cmu0[omega] = max(largest_cmu0.get(omega, 0.0), cmu0)
            cells.append({
                "omega": omega,
                "C_mu0": cmu0,
                "bound_violations": sum(not s["passed"] for s in verdict["per_step"]),
                "first_violation": verdict["first_violation"],
                "estimates": estimates,
            })
    violations = sum(c["bound_violations"] for c in cells)
    untight = sum(not e["tight"] or not e["sound"] for c in cells for e in c["estimates"])
    return {
        "lemma": "lemma1-grid",
        "cells": cells,
        "n_cells": len(cells),
        "bound_violations": violations,
        "estimate_failures": untight,
        "largest_C_mu0_with_geometric_decay": {str(k): v for k, v in largest_cmu0.items()},
        "passed": violations == 0 and untight == 0,
    }


def lemma2_check(trace: SolveTrace, rtol: float = LEMMA2_RTOL) -> dict:
    """Check ``mu+ <= (1 - alpha(1 - sigma - k1)) mu + alpha^2 k2 mu^2`` per interior step.

    ``k1``, ``k2`` are the constants measured on each step.  Steps where
    ``sigma + k1 >= 1`` are listed under ``hypothesis_violations`` but do
    not fail the check.
    """
    per_step = []
    first = None
    hyp = []
    k1_max = k2_max = 0.0
    ratio_max = None
    for rec in trace.interior_records():
        missing = [f for f in LEMMA2_FIELDS if f not in rec]
        if missing:
            raise IncompleteTrace(f"step {rec.get('k', '?')} lacks fields {missing}")
        mu, mu_next, alpha = float(rec["mu"]), float(rec["mu_next"]), float(rec["alpha"])
        sigma, k1, k2 = float(rec["sigma"]), float(rec["kappa1"]), float(rec["kappa2"])
        bound = (1.0 - alpha * (1.0 - sigma - k1)) * mu + alpha * alpha * k2 * mu * mu
        passed = mu_next <= bound + rtol * max(mu, abs(bound))
        if not passed and first is None:
            first = int(rec["k"])
        if sigma + k1 >= 1.0:
            hyp.append(int(rec["k"]))
        k1_max = max(k1_max, k1)
        k2_max = max(k2_max, k2)
        delta = rec.get("inexactness")
        if delta:
            ratio = k1 / float(delta)
            ratio_max = ratio if ratio_max is None else max(ratio_max, ratio)
        per_step.append({
            "k": int(rec["k"]),
            "mu": mu,
            "mu_next": mu_next,
            "bound": bound,
            "slack": bound - mu_next,
            "passed": bool(passed),
        })
    return {
        "lemma": "lemma2",
        "algorithm": trace.algorithm,
        "per_step": per_step,
        "first_violation": first,
        "empirical_kappa1_max": k1_max,
        "empirical_kappa2_max": k2_max,
        "kappa1_over_delta_max": ratio_max,
        "hypothesis_violations": hyp,
        "passed": first is None,
    }


@dataclass
class ComplexityScan:
    family: str
    variant: str
    eps: float
    rows: list = field(default_factory=list)
    exponent: Optional[float] = None

    @property
    def iterations(self) -> list:
        return [r["iterations"] for r in self.rows]

    def non_decreasing(self) -> bool:
        its = [r["iterations"] for r in self.rows if r["status"] == "converged"]
        return all(b >= a for a, b in zip(its, its[1:]))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "variant": self.variant,
            "eps": self.eps,
            "rows": self.rows,
            "exponent": self.exponent,
        }


def fit_exponent(ns: Sequence[int], iterations: Sequence[int]) -> Optional[float]:
    """Least-squares slope of ``log(iterations)`` against ``log(n)``."""
    pairs = [(n, k) for n, k in zip(ns, iterations) if k > 0]
    if len(pairs) < 2:
        return None
    x = np.log([p[0] for p in pairs])
    y = np.log([p[1] for p in pairs])
    return float(np.polyfit(x, y, 1)[0])


def complexity_scan(
    family: str,
    variant: str,
    n_list: Sequence[int],
    eps: float,
    seed: int = 0,
    max_iterations: int = 5000,
) -> ComplexityScan:
    """IPM iteration counts over ``n_list`` on a seeded family.

    Each size uses ``SampleSpec(sample_id=n, seed=seed)``; failures are
    recorded with their status and excluded from the fit.
    """
    scan = ComplexityScan(family=family, variant=variant, eps=eps)
    cfg = IpmConfig(variant=variant, eps_tol=eps, max_iterations=max_iterations)
    for n in n_list:
        try:
            prog, _ = generate_sample(SampleSpec(sample_id=n, seed=seed, family=family, n_variables=n))
            _, trace = ipm_solve(prog, make_centered_start(prog), cfg)
            scan.rows.append({"n": n, "iterations": trace.iterations, "status": trace.status})
        except Exception as exc:  # recorded, scan continues
            scan.rows.append({"n": n, "iterations": 0, "status": f"error: {exc}"})
    ok = [r for r in scan.rows if r["status"] == "converged"]
    scan.exponent = fit_exponent([r["n"] for r in ok], [r["iterations"] for r in ok])
    return scan
