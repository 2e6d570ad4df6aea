"""Short-step and long-step primal-dual interior-point methods.

Both variants solve the full Newton system with the complementarity
right-hand side ``sigma*mu*e - XSe`` (exactly or inexactly) and move all
three variables by a common step ``alpha``.

* long-step: ``alpha`` is the sign-restricted fraction-to-the-boundary step.
* short-step: ``alpha = eta / (sqrt(n) (1 - sigma - kappa1))``, giving the
  ``1 - Theta(1/sqrt(n))`` per-iteration contraction of the narrow
  neighborhood, and never more than the fraction-to-the-boundary step.

Neighborhood membership is monitored (2-norm for short-step, inf-norm for
long-step) and logged, never enforced.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InfeasibleStart, NonInteriorStart, SingularSystem, StalledStep, ZeroGap
from .kkt import NewtonDirection, SolverPolicy, solve
from .problem import (
    Iterate,
    Program,
    Residuals,
    assemble_kkt_full,
    compute_residuals,
)
from .trace import SolveTrace, residual_fields, termination_flags, vec

log = logging.getLogger(__name__)

VARIANTS = ("short-step", "long-step")
MIN_ALPHA = 1e-12
DEGENERATE_MU = 1e-300


def default_sigma(tau: float, eps_tol: float) -> float:
    """Centering ``sigma = tau (1 - eps)``, strictly below ``tau``."""
    return tau * (1.0 - eps_tol)


@dataclass(frozen=True)
class IpmConfig:
    variant: str = "long-step"
    gamma: float = 0.1
    tau: float = 0.1
    eps_tol: float = 1e-4
    sigma: float = None  # defaults to tau * (1 - eps_tol)
    eta: float = 0.5
    max_iterations: int = 500
    solver_policy: SolverPolicy = field(default_factory=SolverPolicy)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", default_sigma(self.tau, self.eps_tol))
        for name in ("gamma", "tau", "sigma", "eta"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {val}")
        if self.eps_tol <= 0:
            raise ValueError("eps_tol must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


def neighborhood_distance(it: Iterate, variant: str) -> float:
    """``||XSe - mu e|| / mu`` in the variant's norm (2 or inf)."""
    it.require_interior()
    mu = it.mu
    if mu <= DEGENERATE_MU:
        raise ZeroGap(f"duality gap {mu} too small to normalize")
    dev = it.x * it.s - mu
    order = 2 if variant == "short-step" else np.inf
    return float(np.linalg.norm(dev, ord=order) / mu)


FTB_ROUNDING_MARGIN = 1e-14


def fraction_to_boundary(it: Iterate, direction: NewtonDirection, tau: float) -> float:
    """Largest ``alpha <= 1`` keeping ``x + alpha dx >= (1 - tau) x`` (same for s).

    Only components moving toward the boundary restrict the step.  The
    ratio is shrunk by ``FTB_ROUNDING_MARGIN`` so the inequality survives
    floating-point rounding of ``x + alpha dx``.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    v = np.concatenate([it.x, it.s])
    dv = np.concatenate([direction.delta_x, direction.delta_s])
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, tau * (1.0 - FTB_ROUNDING_MARGIN) * float((v[neg] / -dv[neg]).min()))


def complementarity_measures(it: Iterate, direction: NewtonDirection, sigma: float) -> dict:
    """Measured inexactness constants of a step.

    ``r = S dx + X ds - (sigma mu e - XSe)`` is the residual left in the
    complementarity row by the linear solve.
    """
    n = it.n
    mu = it.mu
    dx, ds = direction.delta_x, direction.delta_s
    r = it.s * dx + it.x * ds - (sigma * mu - it.x * it.s)
    e_r = float(np.sum(r))
    dxds = float(dx @ ds)
    return {
        "e_r": e_r,
        "dxds": dxds,
        "kappa1": abs(e_r) / (n * mu),
        "kappa2": abs(dxds) / (n * mu * mu),
    }


def step_record(k: int, phase: str, it: Iterate, res, direction: NewtonDirection,
                sigma: float, tau: float) -> dict:
    return {
        "k": k,
        "phase": phase,
        "mu": it.mu,
        "sigma": sigma,
        "tau": tau,
        **residual_fields(res),
        "inner_iters": direction.inner_iterations,
        "inexactness": direction.inexactness,
        "eta": direction.eta,
        "flags": list(direction.flags),
        "x": vec(it.x),
        "y": vec(it.y),
        "s": vec(it.s),
    }


def ipm_step(prog: Program, it: Iterate, cfg: IpmConfig, k: int = 0,
             res: Optional[Residuals] = None) -> tuple[Iterate, dict]:
    """One primal-dual Newton step; returns the new iterate and its record.

    ``res`` may carry the residuals already computed at ``it``.
    """
    t0 = time.perf_counter()
    sigma = cfg.sigma
    if res is None:
        res = compute_residuals(prog, it, convention="primal-dual")
    nbhd = neighborhood_distance(it, cfg.variant)
    if nbhd > cfg.gamma:
        log.debug("iteration %d: neighborhood distance %.3g exceeds gamma=%.3g", k, nbhd, cfg.gamma)
    sys = assemble_kkt_full(prog, it, sigma)
    direction = solve(sys, cfg.solver_policy, current_gap=it.mu)
    meas = complementarity_measures(it, direction, sigma)
    alpha_ftb = fraction_to_boundary(it, direction, cfg.tau)
    if cfg.variant == "long-step":
        alpha = alpha_ftb
    else:
        slack = 1.0 - sigma - meas["kappa1"]
        alpha_theory = min(1.0, cfg.eta / (math.sqrt(it.n) * slack)) if slack > 0 else 1.0
        alpha = min(alpha_theory, alpha_ftb)
    if alpha < MIN_ALPHA:
        raise StalledStep(f"step length {alpha:.3e} below {MIN_ALPHA}")
    new = Iterate(
        it.x + alpha * direction.delta_x,
        it.y + alpha * direction.delta_y,
        it.s + alpha * direction.delta_s,
    )
    record = step_record(k, "ipm", it, res, direction, sigma, cfg.tau)
    record.update(meas)
    record.update(
        alpha=alpha,
        alpha_ftb=alpha_ftb,
        mu_next=new.mu,
        contraction=new.mu / it.mu,
        nbhd_dist=nbhd,
        in_neighborhood=bool(nbhd <= cfg.gamma),
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return new, record


def ipm_solve(prog: Program, start: Iterate, cfg: IpmConfig) -> tuple[Iterate, SolveTrace]:
    """Iterate to Termination Test I or ``max_iterations``.

    Final status is ``converged``, ``max_iterations``, ``stalled`` or
    ``singular``; the trace is complete in every case.
    """
    start.require_interior(NonInteriorStart)
    t0 = time.perf_counter()
    trace = SolveTrace(
        algorithm=f"ipm-{cfg.variant}",
        meta={"variant": cfg.variant, "gamma": cfg.gamma, "tau": cfg.tau,
              "sigma": cfg.sigma, "eps_tol": cfg.eps_tol, "n": prog.n, "m": prog.m},
    )
    it = start
    status = "max_iterations"
    for k in range(cfg.max_iterations + 1):
        res = compute_residuals(prog, it, convention="primal-dual")
        if termination_flags(res, it.mu, cfg.eps_tol)["termination_test_I"] or it.mu < DEGENERATE_MU:
            status = "converged"
            break
        if k == cfg.max_iterations:
            break
        try:
            it, record = ipm_step(prog, it, cfg, k, res)
        except StalledStep as exc:
            log.info("stalled at iteration %d: %s", k, exc)
            status = "stalled"
            break
        except SingularSystem as exc:
            log.info("singular Newton system at iteration %d: %s", k, exc)
            status = "singular"
            break
        trace.append(record)
    res = compute_residuals(prog, it, convention="primal-dual")
    trace.finish(status, it, res, cfg.eps_tol, (time.perf_counter() - t0) * 1e3)
    return it, trace


def make_centered_start(prog: Program, scale: float = 1.0) -> Iterate:
    """``x = s = scale*e`` with ``x`` shifted onto ``Ax = b`` by least squares; ``y = 0``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    n, m = prog.n, prog.m
    x = np.full(n, float(scale))
    if m:
        A = prog.A
        shift = A.T @ np.linalg.solve(A @ A.T, A @ x - prog.b)
        x = x - shift
    floor = 0.1 * scale
    if np.any(x < floor):
        raise InfeasibleStart(
            f"least-squares start violates the positivity floor {floor:g}: min x = {x.min():.3g}"
        )
    return Iterate(x, np.zeros(m), np.full(n, float(scale)))
