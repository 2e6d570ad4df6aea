"""Improved Inexact-Newton-Smart (INS) solver.

Interior phase: the regularized 2x2 system

    [H + X^{-1} S + theta I   A^T] [dx]   [-(grad f + A^T y - s) + X^{-1}(sigma mu e - XSe)]
    [A                        0  ] [dy] = [-(A x - b)                                      ]

with ``ds`` recovered from the complementarity row and a scaled
fraction-to-the-boundary step.  ``H`` is the exact Hessian or a damped BFGS
matrix.

Equality phase (ECNP): inexact Newton on ``F(x, y) = [grad f + A^T y; Ax - b]``
with a forcing condition and Armijo backtracking on ``1/2 ||F||^2``; no
positivity safeguard.  Used to finish once no bound is near-active.

Multipliers follow the Lagrangian convention ``grad f + A^T y - s = 0``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, MissingHessian, NonInteriorStart, SingularSystem, StalledStep
from .ipm import (
    DEGENERATE_MU,
    MIN_ALPHA,
    complementarity_measures,
    fraction_to_boundary,
    neighborhood_distance,
    step_record,
    default_sigma,
)
from .kkt import SolverPolicy, solve
from .problem import (
    Iterate,
    KktSystem,
    NonlinearProgram,
    Program,
    QuadraticProgram,
    Residuals,
    assemble_kkt_ins,
    compute_residuals,
    recover_delta_s,
)
from .trace import SolveTrace, termination_flags, vec

log = logging.getLogger(__name__)

HESSIAN_MODES = ("exact", "bfgs")
CURVATURE_FRACTION = 0.2
DAMPING_TARGET = 0.8
MIN_STEP_NORM = 1e-14
ECNP_ACTIVITY_FACTOR = 10.0


def _ins_policy() -> SolverPolicy:
    return SolverPolicy(mode="iterative", forcing="adaptive", preconditioner="schur")


@dataclass(frozen=True)
class InsConfig:
    theta: float = 0.1
    alpha_scale: float = 0.1
    tau: float = 0.1
    eps_tol: float = 1e-4
    sigma: float = None  # defaults to tau * (1 - eps_tol)
    gamma: float = 0.1
    max_iterations: int = 5000
    max_inner_total: int = 10**7
    hessian_mode: str = "exact"
    ecnp: bool = True
    ecnp_max_iterations: int = 50
    beta: float = 0.5
    c_armijo: float = 1e-4
    max_backtracks: int = 40
    solver_policy: SolverPolicy = field(default_factory=_ins_policy)

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", default_sigma(self.tau, self.eps_tol))
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if not 0.1 <= self.alpha_scale <= 1.0:
            raise ValueError(f"alpha_scale must lie in [0.1, 1.0], got {self.alpha_scale}")
        for name in ("tau", "sigma", "gamma", "beta", "c_armijo"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {val}")
        if self.hessian_mode not in HESSIAN_MODES:
            raise ValueError(f"hessian_mode must be one of {HESSIAN_MODES}")
        if self.eps_tol <= 0:
            raise ValueError("eps_tol must be positive")
        if self.max_iterations < 0 or self.max_backtracks < 0 or self.ecnp_max_iterations < 0:
            raise ValueError("iteration limits must be non-negative")


# ------------------------------------------------------------------ BFGS


@dataclass(frozen=True)
class BfgsState:
    H: np.ndarray
    last_x: np.ndarray
    last_grad: np.ndarray
    damping_events: int = 0
    updates: int = 0


def bfgs_init(x: np.ndarray, grad: np.ndarray, H0: Optional[np.ndarray] = None) -> BfgsState:
    n = x.shape[0]
    H = np.eye(n) if H0 is None else np.array(H0, dtype=float)
    return BfgsState(H=H, last_x=np.array(x, dtype=float), last_grad=np.array(grad, dtype=float))


def bfgs_update(state: BfgsState, x_new: np.ndarray, grad_new: np.ndarray) -> BfgsState:
    """BFGS update of the Hessian approximation with Powell damping.

    When ``y^T s < 0.2 s^T H s`` the gradient change is replaced by
    ``phi y + (1 - phi) H s`` with ``phi = 0.8 sHs / (sHs - y^T s)``, which
    keeps ``H`` positive definite.
    """
    step = x_new - state.last_x
    if np.linalg.norm(step) <= MIN_STEP_NORM:
        return state
    ychange = grad_new - state.last_grad
    H = state.H
    Hs = H @ step
    sHs = float(step @ Hs)
    if not sHs > MIN_STEP_NORM * float(step @ step):
        return state  # H has lost curvature along the step
    ys = float(ychange @ step)
    damped = ys < CURVATURE_FRACTION * sHs
    if damped:
        phi = DAMPING_TARGET * sHs / (sHs - ys)
        ychange = phi * ychange + (1.0 - phi) * Hs
        ys = float(ychange @ step)
    H_new = H - np.outer(Hs, Hs) / sHs + np.outer(ychange, ychange) / ys
    H_new = 0.5 * (H_new + H_new.T)
    if not np.all(np.isfinite(H_new)):
        return state
    return BfgsState(
        H=H_new,
        last_x=np.array(x_new, dtype=float),
        last_grad=np.array(grad_new, dtype=float),
        damping_events=state.damping_events + int(damped),
        updates=state.updates + 1,
    )


# ------------------------------------------------------------- interior


def _as_nlp(prog: Program) -> NonlinearProgram:
    return prog.as_nlp() if isinstance(prog, QuadraticProgram) else prog


def ins_step(
    prog: Program,
    it: Iterate,
    cfg: InsConfig,
    bfgs: Optional[BfgsState] = None,
    k: int = 0,
    res: Optional[Residuals] = None,
) -> tuple[Iterate, Optional[BfgsState], dict]:
    """One interior step; ``res`` may carry the Lagrangian residuals at ``it``."""
    t0 = time.perf_counter()
    nlp = _as_nlp(prog)
    sigma = cfg.sigma
    H_override = None
    if cfg.hessian_mode == "bfgs":
        if bfgs is None:
            raise ValueError("hessian_mode='bfgs' needs a BfgsState")
        H_override = bfgs.H
    if res is None:
        res = compute_residuals(nlp, it, convention="lagrangian")
    nbhd = neighborhood_distance(it, "long-step")
    sys = assemble_kkt_ins(nlp, it, sigma, cfg.theta, H_override)
    direction = solve(sys, cfg.solver_policy, current_gap=it.mu)
    direction = replace(direction, delta_s=recover_delta_s(it, direction.delta_x, sigma))
    meas = complementarity_measures(it, direction, sigma)
    alpha_ftb = fraction_to_boundary(it, direction, cfg.tau)
    alpha = cfg.alpha_scale * alpha_ftb
    if alpha < MIN_ALPHA:
        raise StalledStep(f"step length {alpha:.3e} below {MIN_ALPHA}")
    new = Iterate(
        it.x + alpha * direction.delta_x,
        it.y + alpha * direction.delta_y,
        it.s + alpha * direction.delta_s,
    )
    if bfgs is not None:
        bfgs = bfgs_update(bfgs, new.x, nlp.gradient(new.x))
    record = step_record(k, "ins", it, res, direction, sigma, cfg.tau)
    record.update(meas)
    record.update(
        alpha=alpha,
        alpha_ftb=alpha_ftb,
        theta=cfg.theta,
        alpha_scale=cfg.alpha_scale,
        mu_next=new.mu,
        contraction=new.mu / it.mu,
        nbhd_dist=nbhd,
        in_neighborhood=bool(nbhd <= cfg.gamma),
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return new, bfgs, record


# ------------------------------------------------------------------ ECNP


@dataclass(frozen=True)
class EcnpState:
    F_norm: float
    merit: float
    eta_k: float

    @classmethod
    def at(cls, F: np.ndarray, eta_k: float) -> "EcnpState":
        nrm = float(np.linalg.norm(F))
        return cls(F_norm=nrm, merit=0.5 * nrm * nrm, eta_k=eta_k)


def ecnp_residual(
    prog: Program,
    x: np.ndarray,
    y: np.ndarray,
    theta: float = 0.0,
    H: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``F = [grad f + A^T y; Ax - b]`` and ``J = [H + theta I, A^T; A, 0]``.

    ``H`` defaults to the exact Hessian (linear constraints add nothing to
    the Lagrangian Hessian).
    """
    nlp = _as_nlp(prog)
    n, m = nlp.n, nlp.m
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != (n,) or y.shape != (m,):
        raise DimensionMismatch(f"expected x in R^{n}, y in R^{m}; got {x.shape}, {y.shape}")
    F = np.concatenate([nlp.gradient(x) + nlp.A.T @ y, nlp.A @ x - nlp.b])
    if H is None:
        if not nlp.has_hessian:
            raise MissingHessian("ECNP needs a Hessian callback or an explicit H")
        H = np.asarray(nlp.hessian(x), dtype=float)
    J = np.zeros((n + m, n + m))
    J[:n, :n] = H + theta * np.eye(n)
    J[:n, n:] = nlp.A.T
    J[n:, :n] = nlp.A
    return F, J


def _merit(nlp: NonlinearProgram, x, y) -> float:
    F = np.concatenate([nlp.gradient(x) + nlp.A.T @ y, nlp.A @ x - nlp.b])
    return 0.5 * float(F @ F)


def _ecnp_eta(policy: SolverPolicy, F_norm: float) -> float:
    if policy.mode == "direct":
        return 0.0
    if policy.forcing == "constant":
        return policy.delta_max
    return min(policy.delta_max, F_norm)


def ecnp_solve(
    prog: Program,
    x0: np.ndarray,
    y0: np.ndarray,
    cfg: InsConfig,
    eps_tol: Optional[float] = None,
    max_iterations: Optional[int] = None,
    bfgs: Optional[BfgsState] = None,
    k0: int = 0,
) -> tuple[np.ndarray, np.ndarray, SolveTrace]:
    """Inexact Newton with Armijo backtracking on ``F(x, y) = 0``.

    The forcing term is ``delta_max`` (constant schedule) or
    ``min(delta_max, ||F_k||)`` (adaptive schedule); a direct policy solves
    exactly.  Status is ``converged``, ``max_iterations`` or
    ``line_search_failure``; the last iterate is always returned.
    """
    nlp = _as_nlp(prog)
    eps = cfg.eps_tol if eps_tol is None else eps_tol
    kmax = cfg.ecnp_max_iterations if max_iterations is None else max_iterations
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float).reshape(-1)
    t0 = time.perf_counter()
    trace = SolveTrace(algorithm="ecnp", meta={"theta": cfg.theta, "eps_tol": eps})
    status = "max_iterations"
    for k in range(kmax + 1):
        tk = time.perf_counter()
        H = bfgs.H if (bfgs is not None and cfg.hessian_mode == "bfgs") else None
        F, J = ecnp_residual(nlp, x, y, cfg.theta, H)
        state = EcnpState.at(F, _ecnp_eta(cfg.solver_policy, float(np.linalg.norm(F))))
        if state.F_norm <= eps:
            status = "converged"
            break
        if k == kmax:
            break
        sys = KktSystem("ecnp", J, -F, J[: nlp.n, : nlp.n], nlp.A, nlp.n, nlp.m)
        direction = solve(sys, cfg.solver_policy, eta=state.eta_k)
        dx, dy = direction.delta_x, direction.delta_y
        Jd = J @ np.concatenate([dx, dy])
        forcing_residual = float(np.linalg.norm(Jd + F))
        required = cfg.c_armijo * float(Jd @ Jd)
        alpha, accepted, backtracks = 1.0, False, 0
        for backtracks in range(cfg.max_backtracks + 1):
            alpha = cfg.beta**backtracks
            trial = _merit(nlp, x + alpha * dx, y + alpha * dy)
            if trial <= state.merit - alpha * required:
                accepted = True
                break
        record = {
            "k": k0 + k,
            "phase": "ecnp",
            "F_norm": state.F_norm,
            "merit": state.merit,
            "eta": state.eta_k,
            "forcing_residual": forcing_residual,
            "inexactness": direction.inexactness,
            "inner_iters": direction.inner_iterations,
            "alpha": alpha if accepted else 0.0,
            "backtracks": backtracks,
            "armijo_required": alpha * required,
            "flags": list(direction.flags),
            "x": vec(x),
            "y": vec(y),
        }
        if not accepted:
            record["wall_ms"] = (time.perf_counter() - tk) * 1e3
            trace.append(record)
            status = "line_search_failure"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        record["merit_next"] = trial
        if bfgs is not None:
            bfgs = bfgs_update(bfgs, x, nlp.gradient(x))
        record["wall_ms"] = (time.perf_counter() - tk) * 1e3
        trace.append(record)
    F, _ = ecnp_residual(nlp, x, y, cfg.theta, np.zeros((nlp.n, nlp.n)))
    trace.status = status
    trace.total_time_ms = (time.perf_counter() - t0) * 1e3
    trace.final = {"x": vec(x), "y": vec(y), "F_norm": float(np.linalg.norm(F))}
    trace.meta["bfgs"] = bfgs
    return x, y, trace


def positivity_inactive(it: Iterate, eps_tol: float) -> bool:
    """No bound is near-active: every ``x_j`` is well above and every ``s_j`` well below ``10 eps``."""
    level = ECNP_ACTIVITY_FACTOR * eps_tol
    return bool(np.all(it.x > level) and np.all(it.s < level))


def _try_ecnp(nlp, it, cfg, bfgs, k0):
    """Run the equality phase from ``it``; return the finished iterate or ``None``."""
    x, y, sub = ecnp_solve(nlp, it.x, it.y, cfg, eps_tol=0.1 * cfg.eps_tol, bfgs=bfgs, k0=k0)
    if sub.status != "converged":
        return None, sub
    if np.any(x <= 0) or any(min(r["x"]) <= 0 for r in sub.records):
        return None, sub
    # bound multipliers of an interior solution vanish; shrink s below the tolerance
    scale = min(1.0, 0.1 * cfg.eps_tol / max(np.max(it.s), float(x @ it.s) / it.n))
    return Iterate(x, y, it.s * scale), sub


def ins_solve(prog: Program, start: Iterate, cfg: InsConfig) -> tuple[Iterate, SolveTrace]:
    """Run INS steps to Termination Test I or ``max_iterations``.

    When the ECNP is enabled and no bound is near-active, one attempt is
    made to finish with the equality phase; a result that leaves the
    positive orthant or fails to converge is discarded.
    """
    start.require_interior(NonInteriorStart)
    nlp = _as_nlp(prog)
    if cfg.hessian_mode == "exact" and not nlp.has_hessian:
        raise MissingHessian("hessian_mode='exact' needs a Hessian callback")
    t0 = time.perf_counter()
    trace = SolveTrace(
        algorithm="ins-bfgs" if cfg.hessian_mode == "bfgs" else "ins",
        meta={"theta": cfg.theta, "alpha_scale": cfg.alpha_scale, "tau": cfg.tau,
              "sigma": cfg.sigma, "eps_tol": cfg.eps_tol, "hessian_mode": cfg.hessian_mode,
              "n": nlp.n, "m": nlp.m, "phase_switches": []},
    )
    bfgs = bfgs_init(start.x, nlp.gradient(start.x)) if cfg.hessian_mode == "bfgs" else None
    it = start
    status = "max_iterations"
    ecnp_available = cfg.ecnp
    k = inner_total = 0
    while True:
        res = compute_residuals(nlp, it, convention="lagrangian")
        if termination_flags(res, it.mu, cfg.eps_tol)["termination_test_I"] or it.mu < DEGENERATE_MU:
            status = "converged"
            break
        if k >= cfg.max_iterations:
            break
        if inner_total >= cfg.max_inner_total:
            status = "max_inner_total"
            break
        if ecnp_available and positivity_inactive(it, cfg.eps_tol):
            ecnp_available = False
            finished, sub = _try_ecnp(nlp, it, cfg, bfgs, k)
            if finished is not None:
                for rec in sub.records:
                    trace.append(rec)
                inner_total += sub.inner_iterations
                trace.meta["phase_switches"].append({"k": k, "to": "ecnp", "accepted": True})
                k += sub.iterations
                it = finished
                continue
            trace.meta["phase_switches"].append({"k": k, "to": "ecnp", "accepted": False})
        try:
            it, bfgs, record = ins_step(nlp, it, cfg, bfgs, k, res)
        except StalledStep as exc:
            log.info("stalled at iteration %d: %s", k, exc)
            status = "stalled"
            break
        except SingularSystem as exc:
            log.info("singular Newton system at iteration %d: %s", k, exc)
            status = "singular"
            break
        trace.append(record)
        inner_total += record["inner_iters"]
        k += 1
    res = compute_residuals(nlp, it, convention="lagrangian")
    if bfgs is not None:
        trace.meta["bfgs_damping_events"] = bfgs.damping_events
    trace.finish(status, it, res, cfg.eps_tol, (time.perf_counter() - t0) * 1e3)
    return it, trace
