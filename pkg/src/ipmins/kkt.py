"""Direct and right-preconditioned Krylov solves of KKT systems.

The direct LU solve is the exact oracle.  The iterative path is a
restarted GMRES applied to ``K P^{-1} u = r`` with ``dz = P^{-1} u``; right
preconditioning keeps the monitored residual equal to the true residual of
the returned direction, so the inexactness contract can be enforced.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    MaxInnerIterations,
    SingularPreconditioner,
    SingularSystem,
)
from .problem import KktSystem

log = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14
DIRECT_INEXACTNESS_CAP = 1e-10
STAGNATION_RTOL = 1e-14

MODES = ("direct", "iterative")
FORCING = ("constant", "adaptive")
PRECONDITIONERS = ("none", "jacobi", "schur")


def default_delta_max(sigma: float, rho: float = 0.5, c_gamma: float = 1.0) -> float:
    """Inexactness cap ``rho (1 - sigma) / c_gamma``, clipped below 1."""
    return min(rho * (1.0 - sigma) / c_gamma, 0.99)


@dataclass(frozen=True)
class SolverPolicy:
    mode: str = "direct"
    delta_max: float = 0.45
    forcing: str = "adaptive"
    preconditioner: str = "schur"
    max_inner: int = 200
    restart: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"solver mode must be one of {MODES}, got {self.mode!r}")
        if self.forcing not in FORCING:
            raise ValueError(f"forcing must be one of {FORCING}, got {self.forcing!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(
                f"preconditioner must be one of {PRECONDITIONERS}, got {self.preconditioner!r}"
            )
        if not 0.0 <= self.delta_max < 1.0:
            raise ValueError(f"delta_max must lie in [0, 1), got {self.delta_max}")
        if self.max_inner < 1 or self.restart < 1:
            raise ValueError("max_inner and restart must be positive")

    def eta(self, current_gap: float) -> float:
        """Forcing value for this solve."""
        if self.forcing == "constant":
            return self.delta_max
        return min(self.delta_max, math.sqrt(max(current_gap, 0.0)))


@dataclass(frozen=True)
class NewtonDirection:
    delta_x: np.ndarray
    delta_y: np.ndarray
    delta_s: np.ndarray
    inexactness: float
    inner_iterations: int
    eta: float = 0.0
    flags: tuple = ()

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.delta_x, self.delta_y, self.delta_s])


def _nrm(v: np.ndarray) -> float:
    return math.sqrt(float(v @ v))


def relative_residual(sys: KktSystem, z: np.ndarray) -> float:
    bnorm = _nrm(sys.rhs)
    if bnorm == 0.0:
        return _nrm(sys.matrix @ z)
    return _nrm(sys.matrix @ z - sys.rhs) / bnorm


def _direction(sys: KktSystem, z: np.ndarray, inner: int, eta: float, flags=()) -> NewtonDirection:
    dx, dy, ds = sys.split(z)
    return NewtonDirection(
        delta_x=dx.copy(),
        delta_y=dy.copy(),
        delta_s=ds.copy(),
        inexactness=relative_residual(sys, z),
        inner_iterations=inner,
        eta=eta,
        flags=tuple(flags),
    )


def _lu(K: np.ndarray):
    with warnings.catch_warnings():
        # singularity is reported below through the pivot check
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(K, check_finite=True)
    u = np.abs(np.diag(lu))
    big = u.max() if u.size else 0.0
    bad = np.flatnonzero(u <= PIVOT_RTOL * big) if big > 0 else np.arange(u.size)
    if bad.size:
        raise SingularSystem(f"singular KKT matrix (pivot {int(bad[0])})", pivot=int(bad[0]))
    return lu, piv


def solve_direct(sys: KktSystem) -> NewtonDirection:
    """Exact solve by partial-pivoting LU; counted as one inner solve."""
    if sys.rhs.shape != (sys.size,) or sys.matrix.shape != (sys.size, sys.size):
        raise DimensionMismatch(f"matrix {sys.matrix.shape} vs rhs {sys.rhs.shape}")
    factors = _lu(sys.matrix)
    z = sla.lu_solve(factors, sys.rhs)
    flags = []
    if relative_residual(sys, z) > DIRECT_INEXACTNESS_CAP:
        # one step of iterative refinement
        z = z + sla.lu_solve(factors, sys.rhs - sys.matrix @ z)
        if relative_residual(sys, z) > DIRECT_INEXACTNESS_CAP:
            flags.append("direct_inaccurate")
    return _direction(sys, z, 1, 0.0, flags)


@dataclass(frozen=True)
class Preconditioner:
    """Applies ``P^{-1}`` to a vector."""

    kind: str
    apply: Callable[[np.ndarray], np.ndarray] = field(repr=False)


def _schur_apply(sys: KktSystem) -> Callable[[np.ndarray], np.ndarray]:
    n, m, A = sys.n, sys.m, sys.A
    if sys.structure == "full-3x3":
        # P = K with -Q replaced by -diag(Q); eliminate ds then dx
        d = np.diag(sys.hessian) + sys.s / sys.x
    else:
        d = np.diag(sys.hessian).copy()
    scale = max(np.max(np.abs(d)), 1.0)
    if np.any(np.abs(d) <= 1e-14 * scale):
        raise SingularPreconditioner("diagonal of the (1,1) block has zero entries")
    dinv = 1.0 / d
    sc = (A * dinv) @ A.T
    if m == 1:
        # scalar complement; skips the LU machinery on single-row problems
        pivot = float(sc[0, 0])
        if abs(pivot) <= PIVOT_RTOL * float(np.abs(A * A * dinv).sum()):
            raise SingularPreconditioner("Schur complement is singular")

        def solve_schur(v):
            return v / pivot

    elif m:
        try:
            sc_factors = _lu(sc)
        except SingularSystem as exc:
            raise SingularPreconditioner(f"Schur complement is singular: {exc}") from exc

        def solve_schur(v):
            return sla.lu_solve(sc_factors, v)

    else:

        def solve_schur(v):
            return np.zeros(0)

    if sys.structure == "full-3x3":
        x, s = sys.x, sys.s

        def apply(v):
            r1, r2, r3 = v[:n], v[n : n + m], v[n + m :]
            g = r1 - r3 / x
            dy = solve_schur(r2 + A @ (dinv * g))
            dx = dinv * (A.T @ dy - g)
            ds = (r3 - s * dx) / x
            return np.concatenate([dx, dy, ds])

    else:

        def apply(v):
            r1, r2 = v[:n], v[n:]
            dy = solve_schur(A @ (dinv * r1) - r2)
            dx = dinv * (r1 - A.T @ dy)
            return np.concatenate([dx, dy])

    return apply


def make_preconditioner(sys: KktSystem, kind: str) -> Preconditioner:
    if kind == "none":
        return Preconditioner("none", lambda v: v)
    if kind == "jacobi":
        d = np.diag(sys.matrix).copy()
        d[d == 0.0] = 1.0
        inv = 1.0 / d
        return Preconditioner("jacobi", lambda v: inv * v)
    if kind == "schur":
        return Preconditioner("schur", _schur_apply(sys))
    raise ValueError(f"unknown preconditioner kind {kind!r}")


def _gmres(K, apply_pinv, b, tol_abs, restart, max_inner):
    """Right-preconditioned restarted GMRES from a zero initial guess.

    Returns ``(z, inner_iterations, status)`` with status one of
    ``converged``, ``max_inner``, ``stagnated``.
    """
    size = b.shape[0]
    z = np.zeros(size)
    r = b.copy()
    beta = _nrm(r)
    total = 0
    while True:
        if beta <= tol_abs:
            return z, total, "converged"
        if total >= max_inner:
            return z, total, "max_inner"
        k_max = min(restart, max_inner - total, size)
        V = np.zeros((k_max + 1, size))
        R = np.zeros((k_max + 1, k_max))
        cs = np.zeros(k_max)
        sn = np.zeros(k_max)
        g = np.zeros(k_max + 1)
        g[0] = beta
        V[0] = r / beta
        steps = 0
        for j in range(k_max):
            w = K @ apply_pinv(V[j])
            total += 1
            steps = j + 1
            wnorm0 = _nrm(w)
            for _ in range(2):  # Gram-Schmidt with one reorthogonalization pass
                h = V[: j + 1] @ w
                w = w - V[: j + 1].T @ h
                R[: j + 1, j] += h
            hnext = _nrm(w)
            for i in range(j):
                t = cs[i] * R[i, j] + sn[i] * R[i + 1, j]
                R[i + 1, j] = -sn[i] * R[i, j] + cs[i] * R[i + 1, j]
                R[i, j] = t
            denom = math.hypot(R[j, j], hnext)
            if denom == 0.0:
                raise SingularSystem("Krylov breakdown: zero Hessenberg column")
            cs[j], sn[j] = R[j, j] / denom, hnext / denom
            R[j, j] = denom
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            if hnext <= 1e-14 * max(wnorm0, 1e-300):
                break  # invariant subspace reached
            V[j + 1] = w / hnext
            if abs(g[j + 1]) <= tol_abs:
                break
        if steps == 1:
            coeffs = g[:1] / R[0, 0]
        else:
            coeffs = sla.solve_triangular(R[:steps, :steps], g[:steps])
        z = z + apply_pinv(V[:steps].T @ coeffs)
        r = b - K @ z
        new_beta = _nrm(r)
        if new_beta > tol_abs and new_beta >= beta * (1.0 - STAGNATION_RTOL):
            return z, total, "stagnated"
        beta = new_beta


def solve_iterative(
    sys: KktSystem,
    policy: SolverPolicy,
    current_gap: float = math.inf,
    eta: Optional[float] = None,
) -> NewtonDirection:
    """Solve to ``||K dz - rhs|| <= eta ||rhs||``.

    ``eta`` defaults to the policy's forcing value at ``current_gap``.
    Raises :class:`MaxInnerIterations` (with the direction attached) when the
    budget runs out; stagnation falls back to :func:`solve_direct`.
    """
    eta_k = policy.eta(current_gap) if eta is None else float(eta)
    bnorm = _nrm(sys.rhs)
    if bnorm == 0.0:
        return _direction(sys, np.zeros(sys.size), 0, eta_k)
    flags = []
    try:
        pre = make_preconditioner(sys, policy.preconditioner)
    except SingularPreconditioner as exc:
        log.debug("preconditioner unavailable (%s); using identity", exc)
        pre = make_preconditioner(sys, "none")
        flags.append("preconditioner_fallback")
    z, inner, status = _gmres(
        sys.matrix, pre.apply, sys.rhs, eta_k * bnorm, policy.restart, policy.max_inner
    )
    if status == "stagnated":
        log.debug("Krylov stagnation after %d inner iterations; direct fallback", inner)
        exact = solve_direct(sys)
        return replace(
            exact,
            inner_iterations=inner + 1,
            eta=eta_k,
            flags=tuple(flags) + ("krylov_stagnation_fallback",) + exact.flags,
        )
    direction = _direction(sys, z, inner, eta_k, flags)
    if status == "max_inner":
        direction = replace(direction, flags=direction.flags + ("max_inner",))
        raise MaxInnerIterations(
            f"inexactness {direction.inexactness:.3e} above eta={eta_k:.3e} after {inner} "
            "inner iterations",
            direction=direction,
        )
    return direction


def solve(sys: KktSystem, policy: SolverPolicy, current_gap: float = math.inf,
          eta: Optional[float] = None) -> NewtonDirection:
    """Dispatch on ``policy.mode``; a flagged max-inner direction is returned."""
    if policy.mode == "direct":
        return solve_direct(sys)
    try:
        return solve_iterative(sys, policy, current_gap, eta)
    except MaxInnerIterations as exc:
        log.debug("%s", exc)
        return exc.direction
