"""Built-in problem catalog and seeded synthetic families.

Families
--------
``simplex-lp``
    ``min c^T x`` on the unit simplex, ``c ~ U[0.5, 1.5]``; optimum is the
    vertex at the smallest cost.
``simplex-qp``
    ``min 1/2 x^T D x + c^T x`` on the unit simplex with ``D`` diagonal,
    ``D_jj, c_j ~ U[0.5, 1.5]``; optimum from :func:`active_set_qp`.
``scaled-simplex-qp``
    Same data law on ``sum(x) = n`` so that ``x = e`` is feasible for every
    ``n``.  Coefficients come from per-array child streams, so the instance
    of size ``n`` is a prefix of every larger one.

The two simplex families are a reconstruction; nothing beyond ``x_opt``
summing to one is known about the original synthetic set.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import UnsupportedFamily
from .problem import NonlinearProgram, Program, QuadraticProgram

ORACLE_MAX_N = 16
FAMILIES = ("simplex-lp", "simplex-qp", "scaled-simplex-qp")


@dataclass(frozen=True)
class KnownOptimum:
    x: Optional[np.ndarray]
    f: Optional[float]
    y: Optional[np.ndarray] = None  # primal-dual convention

    def to_dict(self) -> dict:
        return {
            "x": None if self.x is None else self.x.tolist(),
            "f": self.f,
            "y": None if self.y is None else self.y.tolist(),
        }


@dataclass(frozen=True)
class SampleSpec:
    sample_id: int
    seed: int
    family: str = "simplex-qp"
    n_variables: int = 2
    n_constraints: int = 1


def active_set_qp(prog: QuadraticProgram, tol: float = 1e-10) -> KnownOptimum:
    """Exhaustive active-set solve of a convex QP; exact up to rounding.

    Every support ``S`` is tried: the equality-constrained problem on ``S``
    is solved and kept if ``x_S >= 0`` and the reduced costs off ``S`` are
    nonnegative.  Valid for ``n <= 16``.
    """
    n, m = prog.n, prog.m
    if n > ORACLE_MAX_N:
        raise ValueError(f"active-set oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    Q, A, b, c = prog.Q, prog.A, prog.b, prog.c
    best = None
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            S = list(support)
            k = len(S)
            K = np.zeros((k + m, k + m))
            K[:k, :k] = Q[np.ix_(S, S)]
            K[:k, k:] = -A[:, S].T
            K[k:, :k] = A[:, S]
            rhs = np.concatenate([-c[S], b])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)) or np.linalg.norm(K @ sol - rhs) > 1e-9 * (1 + np.linalg.norm(rhs)):
                continue
            x = np.zeros(n)
            x[S] = sol[:k]
            y = sol[k:]
            s = Q @ x + c - A.T @ y
            if x.min() < -tol or s.min() < -tol:
                continue
            f = prog.objective(x)
            if best is None or f < best.f - 1e-14:
                best = KnownOptimum(np.clip(x, 0.0, None), f, y)
    if best is None:
        raise ValueError("no KKT point found; problem infeasible or unbounded")
    return best


def _simplex(n: int, rhs: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    return np.ones((1, n)), np.array([rhs])


def generate_sample(spec: SampleSpec) -> tuple[Program, KnownOptimum]:
    """Build the instance for ``spec``; bit-identical for equal specs."""
    n = spec.n_variables
    if spec.family in CATALOG:
        return CATALOG[spec.family]()
    if spec.family not in FAMILIES:
        raise UnsupportedFamily(f"unknown family {spec.family!r}")
    if spec.n_constraints != 1:
        raise UnsupportedFamily(f"{spec.family} has exactly one constraint")
    if n < 1:
        raise UnsupportedFamily("n_variables must be positive")
    name = f"{spec.family}-{spec.sample_id}"
    if spec.family == "simplex-lp":
        rng = np.random.default_rng(spec.seed)
        c = rng.uniform(0.5, 1.5, size=n)
        while np.sum(c == c.min()) > 1:  # measure-zero tie
            c = rng.uniform(0.5, 1.5, size=n)
        A, b = _simplex(n)
        prog = QuadraticProgram(np.zeros((n, n)), A, b, c, name=name)
        j = int(np.argmin(c))
        x = np.zeros(n)
        x[j] = 1.0
        return prog, KnownOptimum(x, float(c[j]), np.array([c[j]]))
    if spec.family == "simplex-qp":
        rng = np.random.default_rng(spec.seed)
        d = rng.uniform(0.5, 1.5, size=n)
        c = rng.uniform(0.5, 1.5, size=n)
        A, b = _simplex(n)
        prog = QuadraticProgram(np.diag(d), A, b, c, name=name)
        opt = active_set_qp(prog) if n <= ORACLE_MAX_N else KnownOptimum(None, None)
        return prog, opt
    d_stream, c_stream = np.random.SeedSequence(spec.seed).spawn(2)
    d = np.random.default_rng(d_stream).uniform(0.5, 1.5, size=n)
    c = np.random.default_rng(c_stream).uniform(0.5, 1.5, size=n)
    A, b = _simplex(n, float(n))
    prog = QuadraticProgram(np.diag(d), A, b, c, name=name)
    opt = active_set_qp(prog) if n <= ORACLE_MAX_N else KnownOptimum(None, None)
    return prog, opt


# ---------------------------------------------------------------- catalog


def _lp_simplex_n2():
    prog = QuadraticProgram(np.zeros((2, 2)), [[1.0, 1.0]], [1.0], [1.0, 2.0], name="lp-simplex-n2")
    return prog, KnownOptimum(np.array([1.0, 0.0]), 1.0, np.array([1.0]))


def _simplex_qp(n: int, curvature: float):
    def build():
        prog = QuadraticProgram(
            curvature * np.eye(n), np.ones((1, n)), [1.0], np.zeros(n), name=f"simplex-qp-n{n}"
        )
        x = np.full(n, 1.0 / n)
        return prog, KnownOptimum(x, 0.5 * curvature / n, np.array([curvature / n]))

    return build


def _qp_coupled_n3():
    Q = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])
    prog = QuadraticProgram(Q, [[1.0, 1.0, 1.0]], [1.0], [-0.2, 0.1, 0.0], name="qp-coupled-n3")
    return prog, active_set_qp(prog)


def _qp_two_rows_n5():
    Q = np.diag([1.0, 2.0, 0.5, 1.5, 1.0])
    Q[0, 1] = Q[1, 0] = 0.3
    A = np.array([[1.0, 1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 0.5, 0.0, 2.0]])
    prog = QuadraticProgram(Q, A, [2.0, 1.0], [0.3, -0.2, 0.1, 0.4, -0.1], name="qp-two-rows-n5")
    return prog, active_set_qp(prog)


def _qp_boundary_n4():
    Q = np.diag([1.0, 1.0, 2.0, 0.5])
    prog = QuadraticProgram(Q, np.ones((1, 4)), [1.0], [0.0, 0.1, 1.5, 2.0], name="qp-boundary-n4")
    return prog, active_set_qp(prog)


def _coupling_matrix(n: int) -> np.ndarray:
    M = np.eye(n)
    for j in range(n - 1):
        M[j, j + 1] = M[j + 1, j] = 0.3
    return M


def _quartic(n: int):
    """``sum x_j^4 / 4 + 1/2 x^T M x - w^T x`` on the simplex."""
    M = _coupling_matrix(n)
    w = np.linspace(1.0, 0.4, n)

    def build():
        prog = NonlinearProgram(
            objective=lambda x: float(np.sum(x**4) / 4 + 0.5 * x @ M @ x - w @ x),
            gradient=lambda x: x**3 + M @ x - w,
            hessian=lambda x: np.diag(3 * x**2) + M,
            A=np.ones((1, n)),
            b=[1.0],
            name=f"quartic-n{n}",
        )
        return prog, KnownOptimum(None, None)

    return build


def _expsum(n: int):
    """``sum exp(a_j x_j) + 1/2 x^T M x - w^T x`` on the simplex."""
    a = np.linspace(0.5, 1.5, n)
    w = np.linspace(2.0, 1.0, n)
    M = 0.5 * _coupling_matrix(n)

    def build():
        prog = NonlinearProgram(
            objective=lambda x: float(np.sum(np.exp(a * x)) + 0.5 * x @ M @ x - w @ x),
            gradient=lambda x: a * np.exp(a * x) + M @ x - w,
            hessian=lambda x: np.diag(a * a * np.exp(a * x)) + M,
            A=np.ones((1, n)),
            b=[1.0],
            name=f"expsum-n{n}",
        )
        return prog, KnownOptimum(None, None)

    return build


def _rosenbrock_eq():
    """Rosenbrock valley cut by ``x1 + x2 + x3 = 1.5``."""

    def f(x):
        return float((1 - x[0]) ** 2 + 10 * (x[1] - x[0] ** 2) ** 2 + (x[2] - 0.5) ** 2 + 0.5 * x[1] ** 2)

    def grad(x):
        return np.array([
            -2 * (1 - x[0]) - 40 * x[0] * (x[1] - x[0] ** 2),
            20 * (x[1] - x[0] ** 2) + x[1],
            2 * (x[2] - 0.5),
        ])

    def hess(x):
        return np.array([
            [2 - 40 * (x[1] - x[0] ** 2) + 80 * x[0] ** 2, -40 * x[0], 0.0],
            [-40 * x[0], 21.0, 0.0],
            [0.0, 0.0, 2.0],
        ])

    prog = NonlinearProgram(f, grad, hess, A=[[1.0, 1.0, 1.0]], b=[1.5], name="rosenbrock-eq")
    return prog, KnownOptimum(None, None)


CATALOG: dict[str, Callable[[], tuple[Program, KnownOptimum]]] = {
    "lp-simplex-n2": _lp_simplex_n2,
    "simplex-qp-n2": _simplex_qp(2, 2.0),
    "simplex-qp-n4": _simplex_qp(4, 1.0),
    "qp-coupled-n3": _qp_coupled_n3,
    "qp-two-rows-n5": _qp_two_rows_n5,
    "qp-boundary-n4": _qp_boundary_n4,
    "quartic-n4": _quartic(4),
    "expsum-n5": _expsum(5),
    "rosenbrock-eq": _rosenbrock_eq,
}

QP_CATALOG = tuple(k for k in CATALOG if k.startswith(("lp-", "simplex-qp", "qp-")))
SMOOTH_CATALOG = ("quartic-n4", "expsum-n5", "rosenbrock-eq")


def get(name: str) -> tuple[Program, KnownOptimum]:
    try:
        return CATALOG[name]()
    except KeyError:
        raise UnsupportedFamily(f"unknown catalog problem {name!r}; known: {sorted(CATALOG)}") from None
