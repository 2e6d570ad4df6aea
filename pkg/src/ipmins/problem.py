"""Problem instances, primal-dual iterates, KKT residuals and Newton systems.

Two sign conventions for the dual residual are in play and both are kept:

* ``"primal-dual"``: the QP pair (P)/(D), ``r_d = A^T y + s - grad f(x)``,
  which for a QP reads ``A^T y + s - Q x - c``.  The full 3x3 Newton system
  and the IPM driver use this one.
* ``"lagrangian"``: ``L(x, y, s) = f(x) + y^T (A x - b) - s^T x``, giving
  ``r_d = grad f(x) + A^T y - s``.  The INS solver and its equality phase use
  this one.

A point that is a KKT point in one convention is a KKT point in the other
with ``y`` negated.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    InvalidProblem,
    MissingHessian,
    NonInteriorIterate,
)

SYMMETRY_TOL = 1e-12
NLP_SYMMETRY_TOL = 1e-10
RANK_RTOL = 1e-10


def _as_vector(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {a.shape}")
    return a


def _as_matrix(M, name: str) -> np.ndarray:
    a = np.asarray(M, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {a.shape}")
    return a


def _check_constraints(A: np.ndarray, b: np.ndarray) -> None:
    m, n = A.shape
    if b.shape != (m,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({m},)")
    if m > n:
        raise InvalidProblem(f"A has more rows than columns ({m} > {n})")
    # column-pivoted QR is rank revealing; |R_ii| is non-increasing
    R = sla.qr(A.T, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(A, 2)
    if m and (scale == 0.0 or diag.min() <= RANK_RTOL * scale):
        raise InvalidProblem("A does not have full row rank")


@dataclass(frozen=True)
class QuadraticProgram:
    """``min c^T x + 1/2 x^T Q x  s.t.  A x = b, x >= 0``."""

    Q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: str = ""

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        A = _as_matrix(self.A, "A")
        b = _as_vector(self.b, "b")
        c = _as_vector(self.c, "c")
        n = c.shape[0]
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q has shape {Q.shape}, expected ({n}, {n})")
        if A.shape[1] != n:
            raise DimensionMismatch(f"A has {A.shape[1]} columns, expected {n}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > SYMMETRY_TOL:
            raise InvalidProblem("Q is not symmetric")
        _check_constraints(A, b)
        for key, val in (("Q", Q), ("A", A), ("b", b), ("c", c)):
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    has_hessian = True

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + 0.5 * x @ self.Q @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.c

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.Q

    def dual_objective(self, x: np.ndarray, y: np.ndarray) -> float:
        """Objective of (D): ``b^T y - 1/2 x^T Q x``."""
        return float(self.b @ y - 0.5 * x @ self.Q @ x)

    def as_nlp(self) -> "NonlinearProgram":
        return NonlinearProgram(
            objective=self.objective,
            gradient=self.gradient,
            hessian=self.hessian,
            A=self.A,
            b=self.b,
            name=self.name,
        )

    def to_dict(self) -> dict:
        return {
            "Q": self.Q.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "QuadraticProgram":
        missing = {"Q", "A", "b", "c"} - set(d)
        if missing:
            raise InvalidProblem(f"problem document missing keys: {sorted(missing)}")
        return cls(Q=d["Q"], A=d["A"], b=d["b"], c=d["c"], name=name)


@dataclass(frozen=True)
class NonlinearProgram:
    """``min f(x)  s.t.  A x = b, x >= 0`` given by callbacks.

    ``hessian`` may be ``None``; solvers then need a quasi-Newton model.
    """

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]]
    A: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        b = _as_vector(self.b, "b")
        _check_constraints(A, b)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def has_hessian(self) -> bool:
        return self.hessian is not None

    def check_callbacks(self, x: np.ndarray) -> None:
        """Validate callback shapes and Hessian symmetry at ``x``."""
        g = np.asarray(self.gradient(x))
        if g.shape != (self.n,):
            raise DimensionMismatch(f"gradient has shape {g.shape}, expected ({self.n},)")
        if self.hessian is not None:
            H = np.asarray(self.hessian(x))
            if H.shape != (self.n, self.n):
                raise DimensionMismatch(f"hessian has shape {H.shape}")
            if np.max(np.abs(H - H.T)) > NLP_SYMMETRY_TOL:
                raise InvalidProblem("hessian is not symmetric")


Program = Union[QuadraticProgram, NonlinearProgram]


def duality_gap(it: "Iterate") -> float:
    """``x^T s / n``."""
    return float(it.x @ it.s) / it.x.shape[0]


@dataclass(frozen=True)
class Iterate:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    mu: float = field(init=False)

    def __post_init__(self):
        x = _as_vector(self.x, "x")
        y = _as_vector(self.y, "y") if np.size(self.y) else np.zeros(0)
        s = _as_vector(self.s, "s")
        if x.shape != s.shape:
            raise DimensionMismatch(f"x and s differ in shape: {x.shape} vs {s.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "mu", duality_gap(self))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def is_interior(self) -> bool:
        return bool((self.x > 0).all() and (self.s > 0).all())

    def require_interior(self, exc=NonInteriorIterate) -> None:
        if not self.is_interior:
            bad = np.flatnonzero((self.x <= 0) | (self.s <= 0))
            raise exc(f"iterate is not strictly interior at indices {bad.tolist()}")

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "s": self.s.tolist(), "mu": self.mu}


def _norms(v: np.ndarray) -> tuple[float, float]:
    if v.size == 0:
        return 0.0, 0.0
    return math.sqrt(float(v @ v)), float(np.abs(v).max())


@dataclass(frozen=True)
class Residuals:
    r_p: np.ndarray
    r_d: np.ndarray
    r_c: np.ndarray
    convention: str = "primal-dual"
    norms: dict = field(init=False, repr=False)

    def __post_init__(self):
        norms = {}
        for key in ("r_p", "r_d", "r_c"):
            two, inf = _norms(getattr(self, key))
            norms[key] = two
            norms[key + "_inf"] = inf
        object.__setattr__(self, "norms", norms)


def default_convention(prog: Program) -> str:
    return "primal-dual" if isinstance(prog, QuadraticProgram) else "lagrangian"


def _check_iterate_dims(prog: Program, it: Iterate) -> None:
    if it.n != prog.n or it.y.shape != (prog.m,):
        raise DimensionMismatch(
            f"iterate dims (n={it.n}, m={it.y.shape[0]}) do not match problem "
            f"(n={prog.n}, m={prog.m})"
        )


def dual_residual(prog: Program, x, y, s, convention: str) -> np.ndarray:
    g = prog.gradient(x)
    if convention == "primal-dual":
        return prog.A.T @ y + s - g
    if convention == "lagrangian":
        return g + prog.A.T @ y - s
    raise ValueError(f"unknown convention {convention!r}")


def compute_residuals(
    prog: Program, it: Iterate, sigma: float = 0.0, convention: Optional[str] = None
) -> Residuals:
    """KKT residual blocks at ``it``; ``r_c = XSe - sigma*mu*e``."""
    _check_iterate_dims(prog, it)
    conv = convention or default_convention(prog)
    r_p = prog.A @ it.x - prog.b
    r_d = dual_residual(prog, it.x, it.y, it.s, conv)
    r_c = it.x * it.s - sigma * duality_gap(it)
    return Residuals(r_p=r_p, r_d=r_d, r_c=r_c, convention=conv)


@dataclass(frozen=True)
class KktSystem:
    """A dense Newton system ``K dz = rhs`` plus the blocks it was built from.

    ``structure`` is one of ``full-3x3`` (unknowns dx, dy, ds),
    ``reduced-2x2`` (dx, dy; ds recovered afterwards) or ``ecnp`` (dx, dy).
    ``hessian`` is the (1,1) block as it enters the system: ``Q`` (appearing
    as ``-Q``) for full systems and ``H_mod`` for the 2x2 forms.
    """

    structure: str
    matrix: np.ndarray
    rhs: np.ndarray
    hessian: np.ndarray
    A: np.ndarray
    n: int
    m: int
    x: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    sigma: float = 0.0
    mu: float = 0.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n, m = self.n, self.m
        dx, dy = z[:n], z[n : n + m]
        ds = z[n + m :] if self.structure == "full-3x3" else np.zeros(n)
        return dx, dy, ds


def _hessian_at(prog: Program, x: np.ndarray) -> np.ndarray:
    if not prog.has_hessian:
        raise MissingHessian("problem has no Hessian callback and no override was given")
    return np.asarray(prog.hessian(x), dtype=float)


def assemble_kkt_full(prog: Program, it: Iterate, sigma: float) -> KktSystem:
    """Full primal-dual system ``[-Q A^T I; A 0 0; S 0 X]``.

    The right-hand side is ``(-r_d, -r_p, sigma*mu*e - XSe)`` in the
    primal-dual convention.
    """
    _check_iterate_dims(prog, it)
    it.require_interior()
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    n, m = prog.n, prog.m
    x, y, s = it.x, it.y, it.s
    mu = duality_gap(it)
    Q = _hessian_at(prog, x)
    K = np.zeros((2 * n + m, 2 * n + m))
    K[:n, :n] = -Q
    K[:n, n : n + m] = prog.A.T
    K[:n, n + m :] = np.eye(n)
    K[n : n + m, :n] = prog.A
    K[n + m :, :n] = np.diag(s)
    K[n + m :, n + m :] = np.diag(x)
    r_d = dual_residual(prog, x, y, s, "primal-dual")
    r_p = prog.A @ x - prog.b
    rhs = np.concatenate([-r_d, -r_p, sigma * mu - x * s])
    return KktSystem("full-3x3", K, rhs, Q, prog.A, n, m, x=x, s=s, sigma=sigma, mu=mu)


def assemble_kkt_ins(
    prog: Program,
    it: Iterate,
    sigma: float,
    theta: float = 0.0,
    H_override: Optional[np.ndarray] = None,
) -> KktSystem:
    """Regularized 2x2 system with ``H_mod = H + X^{-1} S + theta I``."""
    _check_iterate_dims(prog, it)
    it.require_interior()
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    n, m = prog.n, prog.m
    x, y, s = it.x, it.y, it.s
    mu = duality_gap(it)
    if H_override is not None:
        H = np.asarray(H_override, dtype=float)
        if H.shape != (n, n):
            raise DimensionMismatch(f"H_override has shape {H.shape}")
    else:
        H = _hessian_at(prog, x)
    Hmod = H.copy()
    Hmod.flat[:: n + 1] += s / x + theta
    K = np.zeros((n + m, n + m))
    K[:n, :n] = Hmod
    K[:n, n:] = prog.A.T
    K[n:, :n] = prog.A
    top = -dual_residual(prog, x, y, s, "lagrangian") + (sigma * mu - x * s) / x
    bottom = -(prog.A @ x - prog.b)
    rhs = np.concatenate([top, bottom])
    return KktSystem("reduced-2x2", K, rhs, Hmod, prog.A, n, m, x=x, s=s, sigma=sigma, mu=mu)


def recover_delta_s(it: Iterate, delta_x: np.ndarray, sigma: float) -> np.ndarray:
    """``ds = X^{-1}(sigma*mu*e - XSe - S dx)``."""
    it.require_interior()
    mu = it.mu
    return (sigma * mu - it.x * it.s - it.s * delta_x) / it.x


def load_problem(path: Union[str, Path]) -> QuadraticProgram:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return QuadraticProgram.from_dict(doc, name=path.stem)


def save_problem(prog: QuadraticProgram, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(prog.to_dict()) + "\n", encoding="utf-8")
