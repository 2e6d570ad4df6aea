import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipmins.errors import MaxInnerIterations, SingularSystem
from ipmins.kkt import (
    SolverPolicy,
    default_delta_max,
    make_preconditioner,
    relative_residual,
    solve,
    solve_direct,
    solve_iterative,
)
from ipmins.problem import KktSystem, assemble_kkt_full, assemble_kkt_ins

from conftest import random_iterate, random_qp


def _system(seed, n=5, m=2, kind="full"):
    rng = np.random.default_rng(seed)
    prog = random_qp(rng, n, m)
    it = random_iterate(rng, prog)
    if kind == "full":
        return assemble_kkt_full(prog, it, 0.1)
    return assemble_kkt_ins(prog, it, 0.1, theta=0.01)


class TestPolicy:
    def test_defaults(self):
        p = SolverPolicy()
        assert p.mode == "direct" and p.preconditioner == "schur"

    @pytest.mark.parametrize("kw", [{"mode": "lu"}, {"forcing": "x"}, {"preconditioner": "ilu"},
                                    {"delta_max": 1.0}, {"max_inner": 0}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverPolicy(**kw)

    def test_forcing_values(self):
        assert SolverPolicy(forcing="constant", delta_max=0.3).eta(1e-6) == 0.3
        assert SolverPolicy(forcing="adaptive", delta_max=0.3).eta(1e-6) == pytest.approx(1e-3)
        assert SolverPolicy(forcing="adaptive", delta_max=0.3).eta(4.0) == 0.3

    def test_delta_max_formula(self):
        assert default_delta_max(0.1) == pytest.approx(0.45)


class TestDirect:
    def test_exact_solution(self):
        sys = _system(0)
        d = solve_direct(sys)
        assert d.inexactness < 1e-12
        assert d.inner_iterations == 1

    def test_singular_matrix_reports_pivot(self):
        K = np.zeros((3, 3))
        K[0, 0] = 1.0
        sys = KktSystem("ecnp", K, np.ones(3), np.eye(2), np.ones((1, 2)), 2, 1)
        with pytest.raises(SingularSystem) as info:
            solve_direct(sys)
        assert info.value.pivot is not None


class TestIterative:
    @pytest.mark.parametrize("pre", ["none", "jacobi", "schur"])
    @pytest.mark.parametrize("kind", ["full", "ins"])
    def test_meets_tolerance(self, pre, kind):
        sys = _system(3, kind=kind)
        policy = SolverPolicy(mode="iterative", preconditioner=pre, forcing="constant", delta_max=1e-8)
        d = solve_iterative(sys, policy)
        assert d.inexactness <= 1e-8 * (1 + 1e-6)

    def test_schur_is_exact_for_diagonal_hessian(self):
        rng = np.random.default_rng(1)
        from ipmins.problem import Iterate, QuadraticProgram
        prog = QuadraticProgram(np.diag(rng.uniform(1, 2, 6)), np.ones((1, 6)), [6.0], rng.uniform(size=6))
        it = Iterate(np.ones(6), [0.3], rng.uniform(0.5, 1.5, 6))
        sys = assemble_kkt_full(prog, it, 0.1)
        pre = make_preconditioner(sys, "schur")
        z = pre.apply(sys.rhs)
        assert relative_residual(sys, z) < 1e-12

    def test_max_inner_attaches_direction(self):
        sys = _system(4, n=8, m=2)
        policy = SolverPolicy(mode="iterative", preconditioner="none", forcing="constant",
                              delta_max=1e-12, max_inner=2)
        with pytest.raises(MaxInnerIterations) as info:
            solve_iterative(sys, policy)
        assert "max_inner" in info.value.direction.flags
        d = solve(sys, policy)  # dispatch returns the flagged direction
        assert "max_inner" in d.flags

    def test_eta_override(self):
        sys = _system(5)
        policy = SolverPolicy(mode="iterative", preconditioner="none", forcing="constant", delta_max=0.5)
        d = solve_iterative(sys, policy, eta=1e-10)
        assert d.eta == 1e-10 and d.inexactness <= 1e-10

    def test_zero_rhs(self):
        sys = _system(6)
        sys = KktSystem(sys.structure, sys.matrix, np.zeros(sys.size), sys.hessian, sys.A, sys.n, sys.m,
                        x=sys.x, s=sys.s)
        d = solve_iterative(sys, SolverPolicy(mode="iterative"))
        assert d.inner_iterations == 0 and not np.any(d.z)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6), delta=st.sampled_from([1e-1, 1e-3, 1e-6]),
           pre=st.sampled_from(["none", "jacobi", "schur"]))
    def test_inexactness_contract(self, seed, delta, pre):
        sys = _system(seed, n=4, m=1)
        policy = SolverPolicy(mode="iterative", preconditioner=pre, forcing="constant", delta_max=delta)
        d = solve(sys, policy)
        if "max_inner" not in d.flags:
            assert d.inexactness <= delta * (1 + 1e-8)
        np.testing.assert_allclose(d.inexactness, relative_residual(sys, d.z), rtol=1e-10, atol=1e-300)
