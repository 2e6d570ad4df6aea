import numpy as np
import pytest

from ipmins import catalog
from ipmins.catalog import SampleSpec, generate_sample
from ipmins.errors import DimensionMismatch, MissingHessian, NonInteriorStart
from ipmins.ins import (
    EcnpState,
    InsConfig,
    bfgs_init,
    bfgs_update,
    ecnp_residual,
    ecnp_solve,
    ins_solve,
    ins_step,
    positivity_inactive,
)
from ipmins.ipm import IpmConfig, ipm_step, make_centered_start
from ipmins.kkt import SolverPolicy, solve_direct
from ipmins.problem import Iterate, NonlinearProgram, QuadraticProgram, assemble_kkt_ins, compute_residuals

DIRECT = SolverPolicy(mode="direct")


class TestConfig:
    @pytest.mark.parametrize("kw", [{"alpha_scale": 0.05}, {"alpha_scale": 1.5}, {"theta": -1.0},
                                    {"beta": 1.0}, {"c_armijo": 0.0}, {"hessian_mode": "sr1"}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            InsConfig(**kw)

    def test_defaults(self):
        cfg = InsConfig()
        assert (cfg.alpha_scale, cfg.theta, cfg.beta, cfg.c_armijo) == (0.1, 0.1, 0.5, 1e-4)
        assert cfg.solver_policy.mode == "iterative"


class TestBfgs:
    def test_secant_condition_on_quadratic(self, rng):
        B = rng.standard_normal((4, 4))
        Q = B @ B.T + np.eye(4)
        x0, x1 = rng.standard_normal(4), rng.standard_normal(4)
        st = bfgs_update(bfgs_init(x0, Q @ x0), x1, Q @ x1)
        np.testing.assert_allclose(st.H @ (x1 - x0), Q @ (x1 - x0), atol=1e-10)
        assert st.damping_events == 0 and st.updates == 1

    def test_zero_step_is_noop(self):
        st = bfgs_init(np.ones(3), np.zeros(3))
        assert bfgs_update(st, np.ones(3), np.ones(3)) is st

    def test_negative_curvature_is_damped(self):
        # f = -||x||^2 gives y^T s < 0
        x0, x1 = np.array([1.0, 0.5]), np.array([0.2, 0.9])
        st = bfgs_update(bfgs_init(x0, -2 * x0), x1, -2 * x1)
        assert st.damping_events == 1
        assert np.linalg.eigvalsh(st.H).min() > 0
        np.testing.assert_allclose(st.H, st.H.T, atol=1e-12)

    def test_damped_secant_target(self):
        x0, x1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        g0, g1 = -2 * x0, -2 * x1
        st = bfgs_update(bfgs_init(x0, g0), x1, g1)
        s, y = x1 - x0, g1 - g0
        sHs = s @ s
        phi = 0.8 * sHs / (sHs - y @ s)
        ybar = phi * y + (1 - phi) * s
        np.testing.assert_allclose(st.H @ s, ybar, atol=1e-12)


class TestInsStep:
    def test_reduces_to_ipm_step(self):
        for name in catalog.QP_CATALOG:
            prog, _ = catalog.get(name)
            start = make_centered_start(prog)
            ipm_next, _ = ipm_step(prog, start, IpmConfig())
            lag = Iterate(start.x, -start.y, start.s)
            ins_next, _, _ = ins_step(prog, lag, InsConfig(theta=0.0, alpha_scale=1.0, solver_policy=DIRECT))
            np.testing.assert_allclose(ins_next.x, ipm_next.x, atol=1e-10)
            np.testing.assert_allclose(ins_next.s, ipm_next.s, atol=1e-10)
            np.testing.assert_allclose(-ins_next.y, ipm_next.y, atol=1e-10)

    def test_heavy_regularization_shrinks_step(self):
        prog, _ = catalog.get("qp-coupled-n3")
        it = make_centered_start(prog)
        cfg = InsConfig(theta=1e6, alpha_scale=1.0, solver_policy=DIRECT)
        nlp = prog.as_nlp()
        top = -compute_residuals(nlp, it, convention="lagrangian").r_d + (cfg.sigma * it.mu - it.x * it.s) / it.x
        d = solve_direct(assemble_kkt_ins(nlp, it, cfg.sigma, cfg.theta))
        assert np.linalg.norm(d.delta_x) <= np.linalg.norm(top) / 1e6 + 1e-12

    def test_alpha_scaling(self):
        prog, _ = catalog.get("simplex-qp-n4")
        it = make_centered_start(prog)
        _, _, full = ins_step(prog, it, InsConfig(alpha_scale=1.0))
        _, _, scaled = ins_step(prog, it, InsConfig(alpha_scale=0.3))
        assert scaled["alpha"] == pytest.approx(0.3 * scaled["alpha_ftb"])
        assert full["alpha"] == pytest.approx(full["alpha_ftb"])

    def test_bfgs_mode_requires_state(self):
        prog, _ = catalog.get("simplex-qp-n4")
        with pytest.raises(ValueError):
            ins_step(prog, make_centered_start(prog), InsConfig(hessian_mode="bfgs"))

    def test_regularization_continuity(self):
        prog, _ = generate_sample(SampleSpec(1, 99, "simplex-qp", 4))
        it = make_centered_start(prog)

        def dx(theta):
                    return solve_direct(assemble_kkt_ins(prog.as_nlp(), it, 0.1, theta)).delta_x

        base = dx(0.0)
        gaps = [np.linalg.norm(dx(t) - base) for t in (0.0, 1e-3, 1e-2, 1e-1)]
        assert all(b > a for a, b in zip(gaps, gaps[1:]))


class TestEcnp:
    def test_residual_zero_at_kkt_point(self):
        prog = QuadraticProgram(np.eye(3), np.ones((1, 3)), [1.0], np.zeros(3))
        F, J = ecnp_residual(prog, np.full(3, 1 / 3), np.array([-1 / 3]))
        assert np.linalg.norm(F) <= 1e-12

    def test_linear_objective_block(self):
        prog, _ = catalog.get("lp-simplex-n2")
        _, J0 = ecnp_residual(prog, np.array([0.5, 0.5]), np.zeros(1))
        _, J1 = ecnp_residual(prog, np.array([0.5, 0.5]), np.zeros(1), theta=0.3)
        np.testing.assert_array_equal(J0[:2, :2], np.zeros((2, 2)))
        np.testing.assert_allclose(J1[:2, :2], 0.3 * np.eye(2))

    @pytest.mark.parametrize("name", catalog.SMOOTH_CATALOG)
    def test_jacobian_symmetric(self, name, rng):
        prog, _ = catalog.get(name)
        _, J = ecnp_residual(prog, rng.uniform(0.1, 1, prog.n), rng.standard_normal(prog.m))
        np.testing.assert_allclose(J, J.T, atol=1e-12)

    def test_dimension_check(self):
        prog, _ = catalog.get("simplex-qp-n4")
        with pytest.raises(DimensionMismatch):
            ecnp_residual(prog, np.ones(3), np.zeros(1))

    def test_exact_newton_one_step_on_qp(self):
        prog, _ = catalog.get("qp-coupled-n3")
        cfg = InsConfig(theta=0.0, solver_policy=DIRECT)
        x, y, trace = ecnp_solve(prog, np.ones(3), np.zeros(1), cfg, eps_tol=1e-10)
        assert trace.status == "converged" and trace.iterations == 1
        assert trace.final["F_norm"] <= 1e-10

    @pytest.mark.parametrize("name", catalog.SMOOTH_CATALOG)
    @pytest.mark.parametrize("forcing", ["constant", "adaptive"])
    def test_forcing_and_armijo_contracts(self, name, forcing):
        prog, _ = catalog.get(name)
        policy = SolverPolicy(mode="iterative", preconditioner="none", forcing=forcing, delta_max=0.5)
        cfg = InsConfig(theta=0.0, solver_policy=policy)
        x0 = make_centered_start(prog).x
        _, _, trace = ecnp_solve(prog, x0, np.zeros(prog.m), cfg, eps_tol=1e-10)
        assert trace.status == "converged"
        for r in trace.records:
            assert r["forcing_residual"] <= r["eta"] * r["F_norm"] + 1e-12
            assert r["merit_next"] <= r["merit"] - r["armijo_required"]
            assert r["merit"] == 0.5 * r["F_norm"] ** 2

    def test_state_merit(self):
        st = EcnpState.at(np.array([3.0, 4.0]), 0.5)
        assert st.F_norm == 5.0 and st.merit == 12.5

    def test_line_search_failure_reported(self):
        # a wrong Hessian makes the direction useless; no backtracks allowed
        prog, _ = catalog.get("rosenbrock-eq")
        cfg = InsConfig(theta=0.0, solver_policy=DIRECT, hessian_mode="bfgs", max_backtracks=0)
        bad = bfgs_init(np.ones(3), np.zeros(3), H0=-np.eye(3))
        _, _, trace = ecnp_solve(prog, np.array([0.5, 0.5, 0.5]), np.zeros(1), cfg, bfgs=bad)
        assert trace.status == "line_search_failure"


class TestInsSolve:
    @pytest.mark.parametrize("name", ["simplex-qp-n2", "simplex-qp-n4", "qp-coupled-n3"])
    def test_interior_optimum(self, name):
        prog, opt = catalog.get(name)
        it, trace = ins_solve(prog, make_centered_start(prog), InsConfig(alpha_scale=0.6, theta=1e-2))
        assert trace.converged
        assert abs(prog.objective(it.x) - opt.f) <= 1e-4

    @pytest.mark.parametrize("name", catalog.SMOOTH_CATALOG)
    @pytest.mark.parametrize("mode", ["exact", "bfgs"])
    def test_smooth_catalog(self, name, mode):
        prog, _ = catalog.get(name)
        _, trace = ins_solve(prog, make_centered_start(prog),
                             InsConfig(alpha_scale=0.6, theta=1e-2, hessian_mode=mode))
        assert trace.converged and trace.termination["termination_test_I"]

    def test_zero_iterations_returns_start(self):
        prog, _ = catalog.get("simplex-qp-n4")
        start = make_centered_start(prog)
        it, trace = ins_solve(prog, start, InsConfig(max_iterations=0))
        assert trace.status == "max_iterations" and it is start

    def test_missing_hessian(self):
        nlp = NonlinearProgram(lambda x: float(x @ x), lambda x: 2 * x, None, [[1.0, 1.0]], [1.0])
        start = Iterate([0.5, 0.5], [0.0], [1.0, 1.0])
        with pytest.raises(MissingHessian):
            ins_solve(nlp, start, InsConfig())
        _, trace = ins_solve(nlp, start, InsConfig(hessian_mode="bfgs", alpha_scale=0.6))
        assert trace.converged

    def test_non_interior_start(self):
        prog, _ = catalog.get("simplex-qp-n2")
        with pytest.raises(NonInteriorStart):
            ins_solve(prog, Iterate([1.0, 0.0], [0.0], [1.0, 1.0]), InsConfig())

    def test_ecnp_rejected_when_it_leaves_the_orthant(self):
        # optimum on the boundary: the equality phase would cross x = 0
        prog, _ = catalog.get("qp-boundary-n4")
        it, trace = ins_solve(prog, make_centered_start(prog), InsConfig(alpha_scale=0.6, theta=1e-2))
        assert trace.converged and it.is_interior
        assert all(not sw["accepted"] for sw in trace.meta["phase_switches"])

    def test_ecnp_phase_recorded(self):
        prog, _ = catalog.get("qp-coupled-n3")
        _, trace = ins_solve(prog, make_centered_start(prog), InsConfig(alpha_scale=0.6, theta=1e-2))
        phases = {r["phase"] for r in trace.records}
        assert phases == {"ins", "ecnp"}
        assert trace.meta["phase_switches"][0]["accepted"]

    def test_ecnp_disabled(self):
        prog, _ = catalog.get("qp-coupled-n3")
        _, trace = ins_solve(prog, make_centered_start(prog), InsConfig(alpha_scale=0.6, ecnp=False))
        assert {r["phase"] for r in trace.records} == {"ins"}

    def test_positivity_inactive(self):
        assert positivity_inactive(Iterate([0.5, 0.5], [0.0], [1e-5, 1e-5]), 1e-4)
        assert not positivity_inactive(Iterate([0.5, 1e-4], [0.0], [1e-5, 1e-5]), 1e-4)
        assert not positivity_inactive(Iterate([0.5, 0.5], [0.0], [1e-5, 1.0]), 1e-4)

    def test_tuned_not_slower_than_default(self):
        for sid in range(1, 6):
            prog, _ = generate_sample(SampleSpec(sid, sid))
            start = make_centered_start(prog)
            default = ins_solve(prog, start, InsConfig())[1].iterations
            tuned = ins_solve(prog, start, InsConfig(alpha_scale=0.6, theta=1e-2))[1].iterations
            assert tuned <= default

    def test_max_inner_total(self):
        prog, _ = catalog.get("qp-coupled-n3")
        _, trace = ins_solve(prog, make_centered_start(prog), InsConfig(max_inner_total=5))
        assert trace.status == "max_inner_total"
