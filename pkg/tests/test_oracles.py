import copy

import numpy as np
import pytest

from ipmins import catalog
from ipmins.errors import IncompleteTrace, PreconditionUnmet
from ipmins.ins import InsConfig, ins_solve
from ipmins.ipm import IpmConfig, ipm_solve, make_centered_start
from ipmins.kkt import SolverPolicy
from ipmins.oracles import (
    RecursionParams,
    complexity_scan,
    fit_exponent,
    lemma1_bound,
    lemma1_grid,
    lemma1_iteration_estimate,
    lemma2_check,
    simulate_recursion,
)


class TestLemma1:
    def test_equality_recursion_passes(self):
        p = RecursionParams(omega=0.5, C=1.0, mu0=0.25)
        v = lemma1_bound(p, simulate_recursion(p))
        assert v["passed"] and v["first_violation"] is None

    def test_pure_geometric_equals_bound(self):
        p = RecursionParams(omega=0.5, C=0.0, mu0=1.0, horizon=30)
        seq = simulate_recursion(p)
        np.testing.assert_allclose(seq, 0.5 ** np.arange(31))
        assert lemma1_bound(p, seq)["passed"]

    def test_hypothesis_boundary(self):
        with pytest.raises(PreconditionUnmet):
            lemma1_bound(RecursionParams(omega=0.5, C=1.0, mu0=0.5), [0.5])

    def test_violation_flagged(self):
        p = RecursionParams(omega=0.5, C=0.0, mu0=1.0)
        v = lemma1_bound(p, [1.0, 0.5, 0.3, 0.1])
        assert v["first_violation"] == 2

    def test_iteration_estimate_examples(self):
        p = RecursionParams(omega=0.5, C=0.0, mu0=1.0)
        assert lemma1_iteration_estimate(p, 2.0**-10) == 10
        assert lemma1_iteration_estimate(p, 1.0) == 0

    @pytest.mark.parametrize("omega,cmu0", [(0.1, 0.05), (0.5, 0.2), (0.9, 0.85), (0.3, 0.0)])
    def test_estimate_is_sound(self, omega, cmu0):
        p = RecursionParams(omega=omega, C=cmu0 / 0.5, mu0=0.5)
        for eps in (1e-3, 1e-8):
            k = lemma1_iteration_estimate(p, eps)
            assert simulate_recursion(p, k)[k] <= eps

    def test_estimate_rejects_bad_eps(self):
        p = RecursionParams(omega=0.5, C=0.0, mu0=1.0)
        with pytest.raises(PreconditionUnmet):
            lemma1_iteration_estimate(p, 2.0)

    def test_grid(self):
        g = lemma1_grid()
        assert g["passed"] and g["bound_violations"] == 0 and g["estimate_failures"] == 0
        assert g["n_cells"] == sum(2 * k for k in range(1, 10))  # {0, 0.05, ..., omega - 0.05}

    @pytest.mark.parametrize("kw", [{"omega": 1.0, "C": 1, "mu0": 0.1}, {"omega": 0.5, "C": -1, "mu0": 0.1},
                                    {"omega": 0.5, "C": 1, "mu0": 0.0}])
    def test_params_validated(self, kw):
        with pytest.raises(ValueError):
            RecursionParams(**kw)


def _trace(alg="ipm", name="qp-two-rows-n5", **kw):
    prog, _ = catalog.get(name)
    start = make_centered_start(prog)
    if alg == "ipm":
        return ipm_solve(prog, start, IpmConfig(**kw))[1]
    return ins_solve(prog, start, InsConfig(**kw))[1]


class TestLemma2:
    @pytest.mark.parametrize("variant", ["short-step", "long-step"])
    def test_ipm_traces_pass(self, variant):
        v = lemma2_check(_trace(variant=variant))
        assert v["passed"] and v["per_step"]
        assert v["empirical_kappa1_max"] < 1e-12  # exact solves

    def test_inexact_ipm_trace_passes(self):
        policy = SolverPolicy(mode="iterative", preconditioner="none", forcing="constant", delta_max=0.3)
        v = lemma2_check(_trace(solver_policy=policy))
        assert v["passed"]
        assert v["empirical_kappa1_max"] > 0
        assert v["kappa1_over_delta_max"] is not None

    def test_ins_trace_passes(self):
        v = lemma2_check(_trace("ins", "qp-coupled-n3", alpha_scale=0.6, theta=1e-2))
        assert v["passed"]
        assert all(s["k"] >= 0 for s in v["per_step"])

    def test_fabricated_violation(self):
        trace = copy.deepcopy(_trace())
        trace.records[3]["mu_next"] = 2 * trace.records[3]["mu"]
        v = lemma2_check(trace)
        assert not v["passed"] and v["first_violation"] == trace.records[3]["k"]

    def test_hypothesis_violation_reported_not_asserted(self):
        trace = copy.deepcopy(_trace())
        trace.records[0]["kappa1"] = 0.95  # sigma + kappa1 >= 1, bound only loosens
        v = lemma2_check(trace)
        assert v["passed"] and v["hypothesis_violations"] == [0]

    def test_incomplete_trace(self):
        trace = copy.deepcopy(_trace())
        del trace.records[1]["kappa2"]
        with pytest.raises(IncompleteTrace):
            lemma2_check(trace)

    def test_verdict_keys(self):
        v = lemma2_check(_trace())
        assert {"lemma", "per_step", "first_violation", "empirical_kappa1_max",
                "empirical_kappa2_max"} <= set(v)


class TestComplexity:
    def test_fit_exponent(self):
        assert fit_exponent([1, 4, 16], [3, 6, 12]) == pytest.approx(0.5)
        assert fit_exponent([2], [5]) is None

    def test_scan_small(self):
        scan = complexity_scan("scaled-simplex-qp", "long-step", [2, 4, 8], 1e-4)
        assert [r["n"] for r in scan.rows] == [2, 4, 8]
        assert all(r["status"] == "converged" for r in scan.rows)
        assert scan.exponent is not None

    def test_tighter_eps_needs_more(self):
        loose = complexity_scan("scaled-simplex-qp", "short-step", [2, 8], 1e-3).iterations
        tight = complexity_scan("scaled-simplex-qp", "short-step", [2, 8], 1e-6).iterations
        assert all(t >= l for t, l in zip(tight, loose))

    def test_failures_recorded(self):
        scan = complexity_scan("no-such-family", "long-step", [2], 1e-4)
        assert scan.rows[0]["status"].startswith("error")
        assert scan.exponent is None
