import numpy as np
import pytest

from ipmins import catalog
from ipmins.catalog import SampleSpec, active_set_qp, generate_sample
from ipmins.errors import UnsupportedFamily
from ipmins.problem import QuadraticProgram


class TestGenerateSample:
    def test_simplex_lp_vertex(self):
        prog, opt = catalog.get("lp-simplex-n2")
        np.testing.assert_array_equal(opt.x, [1.0, 0.0])
        assert opt.f == 1.0

    def test_symmetric_simplex_qp(self):
        prog, opt = catalog.get("simplex-qp-n2")  # Q = 2I, c = 0
        np.testing.assert_allclose(opt.x, [0.5, 0.5])
        assert opt.f == pytest.approx(prog.objective(np.array([0.5, 0.5])))

    @pytest.mark.parametrize("family", ["simplex-lp", "simplex-qp", "scaled-simplex-qp"])
    def test_deterministic(self, family):
        a, oa = generate_sample(SampleSpec(3, 42, family, 4))
        b, ob = generate_sample(SampleSpec(3, 42, family, 4))
        np.testing.assert_array_equal(a.Q, b.Q)
        np.testing.assert_array_equal(a.c, b.c)
        assert oa.f == ob.f

    def test_seeds_differ(self):
        a, _ = generate_sample(SampleSpec(1, 1))
        b, _ = generate_sample(SampleSpec(1, 2))
        assert not np.array_equal(a.c, b.c)

    def test_simplex_lp_unique_minimum(self):
        for seed in range(20):
            prog, opt = generate_sample(SampleSpec(0, seed, "simplex-lp", 5))
            assert opt.f == pytest.approx(prog.c.min())
            assert opt.x.sum() == 1.0

    def test_scaled_family_is_nested(self):
        small, _ = generate_sample(SampleSpec(0, 5, "scaled-simplex-qp", 4))
        big, _ = generate_sample(SampleSpec(0, 5, "scaled-simplex-qp", 8))
        np.testing.assert_array_equal(np.diag(big.Q)[:4], np.diag(small.Q))
        assert big.b[0] == 8.0

    @pytest.mark.parametrize("spec", [SampleSpec(0, 0, "cubes"), SampleSpec(0, 0, "simplex-qp", 2, 2),
                                      SampleSpec(0, 0, "simplex-qp", 0)])
    def test_unsupported(self, spec):
        with pytest.raises(UnsupportedFamily):
            generate_sample(spec)

    def test_catalog_by_name(self):
        prog, _ = generate_sample(SampleSpec(0, 0, "qp-coupled-n3"))
        assert prog.name == "qp-coupled-n3"
        with pytest.raises(UnsupportedFamily):
            catalog.get("nope")


class TestActiveSetOracle:
    def test_kkt_conditions(self, rng):
        for _ in range(20):
            n = 5
            prog = QuadraticProgram(np.diag(rng.uniform(0.5, 1.5, n)), np.ones((1, n)), [1.0],
                                    rng.uniform(-1, 1, n))
            opt = active_set_qp(prog)
            s = prog.Q @ opt.x + prog.c - prog.A.T @ opt.y
            assert opt.x.min() >= 0 and s.min() >= -1e-10
            assert abs(opt.x @ s) <= 1e-10
            assert prog.A @ opt.x == pytest.approx(prog.b)

    def test_size_limit(self):
        prog = QuadraticProgram(np.eye(17), np.ones((1, 17)), [1.0], np.zeros(17))
        with pytest.raises(ValueError):
            active_set_qp(prog)
