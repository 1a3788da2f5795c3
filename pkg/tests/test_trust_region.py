import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from qnkrylov.core import QuadraticModel
from qnkrylov.krylov import diom_solve, pcg_solve
from qnkrylov.problems import quadratic_fgh, rosenbrock_functions
from qnkrylov.trust_region import (
    SUBSOLVERS,
    TrustRegionConfig,
    boundary_tau,
    forcing_rtol,
    steihaug_tcg,
    tr_diom,
    tr_lbfgs,
    tr_newton,
)

from conftest import spd_instance

ALL = [steihaug_tcg, tr_lbfgs, tr_diom]


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def model(A, b):
    return QuadraticModel.from_matrix(np.asarray(A, float), np.asarray(b, float))


def q(m, x):
    return 0.5 * x @ (m.operator @ x) - m.b @ x


class TestBoundaryTau:
    def test_examples(self):
        assert boundary_tau(np.zeros(2), np.array([0.6, 0.8]), 2.0) == 2.0
        assert boundary_tau(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 2.0) == 1.0
        assert_allclose(boundary_tau(np.array([1.0, 0.0]), np.array([0.0, 1.0]), math.sqrt(2)), 1.0)

    def test_infinite_and_errors(self):
        assert boundary_tau(np.zeros(2), np.ones(2), math.inf) == math.inf
        with pytest.raises(ValueError):
            boundary_tau(np.zeros(2), np.zeros(2), 1.0)

    @given(st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_lands_on_boundary(self, seed, frac):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(4)
        x *= frac / np.linalg.norm(x)
        d = rng.standard_normal(4) * 10 ** rng.uniform(-3, 3)
        tau = boundary_tau(x, d, 1.0)
        assert tau >= 0
        assert abs(np.linalg.norm(x + tau * d) - 1.0) <= 1e-12

    def test_forcing(self):
        assert forcing_rtol(1e4) == 0.1
        assert forcing_rtol(1e-4) == pytest.approx(1e-2)
        assert forcing_rtol(0.0) == 1e-12


class TestSubsolvers:
    @pytest.mark.parametrize("solver", ALL)
    def test_identity_interior(self, solver):
        b = np.array([1.0, 2.0, 2.0])
        r = solver(model(np.eye(3), b), 5.0)
        assert r.status == "interior_converged"
        assert_allclose(r.x, b)

    @pytest.mark.parametrize("solver", ALL)
    def test_identity_boundary(self, solver):
        b = np.array([1.0, 2.0, 2.0])
        r = solver(model(np.eye(3), b), 1.5)
        assert r.status == "boundary"
        assert_allclose(r.x, b / 2)

    @pytest.mark.parametrize("solver", [steihaug_tcg, tr_lbfgs])
    def test_negative_curvature(self, solver):
        m = model(np.diag([1.0, -1.0]), [0.0, 1.0])
        r = solver(m, 2.0)
        assert r.status == "nonpositive_curvature_boundary"
        assert_allclose(np.linalg.norm(r.x), 2.0)
        assert q(m, r.x) < 0

    def test_diom_negative_pivot(self):
        # u11 = v1'Av1 = -1 < 0
        m = model(np.array([[-1.0, 0.0], [0.0, 2.0]]), [1.0, 0.0])
        r = tr_diom(m, 0.7)
        assert r.status == "nonpositive_curvature_boundary"
        assert_allclose(np.linalg.norm(r.x), 0.7)
        assert r.decrease > 0

    def test_lbfgs_matches_pcg(self, spd20):
        A, b, m = spd20
        _, tp = pcg_solve(A, b, rtol=1e-10, keep_history=True)
        r = tr_lbfgs(m, 1e12, m=5, rtol=1e-10, keep_iterates=True)
        assert r.status == "interior_converged"
        for x, xp in zip(r.iterates[1:], tp.iterates[1:]):
            assert rel(x, xp) <= 1e-8

    def test_diom_matches_diom_solve(self, spd20):
        A, b, m = spd20
        _, td = diom_solve(A, b, m=3, rtol=1e-10, keep_history=True)
        r = tr_diom(m, 1e12, m=3, rtol=1e-10, keep_iterates=True)
        for x, xd in zip(r.iterates[1:], td.iterates[1:]):
            assert rel(x, xd) <= 1e-8

    @pytest.mark.parametrize("solver", ALL)
    def test_infinite_radius(self, solver, spd20):
        A, b, m = spd20
        r = solver(m, math.inf, rtol=1e-10)
        assert r.status == "interior_converged"
        assert rel(A @ r.x, b) <= 1e-9

    @pytest.mark.parametrize("solver", ALL)
    def test_radius_validation(self, solver, spd20):
        with pytest.raises(ValueError):
            solver(spd20[2], 0.0)

    @given(st.integers(0, 5000), st.floats(0.05, 5.0), st.sampled_from(ALL), st.booleans())
    def test_properties(self, seed, delta, solver, indefinite):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((8, 8))
        A = M + M.T if indefinite else M @ M.T + 0.1 * np.eye(8)
        m = model(A, rng.standard_normal(8))
        r = solver(m, delta, keep_iterates=True)
        assert np.linalg.norm(r.x) <= delta * (1 + 1e-12)
        assert r.decrease >= 0
        assert_allclose(-r.decrease, q(m, r.x), rtol=1e-8, atol=1e-12)
        qp = np.array(r.q_path)
        assert np.all(np.diff(qp) <= 1e-12 * max(1.0, np.abs(qp).max()))
        if not indefinite:
            norms = np.array(r.norms)
            assert np.all(np.diff(norms) >= -1e-12 * delta)


class TestNewton:
    def test_config_validation(self):
        for bad in (dict(delta0=0), dict(eta1=0.8, eta2=0.5), dict(gtol=0), dict(max_outer=0)):
            with pytest.raises(ValueError):
                TrustRegionConfig(**bad)

    def test_unknown_subsolver(self):
        with pytest.raises(ValueError):
            tr_newton(*quadratic_fgh(np.eye(2), np.ones(2)), np.zeros(2), subsolver="cg")

    def test_half_norm_one_step(self):
        f = lambda z: 0.5 * z @ z
        z0 = np.array([0.3, -0.4, 0.5])
        res = tr_newton(f, lambda z: z, lambda z, v: v, z0, TrustRegionConfig(delta0=2.0))
        assert res.status == "converged"
        assert sum(e["accepted"] for e in res.log) == 1

    @pytest.mark.parametrize("sub", sorted(SUBSOLVERS))
    def test_rosenbrock(self, sub):
        f, g, h = rosenbrock_functions()
        res = tr_newton(f, g, h, np.array([-1.2, 1.0]), subsolver=sub)
        assert res.status == "converged" and res.gnorm <= 1e-5
        assert_allclose(res.z, [1.0, 1.0], atol=1e-4)
        fs = [e["f"] for e in res.log]
        assert np.all(np.diff(fs) <= 0)
        assert res.obj_evals == 1 + res.outer_iterations
        assert res.grad_evals == 1 + sum(e["accepted"] for e in res.log)

    def test_quadratic_rho_one_doubles(self):
        A, b, _ = spd_instance(10, 10.0)
        f, g, h = quadratic_fgh(A.dense(), b)
        res = tr_newton(f, g, h, np.zeros(10), TrustRegionConfig(delta0=1e3, gtol=1e-8))
        e = res.log[0]
        assert e["sub_status"] == "interior_converged"
        assert_allclose(e["rho"], 1.0, atol=1e-8)
        assert res.log[1]["delta"] == 2 * e["delta"] if len(res.log) > 1 else True

    def test_shrink_on_rejection(self):
        # quartic with a shifted Hessian: the first full step is rejected
        f = lambda z: float(z[0] ** 4 - z[0])
        g = lambda z: np.array([4 * z[0] ** 3 - 1])
        h = lambda z, v: np.array([12 * z[0] ** 2 * v[0] + 1.0 * v[0]])
        res = tr_newton(f, g, h, np.array([0.0]), TrustRegionConfig(delta0=10.0, gtol=1e-6))
        first = res.log[0]
        assert not first["accepted"]
        assert res.log[1]["delta"] == first["delta"] / 4
        assert res.status == "converged"

    def test_radius_underflow(self):
        # gradient tolerance far below what f can resolve
        f = lambda z: float(z[0] ** 4 - z[0])
        g = lambda z: np.array([4 * z[0] ** 3 - 1])
        h = lambda z, v: np.array([12 * z[0] ** 2 * v[0] + 1.0 * v[0]])
        res = tr_newton(f, g, h, np.array([0.0]), TrustRegionConfig(gtol=1e-14))
        assert res.status == "radius_underflow"
        assert res.log[-1]["delta"] < 1e-14

    def test_summary(self):
        f, g, h = rosenbrock_functions()
        s = tr_newton(f, g, h, np.array([-1.2, 1.0])).summary()
        assert set(s) == {"status", "f", "gnorm", "outer_iterations", "obj_evals", "grad_evals",
                          "hvp_evals"}
