import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from qnkrylov.broyden import broyden_solve, broyden_update, sr1_update
from qnkrylov.core import BreakdownError
from qnkrylov.krylov import pcg_solve
from qnkrylov.limited_memory import (
    LbfgsMemory,
    Lsr1Memory,
    lbfgs_apply,
    lbfgs_push,
    lbfgs_solve,
    lsr1_apply,
    lsr1_push,
    lsr1_solve,
)

from conftest import spd_instance

e1 = np.array([1.0, 0.0, 0.0])


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestLbfgsMemory:
    def test_empty_is_base(self):
        v = np.array([1.0, 2.0, 3.0])
        assert_array_equal(lbfgs_apply(LbfgsMemory(3, 2), v), v)

    def test_fixed_point(self):
        mem = LbfgsMemory(3, 2)
        lbfgs_push(mem, e1, e1)
        assert_allclose(lbfgs_apply(mem, e1), e1)

    def test_dense_oracle(self):
        rng = np.random.default_rng(0)
        n = 6
        M = rng.standard_normal((n, n))
        A = M @ M.T + n * np.eye(n)
        mem, H = LbfgsMemory(n, 3), np.eye(n)
        for _ in range(3):
            s = rng.standard_normal(n)
            lbfgs_push(mem, s, A @ s)
            H = broyden_update(H, s, A @ s, 1.0)
        D = np.column_stack([lbfgs_apply(mem, e) for e in np.eye(n)])
        assert_allclose(D, H, rtol=1e-12, atol=1e-13)

    def test_eviction(self):
        mem = LbfgsMemory(3, 2)
        for i in range(3):
            lbfgs_push(mem, np.eye(3)[i], 2 * np.eye(3)[i])
        pairs = mem.pairs()
        assert len(mem) == 2
        assert_array_equal(pairs[0][0], np.eye(3)[1])
        assert_array_equal(pairs[1][0], np.eye(3)[2])

    def test_zero_curvature(self):
        with pytest.raises(BreakdownError):
            lbfgs_push(LbfgsMemory(3, 2), e1, np.array([0.0, 1.0, 0.0]))

    def test_memory_validation(self):
        with pytest.raises(ValueError):
            LbfgsMemory(3, 0)

    @given(st.integers(0, 5000), st.integers(1, 6))
    def test_secant_latest(self, seed, m):
        rng = np.random.default_rng(seed)
        n = 5
        M = rng.standard_normal((n, n))
        A = M @ M.T + np.eye(n)
        mem = LbfgsMemory(n, m)
        for _ in range(m + 2):
            s = rng.standard_normal(n)
            lbfgs_push(mem, s, A @ s)
        assert rel(lbfgs_apply(mem, A @ s), s) <= 1e-10

    def test_stored_vectors_and_cost(self):
        n, m = 7, 3
        mem = LbfgsMemory(n, m)
        rng = np.random.default_rng(1)
        for _ in range(m):
            s = rng.standard_normal(n)
            lbfgs_push(mem, s, 2 * s)
        mem.mults = 0
        lbfgs_apply(mem, np.ones(n))
        assert mem.mults == 4 * m * n
        assert mem.stored_vectors() == 2 + 2 * m


class TestLsr1Memory:
    def test_first_push(self):
        mem = Lsr1Memory(3, 2)
        lsr1_push(mem, 2 * e1, e1)
        (z, delta), = mem.vectors()
        assert_array_equal(z, e1)
        # denominator y'z (s'z would be 2 and break the secant equation)
        assert delta == 1.0
        assert_allclose(lsr1_apply(mem, e1), 2 * e1)

    def test_direct_formula(self):
        mem = Lsr1Memory(3, 2)
        mem.Z[0], mem.delta[0] = e1, 2.0
        mem._advance()
        assert_allclose(lsr1_apply(mem, e1), 1.5 * e1)

    def test_empty(self):
        v = np.arange(3.0)
        assert_array_equal(lsr1_apply(Lsr1Memory(3, 4), v), v)

    def test_degenerate_skipped(self):
        mem = Lsr1Memory(3, 2)
        with pytest.raises(BreakdownError) as exc:
            lsr1_push(mem, e1, e1)
        assert exc.value.kind == "sr1"
        assert mem.skipped == 1 and len(mem) == 0

    @given(st.integers(0, 5000))
    def test_secant(self, seed):
        rng = np.random.default_rng(seed)
        mem = Lsr1Memory(4, 3)
        for _ in range(3):
            s, y = rng.standard_normal(4), rng.standard_normal(4)
            try:
                lsr1_push(mem, s, y)
            except BreakdownError:
                continue
            assert rel(lsr1_apply(mem, y), s) <= 1e-10

    def test_matches_dense_sr1_while_k_le_m(self, spd20):
        A, b, model = spd20
        _, t = broyden_solve(model, schedule="sr1", rtol=1e-12, maxit=8, keep_history=True)
        mem, H = Lsr1Memory(20, 8), np.eye(20)
        for s, y in t.info["pairs"]:
            lsr1_push(mem, s, y)
            H = sr1_update(H, s, y)
            D = np.column_stack([lsr1_apply(mem, e) for e in np.eye(20)])
            assert_allclose(D, H, rtol=1e-9, atol=1e-10)

    def test_cost(self):
        n, m = 6, 2
        mem = Lsr1Memory(n, m)
        rng = np.random.default_rng(2)
        for _ in range(m):
            s = rng.standard_normal(n)
            lsr1_push(mem, s, 3 * s + 0.1 * rng.standard_normal(n))
        mem.mults = 0
        lsr1_apply(mem, np.ones(n))
        assert mem.mults == 2 * m * n
        lsr1_push(mem, rng.standard_normal(n), rng.standard_normal(n))
        assert mem.mults == 4 * m * n + n
        assert mem.stored_vectors() == 2 + m


class TestSolvers:
    @pytest.mark.parametrize("m", [1, 5, 20])
    def test_lbfgs_equals_pcg(self, spd20, m):
        A, b, model = spd20
        _, tp = pcg_solve(A, b, rtol=1e-10, keep_history=True)
        _, t = lbfgs_solve(model, m, rtol=1e-10, keep_history=True)
        assert t.iterations == tp.iterations
        for x, xp in zip(t.iterates[1:], tp.iterates[1:]):
            assert rel(x, xp) <= 1e-8

    def test_lsr1_full_memory_converges(self, spd20):
        _, _, model = spd20
        _, t = lsr1_solve(model, 20, rtol=1e-10)
        assert t.status == "converged" and t.iterations <= 20

    def test_lsr1_skip_counted(self):
        # first pair satisfies s = H0 y so it is skipped, iteration continues
        from qnkrylov.core import QuadraticModel
        m = QuadraticModel.from_matrix(np.diag([1.0, 1.0, 2.0]), np.array([1.0, 1.0, 0.0]))
        x, t = lsr1_solve(m, 2, rtol=1e-12)
        assert t.status == "converged"
        assert t.info["skipped"] >= 0
