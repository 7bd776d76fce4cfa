import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efimovlab.hubbard import (
    DELTA_RATIO,
    Example5Params,
    analytic_T_eigenvalue,
    breakpoints,
    example_model,
    grid_breakpoints,
    k2_tail_bound,
    kernel_k2,
    p,
    phi,
    potential_u,
    q,
    tent,
)
from efimovlab.operators import assemble_components, discretize_kernel
from efimovlab.quadrature import build_grid


def ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


class TestBreakpoints:
    @pytest.mark.parametrize("n, pn, qn", [(0, 0.0, None), (1, 0.5, 0.25), (2, 0.75, 0.625), (3, 0.875, 0.8125)])
    def test_values(self, n, pn, qn):
        assert breakpoints(n) == (pn, qn)

    def test_recurrence(self):
        for n in range(1, 30):
            assert p(n) == p(n - 1) + 2.0**-n

    def test_negative(self):
        with pytest.raises(ValueError):
            p(-1)

    def test_grid_breakpoints_sorted_and_distinct(self):
        bp = grid_breakpoints(6)
        assert list(bp) == sorted(bp) and len(set(bp)) == len(bp) == 14


class TestTent:
    def test_peak_and_ends(self):
        assert tent(2, 5 / 8) == 1.0
        assert tent(2, 0.75) == 0.0
        assert tent(2, 0.5) == 0.0
        assert tent(3, 0.2) == 0.0

    def test_linear_flanks(self):
        assert tent(2, 9 / 16) == pytest.approx(0.5, abs=1e-15)
        assert tent(2, 11 / 16) == pytest.approx(0.5, abs=1e-15)

    def test_degenerate_segment(self):
        assert tent(60, 1.0) == 0.0


class TestPotential:
    def test_zero_on_left_half(self):
        params = Example5Params(M=5)
        assert potential_u(0.3, params) == 0.0
        assert np.all(potential_u(np.linspace(0, 0.5, 50), params) == 0.0)

    def test_peak(self):
        assert potential_u(q(2), Example5Params(M=3)) == pytest.approx(2 / 9, abs=1e-15)

    def test_right_end(self):
        assert potential_u(1.0, Example5Params(M=8)) == 0.0

    def test_outside(self):
        with pytest.raises(ValueError):
            potential_u(1.5, Example5Params())

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(2, 12))
    def test_bounds(self, x, M):
        u = float(potential_u(x, Example5Params(M=M, N=1)))
        assert 0.0 <= u <= DELTA_RATIO**2 + 1e-15

    def test_custom_delta(self):
        params = Example5Params(M=3, delta=lambda n: 0.5 * DELTA_RATIO**n)
        assert potential_u(q(3), params) == pytest.approx(0.5 * DELTA_RATIO**3)

    def test_delta_bound_enforced(self):
        with pytest.raises(ValueError, match="delta_2"):
            Example5Params(M=3, delta=lambda n: 1.0)


class TestParams:
    def test_gamma_constraint(self):
        with pytest.raises(ValueError, match="gamma >= 2/3"):
            Example5Params(gamma=0.5)
        Example5Params(gamma=2 / 3)

    @pytest.mark.parametrize("kw", [{"M": 1}, {"N": 0}, {"g": 0}])
    def test_truncations(self, kw):
        with pytest.raises(ValueError):
            Example5Params(**kw)


class TestPhi:
    def test_value(self):
        assert phi(1, 0.25) == pytest.approx(2.0, abs=1e-15)

    def test_outside_support(self):
        assert phi(2, 0.3) == 0.0 and phi(2, 0.9) == 0.0

    @pytest.mark.parametrize("n", range(1, 7))
    def test_normalized(self, n):
        grid = build_grid((0, 1), grid_breakpoints(n), 8)
        assert abs(float(np.sum(grid.weights * phi(n, grid.nodes) ** 2)) - 1.0) < 1e-10

    def test_orthonormal_family(self):
        grid = build_grid((0, 1), grid_breakpoints(6), 8)
        F = np.array([grid.sample(lambda y, n=n: phi(n, y)) for n in range(1, 7)])
        assert np.max(np.abs(F @ F.T - np.eye(6))) < 1e-9
        assert float(np.sum(grid.weights * phi(2, grid.nodes) * phi(3, grid.nodes))) == 0.0


class TestKernel:
    def test_cross_terms_vanish(self):
        assert kernel_k2(0.25, q(2), Example5Params(N=3)) == 0.0

    def test_diagonal_value(self):
        assert kernel_k2(0.25, 0.25, Example5Params(N=1)) == pytest.approx(2 / 3 * 4, abs=1e-14)

    def test_eigenfunctions(self):
        params = Example5Params(M=2, N=4)
        spec = example_model(params)
        K2 = discretize_kernel(spec.k2, spec.grid.gy).matrix
        for n in range(1, 5):
            v = spec.grid.gy.sample(lambda y: phi(n, y))
            assert np.linalg.norm(K2 @ v - (2 / 3) ** n * v) <= 1e-8

    def test_three_term_spectrum(self):
        spec = example_model(Example5Params(M=2, N=3))
        w = np.linalg.eigvalsh(discretize_kernel(spec.k2, spec.grid.gy).matrix)
        np.testing.assert_allclose(np.sort(w)[-3:], [8 / 27, 4 / 9, 2 / 3], atol=1e-8)

    def test_tail_bound(self):
        params = Example5Params(N=2)
        assert k2_tail_bound(0.25, 0.25, params) == 0.0
        y = q(4)
        assert k2_tail_bound(y, y, params) == pytest.approx((2 / 3) ** 4 * 2**5, rel=1e-12)
        assert k2_tail_bound(1.0, 1.0, params) == 0.0
        assert k2_tail_bound(q(3), q(4), params) == 0.0

    def test_truncation_exact_inside_box(self):
        small, big = Example5Params(N=3), Example5Params(N=8)
        y = np.linspace(0, p(3), 31)
        Y, Tt = np.meshgrid(y, y)
        np.testing.assert_array_equal(kernel_k2(Y, Tt, small), kernel_k2(Y, Tt, big))


class TestModel:
    def test_grid_alignment(self):
        spec = example_model(Example5Params(M=3, N=5))
        assert spec.grid.gx.size == 11 * 8
        for n in range(6):
            assert p(n) in spec.grid.gx.breakpoints

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    @pytest.mark.parametrize("gamma", [2 / 3, 1.0])
    def test_T_eigenvalues(self, n, gamma):
        spec = example_model(Example5Params(M=4, N=4, gamma=gamma))
        T = assemble_components(spec).T
        f = spec.grid.sample_separable(ones, lambda y: phi(n, y))
        omega = analytic_T_eigenvalue(n, gamma)
        assert np.linalg.norm(T.apply(f) - omega * f) <= 1e-8 * np.linalg.norm(f)

    def test_analytic_values(self):
        assert analytic_T_eigenvalue(1, 2 / 3) == pytest.approx(4 / 3)
        assert analytic_T_eigenvalue(2, 2 / 3) == pytest.approx(10 / 9)
        vals = [analytic_T_eigenvalue(n, 2 / 3) for n in range(1, 40)]
        assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] - 2 / 3 < 1e-6
        with pytest.raises(ValueError):
            analytic_T_eigenvalue(0, 1.0)

    def test_delta_decreasing(self):
        params = Example5Params(M=10)
        d = [params.delta_n(n) for n in range(2, 11)]
        assert all(a > b for a, b in zip(d, d[1:]))
        assert params.delta_n(1) == 1.0
        assert d[0] == pytest.approx(2 / 9) and math.isclose(d[1], 2 * math.sqrt(2) / 27)
