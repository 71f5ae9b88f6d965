import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualdo.ambient import (
    Laplacian,
    NonlinearitySpec,
    SampleSpace,
    SpatialGrid,
    eval_f_nonlinear,
    expect,
    inner_h,
    inner_l2omega_h,
    norm_h,
    norm_l2omega_h,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestSampleSpace:
    def test_monte_carlo_weights_sum_to_one(self):
        s = SampleSpace.monte_carlo(200, dim=3, seed=1)
        assert abs(s.weights.sum() - 1.0) <= 1e-14
        assert np.all(s.weights >= 0) and s.size == 200

    def test_gauss_legendre_integrates_polynomials(self):
        s = SampleSpace.gauss_legendre(5)
        # E[xi^2] = 1/3 for the uniform law on (-1, 1)
        assert expect(s.points[:, 0] ** 2, s) == pytest.approx(1 / 3, abs=1e-14)

    @pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]])
    def test_invalid_weights(self, w):
        with pytest.raises(ValueError):
            SampleSpace(points=np.arange(len(w)), weights=np.array(w, dtype=float))

    def test_restrict_renormalizes(self):
        s = SampleSpace.monte_carlo(10, seed=0).restrict(np.arange(4))
        assert s.size == 4 and abs(s.weights.sum() - 1) <= 1e-14


class TestGrid:
    def test_mesh_width(self):
        g = SpatialGrid(3)
        assert g.h == 0.25
        np.testing.assert_allclose(g.x, [0.25, 0.5, 0.75])

    def test_too_small(self):
        with pytest.raises(ValueError):
            SpatialGrid(1)
        with pytest.raises(ValueError):
            SpatialGrid(4, (1.0, 0.0))


class TestInnerProducts:
    def test_zero(self):
        g = SpatialGrid(5)
        assert inner_h(np.zeros(5), np.zeros(5), g) == 0.0

    def test_constant_one(self):
        g = SpatialGrid(3)
        assert inner_h(np.ones(3), np.ones(3), g) == pytest.approx(0.75, abs=1e-15)

    @given(arrays(float, 6, elements=finite), arrays(float, 6, elements=finite))
    def test_symmetry(self, f, g_):
        g = SpatialGrid(6)
        assert inner_h(f, g_, g) == inner_h(g_, f, g)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            inner_h(np.ones(3), np.ones(4), SpatialGrid(3))

    def test_expect_examples(self):
        s = SampleSpace(points=np.arange(4), weights=np.full(4, 0.25))
        assert expect(np.ones(4), s) == 1.0
        assert expect(np.array([1.0, 2, 3, 4]), s) == 2.5
        s2 = SampleSpace.monte_carlo(7, seed=3)
        e = np.zeros(7)
        e[2] = 1.0
        assert expect(e, s2) == s2.weights[2]
        with pytest.raises(ValueError):
            expect(np.ones(3), s)

    def test_expect_of_one_is_one(self):
        for Q in (1, 3, 200, 997):
            s = SampleSpace.monte_carlo(Q, seed=Q)
            assert abs(expect(np.ones(Q), s) - 1.0) <= 1e-14

    def test_l2omega_zero_and_rank_one(self):
        s = SampleSpace.monte_carlo(20, seed=0)
        g = SpatialGrid(8)
        assert inner_l2omega_h(np.zeros((20, 8)), np.zeros((20, 8)), s, g) == 0.0
        y = np.sign(np.random.default_rng(0).standard_normal(20))  # E[y^2] = 1
        phi = g.sine_mode(2)
        u = np.outer(y, phi)
        assert inner_l2omega_h(u, u, s, g) == pytest.approx(inner_h(phi, phi, g), rel=1e-13)

    def test_l2omega_brute_force(self):
        rng = np.random.default_rng(5)
        s = SampleSpace.monte_carlo(3, seed=5)
        g = SpatialGrid(4)
        u, v = rng.standard_normal((2, 3, 4))
        ref = 0.0
        for q in range(3):
            for i in range(4):
                ref += s.weights[q] * g.h * u[q, i] * v[q, i]
        assert inner_l2omega_h(u, v, s, g) == pytest.approx(ref, abs=1e-13)
        with pytest.raises(ValueError):
            inner_l2omega_h(u, v[:, :3], s, g)

    def test_norm_helpers(self):
        g = SpatialGrid(3)
        assert norm_h(np.ones(3), g) == pytest.approx(np.sqrt(0.75))
        s = SampleSpace.monte_carlo(2, seed=0)
        assert norm_l2omega_h(np.ones((2, 3)), s, g) == pytest.approx(np.sqrt(0.75))


class TestLaplacian:
    grid = SpatialGrid(31)
    lap = Laplacian(grid, nu=0.7)

    def test_zero(self):
        assert np.all(self.lap.apply(np.zeros(31)) == 0)

    @pytest.mark.parametrize("k", [1, 2, 5, 31])
    def test_eigenpairs(self, k):
        s = self.grid.sine_mode(k)
        lam = 0.7 * (4 / self.grid.h**2) * np.sin(k * np.pi * self.grid.h / 2) ** 2
        np.testing.assert_allclose(self.lap.apply(s), -lam * s, atol=1e-9 * lam)
        assert self.lap.eigenvalues()[k - 1] == pytest.approx(lam, rel=1e-13)

    def test_symmetric_and_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            f, g = rng.standard_normal((2, 31))
            lhs = inner_h(self.lap.apply(f), g, self.grid)
            rhs = inner_h(f, self.lap.apply(g), self.grid)
            assert abs(lhs - rhs) <= 1e-12 * norm_h(f, self.grid) * norm_h(g, self.grid) * self.lap.eigenvalues()[-1]
            assert inner_h(self.lap.apply(f), f, self.grid) <= 1e-12

    @given(arrays(float, 31, elements=finite))
    def test_negative_semidefinite_property(self, f):
        assert inner_h(self.lap.apply(f), f, self.grid) <= 1e-12 * max(1.0, inner_h(f, f, self.grid))

    def test_solve_shifted_examples(self):
        assert np.all(self.lap.solve_shifted(np.zeros(31), 0.1) == 0)
        g = np.random.default_rng(1).standard_normal(31)
        alpha = 1e-8
        f = self.lap.solve_shifted(g, alpha)
        assert np.linalg.norm(f - g) <= 10 * alpha * self.lap.eigenvalues()[-1] * np.linalg.norm(g)
        for k in (1, 3, 7):
            s = self.grid.sine_mode(k)
            np.testing.assert_allclose(
                self.lap.solve_shifted(s, 0.2), s / (1 + 0.2 * self.lap.eigenvalues()[k - 1]), atol=1e-13
            )

    def test_solve_shifted_residual(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal((4, 31))
        for alpha in (1e-4, 1e-2, 1.0):
            f = self.lap.solve_shifted(g, alpha)
            res = f - alpha * self.lap.apply(f) - g
            assert np.linalg.norm(res) <= 1e-12 * np.linalg.norm(g) * max(1.0, alpha * self.lap.eigenvalues()[-1] * 1e-2)

    @pytest.mark.parametrize("alpha", [0.0, -1.0])
    def test_solve_shifted_rejects_nonpositive(self, alpha):
        with pytest.raises(ValueError):
            self.lap.solve_shifted(np.ones(31), alpha)

    def test_semigroup_on_modes(self):
        s = self.grid.sine_mode(3)
        np.testing.assert_allclose(self.lap.semigroup(s, 0.01), np.exp(-0.01 * self.lap.eigenvalues()[2]) * s, atol=1e-13)


class TestNonlinearity:
    Q, n = 6, 5
    rng = np.random.default_rng(0)
    s = SampleSpace.monte_carlo(6, seed=0)
    g = SpatialGrid(5)

    def test_a_zero_gives_c(self):
        c = self.rng.standard_normal((self.Q, self.n))
        spec = NonlinearitySpec(a=np.zeros((self.Q, self.n)), b=np.ones((self.Q, self.n)), c=c, f="tanh")
        u = self.rng.standard_normal((self.Q, self.n))
        np.testing.assert_array_equal(eval_f_nonlinear(u, spec), c)

    def test_identity_linear(self):
        a = self.rng.standard_normal((self.Q, self.n))
        spec = NonlinearitySpec(a=a, b=1.0, c=0.0)
        u = self.rng.standard_normal((self.Q, self.n))
        np.testing.assert_allclose(eval_f_nonlinear(u, spec), a * u)

    @pytest.mark.parametrize("f", ["identity", "tanh", "sin"])
    def test_lipschitz_bound(self, f):
        a = self.rng.uniform(-2, 2, (self.Q, self.n))
        b = self.rng.uniform(-1, 3, (self.Q, self.n))
        spec = NonlinearitySpec(a=a, b=b, c=self.rng.standard_normal((self.Q, self.n)), f=f)
        L = spec.lipschitz()
        for _ in range(50):
            u, v = self.rng.standard_normal((2, self.Q, self.n)) * 3
            d = norm_l2omega_h(eval_f_nonlinear(u, spec) - eval_f_nonlinear(v, spec), self.s, self.g)
            assert d <= L * norm_l2omega_h(u - v, self.s, self.g) * (1 + 1e-12)

    def test_shape_mismatch(self):
        spec = NonlinearitySpec(a=np.ones((3, 5)), b=1.0, c=0.0)
        with pytest.raises(ValueError):
            eval_f_nonlinear(np.ones((6, 5)), spec)

    def test_unknown_tag_and_custom(self):
        with pytest.raises(ValueError):
            NonlinearitySpec(a=1.0, b=1.0, c=0.0, f="exp")
        with pytest.raises(ValueError):
            NonlinearitySpec(a=1.0, b=1.0, c=0.0, f="custom", custom=np.arctan)
        spec = NonlinearitySpec(a=1.0, b=1.0, c=0.0, f="custom", custom=np.arctan, fprime_bound=1.0)
        assert spec.fprime_sup == 1.0

    def test_commutes_with_restriction(self):
        a, b, c = self.rng.standard_normal((3, self.Q, self.n))
        spec = NonlinearitySpec(a=a, b=b, c=c, f="sin")
        u = self.rng.standard_normal((self.Q, self.n))
        idx = np.array([0, 2, 5])
        sub = NonlinearitySpec(a=a[idx], b=b[idx], c=c[idx], f="sin")
        np.testing.assert_array_equal(eval_f_nonlinear(u[idx], sub), eval_f_nonlinear(u, spec)[idx])

    def test_constants(self):
        a = np.full((self.Q, self.n), 0.5)
        c = np.outer(np.ones(self.Q), self.g.sine_mode(1))
        spec = NonlinearitySpec(a=a, b=np.ones((self.Q, self.n)), c=c)
        assert spec.lipschitz() == 0.5
        K = norm_l2omega_h(c, self.s, self.g)
        assert spec.offset_norm(self.s, self.g) == pytest.approx(K)
        assert spec.stability_constant(self.s, self.g) == pytest.approx(0.5 + K / 2)
        assert spec.linear_growth(self.s, self.g) == pytest.approx(max(0.5, K))
        lap = Laplacian(self.g, 0.1)
        CF = spec.lambda_growth_constant(self.s, self.g, lap)
        assert CF == pytest.approx(max(0.5, norm_l2omega_h(lap.apply(c), self.s, self.g)))
        assert NonlinearitySpec(a=a, b=np.ones((self.Q, self.n)), c=c, f="tanh").lambda_growth_constant(self.s, self.g, lap) is None

    def test_scaled(self):
        spec = NonlinearitySpec(a=2.0, b=3.0, c=1.0).scaled(10)
        assert float(spec.a) == 20.0 and float(spec.c) == 10.0 and float(spec.b) == 3.0
