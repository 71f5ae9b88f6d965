import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualdo.ambient import SampleSpace, SpatialGrid
from dualdo.analysis import (
    REPORT_COLUMNS,
    GrowthConstants,
    adversarial_stability,
    check_gram_inv_lipschitz,
    check_growth_bounds,
    check_proj_lipschitz,
    check_stability,
    check_wedin,
    dense_projection,
    gram_inv_campaign,
    kappa_bar,
    operator_norm,
    proj_lipschitz_campaign,
    stability_campaign,
    wedin_campaign,
    write_reports_csv,
)
from dualdo.analysis import _wedin_instance
from dualdo.integrator import StepConfig, integrate
from dualdo.problems import linear_example, tanh_example, zero_forcing


def assert_clean(reports):
    bad = [r for r in reports if not r.passed]
    assert not bad, f"{len(bad)} violations, first: {bad[0]}"


class TestOperatorNorm:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_on_random_low_rank(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((40, 4)) @ rng.standard_normal((4, 40))
        est = operator_norm(lambda X: A @ X, lambda X: A.T @ X, 40, 6, seed=seed)
        assert est == pytest.approx(np.linalg.norm(A, 2), rel=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_projection_residual_matches_dense(self, seed):
        Y_hat, W, Wp, beta, kappa, samples = _wedin_instance(seed, 3, 50, 0.5)
        P1, P2 = dense_projection(W, samples), dense_projection(Wp, samples)
        dense = np.linalg.norm((np.eye(50) - P2) @ P1, 2)
        rep = check_wedin(Y_hat, W, Wp, beta, kappa, samples, seed=seed)
        assert abs(rep.lhs - dense) <= 1e-8
        rep2 = check_proj_lipschitz(Y_hat, W, Wp, beta, kappa, samples, seed=seed)
        assert abs(rep2.lhs - np.linalg.norm(P1 - P2, 2)) <= 1e-8


class TestWedin:
    def test_identical(self):
        Y_hat, W, _, beta, kappa, samples = _wedin_instance(0, 3, 50, 0.5)
        r = check_wedin(Y_hat, W, W, beta, kappa, samples)
        assert r.lhs <= 1e-14 and r.rhs == 0.0 and r.passed
        r2 = check_proj_lipschitz(Y_hat, W, W, beta, kappa, samples)
        assert r2.lhs <= 1e-14 and r2.details["one_sided"] <= 1e-14 and r2.passed

    def test_kappa_bar(self):
        assert kappa_bar(1.0, 0.0) == pytest.approx(0.5)
        # kappa_bar solves kappa^2 + beta kappa = sigma / 4
        k = kappa_bar(0.3, 2.0)
        assert k * k + 2.0 * k == pytest.approx(0.3 / 4)

    def test_campaign(self):
        reports = wedin_campaign(200, seed=0)
        assert len(reports) == 200 and all(r.precondition_ok for r in reports)
        assert_clean(reports)
        assert [r.seed for r in reports] == list(range(200))

    def test_precondition_violation_is_reported(self):
        Y_hat, W, Wp, beta, kappa, samples = _wedin_instance(1, 3, 50, 0.5)
        r = check_wedin(Y_hat, W, Wp, beta, 2 * kappa_bar(1.0, beta) + 10, samples)
        assert not r.precondition_ok and r.passed

    @given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.05, 0.95))
    def test_property(self, seed, S, frac):
        Y_hat, W, Wp, beta, kappa, samples = _wedin_instance(seed, S, 30, frac)
        assert check_wedin(Y_hat, W, Wp, beta, kappa, samples, seed=seed).passed


class TestProjLipschitz:
    def test_equality_campaign(self):
        reports = proj_lipschitz_campaign(100, seed=1000)
        assert_clean(reports)
        assert max(r.details["eq_gap"] for r in reports) <= 1e-8

    def test_near_kappa_bar(self):
        reports = proj_lipschitz_campaign(100, seed=2000, kappa_frac=0.99)
        assert_clean(reports)
        margin = min(r.margin for r in reports)
        print(f"smallest margin at 0.99 kappa_bar: {margin:.3e}")
        assert margin >= 0


class TestGramInverse:
    def test_identical(self):
        grid = SpatialGrid(16)
        U = np.random.default_rng(0).standard_normal((3, 16))
        a = math.sqrt(grid.h * np.sum(U * U))
        r = check_gram_inv_lipschitz(U, U, a, grid)
        assert r.lhs == 0.0 and r.rhs == 0.0 and r.passed

    def test_campaign_three_levels(self):
        reports = gram_inv_campaign(200, seed=0)
        assert len(reports) == 200 and all(r.precondition_ok for r in reports)
        levels = sorted({round(math.log10(r.details["sigma_min"])) for r in reports})
        assert len(levels) >= 3
        assert_clean(reports)

    def test_near_singular(self):
        reports = gram_inv_campaign(20, seed=77, sigma_levels=(1e-6,))
        assert_clean(reports)
        assert all(r.details["sigma_min"] < 2e-6 for r in reports)

    def test_frobenius_step(self):
        """``||Z - Z'||_F <= 2 sqrt(S) alpha ||U - U'||`` behind the constant."""
        grid = SpatialGrid(20)
        rng = np.random.default_rng(4)
        for _ in range(100):
            S = rng.integers(1, 5)
            U, Up = rng.standard_normal((2, S, 20))
            alpha = max(math.sqrt(grid.h * np.sum(U * U)), math.sqrt(grid.h * np.sum(Up * Up)))
            dZ = np.linalg.norm(grid.h * (U @ U.T - Up @ Up.T))
            assert dZ <= 2 * math.sqrt(S) * alpha * math.sqrt(grid.h * np.sum((U - Up) ** 2)) * (1 + 1e-12)


class TestStability:
    def test_zero_field(self):
        p = linear_example()
        r = check_stability(p, np.zeros_like(p.u0))
        assert r.lhs == 0.0 and r.passed

    @pytest.mark.parametrize("factory", [linear_example, tanh_example])
    def test_campaign(self, factory):
        p = factory()
        reports = stability_campaign(p, 500, seed=0)
        assert len(reports) == 500
        assert_clean(reports)

    @pytest.mark.parametrize("factory", [linear_example, tanh_example])
    def test_adversarial(self, factory):
        p = factory()
        worst = adversarial_stability(p)
        print(f"{p.name}: adversarial margin {worst.margin:.6g}")
        assert worst.passed
        assert worst.margin <= min(r.margin for r in stability_campaign(p, 50, seed=3))

    def test_constant_is_not_vacuous(self):
        p = linear_example()
        # an undersized constant is caught along the forcing direction
        assert not adversarial_stability(p, constant=1e-3).passed


class TestGrowth:
    def test_zero_forcing(self):
        p = zero_forcing(n=32, n_samples=50)
        tr = integrate(p, 3, 0.5, StepConfig(dt=1e-2))
        reports = check_growth_bounds(tr, p)
        u0 = math.sqrt(p.grid.h * np.sum(tr.snapshots[0].U ** 2))
        assert_clean(reports)
        assert all(r.lhs <= u0 * (1 + 1e-12) for r in reports if r.check == "growth_u")

    def test_linear_run(self, linear):
        tr = integrate(linear, 3, 1.0, StepConfig(dt=1e-3), snapshot_every=10)
        reports = check_growth_bounds(tr, linear)
        assert {r.check for r in reports} == {"growth_u", "growth_lambda_u"}
        assert len(reports) == 2 * len(tr.snapshots)
        assert_clean(reports)

    def test_lambda_envelope_only_for_linear(self):
        p = tanh_example(n=32, n_samples=50)
        tr = integrate(p, 2, 0.1, StepConfig(dt=1e-2))
        assert {r.check for r in check_growth_bounds(tr, p)} == {"growth_u"}

    def test_negative_control(self, linear):
        stale = GrowthConstants.from_problem(linear)
        hot = linear.with_nonlinearity(linear.nonlinearity.scaled(10.0))
        tr = integrate(hot, 3, 1.0, StepConfig(dt=1e-3), snapshot_every=10)
        reports = check_growth_bounds(tr, hot, stale)
        assert any(not r.passed for r in reports if r.check == "growth_u")
        assert any(not r.passed for r in reports if r.check == "growth_lambda_u")


def test_csv_rows(tmp_path):
    reports = wedin_campaign(3, seed=5)
    path = tmp_path / "r.csv"
    write_reports_csv(reports, path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert [int(r[1]) for r in rows[1:]] == [5, 6, 7]
    for r, rep in zip(rows[1:], reports):
        assert float(r[2]) == rep.lhs and float(r[4]) == rep.margin and r[5] == "1"
