"""Randomized numerical audits of the projection, Gram-inverse, stability and growth inequalities.

Every check returns :class:`CheckReport` rows holding both sides of the
inequality and the margin ``rhs - lhs``.  Campaign functions run seeded
trials in index order; the seed of each trial is stored in its report.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.linalg import qr

from .ambient import NonlinearitySpec, SampleSpace, SpatialGrid, inner_l2omega_h, norm_l2omega_h
from .core import Problem, gram_u
from .integrator import Trajectory

__all__ = [
    "CheckReport",
    "kappa_bar",
    "wedin_constant",
    "gram_inv_constant",
    "operator_norm",
    "dense_projection",
    "check_wedin",
    "check_proj_lipschitz",
    "check_gram_inv_lipschitz",
    "check_stability",
    "check_growth_bounds",
    "GrowthConstants",
    "wedin_campaign",
    "proj_lipschitz_campaign",
    "gram_inv_campaign",
    "stability_campaign",
    "adversarial_stability",
    "u_envelope",
    "lambda_u_envelope",
    "write_reports_csv",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("check", "seed", "lhs", "rhs", "margin", "pass")
NORM_EQ_TOL = 1e-8


@dataclass
class CheckReport:
    check: str
    seed: Optional[int]
    lhs: float
    rhs: float
    passed: bool
    precondition_ok: bool = True
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def row(self):
        return (self.check, "" if self.seed is None else self.seed, self.lhs, self.rhs, self.margin, self.passed)


def kappa_bar(sigma_hat: float, beta: float) -> float:
    """Admissible perturbation radius ``(-beta + sqrt(beta^2 + sigma)) / 2``."""
    return 0.5 * (-beta + math.sqrt(beta * beta + sigma_hat))


def wedin_constant(kappa: float, beta: float, sigma_hat: float) -> float:
    return 2.0 * (kappa + beta) / sigma_hat


def gram_inv_constant(alpha: float, S: int) -> float:
    """``C = 2 C'`` with ``C' = 2 sqrt(S) alpha``.

    Entrywise ``|Z_jk - Z'_jk| <= alpha (d_j + d_k)`` with ``d_j = ||U_j - U'_j||``;
    summing squares with ``(x + y)^2 <= 2x^2 + 2y^2`` gives
    ``||Z - Z'||_F <= 2 sqrt(S) alpha ||U - U'||``.  The mean-value bound on
    matrix inversion then contributes the factor 2.
    """
    return 4.0 * math.sqrt(S) * alpha


# -- linear algebra on the weighted sample space ----------------------------


def _whiten(Y, samples):
    """Coordinates in which the L2(Omega) inner product is Euclidean."""
    w = samples.weights
    if np.any(w <= 0):
        raise ValueError("analysis checks need strictly positive sample weights")
    return (np.atleast_2d(Y) * np.sqrt(w)).T  # (Q, S)


def _orth_basis(Xw):
    Qm, _ = qr(Xw, mode="economic", check_finite=False)
    return Qm


def operator_norm(apply: Callable, apply_adj: Callable, dim: int, block: int, seed: int = 0, tol: float = 1e-15, maxiter: int = 200) -> float:
    """2-norm of a linear map by block power iteration on ``T^* T``.

    ``block`` should bound the rank of ``T``; for finite-rank maps the
    iteration then converges in a couple of sweeps.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((dim, min(block, dim)))
    X, _ = np.linalg.qr(X)
    est = 0.0
    for _ in range(maxiter):
        Z = apply_adj(apply(X))
        X, R = np.linalg.qr(Z)
        H = X.T @ apply_adj(apply(X))
        ritz = np.linalg.eigvalsh(0.5 * (H + H.T))
        new = math.sqrt(max(ritz[-1], 0.0))
        if abs(new - est) <= tol * max(new, 1e-300):
            return new
        est = new
    return est


def dense_projection(W, samples: SampleSpace) -> np.ndarray:
    """Matrix of ``P_W`` in whitened coordinates (``Q x Q``)."""
    Qm = _orth_basis(_whiten(W, samples))
    return Qm @ Qm.T


def _proj_ops(W, Wp, samples):
    Q1 = _orth_basis(_whiten(W, samples))
    Q2 = _orth_basis(_whiten(Wp, samples))

    def P(Qm, X):
        return Qm @ (Qm.T @ X)

    def resid(X):  # (I - P_W') P_W
        Y = P(Q1, X)
        return Y - P(Q2, Y)

    def resid_adj(X):  # P_W (I - P_W')
        return P(Q1, X - P(Q2, X))

    def diff(X):
        return P(Q1, X) - P(Q2, X)

    return resid, resid_adj, diff


def _l2_norm_vec(D, samples):
    """``||D||`` in ``[L2(Omega)]^S`` for an ``(S, Q)`` array."""
    return float(math.sqrt(np.sum((np.atleast_2d(D) ** 2) * samples.weights)))


def _wedin_setup(Y_hat, W, Wp, beta, kappa, samples):
    sig = float(np.linalg.eigvalsh((Y_hat * samples.weights) @ Y_hat.T)[0])
    kb = kappa_bar(sig, beta) if sig > 0 else 0.0
    dW = _l2_norm_vec(W - Y_hat, samples)
    dWp = _l2_norm_vec(Wp - Y_hat, samples)
    pre = (
        sig > 0
        and 0 < kappa < kb
        and beta >= _l2_norm_vec(Y_hat, samples) * (1 - 1e-14)
        and dW <= kappa
        and dWp <= kappa
    )
    C = wedin_constant(kappa, beta, sig) if sig > 0 else math.inf
    return sig, kb, pre, C


def check_wedin(Y_hat, W, Wp, beta: float, kappa: float, samples: SampleSpace, seed: Optional[int] = None) -> CheckReport:
    """``||(I - P_W') P_W|| <= C ||W - W'|| < 1`` with ``C = 2(kappa + beta)/sigma_hat``."""
    Y_hat, W, Wp = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (Y_hat, W, Wp))
    S, Qn = Y_hat.shape
    sig, kb, pre, C = _wedin_setup(Y_hat, W, Wp, beta, kappa, samples)
    resid, resid_adj, _ = _proj_ops(W, Wp, samples)
    lhs = operator_norm(resid, resid_adj, Qn, S + 2, seed=0 if seed is None else seed)
    rhs = C * _l2_norm_vec(W - Wp, samples)
    passed = (lhs <= rhs * (1 + 1e-12) + 1e-14) and rhs < 1.0
    return CheckReport(
        "wedin", seed, lhs, rhs, passed if pre else True, pre,
        details={"sigma_hat": sig, "kappa_bar": kb, "kappa": kappa, "beta": beta},
    )


def check_proj_lipschitz(Y_hat, W, Wp, beta: float, kappa: float, samples: SampleSpace, seed: Optional[int] = None) -> CheckReport:
    """``||P_W - P_W'|| <= C ||W - W'||`` and ``||P_W - P_W'|| = ||(I - P_W') P_W||``."""
    Y_hat, W, Wp = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (Y_hat, W, Wp))
    S, Qn = Y_hat.shape
    sig, kb, pre, C = _wedin_setup(Y_hat, W, Wp, beta, kappa, samples)
    resid, resid_adj, diff = _proj_ops(W, Wp, samples)
    s0 = 0 if seed is None else seed
    lhs = operator_norm(diff, diff, Qn, 2 * S + 2, seed=s0)
    one_sided = operator_norm(resid, resid_adj, Qn, S + 2, seed=s0)
    rhs = C * _l2_norm_vec(W - Wp, samples)
    eq_gap = abs(lhs - one_sided)
    passed = (lhs <= rhs * (1 + 1e-12) + 1e-14) and eq_gap <= NORM_EQ_TOL
    return CheckReport(
        "proj_lipschitz", seed, lhs, rhs, passed if pre else True, pre,
        details={"one_sided": one_sided, "eq_gap": eq_gap, "kappa": kappa, "kappa_bar": kb},
    )


def check_gram_inv_lipschitz(U, Up, alpha: float, grid: SpatialGrid, seed: Optional[int] = None) -> CheckReport:
    """``||Z^{-1} - Z'^{-1}|| <= C (||Z^{-1}||^2 + ||Z'^{-1}||^2) ||U - U'||``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    Up = np.atleast_2d(np.asarray(Up, dtype=float))
    S = U.shape[0]
    g, gp = gram_u(U, grid), gram_u(Up, grid)
    nU = math.sqrt(grid.h * np.sum(U * U))
    nUp = math.sqrt(grid.h * np.sum(Up * Up))
    pre = g.sigma_min > 0 and gp.sigma_min > 0 and max(nU, nUp) <= alpha
    if g.sigma_min > 0 and gp.sigma_min > 0:
        Zi = np.linalg.inv(g.z)
        Zpi = np.linalg.inv(gp.z)
        lhs = float(np.linalg.norm(Zi - Zpi, 2))
        dU = math.sqrt(grid.h * np.sum((U - Up) ** 2))
        rhs = gram_inv_constant(alpha, S) * (g.inv_norm**2 + gp.inv_norm**2) * dU
    else:
        lhs, rhs = math.inf, math.inf
    passed = lhs <= rhs * (1 + 1e-10) + 1e-14
    return CheckReport(
        "gram_inv_lipschitz", seed, lhs, rhs, passed if pre else True, pre,
        details={"sigma_min": g.sigma_min, "sigma_min_prime": gp.sigma_min, "alpha": alpha},
    )


def check_stability(problem: Problem, v, seed: Optional[int] = None, constant: Optional[float] = None) -> CheckReport:
    """``E<Lambda v + F(v), v> <= C_{Lambda,F} (1 + ||v||^2)``."""
    v = np.asarray(v, dtype=float)
    s, g = problem.samples, problem.grid
    C = problem.nonlinearity.stability_constant(s, g) if constant is None else constant
    lhs = inner_l2omega_h(problem.laplacian.apply(v) + problem.F(v), v, s, g)
    rhs = C * (1.0 + inner_l2omega_h(v, v, s, g))
    return CheckReport("stability", seed, lhs, rhs, lhs <= rhs * (1 + 1e-12), True, details={"C": C})


@dataclass(frozen=True)
class GrowthConstants:
    stability: float
    lambda_growth: Optional[float]
    k_lambda: float = 1.0

    @classmethod
    def from_problem(cls, problem: Problem) -> "GrowthConstants":
        nl = problem.nonlinearity
        return cls(
            stability=nl.stability_constant(problem.samples, problem.grid),
            lambda_growth=nl.lambda_growth_constant(problem.samples, problem.grid, problem.laplacian),
        )


def u_envelope(t, u0_norm, C):
    """``sqrt(2C) t^{1/2} + ||U_0|| e^{C t}``."""
    return math.sqrt(2.0 * C * t) + u0_norm * math.exp(C * t)


def lambda_u_envelope(t, lu0_norm, C_F, S, K=1.0):
    """``K (||Lambda U_0|| + t C_F sqrt(S)) e^{K C_F t}``."""
    return K * (lu0_norm + t * C_F * math.sqrt(S)) * math.exp(K * C_F * t)


def check_growth_bounds(trajectory: Trajectory, problem: Problem, constants: Optional[GrowthConstants] = None) -> List[CheckReport]:
    """Per-snapshot ``||U(t)||`` and ``||Lambda U(t)||`` envelopes.

    The envelopes restart at every rank change.  The second one is only
    checked when the nonlinearity provides ``C_F``.
    """
    if constants is None:
        constants = GrowthConstants.from_problem(problem)
    h = problem.grid.h
    lap = problem.laplacian
    reports = []
    start = None
    for snap in trajectory.snapshots:
        if start is None or snap.rank != start.rank:
            start = snap
            u0n = math.sqrt(h * np.sum(start.U**2))
            lu0n = math.sqrt(h * np.sum(lap.apply(start.U) ** 2))
        t = snap.t - start.t
        un = math.sqrt(h * np.sum(snap.U**2))
        env = u_envelope(t, u0n, constants.stability)
        reports.append(CheckReport("growth_u", None, un, env, un <= env * (1 + 1e-12), details={"t": snap.t}))
        if constants.lambda_growth is not None:
            lun = math.sqrt(h * np.sum(lap.apply(snap.U) ** 2))
            env2 = lambda_u_envelope(t, lu0n, constants.lambda_growth, snap.rank, constants.k_lambda)
            reports.append(
                CheckReport("growth_lambda_u", None, lun, env2, lun <= env2 * (1 + 1e-12), details={"t": snap.t})
            )
    return reports


# -- seeded campaigns ---------------------------------------------------------


def _random_perturbation(rng, shape, radius, samples):
    D = rng.standard_normal(shape)
    D *= radius * rng.uniform(0.0, 1.0) / _l2_norm_vec(D, samples)
    return D


def _wedin_instance(seed, S, Q, kappa_frac):
    rng = np.random.default_rng(seed)
    samples = SampleSpace.monte_carlo(Q, seed=seed)
    Y_hat = rng.standard_normal((S, Q))
    beta = _l2_norm_vec(Y_hat, samples)
    sig = float(np.linalg.eigvalsh((Y_hat * samples.weights) @ Y_hat.T)[0])
    kappa = kappa_frac * kappa_bar(sig, beta)
    W = Y_hat + _random_perturbation(rng, (S, Q), kappa, samples)
    Wp = Y_hat + _random_perturbation(rng, (S, Q), kappa, samples)
    return Y_hat, W, Wp, beta, kappa, samples


def wedin_campaign(n_trials=200, seed=0, S=3, Q=50, kappa_frac=0.5) -> List[CheckReport]:
    out = []
    for i in range(n_trials):
        Y_hat, W, Wp, beta, kappa, samples = _wedin_instance(seed + i, S, Q, kappa_frac)
        out.append(check_wedin(Y_hat, W, Wp, beta, kappa, samples, seed=seed + i))
    return out


def proj_lipschitz_campaign(n_trials=200, seed=0, S=3, Q=50, kappa_frac=0.5) -> List[CheckReport]:
    out = []
    for i in range(n_trials):
        Y_hat, W, Wp, beta, kappa, samples = _wedin_instance(seed + i, S, Q, kappa_frac)
        out.append(check_proj_lipschitz(Y_hat, W, Wp, beta, kappa, samples, seed=seed + i))
    return out


def _conditioned_u(rng, S, n, smin, grid):
    """``U`` whose Gram matrix has eigenvalues spanning ``[smin, 1]``."""
    A = rng.standard_normal((n, S))
    Qm, _ = np.linalg.qr(A)
    Bm, _ = np.linalg.qr(rng.standard_normal((S, S)))
    eig = np.geomspace(1.0, smin, S)
    return (Bm * np.sqrt(eig)) @ Qm.T / math.sqrt(grid.h)


def gram_inv_campaign(n_trials=200, seed=0, S=3, n=32, sigma_levels=(1.0, 1e-2, 1e-4), rel_step=0.1) -> List[CheckReport]:
    """Trials cycle through the conditioning levels; perturbations stay below ``rel_step * sqrt(sigma_min)``."""
    grid = SpatialGrid(n)
    out = []
    for i in range(n_trials):
        rng = np.random.default_rng(seed + i)
        smin = sigma_levels[i % len(sigma_levels)]
        U = _conditioned_u(rng, S, n, smin, grid)
        D = rng.standard_normal(U.shape)
        D *= rel_step * math.sqrt(smin) * rng.uniform(0.0, 1.0) / math.sqrt(grid.h * np.sum(D * D))
        Up = U + D
        alpha = max(math.sqrt(grid.h * np.sum(U * U)), math.sqrt(grid.h * np.sum(Up * Up)))
        out.append(check_gram_inv_lipschitz(U, Up, alpha, grid, seed=seed + i))
    return out


def stability_campaign(problem: Problem, n_trials=500, seed=0, magnitudes=(0.1, 1.0, 10.0), constant=None) -> List[CheckReport]:
    """Random smooth and rough fields at several magnitudes, plus fields aligned with ``c``."""
    s, g = problem.samples, problem.grid
    out = []
    for i in range(n_trials):
        rng = np.random.default_rng(seed + i)
        mag = magnitudes[i % len(magnitudes)]
        if i % 2 == 0:
            v = rng.standard_normal((s.size, g.n))
        else:
            k = rng.integers(1, 6, size=3)
            v = rng.standard_normal((s.size, 3)) @ np.array([g.sine_mode(int(j)) for j in k])
        nv = norm_l2omega_h(v, s, g)
        v = v * (mag / nv) if nv > 0 else v
        out.append(check_stability(problem, v, seed=seed + i, constant=constant))
    return out


def adversarial_stability(problem: Problem, scales=np.geomspace(1e-3, 1e3, 61), constant=None) -> CheckReport:
    """Directed search along ``v = s c / ||c||``; returns the trial with the smallest margin."""
    s, g = problem.samples, problem.grid
    c = np.broadcast_to(problem.nonlinearity.c, (s.size, g.n))
    nc = norm_l2omega_h(c, s, g)
    direction = c / nc if nc > 0 else np.ones((s.size, g.n)) / norm_l2omega_h(np.ones((s.size, g.n)), s, g)
    reports = [check_stability(problem, sc * direction, constant=constant) for sc in scales]
    worst = min(reports, key=lambda r: r.margin)
    worst.check = "stability_adversarial"
    return worst


def write_reports_csv(reports: Iterable[CheckReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            check, seed, lhs, rhs, margin, ok = r.row()
            w.writerow([check, seed, _fmt(lhs), _fmt(rhs), _fmt(margin), int(bool(ok))])


def _fmt(x) -> str:
    return format(float(x), ".17g")
