"""Scikit-learn style front ends for the factorization and the integrator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ambient import SampleSpace, SpatialGrid
from .core import Problem, reconstruct
from .integrator import StepConfig, integrate
from .rank_monitor import Thresholds, integrate_rank_adaptive
from .reparam import svd_low_rank

__all__ = ["LowRankFactorizer", "DualDOSolver"]


class LowRankFactorizer(TransformerMixin, BaseEstimator):
    """Best rank-``n_components`` factorization of a sampled random field.

    Rows of ``X`` are samples, columns are interior grid nodes with spacing
    ``h``.  ``components_`` holds the H-orthonormal spatial modes;
    ``transform`` returns the per-sample coordinates ``<x, V_j>_H``.
    """

    def __init__(self, n_components=2, h=None):
        self.n_components = n_components
        self.h = h

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=2)
        Q, n = X.shape
        if sample_weight is None:
            w = np.full(Q, 1.0 / Q)
        else:
            w = np.asarray(sample_weight, dtype=float)
            if w.shape != (Q,) or np.any(w < 0) or not w.sum() > 0:
                raise ValueError("sample_weight must be nonnegative with shape (n_samples,)")
            w = w / w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        h = 1.0 / (n + 1) if self.h is None else float(self.h)
        self.grid_ = SpatialGrid(n, (0.0, h * (n + 1)))
        self.samples_ = SampleSpace(points=np.arange(Q)[:, None], weights=w)
        f = svd_low_rank(X, int(self.n_components), self.samples_, self.grid_)
        self.components_ = f.V
        self.singular_values_ = f.sigma
        self.stochastic_basis_ = f.W
        self.state_ = f.to_state()
        self.n_features_in_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} grid values per sample, got {X.shape[1]}")
        return self.grid_.h * (X @ self.components_.T)

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        Z = check_array(Z, dtype=np.float64)
        return Z @ self.components_


class DualDOSolver(BaseEstimator):
    """Integrates a :class:`~dualdo.core.Problem` in the Dual DO parametrization.

    ``fit(problem)`` runs the integrator; ``predict(times)`` returns
    reconstructed fields, interpolated linearly between stored snapshots.
    With ``rank_adaptive=True`` rank-loss events drop one rank and continue.
    """

    def __init__(
        self,
        rank=3,
        dt=1e-3,
        t_end=1.0,
        scheme="imex_euler",
        reorth_policy="every_step",
        sigma_floor=1e-10,
        snapshot_every=1,
        rank_adaptive=False,
        blowup_slope=100.0,
        window=5,
    ):
        self.rank = rank
        self.dt = dt
        self.t_end = t_end
        self.scheme = scheme
        self.reorth_policy = reorth_policy
        self.sigma_floor = sigma_floor
        self.snapshot_every = snapshot_every
        self.rank_adaptive = rank_adaptive
        self.blowup_slope = blowup_slope
        self.window = window

    def fit(self, problem: Problem, y=None):
        if not isinstance(problem, Problem):
            raise TypeError("fit expects a dualdo.core.Problem")
        cfg = StepConfig(dt=self.dt, scheme=self.scheme, reorth_policy=self.reorth_policy, sigma_floor=self.sigma_floor)
        if self.rank_adaptive:
            th = Thresholds(sigma_floor=self.sigma_floor, blowup_slope=self.blowup_slope, window=self.window)
            traj, events = integrate_rank_adaptive(problem, self.rank, self.t_end, cfg, th, self.snapshot_every)
        else:
            traj, events = integrate(problem, self.rank, self.t_end, cfg, snapshot_every=self.snapshot_every), []
        self.problem_ = problem
        self.trajectory_ = traj
        self.events_ = events
        self.state_ = traj.final
        return self

    def predict(self, times):
        check_is_fitted(self, "trajectory_")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        t_snap = self.trajectory_.times
        if np.any(times < t_snap[0] - 1e-12) or np.any(times > t_snap[-1] + 1e-12):
            raise ValueError(f"times must lie in [{t_snap[0]}, {t_snap[-1]}]")
        out = np.empty((times.size,) + self.problem_.u0.shape)
        for i, t in enumerate(times):
            k = int(np.clip(np.searchsorted(t_snap, t, side="right") - 1, 0, t_snap.size - 1))
            a = reconstruct(self.trajectory_.snapshots[k])
            if k + 1 == t_snap.size or t <= t_snap[k]:
                out[i] = a
                continue
            b = reconstruct(self.trajectory_.snapshots[k + 1])
            theta = (t - t_snap[k]) / (t_snap[k + 1] - t_snap[k])
            out[i] = (1.0 - theta) * a + theta * b
        return out
