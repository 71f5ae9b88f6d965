"""Full-order sample-wise reference solver and best-approximation errors."""

from __future__ import annotations

from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.linalg import svd

from .ambient import SampleSpace, SpatialGrid, norm_l2omega_h
from .core import Problem
from .exceptions import NonFinite
from .integrator import n_steps_for

__all__ = ["solve_full", "error_l2", "singular_values", "best_rank_error"]


def solve_full(
    problem: Problem,
    t_end: float,
    dt: float,
    save_every: int = 1,
    u0=None,
    save_steps: Optional[Iterable[int]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """IMEX Euler for ``du/dt = Lambda u + F(u)`` on every sample at once.

    Each row evolves independently.  Returns ``(times, fields)`` with
    ``fields`` of shape ``(T, Q, n)``; the initial field and the final one are
    always included.  ``save_steps`` (step indices) replaces the regular
    ``save_every`` stride when given.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.array(problem.u0 if u0 is None else u0, dtype=float)
    n = n_steps_for(t_end, dt)
    wanted = None if save_steps is None else set(int(k) for k in save_steps)
    times = [0.0]
    out = [u.copy()]
    t = 0.0
    for k in range(1, n + 1):
        t_next = k * dt if k < n else t_end
        h = t_next - t
        u = problem.laplacian.solve_shifted(u + h * problem.F(u), h)
        if not np.all(np.isfinite(u)):
            raise NonFinite(f"reference solution blew up at t={t_next}")
        t = t_next
        keep = (k % save_every == 0) if wanted is None else (k in wanted)
        if keep or k == n:
            times.append(t)
            out.append(u.copy())
    return np.asarray(times), np.asarray(out)


def error_l2(u, v, samples: SampleSpace, grid: SpatialGrid) -> float:
    """``||u - v||`` in L2(Omega; H)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    return norm_l2omega_h(u - v, samples, grid)


def singular_values(u, samples: SampleSpace, grid: SpatialGrid) -> np.ndarray:
    """Full spectrum of the field as an operator ``L2(Omega) -> H``, descending."""
    A = (np.sqrt(samples.weights)[:, None] * np.asarray(u, dtype=float)) * np.sqrt(grid.h)
    return svd(A, compute_uv=False, check_finite=False)


def best_rank_error(u, S: int, samples: SampleSpace, grid: SpatialGrid) -> float:
    """``sqrt(sum_{j > S} sigma_j^2)``: the error of the best rank-``S`` approximation."""
    s = singular_values(u, samples, grid)
    tail = s[S:]
    return float(np.sqrt(np.sum(tail[::-1] ** 2)))
