"""Low-rank state, projections and the Dual DO right-hand sides.

A rank-``S`` state is the pair ``(U, Y)`` with ``U`` of shape ``(S, n)``
(linearly independent spatial fields) and ``Y`` of shape ``(S, Q)``
(orthonormal random variables).  The represented field is
``u_S = sum_j U_j Y_j``, i.e. the ``(Q, n)`` array ``Y.T @ U``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ambient import (
    Laplacian,
    NonlinearitySpec,
    SampleSpace,
    SpatialGrid,
    eval_f_nonlinear,
    norm_l2omega_h,
)
from .exceptions import NotOrthonormal, RankLoss

__all__ = [
    "TAU_ORTH",
    "SIGMA_FLOOR",
    "LowRankState",
    "GramDiagnostics",
    "Problem",
    "gram_u",
    "gram_y",
    "orth_drift",
    "sigma_floor_abs",
    "project_y",
    "project_u",
    "tangent_project",
    "reconstruct",
    "rhs_g1",
    "rhs_g2",
    "vector_field",
    "dlr_residual",
]

TAU_ORTH = 1e-8
SIGMA_FLOOR = 1e-10


@dataclass(frozen=True)
class LowRankState:
    U: np.ndarray
    Y: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if U.shape[0] != Y.shape[0]:
            raise ValueError(f"U has {U.shape[0]} modes but Y has {Y.shape[0]}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "t", float(self.t))

    @property
    def rank(self) -> int:
        return self.U.shape[0]

    def replace(self, **kw) -> "LowRankState":
        d = dict(U=self.U, Y=self.Y, t=self.t)
        d.update(kw)
        return LowRankState(**d)


@dataclass(frozen=True)
class Problem:
    """Everything that defines ``du/dt = Lambda u + F(u)`` on the discrete space."""

    grid: SpatialGrid
    samples: SampleSpace
    laplacian: Laplacian
    nonlinearity: NonlinearitySpec
    u0: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        u0 = np.asarray(self.u0, dtype=float)
        if u0.shape != (self.samples.size, self.grid.n):
            raise ValueError(f"u0 must have shape (Q, n), got {u0.shape}")
        if self.laplacian.grid != self.grid:
            raise ValueError("laplacian built on a different grid")
        object.__setattr__(self, "u0", u0)

    def F(self, u):
        return eval_f_nonlinear(u, self.nonlinearity)

    def with_nonlinearity(self, spec: NonlinearitySpec) -> "Problem":
        return Problem(self.grid, self.samples, self.laplacian, spec, self.u0, self.name)


@dataclass(frozen=True)
class GramDiagnostics:
    z: np.ndarray
    sigma_min: float
    inv_norm: float
    cond: float
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.z))

    def solve(self, rhs, floor: float = 0.0):
        """Apply ``Z^{-1}`` to the columns of ``rhs`` via the eigendecomposition."""
        if self.sigma_min <= floor:
            raise RankLoss(t=None, sigma_min=self.sigma_min)
        V = self.eigvecs
        return V @ ((V.T @ rhs) / self.eigvals[:, None])


def _gram_from_matrix(z) -> GramDiagnostics:
    z = 0.5 * (z + z.T)
    lam, V = np.linalg.eigh(z)
    smin = float(max(lam[0], 0.0))
    smax = float(lam[-1])
    inv_norm = np.inf if smin == 0.0 else 1.0 / smin
    cond = np.inf if smin == 0.0 else smax / smin
    return GramDiagnostics(z=z, sigma_min=smin, inv_norm=inv_norm, cond=cond, eigvals=lam, eigvecs=V)


def gram_u(U, grid: SpatialGrid) -> GramDiagnostics:
    """Gram matrix ``Z_U = (<U_j, U_k>)`` and its conditioning.

    Accepts a :class:`LowRankState` or an ``(S, n)`` array.
    """
    if isinstance(U, LowRankState):
        U = U.U
    U = np.atleast_2d(np.asarray(U, dtype=float))
    return _gram_from_matrix(grid.h * (U @ U.T))


def gram_y(Y, samples: SampleSpace) -> np.ndarray:
    """``E[Y Y^T]``."""
    Y = np.atleast_2d(Y)
    return (Y * samples.weights) @ Y.T


def orth_drift(Y, samples: SampleSpace) -> float:
    """``||E[Y Y^T] - I||_F``."""
    M = gram_y(Y, samples)
    return float(np.linalg.norm(M - np.eye(M.shape[0])))


def sigma_floor_abs(gram: GramDiagnostics, rel_floor: float = SIGMA_FLOOR) -> float:
    """Relative floor ``rel_floor * trace(Z) / S`` on the smallest eigenvalue."""
    S = gram.z.shape[0]
    return rel_floor * gram.trace / S


def _check_orthonormal(Y, samples, tol):
    if tol is None:
        return
    drift = orth_drift(Y, samples)
    if drift > tol:
        raise NotOrthonormal(f"E[Y Y^T] deviates from I by {drift:.3e} > {tol:.3e}")


def project_y(f, Y, samples: SampleSpace, tol: Optional[float] = 100 * TAU_ORTH):
    """``P_Y f = sum_j E[f Y_j] Y_j`` for a random field or random variable.

    ``f`` may have shape ``(Q, n)`` (random field) or ``(Q,)`` / ``(Q, k)``;
    the projection acts on the sample axis 0.  Pass ``tol=None`` to skip the
    orthonormality check.
    """
    Y = np.atleast_2d(Y)
    _check_orthonormal(Y, samples, tol)
    f = np.asarray(f, dtype=float)
    coeff = np.tensordot(Y * samples.weights, f, axes=(1, 0))
    return np.tensordot(Y, coeff, axes=(0, 0))


def _mgs_basis(U, grid, floor):
    """H-orthonormal basis of span(U) by modified Gram-Schmidt, two passes."""
    U = np.array(U, dtype=float)
    S = U.shape[0]
    Q = np.zeros_like(U)
    for j in range(S):
        v = U[j].copy()
        for _ in range(2):
            for k in range(j):
                v -= grid.h * (Q[k] @ v) * Q[k]
        nv = np.sqrt(grid.h * (v @ v))
        if nv == 0.0 or nv**2 <= floor:
            raise RankLoss(t=None, sigma_min=float(nv**2), message="U is numerically rank deficient")
        Q[j] = v / nv
    return Q


def project_u(f, U, grid: SpatialGrid, rel_floor: float = SIGMA_FLOOR):
    """``P_U f = sum_j <f, phi_j> phi_j`` with ``phi`` an H-orthonormal basis of span(U).

    Acts on the last (spatial) axis.  Raises :class:`RankLoss` when
    ``sigma_min(Z_U)`` is at or below the relative floor.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    gram = gram_u(U, grid)
    floor = sigma_floor_abs(gram, rel_floor)
    if gram.sigma_min <= floor:
        raise RankLoss(t=None, sigma_min=gram.sigma_min)
    phi = _mgs_basis(U, grid, 0.0)
    f = np.asarray(f, dtype=float)
    coeff = grid.h * (f @ phi.T)
    return coeff @ phi


def tangent_project(state: LowRankState, f, problem: Problem, tol: Optional[float] = 100 * TAU_ORTH):
    """``P = P_U + P_Y - P_U P_Y`` applied to a ``(Q, n)`` random field."""
    pu = project_u(f, state.U, problem.grid)
    py = project_y(f, state.Y, problem.samples, tol)
    pupy = project_u(py, state.U, problem.grid)
    return pu + py - pupy


def reconstruct(state: LowRankState):
    """``u_S = U^T Y`` as a ``(Q, n)`` array."""
    return state.Y.T @ state.U


def rhs_g1(state: LowRankState, problem: Problem, F_u=None):
    """``G1 = E[F(u_S) Y]``, shape ``(S, n)``."""
    if F_u is None:
        F_u = problem.F(reconstruct(state))
    return (state.Y * problem.samples.weights) @ F_u


def rhs_g2(
    state: LowRankState,
    problem: Problem,
    F_u=None,
    rel_floor: float = SIGMA_FLOOR,
    gram: Optional[GramDiagnostics] = None,
    tol: Optional[float] = 100 * TAU_ORTH,
):
    """``G2 = (I - P_Y) <F(u_S), Z_U^{-1} U>``, shape ``(S, Q)``."""
    if gram is None:
        gram = gram_u(state.U, problem.grid)
    if gram.sigma_min <= sigma_floor_abs(gram, rel_floor):
        raise RankLoss(t=state.t, sigma_min=gram.sigma_min)
    _check_orthonormal(state.Y, problem.samples, tol)
    if F_u is None:
        F_u = problem.F(reconstruct(state))
    # <F, U_k> per sample, shape (S, Q); Z symmetric so Z^{-1} acts on the left
    proj = problem.grid.h * (state.U @ F_u.T)
    x = gram.solve(proj)
    Y = state.Y
    coeff = (x * problem.samples.weights) @ Y.T
    return x - coeff @ Y


def vector_field(state: LowRankState, problem: Problem, tol: Optional[float] = 100 * TAU_ORTH):
    """``P(Lambda u_S + F(u_S))``, the right-hand side the DLR solution follows."""
    u = reconstruct(state)
    return tangent_project(state, problem.laplacian.apply(u) + problem.F(u), problem, tol)


def dlr_residual(states: Sequence[LowRankState], problem: Problem, tol: Optional[float] = 100 * TAU_ORTH):
    """Residuals ``||(u_{k+1} - u_k)/dt - P(Lambda u + F(u))||`` per interval.

    The projected vector field is averaged over both ends of each interval.
    Returns an array of length ``len(states) - 1``.
    """
    if len(states) < 2:
        raise ValueError("dlr_residual needs at least two snapshots")
    out = []
    prev = states[0]
    vf_prev = vector_field(prev, problem, tol)
    for cur in states[1:]:
        dt = cur.t - prev.t
        if not dt > 0:
            raise ValueError("snapshot times must be strictly increasing")
        vf_cur = vector_field(cur, problem, tol)
        udot = (reconstruct(cur) - reconstruct(prev)) / dt
        out.append(norm_l2omega_h(udot - 0.5 * (vf_prev + vf_cur), problem.samples, problem.grid))
        prev, vf_prev = cur, vf_cur
    return np.asarray(out)
