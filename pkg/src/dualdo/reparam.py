"""Factorizations of rank-S random fields and gauge-fixing reparametrizations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import eigh, qr, svd

from .ambient import SampleSpace, SpatialGrid
from .core import LowRankState, gram_y
from .exceptions import DualDOError

__all__ = [
    "SvdFactors",
    "OrthogonalPath",
    "svd_low_rank",
    "initial_factorize",
    "relating_orthogonal",
    "cayley",
    "theta_ode_solve",
    "smooth_svd_step",
]

# relative threshold below which a singular value counts as zero
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SvdFactors:
    """``u = sum_jk V_j Sigma_jk W_k``.

    ``V`` is ``(S, n)`` H-orthonormal, ``W`` is ``(S, Q)`` L2-orthonormal.
    ``sigma`` is the vector of singular values for a canonical decomposition
    or a full ``(S, S)`` core matrix once the smooth tracker has moved it.
    """

    V: np.ndarray
    sigma: np.ndarray
    W: np.ndarray

    @property
    def rank(self) -> int:
        return self.V.shape[0]

    @property
    def core(self) -> np.ndarray:
        s = np.asarray(self.sigma)
        return np.diag(s) if s.ndim == 1 else s

    def reconstruct(self) -> np.ndarray:
        return self.W.T @ (self.core.T @ self.V)

    def to_state(self, t: float = 0.0) -> LowRankState:
        """``U = Sigma^T V`` (so ``U_j = sigma_j V_j``), ``Y = W``."""
        return LowRankState(U=self.core.T @ self.V, Y=self.W, t=t)


@dataclass(frozen=True)
class OrthogonalPath:
    times: np.ndarray
    theta: np.ndarray  # (T, S, S)

    def orthogonality_defect(self) -> np.ndarray:
        S = self.theta.shape[-1]
        return np.array([np.linalg.norm(th.T @ th - np.eye(S)) for th in self.theta])


def _fix_signs(V, W):
    """Make the largest-magnitude entry of each ``V_j`` positive (first index on ties)."""
    idx = np.argmax(np.abs(V), axis=1)
    sgn = np.sign(V[np.arange(V.shape[0]), idx])
    sgn[sgn == 0] = 1.0
    return V * sgn[:, None], W * sgn[:, None]


def _weighted_svd(u, samples, grid):
    """Thin SVD of the field as an operator ``L2(Omega) -> H``."""
    sw = np.sqrt(samples.weights)
    A = (sw[:, None] * u) * np.sqrt(grid.h)
    _, s, Vt = svd(A, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    return s, Vt / np.sqrt(grid.h)


def svd_low_rank(
    u: Union[np.ndarray, LowRankState],
    S: int,
    samples: SampleSpace,
    grid: SpatialGrid,
    rank_tol: float = RANK_TOL,
) -> SvdFactors:
    """Leading ``S`` singular triplets of a random field.

    For a :class:`LowRankState` the decomposition is computed from the small
    factors only: ``sqrt(w) Y^T = Q R`` and the SVD of ``R sqrt(h) U``.  A
    plain ``(Q, n)`` field is decomposed directly.  Raises
    :class:`DualDOError` if fewer than ``S`` singular values exceed
    ``rank_tol * sigma_1``.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    if isinstance(u, LowRankState):
        Y, U = u.Y, u.U
        if S > U.shape[0]:
            raise DualDOError(f"requested rank {S} exceeds state rank {U.shape[0]}")
        sw = np.sqrt(samples.weights)
        Qm, R = qr((Y * sw).T, mode="economic", check_finite=False)
        B = R @ U * np.sqrt(grid.h)
        P, s, Vt = svd(B, full_matrices=False, lapack_driver="gesdd", check_finite=False)
        V = Vt / np.sqrt(grid.h)
        field = Y.T @ U
    else:
        field = np.asarray(u, dtype=float)
        if field.shape != (samples.size, grid.n):
            raise ValueError(f"field must have shape (Q, n), got {field.shape}")
        s, V = _weighted_svd(field, samples, grid)
    if s.size < S or s[0] == 0 or s[S - 1] <= rank_tol * s[0]:
        raise DualDOError(f"numerical rank below requested rank {S}")
    s = s[:S]
    V = V[:S]
    # W_j = <u, V_j> / sigma_j on every sample, including zero-weight ones
    W = (grid.h * (field @ V.T)).T / s[:, None]
    V, W = _fix_signs(V, W)
    return SvdFactors(V=V, sigma=s, W=W)


def initial_factorize(u0, S: int, samples: SampleSpace, grid: SpatialGrid, t: float = 0.0) -> LowRankState:
    """Best rank-``S`` approximation of ``u0`` as ``(U, Y)`` with ``U_j = sigma_j V_j``."""
    return svd_low_rank(u0, S, samples, grid).to_state(t)


def relating_orthogonal(U_a, Y_a, U_b, Y_b, grid: SpatialGrid) -> np.ndarray:
    """``Theta`` with ``(U_b, Y_b) = (Theta^T U_a, Theta^T Y_a)`` for two factorizations of one field.

    Computed as ``Theta^T = Z_{U_b}^{-1} <U_b, U_a^T>``.
    """
    Zb = grid.h * (U_b @ U_b.T)
    Cba = grid.h * (U_b @ U_a.T)
    return np.linalg.solve(Zb, Cba).T


def cayley(A) -> np.ndarray:
    """``(I - A/2)^{-1} (I + A/2)``; orthogonal whenever ``A`` is skew."""
    I = np.eye(A.shape[0])
    return np.linalg.solve(I - 0.5 * A, I + 0.5 * A)


def _skew(M):
    return 0.5 * (M - M.T)


def _polar(M):
    P, _, Qt = svd(M, check_finite=False)
    return P @ Qt


def _inverse_cayley(P):
    """Skew ``A`` with ``cayley(A) = P`` for orthogonal ``P`` without eigenvalue -1."""
    I = np.eye(P.shape[0])
    B = I + P
    if np.linalg.cond(B) > 1e8:
        raise DualDOError("basis rotates by nearly pi within one step; refine the time grid")
    return 2.0 * np.linalg.solve(B.T, (P - I).T).T


def theta_ode_solve(
    times,
    W_path,
    samples: SampleSpace,
    W_dot=None,
    tol: float = 1e-8,
) -> OrthogonalPath:
    """Integrate ``dTheta/dt = -E[W dW^T] Theta``, ``Theta(0) = I``.

    ``W_path`` has shape ``(T, S, Q)``.  Each step multiplies by the Cayley
    transform of a skew matrix ``A_k``, so ``Theta`` stays orthogonal to
    roundoff.  With ``W_dot``, ``A_k`` is ``dt`` times the skew part of the
    averaged nodal generator.  Without it, ``A_k`` is the inverse Cayley
    transform of the orthogonal polar factor of the transport matrix
    ``E[W_{k+1} W_k^T]``; since ``E[W W^T] = I`` gives
    ``-E[W dW^T] = E[dW W^T]``, this is a consistent generator and it is
    exact along rigid rotations of the basis.
    """
    times = np.asarray(times, dtype=float)
    W_path = np.asarray(W_path, dtype=float)
    if W_path.ndim != 3 or W_path.shape[0] != times.size:
        raise ValueError("W_path must have shape (T, S, Q) matching times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    S = W_path.shape[1]
    I = np.eye(S)
    for k, Wk in enumerate(W_path):
        drift = np.linalg.norm(gram_y(Wk, samples) - I)
        if drift > tol:
            raise DualDOError(f"W is not orthonormal at node {k} (defect {drift:.3e})")
    w = samples.weights
    thetas = np.empty((times.size, S, S))
    thetas[0] = I
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        if W_dot is None:
            A = _inverse_cayley(_polar((W_path[k + 1] * w) @ W_path[k].T))
        else:
            gen = 0.5 * ((W_path[k] * w) @ W_dot[k].T + (W_path[k + 1] * w) @ W_dot[k + 1].T)
            A = -dt * gen
        thetas[k + 1] = cayley(_skew(A)) @ thetas[k]
    return OrthogonalPath(times=times, theta=thetas)


def _sym_inv_sqrt(M):
    lam, V = eigh(0.5 * (M + M.T))
    if lam[0] <= 0:
        raise DualDOError("basis lost linear independence")
    s = np.sqrt(lam)
    return (V / s) @ V.T, (V * s) @ V.T


def smooth_svd_step(
    factors: SvdFactors,
    udot,
    dt: float,
    samples: SampleSpace,
    grid: SpatialGrid,
    cond_max: float = 1e12,
) -> SvdFactors:
    """One explicit Euler step of the smooth SVD flow driven by ``udot``.

    ``dSigma = E[<V, udot W^T>]``, ``Sigma^T dV = (I - P_V) E[udot W^T]`` and
    ``Sigma dW = (I - P_W) <V, udot>``.  Afterwards ``V`` and ``W`` are
    re-orthonormalized symmetrically and the compensating factors move into
    the core, so the represented field is unchanged by the repair.
    """
    V, W = factors.V, factors.W
    Sig = factors.core
    if np.linalg.cond(Sig) > cond_max:
        raise DualDOError("core matrix is near singular")
    udot = np.asarray(udot, dtype=float)
    w = samples.weights
    h = grid.h
    EuW = (W * w) @ udot  # (S, n): E[udot W_k]
    Vu = h * (V @ udot.T)  # (S, Q): <V_j, udot>
    dSig = h * (V @ EuW.T)  # (j, k) = E[<V_j, udot> W_k]
    rhs_V = EuW - (h * (EuW @ V.T)) @ V  # rows k: (I - P_V) E[udot W_k]
    dV = np.linalg.solve(Sig.T, rhs_V)
    rhs_W = Vu - ((Vu * w) @ W.T) @ W
    dW = np.linalg.solve(Sig, rhs_W)

    V1 = V + dt * dV
    W1 = W + dt * dW
    S1 = Sig + dt * dSig
    # V1 = A^{-1} Vn with A = G_V^{-1/2}; field = V1^T S1 W1 = Vn^T (G_V^{1/2} S1 G_W^{1/2}) Wn
    Av, Av_inv = _sym_inv_sqrt(h * (V1 @ V1.T))
    Aw, Aw_inv = _sym_inv_sqrt(gram_y(W1, samples))
    return SvdFactors(V=Av @ V1, sigma=Av_inv @ S1 @ Aw_inv, W=Aw @ W1)
