"""Time stepping for the Dual DO system.

The deterministic basis follows ``dU/dt = Lambda U + G1`` and the stochastic
basis ``dY/dt = G2``.  Schemes treat ``Lambda`` implicitly (or exactly) and
the nonlinear parts explicitly; after each step ``Y`` can be brought back to
orthonormality with a symmetric (polar) factor whose inverse is absorbed in
``U``, which leaves ``U^T Y`` unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import eigh

from .core import (
    SIGMA_FLOOR,
    TAU_ORTH,
    GramDiagnostics,
    LowRankState,
    Problem,
    gram_u,
    gram_y,
    orth_drift,
    reconstruct,
    rhs_g1,
    rhs_g2,
    sigma_floor_abs,
)
from .exceptions import NonFinite, RankLoss

__all__ = [
    "SCHEMES",
    "REORTH_POLICIES",
    "StepConfig",
    "StepRecord",
    "Trajectory",
    "symmetric_orthonormalize",
    "step",
    "integrate",
    "gauge_residual",
    "state_energy",
    "n_steps_for",
]

SCHEMES = ("imex_euler", "lie_splitting", "strang_splitting")
REORTH_POLICIES = ("never", "every_step", "on_drift")


@dataclass(frozen=True)
class StepConfig:
    dt: float
    scheme: str = "imex_euler"
    reorth_policy: str = "every_step"
    drift_tol: float = TAU_ORTH
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.drift_tol > 0:
            raise ValueError(f"drift_tol must be positive, got {self.drift_tol!r}")
        if not self.sigma_floor > 0:
            raise ValueError(f"sigma_floor must be positive, got {self.sigma_floor!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.reorth_policy not in REORTH_POLICIES:
            raise ValueError(
                f"unknown reorth_policy {self.reorth_policy!r}; expected one of {REORTH_POLICIES}"
            )


@dataclass(frozen=True)
class StepRecord:
    t: float
    rank: int
    sigma_min: float
    inv_norm: float
    orth_drift: float
    gauge_residual: float
    energy: float


@dataclass
class Trajectory:
    snapshots: List[LowRankState] = field(default_factory=list)
    diagnostics: List[StepRecord] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> LowRankState:
        return self.snapshots[-1]

    def extend(self, other: "Trajectory"):
        """Append ``other``, dropping its first snapshot/record if it repeats the last time."""
        snaps, diags = other.snapshots, other.diagnostics
        if self.snapshots and snaps and snaps[0].t <= self.snapshots[-1].t:
            snaps = snaps[1:]
        if self.diagnostics and diags and diags[0].t <= self.diagnostics[-1].t:
            diags = diags[1:]
        self.snapshots.extend(snaps)
        self.diagnostics.extend(diags)


def symmetric_orthonormalize(state: LowRankState, problem: Problem) -> LowRankState:
    """Replace ``Y`` by ``M^{-1/2} Y`` and ``U`` by ``M^{1/2} U`` with ``M = E[Y Y^T]``."""
    M = gram_y(state.Y, problem.samples)
    lam, V = eigh(0.5 * (M + M.T))
    if lam[0] <= 0:
        raise RankLoss(t=state.t, message="stochastic basis lost linear independence")
    s = np.sqrt(lam)
    Y = (V / s) @ (V.T @ state.Y)
    U = (V * s) @ (V.T @ state.U)
    return state.replace(U=U, Y=Y)


def gauge_residual(state: LowRankState, problem: Problem, G2=None, tol=None) -> float:
    """``||E[G2 Y^T]||_F`` with ``G2`` the stochastic velocity at ``state``."""
    if G2 is None:
        G2 = rhs_g2(state, problem, tol=tol)
    return float(np.linalg.norm((G2 * problem.samples.weights) @ state.Y.T))


def state_energy(state: LowRankState, problem: Problem, gram: Optional[GramDiagnostics] = None) -> float:
    """``||u_S||`` in L2(Omega; H), computed as ``sqrt(trace(Z_U E[Y Y^T]))``."""
    if gram is None:
        gram = gram_u(state.U, problem.grid)
    M = gram_y(state.Y, problem.samples)
    return float(math.sqrt(max(np.sum(gram.z * M), 0.0)))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("non-finite value in evolved state")


def _velocity(state, problem, cfg, gram=None):
    """Explicit parts ``(G1, G2)`` evaluated at ``state``."""
    u = reconstruct(state)
    F_u = problem.F(u)
    G1 = rhs_g1(state, problem, F_u=F_u)
    G2 = rhs_g2(state, problem, F_u=F_u, rel_floor=cfg.sigma_floor, gram=gram, tol=None)
    return G1, G2


def _repair(state, problem, cfg):
    if cfg.reorth_policy == "every_step":
        return symmetric_orthonormalize(state, problem)
    if cfg.reorth_policy == "on_drift" and orth_drift(state.Y, problem.samples) > cfg.drift_tol:
        return symmetric_orthonormalize(state, problem)
    return state


def step(state: LowRankState, problem: Problem, cfg: StepConfig, dt: Optional[float] = None) -> LowRankState:
    """Advance ``state`` by one step of size ``dt`` (default ``cfg.dt``).

    Raises :class:`RankLoss` if ``sigma_min(Z_U)`` is at or below the relative
    floor and :class:`NonFinite` on overflow.
    """
    dt = cfg.dt if dt is None else dt
    gram = gram_u(state.U, problem.grid)
    if gram.sigma_min <= sigma_floor_abs(gram, cfg.sigma_floor):
        raise RankLoss(t=state.t, sigma_min=gram.sigma_min)
    lap = problem.laplacian

    if cfg.scheme == "imex_euler":
        G1, G2 = _velocity(state, problem, cfg, gram)
        U = lap.solve_shifted(state.U + dt * G1, dt)
        Y = state.Y + dt * G2
    elif cfg.scheme == "lie_splitting":
        U_half = lap.solve_shifted(state.U, dt)
        mid = state.replace(U=U_half)
        G1, G2 = _velocity(mid, problem, cfg)
        U = U_half + dt * G1
        Y = state.Y + dt * G2
    else:  # strang_splitting: exact half flows of Lambda around a midpoint (RK2) nonlinear step
        U_half = lap.semigroup(state.U, 0.5 * dt)
        s0 = state.replace(U=U_half)
        G1, G2 = _velocity(s0, problem, cfg)
        s_mid = s0.replace(U=U_half + 0.5 * dt * G1, Y=state.Y + 0.5 * dt * G2)
        G1, G2 = _velocity(s_mid, problem, cfg)
        U = lap.semigroup(U_half + dt * G1, 0.5 * dt)
        Y = state.Y + dt * G2

    _check_finite(U, Y)
    new = LowRankState(U=U, Y=Y, t=state.t + dt)
    return _repair(new, problem, cfg)


def _record(state, problem, cfg):
    gram = gram_u(state.U, problem.grid)
    if gram.sigma_min <= sigma_floor_abs(gram, cfg.sigma_floor):
        gres = float("nan")
    else:
        gres = gauge_residual(state, problem, G2=rhs_g2(state, problem, gram=gram, tol=None, rel_floor=cfg.sigma_floor))
    return StepRecord(
        t=state.t,
        rank=state.rank,
        sigma_min=gram.sigma_min,
        inv_norm=gram.inv_norm,
        orth_drift=orth_drift(state.Y, problem.samples),
        gauge_residual=gres,
        energy=state_energy(state, problem, gram),
    ), gram


def n_steps_for(t_end: float, dt: float) -> int:
    """Number of steps to reach ``t_end``; the last one may be shorter."""
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if t_end == 0:
        return 0
    return max(1, int(math.ceil(t_end / dt - 1e-9)))


def integrate(
    problem: Problem,
    rank: Optional[int] = None,
    t_end: float = 1.0,
    cfg: Optional[StepConfig] = None,
    initial: Optional[LowRankState] = None,
    snapshot_every: int = 1,
    monitor: Optional[Callable] = None,
) -> Trajectory:
    """Integrate from ``initial`` (default: best rank-``rank`` truncation of ``problem.u0``).

    Diagnostics are recorded at every step, snapshots every ``snapshot_every``
    steps and at the final time.  ``monitor(record, gram)`` may return a
    rank event; a non-None return stops the run with :class:`RankLoss`.
    On :class:`RankLoss` the accepted part of the run is attached to the
    exception as ``trajectory``.
    """
    from .reparam import initial_factorize

    if cfg is None:
        raise ValueError("a StepConfig is required")
    if initial is None:
        if rank is None:
            raise ValueError("pass either rank or an initial state")
        initial = initial_factorize(problem.u0, rank, problem.samples, problem.grid)
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")

    t0 = initial.t
    n = n_steps_for(t_end - t0, cfg.dt) if t_end > t0 else 0
    traj = Trajectory()
    state = initial
    rec, gram = _record(state, problem, cfg)
    traj.snapshots.append(state)
    traj.diagnostics.append(rec)
    event = monitor(rec, gram) if monitor is not None else None
    if event is not None:
        raise RankLoss(t=state.t, sigma_min=rec.sigma_min, trajectory=traj, event=event)

    for k in range(1, n + 1):
        t_next = t0 + k * cfg.dt if k < n else t_end
        try:
            state = step(state, problem, cfg, dt=t_next - state.t)
        except RankLoss as exc:
            exc.trajectory = traj
            if exc.t is None:
                exc.t = state.t
            raise
        state = state.replace(t=t_next)
        rec, gram = _record(state, problem, cfg)
        traj.diagnostics.append(rec)
        if k % snapshot_every == 0 or k == n:
            traj.snapshots.append(state)
        event = monitor(rec, gram) if monitor is not None else None
        if event is None and rec.sigma_min <= sigma_floor_abs(gram, cfg.sigma_floor):
            raise RankLoss(t=state.t, sigma_min=rec.sigma_min, trajectory=_close(traj, state))
        if event is not None:
            raise RankLoss(t=state.t, sigma_min=rec.sigma_min, trajectory=_close(traj, state), event=event)
    return traj


def _close(traj, state):
    if traj.snapshots[-1].t != state.t:
        traj.snapshots.append(state)
    return traj
