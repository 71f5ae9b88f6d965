"""Detection of Gram-matrix blow-up and continuation at lower rank.

``||Z_U^{-1}||`` tending to infinity is not observable in finite precision,
so two proxies are combined: a relative floor on ``sigma_min(Z_U)`` and a
growth-rate trigger on ``log ||Z_U^{-1}||`` over a short window.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ambient import norm_l2omega_h
from .core import (
    SIGMA_FLOOR,
    GramDiagnostics,
    LowRankState,
    Problem,
    gram_u,
    reconstruct,
    sigma_floor_abs,
)
from .exceptions import DualDOError, RankLoss
from .integrator import StepConfig, Trajectory, integrate
from .reparam import svd_low_rank

__all__ = [
    "Thresholds",
    "RankEvent",
    "check",
    "RankMonitor",
    "drop_rank_restart",
    "integrate_rank_adaptive",
]


@dataclass(frozen=True)
class Thresholds:
    sigma_floor: float = SIGMA_FLOOR
    blowup_slope: float = 100.0
    window: int = 5
    action: str = "drop_rank"

    def __post_init__(self):
        if self.action not in ("drop_rank", "terminate"):
            raise ValueError(f"unknown action {self.action!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.sigma_floor > 0 or not self.blowup_slope > 0:
            raise ValueError("sigma_floor and blowup_slope must be positive")


@dataclass(frozen=True)
class RankEvent:
    t_event: float
    sigma_min_history: tuple
    action: str
    old_rank: int
    new_rank: int
    reason: str
    jump: float = float("nan")

    def __post_init__(self):
        if self.action == "drop_rank" and not (1 <= self.new_rank < self.old_rank):
            raise ValueError("drop_rank needs 1 <= new_rank < old_rank")


def _slope_fires(history, th: Thresholds) -> bool:
    """Monotone growth of ``inv_norm`` over the window at a rate above the slope."""
    if len(history) < th.window + 1:
        return False
    recent = list(history)[-(th.window + 1):]
    inv = [r[1] for r in recent]
    if not all(math.isfinite(x) for x in inv):
        return True
    if any(b <= a for a, b in zip(inv, inv[1:])):
        return False
    span = recent[-1][0] - recent[0][0]
    if span <= 0:
        return False
    return math.log(inv[-1] / inv[0]) / span > th.blowup_slope


def check(
    gram: GramDiagnostics,
    thresholds: Thresholds = Thresholds(),
    history: Sequence[Tuple[float, float]] = (),
    t: float = 0.0,
) -> Optional[RankEvent]:
    """Return a :class:`RankEvent` when the basis is degenerating, else None.

    ``history`` holds ``(t, inv_norm)`` pairs of earlier steps, oldest first;
    the current ``(t, gram.inv_norm)`` is appended internally.  ``gram`` may
    also be a state paired with a grid via :func:`dualdo.core.gram_u`.
    """
    S = gram.z.shape[0]
    hist = list(history) + [(t, gram.inv_norm)]
    reason = None
    if gram.sigma_min <= sigma_floor_abs(gram, thresholds.sigma_floor):
        reason = "sigma_floor"
    elif _slope_fires(hist, thresholds):
        reason = "blowup_slope"
    if reason is None:
        return None
    action = thresholds.action if S > 1 else "terminate"
    new_rank = S - 1 if action == "drop_rank" else S
    sig_hist = tuple(1.0 / x if x > 0 else float("inf") for _, x in hist[-(thresholds.window + 1):])
    return RankEvent(
        t_event=t,
        sigma_min_history=sig_hist,
        action=action,
        old_rank=S,
        new_rank=new_rank,
        reason=reason,
    )


class RankMonitor:
    """Keeps the ``(t, inv_norm)`` buffer for :func:`check` along one run."""

    def __init__(self, thresholds: Thresholds = Thresholds()):
        self.thresholds = thresholds
        self.history = deque(maxlen=thresholds.window + 1)

    def reset(self):
        self.history.clear()

    def __call__(self, record, gram: GramDiagnostics):
        event = check(gram, self.thresholds, tuple(self.history), t=record.t)
        self.history.append((record.t, gram.inv_norm))
        return event


def drop_rank_restart(state: LowRankState, new_rank: int, problem: Problem) -> Tuple[LowRankState, float]:
    """Best rank-``new_rank`` truncation of ``state`` at the same time.

    Returns the new state and the reconstruction jump ``||u_before - u_after||``,
    which equals the discarded singular-value tail.
    """
    if not 1 <= new_rank < state.rank:
        raise DualDOError(f"new_rank must be in [1, {state.rank - 1}], got {new_rank}")
    factors = svd_low_rank(state, new_rank, problem.samples, problem.grid)
    new = factors.to_state(state.t)
    jump = norm_l2omega_h(reconstruct(state) - reconstruct(new), problem.samples, problem.grid)
    return new, jump


def integrate_rank_adaptive(
    problem: Problem,
    rank: int,
    t_end: float,
    cfg: StepConfig,
    thresholds: Thresholds = Thresholds(),
    snapshot_every: int = 1,
    initial: Optional[LowRankState] = None,
) -> Tuple[Trajectory, List[RankEvent]]:
    """Integrate, dropping one rank per event until ``t_end`` or rank 1 is exhausted.

    With ``thresholds.action == "terminate"`` the first event re-raises
    :class:`RankLoss`.
    """
    traj = Trajectory()
    events: List[RankEvent] = []
    monitor = RankMonitor(thresholds)
    state = initial
    while True:
        monitor.reset()
        try:
            seg = integrate(
                problem,
                rank=rank,
                t_end=t_end,
                cfg=cfg,
                initial=state,
                snapshot_every=snapshot_every,
                monitor=monitor,
            )
            traj.extend(seg)
            return traj, events
        except RankLoss as exc:
            seg = exc.trajectory
            if seg is not None:
                traj.extend(seg)
            last = traj.snapshots[-1]
            ev = exc.event
            if ev is None:
                ev = check(gram_u(last.U, problem.grid), thresholds, t=last.t)
            if ev is None or ev.action != "drop_rank":
                exc.trajectory = traj
                raise
            state, jump = drop_rank_restart(last, ev.new_rank, problem)
            events.append(
                RankEvent(
                    t_event=ev.t_event,
                    sigma_min_history=ev.sigma_min_history,
                    action=ev.action,
                    old_rank=ev.old_rank,
                    new_rank=ev.new_rank,
                    reason=ev.reason,
                    jump=jump,
                )
            )
            rank = state.rank
