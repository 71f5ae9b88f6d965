import numpy as np
import pytest

from conftest import random_state, small_problem
from dualdo.ambient import norm_l2omega_h
from dualdo.core import LowRankState, gram_u, gram_y, reconstruct
from dualdo.exceptions import DualDOError, RankLoss
from dualdo.integrator import StepConfig, integrate
from dualdo.problems import collapse, collapse_time
from dualdo.rank_monitor import (
    RankEvent,
    RankMonitor,
    Thresholds,
    check,
    drop_rank_restart,
    integrate_rank_adaptive,
)
from dualdo.reference import singular_values


def orthonormal_modes(grid, ks):
    U = np.array([grid.sine_mode(k) for k in ks])
    return U / np.sqrt(grid.h * np.sum(U**2, axis=1))[:, None]


class TestCheck:
    def test_well_conditioned(self, tiny):
        assert check(gram_u(orthonormal_modes(tiny.grid, (1, 2, 3)), tiny.grid)) is None

    @pytest.mark.parametrize("action,new_rank", [("drop_rank", 1), ("terminate", 2)])
    def test_nearly_parallel(self, tiny, action, new_rank):
        phi, psi = orthonormal_modes(tiny.grid, (1, 2))
        theta = 1e-7
        U = np.array([phi, np.cos(theta) * phi + np.sin(theta) * psi])
        ev = check(gram_u(U, tiny.grid), Thresholds(action=action))
        assert ev is not None and ev.reason == "sigma_floor"
        assert ev.action == action and ev.new_rank == new_rank and ev.old_rank == 2

    def test_rank_one_always_terminates(self, tiny):
        ev = check(gram_u(np.zeros((1, tiny.grid.n)), tiny.grid))
        assert ev.action == "terminate"

    def test_slope_trigger_above_floor(self, tiny):
        U = orthonormal_modes(tiny.grid, (1, 2))
        dt = 1e-3
        history = [(k * dt, 2.0**k) for k in range(5)]
        scale = np.diag([1.0, 2.0**-2.5])  # inv_norm = 32 for the current state
        g = gram_u(scale @ U, tiny.grid)
        assert g.inv_norm == pytest.approx(32.0)
        ev = check(g, Thresholds(), history=history, t=5 * dt)
        assert ev is not None and ev.reason == "blowup_slope"
        assert len(ev.sigma_min_history) == 6
        # the same stream on a slow clock stays quiet
        slow = [(k, 2.0**k) for k in range(5)]
        assert check(g, Thresholds(), history=slow, t=5.0) is None
        # non-monotone streams do not trigger
        bumpy = [(k * dt, v) for k, v in enumerate([1, 8, 4, 16, 8])]
        assert check(g, Thresholds(), history=bumpy, t=5 * dt) is None

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            Thresholds(action="explode")
        with pytest.raises(ValueError):
            Thresholds(window=0)
        with pytest.raises(ValueError):
            Thresholds(sigma_floor=-1.0)

    def test_event_invariants(self):
        with pytest.raises(ValueError):
            RankEvent(0.0, (), "drop_rank", old_rank=2, new_rank=2, reason="x")
        with pytest.raises(ValueError):
            RankEvent(0.0, (), "drop_rank", old_rank=2, new_rank=0, reason="x")

    def test_negative_control(self, linear):
        """Exact-rank-S-like run with sigma_min bounded below: the monitor stays silent."""
        mon = RankMonitor()
        tr = integrate(linear, 3, 1.0, StepConfig(dt=1e-3), snapshot_every=100, monitor=mon)
        assert tr.final.t == pytest.approx(1.0)
        assert min(d.sigma_min for d in tr.diagnostics) > 0


class TestRestart:
    def test_constructed_spectrum(self, tiny):
        V = orthonormal_modes(tiny.grid, (1, 2))
        st0 = random_state(tiny, 2, seed=3)
        state = LowRankState(U=np.diag([1.0, 1e-12]) @ V, Y=st0.Y)
        new, jump = drop_rank_restart(state, 1, tiny)
        assert jump == pytest.approx(1e-12, rel=1e-3)
        assert new.rank == 1 and new.t == state.t
        assert norm_l2omega_h(reconstruct(new) - reconstruct(state), tiny.samples, tiny.grid) <= 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_jump_is_tail_and_invariants(self, seed):
        p = small_problem(Q=20, n=12, seed=seed)
        state = random_state(p, 4, seed=seed)
        sig = singular_values(reconstruct(state), p.samples, p.grid)
        for r in (1, 2, 3):
            new, jump = drop_rank_restart(state, r, p)
            assert jump == pytest.approx(np.sqrt(np.sum(sig[r:] ** 2)), abs=1e-9)
            np.testing.assert_allclose(gram_y(new.Y, p.samples), np.eye(r), atol=1e-10)
            g = gram_u(new, p.grid)
            np.testing.assert_allclose(g.z, np.diag(sig[:r] ** 2), atol=1e-10 * sig[0] ** 2)
            assert g.sigma_min >= (sig[r - 1] / sig[0]) ** 2 * g.eigvals[-1] * (1 - 1e-10)

    def test_rank_bounds(self, tiny):
        state = random_state(tiny, 2)
        with pytest.raises(DualDOError):
            drop_rank_restart(state, 2, tiny)
        with pytest.raises(DualDOError):
            drop_rank_restart(state, 0, tiny)


class TestRankAdaptive:
    def test_collapse_lifecycle(self):
        p = collapse()
        traj, events = integrate_rank_adaptive(p, 2, 1.0, StepConfig(dt=1e-3), snapshot_every=50)
        assert len(events) == 1
        ev = events[0]
        assert ev.action == "drop_rank" and ev.old_rank == 2 and ev.new_rank == 1
        assert ev.t_event < collapse_time(p)
        assert min(ev.sigma_min_history) > 1e-14
        assert traj.final.t == pytest.approx(1.0) and traj.final.rank == 1
        assert np.all(np.diff(traj.times) > 0)

    def test_terminate_action(self):
        p = collapse()
        with pytest.raises(RankLoss) as ei:
            integrate_rank_adaptive(p, 2, 1.0, StepConfig(dt=1e-3), Thresholds(action="terminate"))
        assert ei.value.trajectory is not None
        assert ei.value.t < collapse_time(p)
