"""Command-line driver: ``dlr simulate|verify|convergence|rank-adapt``.

Exit codes: 0 success, 2 configuration error, 3 run terminated by rank
loss, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .analysis import (
    GrowthConstants,
    adversarial_stability,
    check_growth_bounds,
    gram_inv_campaign,
    proj_lipschitz_campaign,
    stability_campaign,
    wedin_campaign,
    write_reports_csv,
)
from .config import Config, MODES, load_config
from .core import Problem, reconstruct
from .exceptions import ConfigError, DualDOError, NonFinite, RankLoss
from .integrator import StepConfig, Trajectory, integrate, n_steps_for
from .problems import make_problem
from .rank_monitor import RankMonitor, Thresholds, integrate_rank_adaptive
from .reference import best_rank_error, error_l2, solve_full

__all__ = [
    "main",
    "build_parser",
    "run_simulate",
    "run_rank_adapt",
    "run_convergence",
    "run_verify",
    "DIAGNOSTIC_COLUMNS",
    "EVENT_COLUMNS",
    "CONVERGENCE_COLUMNS",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_RANK_LOSS",
    "EXIT_VERIFY",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RANK_LOSS = 3
EXIT_VERIFY = 4

DIAGNOSTIC_COLUMNS = (
    "t",
    "sigma_min",
    "inv_norm",
    "orth_drift",
    "gauge_residual",
    "energy",
    "err_vs_reference",
    "best_rank_error",
)
EVENT_COLUMNS = ("t_event", "reason", "action", "old_rank", "new_rank", "jump", "sigma_min_last")
CONVERGENCE_COLUMNS = ("S", "dt", "err_vs_reference", "best_rank_error", "diff_to_half", "ratio")

log = logging.getLogger("dualdo.cli")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # not installed as a distribution
        from . import __version__

        return __version__


def _write_manifest(out: Path, mode: str, cfg: Config, outputs: Sequence[str], status: str) -> None:
    lines = [
        f"artifact_version = {_version()}",
        f"mode = {mode}",
        f"status = {status}",
        f"problem_seed = {cfg.problem.seed}",
        f"verify_seed = {cfg.verify.seed}",
        "outputs = " + " ".join(sorted(outputs)),
        "",
        cfg.echo(),
    ]
    (out / "manifest.txt").write_text("\n".join(lines))


def _step_config(cfg: Config, dt: Optional[float] = None) -> StepConfig:
    r = cfg.run
    return StepConfig(
        dt=r.dt if dt is None else dt,
        scheme=r.scheme,
        reorth_policy=r.reorth_policy,
        sigma_floor=r.sigma_floor,
    )


def _problem(cfg: Config) -> Problem:
    return make_problem(cfg.problem.kind, **cfg.problem.factory_kwargs())


def _snapshot_rows(traj: Trajectory, problem: Problem, cfg: Config) -> List[tuple]:
    """One diagnostics row per snapshot, with reference errors when requested."""
    dt = cfg.run.dt
    diag_by_t = {d.t: d for d in traj.diagnostics}
    snaps = traj.snapshots
    ref = {}
    if cfg.run.reference and snaps:
        steps = [int(round(s.t / dt)) for s in snaps]
        times, fields = solve_full(problem, snaps[-1].t, dt, save_steps=steps)
        for t, u in zip(times, fields):
            ref[int(round(t / dt))] = u
    rows = []
    for s in snaps:
        d = diag_by_t[s.t]
        u_ref = ref.get(int(round(s.t / dt)))
        if u_ref is None:
            err = best = math.nan
        else:
            err = error_l2(reconstruct(s), u_ref, problem.samples, problem.grid)
            best = best_rank_error(u_ref, s.rank, problem.samples, problem.grid)
        rows.append((s.t, d.sigma_min, d.inv_norm, d.orth_drift, d.gauge_residual, d.energy, err, best))
    return rows


def _write_final_state(out: Path, traj: Trajectory) -> List[str]:
    final = traj.final
    np_rows = lambda A: [tuple(float(x) for x in r) for r in A]  # noqa: E731
    _write_csv(out / "final_U.csv", [f"x{i}" for i in range(final.U.shape[1])], np_rows(final.U))
    _write_csv(out / "final_Y.csv", [f"omega{q}" for q in range(final.Y.shape[1])], np_rows(final.Y))
    return ["final_U.csv", "final_Y.csv"]


def _summary(out: Path, items) -> None:
    (out / "summary.txt").write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items))


def _thresholds(cfg: Config, action: Optional[str] = None) -> Thresholds:
    m = cfg.monitor
    return Thresholds(sigma_floor=m.sigma_floor, blowup_slope=m.blowup_slope, window=m.window, action=action or m.action)


def run_simulate(cfg: Config, out: Path) -> int:
    """Fixed-rank run; any rank event terminates it with exit code 3."""
    problem = _problem(cfg)
    status, code, t_max = "ok", EXIT_OK, None
    try:
        traj = integrate(problem, rank=cfg.run.rank, t_end=cfg.run.t_end, cfg=_step_config(cfg),
                         snapshot_every=cfg.run.snapshot_every, monitor=RankMonitor(_thresholds(cfg, "terminate")))
    except RankLoss as exc:
        traj, t_max = exc.trajectory, exc.t
        status, code = "rank_loss", EXIT_RANK_LOSS
        log.error("rank loss: run terminated at t_max = %s (sigma_min = %s)", _fmt(exc.t), _fmt(exc.sigma_min))
    outputs = ["diagnostics.csv", "summary.txt"]
    rows = _snapshot_rows(traj, problem, cfg)
    _write_csv(out / "diagnostics.csv", DIAGNOSTIC_COLUMNS, rows)
    outputs += _write_final_state(out, traj)
    items = [("status", status), ("rank", cfg.run.rank), ("t_final", traj.final.t)]
    if t_max is not None:
        items.append(("t_max", t_max))
    _summary(out, items)
    _write_manifest(out, "simulate", cfg, outputs + ["manifest.txt"], status)
    return code


def run_rank_adapt(cfg: Config, out: Path) -> int:
    problem = _problem(cfg)
    th = _thresholds(cfg)
    status, code = "ok", EXIT_OK
    events = []
    try:
        traj, events = integrate_rank_adaptive(problem, cfg.run.rank, cfg.run.t_end, _step_config(cfg), th,
                                               snapshot_every=cfg.run.snapshot_every)
    except RankLoss as exc:
        traj = exc.trajectory
        status, code = "rank_loss", EXIT_RANK_LOSS
        log.error("rank loss: run terminated at t_max = %s", _fmt(exc.t))
    rows = _snapshot_rows(traj, problem, cfg)
    _write_csv(out / "diagnostics.csv", DIAGNOSTIC_COLUMNS, rows)
    _write_csv(
        out / "events.csv",
        EVENT_COLUMNS,
        [(e.t_event, e.reason, e.action, e.old_rank, e.new_rank, e.jump, e.sigma_min_history[-1]) for e in events],
    )
    outputs = ["diagnostics.csv", "events.csv", "summary.txt"] + _write_final_state(out, traj)
    _summary(out, [("status", status), ("events", len(events)), ("final_rank", traj.final.rank), ("t_final", traj.final.t)])
    _write_manifest(out, "rank-adapt", cfg, outputs + ["manifest.txt"], status)
    return code


def run_convergence(cfg: Config, out: Path) -> int:
    """Error table over ranks and halved time steps at ``t_end``."""
    problem = _problem(cfg)
    c = cfg.convergence
    t_end = cfg.run.t_end
    dts = [c.dt0 / 2**k for k in range(c.levels)]
    refs = {dt: solve_full(problem, t_end, dt, save_steps=())[1][-1] for dt in dts}
    rows = []
    for S in c.ranks:
        finals = []
        for dt in dts:
            try:
                traj = integrate(problem, rank=S, t_end=t_end, cfg=_step_config(cfg, dt=dt), snapshot_every=n_steps_for(t_end, dt))
            except RankLoss as exc:
                raise DualDOError(f"rank {S} lost linear independence at t = {_fmt(exc.t)} with dt = {_fmt(dt)}")
            finals.append(reconstruct(traj.final))
        diffs = [error_l2(a, b, problem.samples, problem.grid) for a, b in zip(finals, finals[1:])] + [math.nan]
        for k, dt in enumerate(dts):
            ratio = diffs[k - 1] / diffs[k] if k >= 1 and diffs[k] > 0 else math.nan
            err = error_l2(finals[k], refs[dt], problem.samples, problem.grid)
            best = best_rank_error(refs[dt], S, problem.samples, problem.grid)
            rows.append((S, dt, err, best, diffs[k], ratio))
    _write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, rows)
    _write_manifest(out, "convergence", cfg, ["convergence.csv", "manifest.txt"], "ok")
    return EXIT_OK


def _growth_reports(cfg: Config, negative_control: bool):
    problem = _problem(cfg)
    constants = GrowthConstants.from_problem(problem)
    if negative_control:
        problem = problem.with_nonlinearity(problem.nonlinearity.scaled(10.0))
    try:
        traj = integrate(problem, rank=cfg.run.rank, t_end=cfg.run.t_end, cfg=_step_config(cfg),
                         snapshot_every=cfg.run.snapshot_every)
    except RankLoss as exc:
        traj = exc.trajectory
    reports = check_growth_bounds(traj, problem, constants)
    if negative_control:
        for r in reports:
            r.check += "_negative_control"
    return reports


def run_verify(cfg: Config, out: Path) -> int:
    v = cfg.verify
    reports = []
    if v.trials > 0:
        for name in v.checks:
            if name == "wedin":
                reports += wedin_campaign(v.trials, seed=v.seed)
            elif name == "proj_lipschitz":
                reports += proj_lipschitz_campaign(v.trials, seed=v.seed)
            elif name == "gram_inv":
                reports += gram_inv_campaign(v.trials, seed=v.seed)
            elif name == "stability":
                reports += stability_campaign(_problem(cfg), v.trials, seed=v.seed)
            elif name == "adversarial":
                reports.append(adversarial_stability(_problem(cfg)))
            elif name == "growth":
                reports += _growth_reports(cfg, False)
    if v.negative_control:
        reports += _growth_reports(cfg, True)
    if not reports:
        log.warning("empty verification campaign: no checks were run")
    write_reports_csv(reports, out / "verify.csv")
    failures = sum(not r.passed for r in reports)
    skipped = sum(not r.precondition_ok for r in reports)
    by_check = {}
    for r in reports:
        tot, bad = by_check.get(r.check, (0, 0))
        by_check[r.check] = (tot + 1, bad + (not r.passed))
    for name, (tot, bad) in by_check.items():
        print(f"{name}: {tot - bad}/{tot} passed")
    status = "ok" if failures == 0 else "violations"
    _summary(out, [("status", status), ("trials", len(reports)), ("violations", failures), ("precondition_skipped", skipped)])
    _write_manifest(out, "verify", cfg, ["verify.csv", "summary.txt", "manifest.txt"], status)
    return EXIT_OK if failures == 0 else EXIT_VERIFY


RUNNERS = {
    "simulate": run_simulate,
    "rank-adapt": run_rank_adapt,
    "convergence": run_convergence,
    "verify": run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dlr", description="Dual DO low-rank integrator for random semilinear heat equations.")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="path to the run configuration")
    ap.add_argument("--out", required=True, help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, help="overrides problem.seed and verify.seed")
    ap.add_argument("--rank", type=int, help="overrides run.rank")
    ap.add_argument("--dt", type=float, help="overrides run.dt")
    ap.add_argument("--t-end", dest="t_end", type=float, help="overrides run.t_end")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="dlr: %(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, rank=args.rank, dt=args.dt, t_end=args.t_end)
    except ConfigError as exc:
        print(f"dlr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return RUNNERS[args.mode](cfg, out)
    except NonFinite as exc:
        print(f"dlr: error: {exc}", file=sys.stderr)
        return 1
    except DualDOError as exc:
        print(f"dlr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
