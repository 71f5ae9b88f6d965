"""Plain-text run configuration: ``key = value`` lines under section headers.

Sections: ``[problem]``, ``[run]``, ``[monitor]``, ``[convergence]`` and
``[verify]``.  Unknown sections or keys are rejected with the offending line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

from .exceptions import ConfigError
from .integrator import REORTH_POLICIES, SCHEMES
from .problems import PROBLEMS

__all__ = [
    "ProblemConfig",
    "RunConfig",
    "MonitorConfig",
    "ConvergenceConfig",
    "VerifyConfig",
    "Config",
    "MODES",
    "load_config",
    "parse_config",
]

MODES = ("simulate", "verify", "convergence", "rank-adapt")
VERIFY_CHECKS = ("wedin", "proj_lipschitz", "gram_inv", "stability", "adversarial", "growth")

# extra keyword parameters accepted by each problem factory
PROBLEM_PARAMS = {
    "linear": ("a0", "a1", "c0"),
    "tanh": ("a0", "a1", "c0"),
    "zero": (),
    "exact_rank2": ("a0", "c0"),
    "collapse": ("kappa",),
}


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "linear"
    n: int = 64
    samples: int = 200
    seed: int = 0
    nu: float = 0.05
    domain: Tuple[float, float] = (0.0, 1.0)
    params: Dict[str, float] = field(default_factory=dict)

    def factory_kwargs(self):
        kw = dict(n=self.n, n_samples=self.samples, seed=self.seed, domain=self.domain, nu=self.nu)
        kw.update(self.params)
        return kw


@dataclass(frozen=True)
class RunConfig:
    rank: int = 3
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "imex_euler"
    reorth_policy: str = "every_step"
    sigma_floor: float = 1e-10
    snapshot_every: int = 10
    reference: bool = True


@dataclass(frozen=True)
class MonitorConfig:
    sigma_floor: float = 1e-10
    blowup_slope: float = 100.0
    window: int = 5
    action: str = "drop_rank"


@dataclass(frozen=True)
class ConvergenceConfig:
    ranks: Tuple[int, ...] = (1, 2, 3)
    dt0: float = 0.02
    levels: int = 5


@dataclass(frozen=True)
class VerifyConfig:
    checks: Tuple[str, ...] = VERIFY_CHECKS
    trials: int = 200
    seed: int = 0
    negative_control: bool = False


@dataclass(frozen=True)
class Config:
    problem: ProblemConfig = ProblemConfig()
    run: RunConfig = RunConfig()
    monitor: MonitorConfig = MonitorConfig()
    convergence: ConvergenceConfig = ConvergenceConfig()
    verify: VerifyConfig = VerifyConfig()
    path: Optional[str] = None

    def with_overrides(self, seed=None, rank=None, dt=None, t_end=None) -> "Config":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, problem=replace(cfg.problem, seed=int(seed)), verify=replace(cfg.verify, seed=int(seed)))
        run_kw = {k: v for k, v in (("rank", rank), ("dt", dt), ("t_end", t_end)) if v is not None}
        if run_kw:
            cfg = replace(cfg, run=replace(cfg.run, **run_kw))
        _validate(cfg, None, {})
        return cfg

    def echo(self) -> str:
        """Canonical ``key = value`` rendering of the effective configuration."""
        lines = []
        for sec in ("problem", "run", "monitor", "convergence", "verify"):
            lines.append(f"[{sec}]")
            obj = getattr(self, sec)
            for f in fields(obj):
                val = getattr(obj, f.name)
                if f.name == "params":
                    for k in sorted(val):
                        lines.append(f"{k} = {_fmt(val[k])}")
                    continue
                lines.append(f"{f.name} = {_fmt(val)}")
            lines.append("")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]\s*$")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    index = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


class _Reader:
    def __init__(self, parser, index, path):
        self.parser = parser
        self.index = index
        self.path = path

    def error(self, section, key, msg):
        line = self.index.get((section, key)) or self.index.get((section, None))
        name = f"{section}.{key}" if key else section
        raise ConfigError(f"{name}: {msg}", key=name, line=line, path=self.path)

    def get(self, section, key, conv, default):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            self.error(section, key, f"invalid value {raw!r} ({exc})")


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _pair(s):
    parts = s.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return (float(parts[0]), float(parts[1]))


def _ints(s):
    return tuple(int(p) for p in s.replace(",", " ").split())


def _words(s):
    return tuple(p for p in s.replace(",", " ").split())


_SCHEMA = {
    "problem": {"kind": str, "n": int, "samples": int, "seed": int, "nu": float, "domain": _pair},
    "run": {
        "rank": int,
        "dt": float,
        "t_end": float,
        "scheme": str,
        "reorth_policy": str,
        "sigma_floor": float,
        "snapshot_every": int,
        "reference": _bool,
    },
    "monitor": {"sigma_floor": float, "blowup_slope": float, "window": int, "action": str},
    "convergence": {"ranks": _ints, "dt0": float, "levels": int},
    "verify": {"checks": _words, "trials": int, "seed": int, "negative_control": _bool},
}


def parse_config(text: str, path: Optional[str] = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of a [section]", line=exc.lineno, path=path)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"malformed line: {exc.errors[0][1].strip() if exc.errors else exc}", line=line, path=path)
    except configparser.Error as exc:
        msg = re.sub(r"^While reading from .*?\[line\s*\d+\]: ", "", str(exc).splitlines()[0])
        raise ConfigError(msg, line=getattr(exc, "lineno", None), path=path)

    index = _line_index(text)
    rd = _Reader(parser, index, path)
    for sec in parser.sections():
        if sec not in _SCHEMA:
            rd.error(sec, None, f"unknown section; expected one of {sorted(_SCHEMA)}")

    kind = rd.get("problem", "kind", str, ProblemConfig.kind)
    if kind not in PROBLEMS:
        rd.error("problem", "kind", f"unknown problem kind {kind!r}; expected one of {sorted(PROBLEMS)}")
    allowed_params = PROBLEM_PARAMS[kind]
    for sec in parser.sections():
        for key in parser.options(sec):
            if key in _SCHEMA[sec]:
                continue
            if sec == "problem" and key in allowed_params:
                continue
            rd.error(sec, key, "unknown key")

    values = {}
    for sec, schema in _SCHEMA.items():
        cls = {"problem": ProblemConfig, "run": RunConfig, "monitor": MonitorConfig,
               "convergence": ConvergenceConfig, "verify": VerifyConfig}[sec]
        defaults = cls()
        kw = {key: rd.get(sec, key, conv, getattr(defaults, key)) for key, conv in schema.items()}
        if sec == "problem":
            kw["params"] = {k: rd.get(sec, k, float, None) for k in allowed_params if parser.has_option(sec, k)}
        values[sec] = cls(**kw)
    cfg = Config(path=path, **values)
    _validate(cfg, rd, index)
    return cfg


def load_config(path) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path))
    return parse_config(text, path=str(path))


def _validate(cfg: Config, rd: Optional[_Reader], index) -> None:
    def fail(section, key, msg):
        if rd is not None:
            rd.error(section, key, msg)
        raise ConfigError(f"{section}.{key}: {msg}", key=f"{section}.{key}", path=cfg.path)

    p, r, m, c, v = cfg.problem, cfg.run, cfg.monitor, cfg.convergence, cfg.verify
    for sec, key, val in (
        ("problem", "n", p.n),
        ("problem", "samples", p.samples),
        ("run", "rank", r.rank),
        ("run", "snapshot_every", r.snapshot_every),
        ("monitor", "window", m.window),
        ("convergence", "levels", c.levels),
    ):
        if val < 1:
            fail(sec, key, f"must be a positive integer, got {val}")
    for sec, key, val in (
        ("problem", "nu", p.nu),
        ("run", "dt", r.dt),
        ("run", "t_end", r.t_end),
        ("run", "sigma_floor", r.sigma_floor),
        ("monitor", "sigma_floor", m.sigma_floor),
        ("monitor", "blowup_slope", m.blowup_slope),
        ("convergence", "dt0", c.dt0),
    ):
        if not val > 0:
            fail(sec, key, f"must be positive, got {val}")
    if p.seed < 0:
        fail("problem", "seed", "must be non-negative")
    if not p.domain[0] < p.domain[1]:
        fail("problem", "domain", "left end must be below right end")
    if r.rank > min(p.n, p.samples):
        fail("run", "rank", f"rank {r.rank} exceeds min(n, samples) = {min(p.n, p.samples)}")
    if r.scheme not in SCHEMES:
        fail("run", "scheme", f"unknown scheme {r.scheme!r}; expected one of {list(SCHEMES)}")
    if r.reorth_policy not in REORTH_POLICIES:
        fail("run", "reorth_policy", f"unknown policy {r.reorth_policy!r}; expected one of {list(REORTH_POLICIES)}")
    if m.action not in ("drop_rank", "terminate"):
        fail("monitor", "action", f"unknown action {m.action!r}")
    if not c.ranks or any(s < 1 for s in c.ranks):
        fail("convergence", "ranks", "needs one or more positive ranks")
    if v.trials < 0:
        fail("verify", "trials", "must be non-negative")
    if v.seed < 0:
        fail("verify", "seed", "must be non-negative")
    for name in v.checks:
        if name not in VERIFY_CHECKS:
            fail("verify", "checks", f"unknown check {name!r}; expected names from {list(VERIFY_CHECKS)}")
