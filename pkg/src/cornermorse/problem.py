"""The Problem bundle (domain, function, metric, tolerances) and its loader."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .domain import Domain, DomainError, Interval
from .expr import Expression, ExprSyntaxError, Jet2, compile_expr, parse
from .field import Metric

__all__ = ["Problem", "ConfigError", "load_problem", "problem_from_config", "make_problem"]


class ConfigError(ValueError):
    """Invalid problem configuration."""


TOLERANCE_KEYS = ("active", "stationary", "level", "event_time", "crit", "eig")
FLOW_KEYS = ("t_max", "max_events")
COMPLEX_KEYS = ("epsilon", "samples")
TOP_KEYS = ("domain", "function", "metric", "tolerances", "flow", "complex", "seed")


@dataclass(frozen=True, eq=False)
class Problem:
    """Immutable input of every pipeline stage."""

    domain: Domain
    function: str
    expression: Expression
    metric: Metric
    tolerances: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    complex: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        n = self.domain.n
        object.__setattr__(self, "_f1", compile_expr(self.expression, n, order=1))
        object.__setattr__(self, "_f2", compile_expr(self.expression, n, order=2))

    @property
    def n(self) -> int:
        return self.domain.n

    # resolved tolerances
    @property
    def tol_active(self) -> float:
        return self.tolerances.get("active", self.domain.active_tol)

    @property
    def tol_stationary(self) -> float:
        return self.tolerances.get("stationary", 1e-8)

    @property
    def tol_level(self) -> float:
        return self.tolerances.get("level", 1e-9)

    @property
    def tol_event_time(self) -> float:
        return self.tolerances.get("event_time", 1e-10)

    @property
    def tol_crit(self) -> float:
        return self.tolerances.get("crit", 1e-10)

    @property
    def tol_eig(self) -> float:
        return self.tolerances.get("eig", 1e-7)

    @property
    def max_events(self) -> int:
        return int(self.flow.get("max_events", 200))

    @property
    def r_cap(self) -> float:
        return 1e-4 * self.domain.diameter

    @property
    def samples(self) -> int:
        return int(self.complex.get("samples", 64))

    @property
    def epsilon(self) -> float | None:
        return self.complex.get("epsilon")

    def resolved(self) -> dict:
        """Configuration with every default filled in (report echo)."""
        return {
            "domain": self.domain.to_json(),
            "function": self.function,
            "metric": self.metric.to_json(),
            "tolerances": {
                "active": self.tol_active, "stationary": self.tol_stationary,
                "level": self.tol_level, "event_time": self.tol_event_time,
                "crit": self.tol_crit, "eig": self.tol_eig,
            },
            "flow": {"t_max": self.flow.get("t_max"), "max_events": self.max_events},
            "complex": {"epsilon": self.epsilon, "samples": self.samples},
            "seed": self.seed,
        }

    def with_options(self, **kw) -> "Problem":
        """Copy with updated option dicts, e.g. ``complex={"samples": 128}``."""
        upd = {}
        for key in ("tolerances", "flow", "complex"):
            if key in kw:
                upd[key] = {**getattr(self, key), **kw.pop(key)}
        return replace(self, **upd, **kw)

    # evaluation
    def value(self, p) -> float:
        return float(self._f1(np.asarray(p, dtype=float))[0])

    def grad(self, p) -> np.ndarray:
        return np.asarray(self._f1(np.asarray(p, dtype=float))[1], dtype=float)

    def value_grad(self, p) -> tuple[float, np.ndarray]:
        v, g = self._f1(np.asarray(p, dtype=float))
        return float(v), np.asarray(g, dtype=float)

    def jet(self, p) -> Jet2:
        v, g, h = self._f2(np.asarray(p, dtype=float))
        h = np.array(h, dtype=float)
        return Jet2(float(v), np.array(g, dtype=float), 0.5 * (h + h.T))

    def flow_t_max_default(self, x0=None) -> float:
        if "t_max" in self.flow and self.flow["t_max"] is not None:
            return float(self.flow["t_max"])
        return 1e3

    def sample_points(self, count: int, salt: int = 0) -> np.ndarray:
        """Deterministic pseudo-random points of the domain."""
        rng = np.random.default_rng([self.seed, salt])
        dom = self.domain
        if dom.kind == "product":
            pts = np.empty((count, dom.n))
            for i, fac in enumerate(dom.factors):
                if isinstance(fac, Interval):
                    pts[:, i] = rng.uniform(fac.a, fac.b, count)
                else:
                    pts[:, i] = rng.uniform(0.0, fac.period, count)
            return pts
        verts = np.array([v for v, _ in dom.vertices])
        w = rng.dirichlet(np.ones(len(verts)), size=count)
        return w @ verts


def make_problem(domain: Domain, function: str, metric=None, **options) -> Problem:
    """Build a Problem in code; ``metric`` is ``None`` (Euclidean) or a matrix."""
    n = domain.n
    try:
        expr = parse(function, n)
    except ExprSyntaxError as exc:
        raise ConfigError(f"function: {exc}") from None
    if metric is None or (isinstance(metric, str) and metric == "euclidean"):
        g = Metric.identity(n)
    elif isinstance(metric, Metric):
        g = metric
    else:
        g = Metric.constant(metric)
    if g.n != n:
        raise ConfigError(f"metric dimension {g.n} does not match domain dimension {n}")
    return Problem(domain, function, expr, g,
                   dict(options.get("tolerances", {})), dict(options.get("flow", {})),
                   dict(options.get("complex", {})), int(options.get("seed", 0)))


def _check_section(cfg: dict, name: str, keys, integer=()):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(sec) - set(keys)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {sorted(unknown)}")
    for k, v in sec.items():
        if v is None and name != "tolerances":
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{name}.{k}' must be a number, got {type(v).__name__}")
        if k in integer and int(v) != v:
            raise ConfigError(f"'{name}.{k}' must be an integer")
        if not v > 0:
            raise ConfigError(f"'{name}.{k}' must be > 0")
    return dict(sec)


def problem_from_config(cfg: dict) -> Problem:
    """Validate a config mapping and build the Problem."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    for req in ("domain", "function"):
        if req not in cfg:
            raise ConfigError(f"missing required key '{req}'")
    if not isinstance(cfg["function"], str):
        raise ConfigError("'function' must be a string")
    try:
        dom = Domain.from_json(cfg["domain"])
    except DomainError as exc:
        raise ConfigError(f"domain: {exc}") from None
    tol = _check_section(cfg, "tolerances", TOLERANCE_KEYS)
    flow = _check_section(cfg, "flow", FLOW_KEYS, integer=("max_events",))
    cx = _check_section(cfg, "complex", COMPLEX_KEYS, integer=("samples",))
    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer")
    metric = cfg.get("metric", "euclidean")
    if not (metric == "euclidean" or isinstance(metric, list)):
        raise ConfigError("'metric' must be \"euclidean\" or a matrix")
    try:
        return make_problem(dom, cfg["function"], metric, tolerances=tol, flow=flow,
                            complex=cx, seed=seed)
    except DomainError as exc:
        raise ConfigError(f"metric: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_problem(path) -> Problem:
    """Read a JSON config file into a validated Problem."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return problem_from_config(cfg)
