"""Integration of the modified gradient flow with stratum-change events.

Within one face the field is smooth (a fixed projection of -grad f), so each
segment is an ordinary adaptive Runge-Kutta solve. Two kinds of events end a
segment:

* capture: an inactive constraint becomes active (the path hits a face of
  one lower dimension);
* release: for an active constraint k, the projection of -grad f onto the
  face without k starts pointing away from k (its normal component changes
  sign), and the path leaves into the face of one higher dimension.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .domain import StratumId
from .field import _cascade, gradient, modified_gradient

if TYPE_CHECKING:
    from .critical import CriticalPoint
    from .problem import Problem

__all__ = [
    "FlowEvent", "Segment", "FlowPath", "FlowError", "ZenoError", "LevelBlocked",
    "NonSmoothFlow", "OmegaResult", "integrate", "flow_to_level", "flow_jacobian",
    "omega_limit", "write_trace",
]

RTOL = 1e-10


class FlowError(RuntimeError):
    """Numerical failure while integrating the flow."""


class ZenoError(FlowError):
    """Too many stratum changes on one path (event accumulation)."""


class LevelBlocked(FlowError):
    """The path stopped at a stationary point above the requested level."""

    def __init__(self, message, point, critical_id=None):
        super().__init__(message)
        self.point = point
        self.critical_id = critical_id


class NonSmoothFlow(FlowError):
    """The time-T map is not smooth at the start point (event structure changes)."""


@dataclass
class FlowEvent:
    time: float
    point: np.ndarray
    kind: str  # "capture" | "release"
    from_stratum: StratumId
    to_stratum: StratumId
    constraint: int
    simultaneous: bool = False


@dataclass
class Segment:
    stratum: StratumId
    t_start: float
    t_end: float
    times: np.ndarray
    points: np.ndarray  # (len(times), n)


@dataclass
class FlowPath:
    segments: list[Segment]
    events: list[FlowEvent]
    terminal: str  # "stationary" | "budget" | "level" | "critical"
    end: np.ndarray
    t_end: float
    target: int | None = None  # index into the target list for "critical"

    def polyline(self) -> tuple[np.ndarray, np.ndarray]:
        ts, xs = [], []
        for i, seg in enumerate(self.segments):
            s = 0 if i == 0 else 1
            ts.append(seg.times[s:])
            xs.append(seg.points[s:])
        return np.concatenate(ts), np.concatenate(xs)

    def signature(self) -> tuple:
        return tuple((e.kind, e.constraint) for e in self.events)

    def first_time(self, pred) -> float | None:
        t, X = self.polyline()
        for ti, xi in zip(t, X):
            if pred(xi):
                return float(ti)
        return None


@dataclass
class _Grad:
    """One-entry cache of -grad f: rhs and event functions share a point."""

    pr: "Problem"
    key: bytes = b""
    val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fval: float = 0.0

    def __call__(self, y):
        k = y.tobytes()
        if k != self.key:
            f, g = self.pr.value_grad(y)
            self.val = -self.pr.metric.sharp(g)
            self.fval = f
            self.key = k
        return self.val

    def f(self, y):
        self(y)
        return self.fval


def _snap(dom, x, S: StratumId):
    if S.depth == 0:
        return x
    N = dom.normals(S)
    r = N.T @ x - dom.b[list(S.active)]
    return x - N @ np.linalg.solve(N.T @ N, r)


def _stationary_tol(pr, vneg):
    return pr.tol_stationary * (1.0 + pr.metric.norm(vneg))


def integrate(pr: "Problem", p, t_max: float | None = None, level: float | None = None,
              targets: Sequence[np.ndarray] | None = None, r_cap: float | None = None,
              max_events: int | None = None, rtol: float = RTOL) -> FlowPath:
    """Integrate the modified gradient flow forward from ``p``.

    Stops at a stationary point, at ``t_max``, on reaching the sublevel
    ``f <= level``, or on entering the ``r_cap``-ball of one of ``targets``.
    """
    dom = pr.domain
    gram = pr.metric.matrix
    t_max = pr.flow_t_max_default(p) if t_max is None else float(t_max)
    max_events = pr.max_events if max_events is None else max_events
    r_cap = pr.r_cap if r_cap is None else r_cap
    targets = [] if targets is None else [np.asarray(q, dtype=float) for q in targets]
    Q = np.array(targets, dtype=float).reshape(len(targets), dom.n)
    atol = 1e-12 * max(1.0, dom.diameter)

    x = np.array(p, dtype=float)
    mg = modified_gradient(pr, x)
    A, B = mg.active, mg.stratum
    x = _snap(dom, x, A)
    t = 0.0
    segments: list[Segment] = []
    events: list[FlowEvent] = []
    negg = _Grad(pr)

    def done(term, target=None):
        if not segments or segments[-1].t_end < t:
            segments.append(Segment(B, t, t, np.array([t]), x[None, :].copy()))
        return FlowPath(segments, events, term, x.copy(), t, target)

    for j, q in enumerate(targets):
        if dom.distance(x, q) <= r_cap:
            return done("critical", j)
    if mg.stationary:
        return done("stationary")
    if level is not None and pr.value(x) <= level + pr.tol_level:
        return done("level")

    while True:
        P = dom.projector(B, gram)
        inactive = [k for k in range(len(dom.b)) if k not in B.active]

        def rhs(_t, y, P=P):
            return P @ negg(y)

        fns, tags = [], []
        for k in inactive:
            fn = (lambda _t, y, a=dom.A[k], bk=dom.b[k]: a @ y - bk)
            fn.terminal, fn.direction = True, 1
            fns.append(fn)
            tags.append(("capture", k))
        if B.depth:
            for k in B.active:
                Pk = dom.projector(StratumId(tuple(c for c in B.active if c != k), dom.n), gram)
                fn = (lambda _t, y, a=dom.A[k] @ Pk: a @ negg(y))
                fn.terminal, fn.direction = True, -1
                fns.append(fn)
                tags.append(("release", k))

        def stat(_t, y, P=P):
            v = P @ negg(y)
            return pr.metric.norm(v) - _stationary_tol(pr, negg(y))
        stat.terminal, stat.direction = True, -1
        fns.append(stat)
        tags.append(("stationary", None))
        if level is not None:
            lv = (lambda _t, y: negg.f(y) - level)
            lv.terminal, lv.direction = True, -1
            fns.append(lv)
            tags.append(("level", None))
        if targets:
            fn = (lambda _t, y: float(np.min(dom.distances(y, Q))) - r_cap)
            fn.terminal, fn.direction = True, -1
            fns.append(fn)
            tags.append(("critical", None))

        sol = solve_ivp(rhs, (t, t_max), x, method="RK45", events=fns,
                        rtol=rtol, atol=atol)
        if sol.status == -1:
            raise FlowError(f"integrator failed: {sol.message}")
        seg_t = sol.t
        seg_x = sol.y.T
        fired = [(float(te[0]), i, ye[0]) for i, (te, ye) in
                 enumerate(zip(sol.t_events, sol.y_events)) if len(te)]
        if fired:
            t_ev = min(fv[0] for fv in fired)
            t_tol = pr.tol_event_time * (1.0 + abs(t_ev)) * 1e3
            now = [fv for fv in fired if fv[0] <= t_ev + t_tol]
            x_new = np.array(min(now, key=lambda fv: fv[0])[2], dtype=float)
            if seg_t[-1] > t_ev:
                keep = seg_t < t_ev
                seg_t = np.append(seg_t[keep], t_ev)
                seg_x = np.vstack([seg_x[keep], x_new])
            else:
                seg_t[-1], seg_x[-1] = t_ev, x_new
        else:
            t_ev = float(seg_t[-1])
            x_new = seg_x[-1].copy()
            now = []
        segments.append(Segment(B, t, t_ev, seg_t.copy(), seg_x.copy()))
        if np.any(dom.slack(x_new) > 1e-6 * max(1.0, dom.diameter)):
            raise FlowError(f"path escaped the domain at {x_new.tolist()}")
        t, x = t_ev, x_new

        if not now:
            return FlowPath(segments, events, "budget", x.copy(), t)
        kinds = {tags[i][0] for _, i, _ in now}
        for _, i, _ in now:
            if tags[i][0] == "critical":
                j = int(np.argmin(dom.distances(x, Q)))
                return FlowPath(segments, events, "critical", x.copy(), t, j)
        if "level" in kinds:
            return FlowPath(segments, events, "level", x.copy(), t)
        if kinds == {"stationary"}:
            return FlowPath(segments, events, "stationary", x.copy(), t)

        caps = sorted(tags[i][1] for _, i, _ in now if tags[i][0] == "capture")
        rels = sorted(tags[i][1] for _, i, _ in now if tags[i][0] == "release")
        simultaneous = len(caps) + len(rels) > 1
        if caps:
            here = StratumId(tuple(sorted(set(B.active) | set(caps))), dom.n)
            x = _snap(dom, x, here)
            vneg = -gradient(pr, x)
            tol = _stationary_tol(pr, vneg)
            vec, newB = _cascade(dom, gram, here, vneg, max(tol, 1e-12))
            for k in caps:
                events.append(FlowEvent(t, x.copy(), "capture", B, newB, k, simultaneous))
            if len(newB.active) != len(B.active) + len(caps):
                # cascade settled on a face that is not the captured one
                for ev in events[-len(caps):]:
                    ev.simultaneous = True
            A, B = here, newB
            # one RK step can enter and leave a target ball while landing on
            # a face, so the ball event may not see a sign change
            for j, q in enumerate(targets):
                if dom.distance(x, q) <= r_cap:
                    return FlowPath(segments, events, "critical", x.copy(), t, j)
            if pr.metric.norm(vec) <= tol:
                return FlowPath(segments, events, "stationary", x.copy(), t)
        else:
            newB = StratumId(tuple(c for c in B.active if c not in rels), dom.n)
            for k in rels:
                events.append(FlowEvent(t, x.copy(), "release", B, newB, k, simultaneous))
            B = newB
        if len(events) > max_events:
            raise ZenoError(
                f"{len(events)} stratum changes before t={t:.6g}: suspected "
                f"Zeno behaviour or a tangency")


def flow_to_level(pr: "Problem", p, c: float, cps: Sequence["CriticalPoint"] | None = None,
                  t_max: float | None = None) -> np.ndarray:
    """First point of the path from ``p`` on the level set ``f = c``."""
    p = np.asarray(p, dtype=float)
    fp = pr.value(p)
    if fp < c - pr.tol_level:
        raise ValueError(f"f(p) = {fp} is already below the level {c}")
    if abs(fp - c) <= pr.tol_level:
        return p.copy()
    path = integrate(pr, p, t_max=t_max, level=c)
    if path.terminal != "level":
        blocking = None
        if cps:
            d = [pr.domain.distance(path.end, cp.location) for cp in cps]
            j = int(np.argmin(d))
            if d[j] < 1e3 * pr.r_cap:
                blocking = cps[j].id
        raise LevelBlocked(
            f"path from {p.tolist()} stopped ({path.terminal}) at "
            f"{path.end.tolist()} with f = {pr.value(path.end):.6g} > {c}",
            path.end, blocking)
    return path.end


def _endpoints(pr, p, T, dirs, h):
    ends, sigs = [], []
    for w in dirs.T:
        pair = []
        for s in (1.0, -1.0):
            path = integrate(pr, p + s * h * w, t_max=T)
            pair.append(path)
        ends.append(pair)
        sigs.append(tuple(pp.signature() for pp in pair))
    return ends, sigs


def flow_jacobian(pr: "Problem", p, T: float, h: float | None = None,
                  directions: np.ndarray | None = None, max_halvings: int = 6,
                  rel_tol: float = 1e-4) -> np.ndarray:
    """Derivative of the time-``T`` map at ``p`` along the start stratum.

    Central differences of :func:`integrate`; every perturbed start re-detects
    its own events. Columns correspond to ``directions`` (default: the face
    basis of the stratum containing ``p``), rows are ambient coordinates.
    The step is halved until the perturbed paths share the reference event
    sequence and two successive estimates agree to ``rel_tol``.
    """
    dom = pr.domain
    p = np.asarray(p, dtype=float)
    ref = integrate(pr, p, t_max=T)
    if any(e.simultaneous for e in ref.events):
        raise NonSmoothFlow("reference path has a simultaneous stratum change")
    if ref.terminal == "budget" and ref.events and abs(ref.events[-1].time - T) < 1e-9 * (1 + T):
        raise NonSmoothFlow("time T coincides with a stratum change")
    if directions is None:
        directions = dom.face_basis(dom.locate(p, pr.tol_active))
    directions = np.asarray(directions, dtype=float).reshape(dom.n, -1)
    if h is None:
        h = 1e-5 * max(1.0, dom.diameter)
    sig0 = ref.signature()
    prev = None
    for _ in range(max_halvings + 1):
        ends, sigs = _endpoints(pr, p, T, directions, h)
        if all(s == (sig0, sig0) for s in sigs):
            cols = [dom.displacement(b.end, a.end) / (2 * h) for a, b in ends]
            J = np.column_stack(cols) if cols else np.zeros((dom.n, 0))
            if prev is not None:
                scale = max(np.max(np.abs(J)), 1e-300)
                if np.max(np.abs(J - prev)) <= rel_tol * scale:
                    return J
            prev = J
        else:
            prev = None
        h /= 2
    raise NonSmoothFlow(
        f"flow map at {p.tolist()} (T={T}) is not smooth at any tested step: "
        f"perturbed event sequences differ or estimates do not converge")


@dataclass
class OmegaResult:
    critical_id: int | None
    path: FlowPath
    reason: str  # "critical" | "budget" | "unknown-stationary"


def omega_limit(pr: "Problem", p, cps: Sequence["CriticalPoint"],
                t_max: float | None = None, r_cap: float | None = None) -> OmegaResult:
    """Essential critical point the forward path from ``p`` converges to."""
    ess = [cp for cp in cps if cp.essential]
    r = pr.r_cap if r_cap is None else r_cap
    path = integrate(pr, p, t_max=t_max, targets=[cp.location for cp in ess], r_cap=r)
    if path.terminal == "critical":
        return OmegaResult(ess[path.target].id, path, "critical")
    if path.terminal == "stationary":
        d = [pr.domain.distance(path.end, cp.location) for cp in ess]
        if d and min(d) <= 10 * r:
            return OmegaResult(ess[int(np.argmin(d))].id, path, "critical")
        return OmegaResult(None, path, "unknown-stationary")
    return OmegaResult(None, path, "budget")


def write_trace(pr: "Problem", paths: Sequence[FlowPath], out=None) -> str:
    """CSV dump: one row per accepted step, events marked on their rows."""
    n = pr.n
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trajectory_id", "t"] + [f"x{i + 1}" for i in range(n)]
               + ["stratum_depth", "event"])
    for tid, path in enumerate(paths):
        ev_at = {}
        for e in path.events:
            ev_at.setdefault(round(e.time, 12), e.kind)
        rows = []
        for si, seg in enumerate(path.segments):
            start = 0 if si == 0 else 1
            for ti, xi in zip(seg.times[start:], seg.points[start:]):
                rows.append([ti, xi, seg.stratum.depth, ""])
            key = round(float(seg.t_end), 12)
            if rows and key in ev_at and not rows[-1][3]:
                rows[-1][3] = ev_at[key]
                if si + 1 < len(path.segments):
                    rows[-1][2] = path.segments[si + 1].stratum.depth
                else:
                    rows[-1][2] = path.events[-1].to_stratum.depth
        if rows and path.terminal in ("stationary", "critical"):
            if rows[-1][3]:
                rows.append([rows[-1][0], rows[-1][1], rows[-1][2], "stationary"])
            else:
                rows[-1][3] = "stationary"
        for ti, xi, depth, ev in rows:
            w.writerow([tid, repr(float(ti))] + [repr(float(v)) for v in xi] + [depth, ev])
    return buf.getvalue() if out is None else ""
