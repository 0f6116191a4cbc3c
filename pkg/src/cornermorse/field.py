"""Metric gradient, the modified gradient field, and Morse-condition checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .domain import Domain, DomainError, StratumId

if TYPE_CHECKING:
    from .critical import CriticalPoint
    from .problem import Problem

__all__ = [
    "Metric", "ModifiedGradient", "MorseViolation", "ValidationEntry",
    "ValidationReport", "gradient", "modified_gradient", "validate_morse",
]


class MorseViolation(ValueError):
    """The function violates a hypothesis needed for the Morse complex."""


@dataclass(frozen=True)
class Metric:
    """Constant Riemannian metric given by an SPD Gram matrix."""

    matrix: np.ndarray
    euclidean: bool = False

    @classmethod
    def identity(cls, n: int) -> "Metric":
        return cls(np.eye(n), euclidean=True)

    @classmethod
    def constant(cls, mat) -> "Metric":
        mat = np.array(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DomainError("metric must be a square matrix")
        if not np.allclose(mat, mat.T, rtol=0, atol=1e-12):
            raise DomainError("metric is not symmetric")
        if np.min(np.linalg.eigvalsh(mat)) <= 0:
            raise DomainError("metric is not positive definite (non-SPD)")
        return cls(0.5 * (mat + mat.T))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def inner(self, u, v) -> float:
        return float(np.asarray(u) @ self.matrix @ np.asarray(v))

    def norm(self, v) -> float:
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def sharp(self, covector) -> np.ndarray:
        """Raise an index: the vector g-dual to a coordinate differential."""
        if self.euclidean:
            return np.array(covector, dtype=float)
        return np.linalg.solve(self.matrix, covector)

    def to_json(self):
        return "euclidean" if self.euclidean else self.matrix.tolist()


@dataclass
class ModifiedGradient:
    vector: np.ndarray
    stratum: StratumId  # face the gradient was projected onto
    stationary: bool
    active: StratumId  # stratum containing the evaluation point


def gradient(pr: "Problem", p) -> np.ndarray:
    """Metric gradient of f at ``p``: ``Gmat^-1`` times the coordinate gradient."""
    return pr.metric.sharp(pr.grad(p))


def _cascade(dom: Domain, gram: np.ndarray, active: StratumId, v: np.ndarray,
             tol: float):
    # faces whose closure contains p, by decreasing dimension
    best = None
    depth = None
    for S in active.subfaces_containing():
        if depth is not None and S.depth > depth:
            break
        w = dom.projector(S, gram) @ v
        if dom.is_inward(None, w, stratum=active):
            if best is None:
                best, depth = (w, S), S.depth
            elif np.linalg.norm(w - best[0]) > tol:
                raise MorseViolation(
                    f"modified gradient ambiguous: faces {best[1].active} and "
                    f"{S.active} give different inward projections")
    return best


def modified_gradient(pr: "Problem", p, active: StratumId | None = None) -> ModifiedGradient:
    """Project -grad f onto the highest-dimensional face (among those whose
    closure contains ``p``) on which the projection is inward."""
    p = np.asarray(p, dtype=float)
    dom = pr.domain
    A = dom.locate(p, pr.tol_active) if active is None else active
    gf = gradient(pr, p)
    gnorm = pr.metric.norm(gf)
    tol = pr.tol_stationary * (1.0 + gnorm)
    vec, face = _cascade(dom, pr.metric.matrix, A, -gf, tol=max(tol, 1e-12))
    return ModifiedGradient(vec, face, pr.metric.norm(vec) <= tol, A)


@dataclass
class ValidationEntry:
    condition: str
    location: list
    stratum: list
    detail: str

    def to_json(self) -> dict:
        return {"condition": self.condition, "location": self.location,
                "stratum": self.stratum, "detail": self.detail}


@dataclass
class ValidationReport:
    failures: list[ValidationEntry] = field(default_factory=list)
    notes: list[ValidationEntry] = field(default_factory=list)
    tangencies_checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures

    def conditions_failed(self) -> set[str]:
        return {e.condition for e in self.failures}

    def to_json(self) -> list:
        return [e.to_json() for e in self.failures]


def _jsonable_stratum(dom: Domain, S: StratumId) -> list:
    return [list(i) if isinstance(i, tuple) else i for i in dom.describe(S)]


def condition3_value(pr: "Problem", p, stratum: StratumId, k: int) -> float:
    """Directional derivative, along -grad f, of df in the standard-chart
    direction of active constraint ``k`` (local coordinate = slack of ``k``)."""
    dom = pr.domain
    gram = pr.metric.matrix
    N = dom.normals(stratum)
    pos = stratum.active.index(k)
    ginv_n = np.linalg.solve(gram, N)
    # chart vector for slack k, g-orthogonal to the face directions
    u = -ginv_n @ np.linalg.solve(N.T @ ginv_n, np.eye(stratum.depth)[:, pos])
    jet = pr.jet(p)
    v = -pr.metric.sharp(jet.gradient)
    return float(u @ jet.hessian @ v)


def validate_morse(pr: "Problem", cps: list["CriticalPoint"],
                   tangencies: list | None = None) -> ValidationReport:
    """Check the Morse conditions at stratum-critical points and at sampled
    tangency points of the flow.

    Failures are collected, never raised. ``tangencies`` is a list of
    ``(point, stratum, constraint)`` triples where the normal component of
    -grad f along ``constraint`` vanishes; when omitted they are gathered by
    integrating the flow from unstable-sphere seeds and a coarse grid.
    """
    dom = pr.domain
    rep = ValidationReport()
    for cp in cps:
        p = cp.location
        S = cp.stratum
        gf = gradient(pr, p)
        scale = 1.0 + pr.metric.norm(gf)
        # a vanishing gradient does not count as pointing into M: otherwise a
        # degenerate interior critical point would pass condition 1
        vanishing = pr.metric.norm(gf) <= pr.tol_stationary * scale
        inward = dom.is_inward(p, -gf, stratum=S) and not vanishing
        nondeg = not cp.degenerate
        loc = [float(x) for x in p]
        st = _jsonable_stratum(dom, S)
        if not (nondeg or inward):
            why = "vanishes" if vanishing else "points outward"
            rep.failures.append(ValidationEntry(
                "1", loc, st,
                f"degenerate critical point of the restricted function and "
                f"-grad f {why} (1a and 1b both fail)"))
        for L in S.subfaces_containing():
            if L.depth >= S.depth:
                continue
            w = dom.projector(L, pr.metric.matrix) @ (-gf)
            if pr.metric.norm(w) <= 1e-8 * scale:
                rep.failures.append(ValidationEntry(
                    "2", loc, st,
                    f"-grad f lies in the normal space of the adjacent face "
                    f"{_jsonable_stratum(dom, L)}"))
        letter = nondeg and not inward
        if cp.essential != letter and nondeg:
            rep.notes.append(ValidationEntry(
                "essential-definition", loc, st,
                f"stationary-flow essential={cp.essential} but "
                f"'(1a) and not (1b)' gives {letter}"))
    if tangencies is None:
        tangencies = _sample_tangencies(pr, cps)
    for p, stratum, k in tangencies:
        val = condition3_value(pr, p, stratum, k)
        jet = pr.jet(p)
        scale = 1.0 + float(np.linalg.norm(jet.hessian)) * (1.0 + float(np.linalg.norm(jet.gradient)))
        rep.tangencies_checked += 1
        if abs(val) <= 1e-8 * scale:
            rep.failures.append(ValidationEntry(
                "3", [float(x) for x in p], _jsonable_stratum(dom, stratum),
                f"directional derivative of the normal partial vanishes "
                f"(constraint {dom.ids[k]!r})"))
    return rep


def _sample_tangencies(pr: "Problem", cps) -> list:
    from .critical import unstable_seeds
    from .flow import FlowError, integrate

    starts = []
    for cp in cps:
        if cp.essential and cp.index >= 1 and not cp.degenerate:
            starts += [s.point for s in unstable_seeds(pr, cp, m=8)]
    starts += list(pr.sample_points(16, salt=3))
    out = []
    for x0 in starts:
        try:
            path = integrate(pr, x0, t_max=pr.flow_t_max_default(x0))
        except (FlowError, MorseViolation, DomainError):
            continue
        for ev in path.events:
            if ev.kind == "release":
                out.append((ev.point, ev.from_stratum, ev.constraint))
    return out
