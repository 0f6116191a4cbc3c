"""Flat manifolds with corners: products of intervals and circles, and
bounded simple polytopes.

Every domain is stored uniformly as a list of affine constraints
``a_k . x <= b_k`` plus a mask of periodic (circle) coordinates. A stratum
is identified by the set of constraints that are active on it; for these
flat models each stratum is (a connected component of) the relative
interior of an affine face, so its tangent space is the null space of the
active normals and is the same at every point of the face's closure.
"""
from __future__ import annotations

import math
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "Interval", "Circle", "Domain", "StratumId", "AffineChart",
    "DomainError", "model_cone_contains", "locate", "is_inward",
    "face_projection", "standard_chart", "as_gram",
]


class DomainError(ValueError):
    """Invalid domain description, or a point outside the domain."""


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise DomainError(f"interval needs finite a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Circle:
    period: float

    def __post_init__(self):
        if not (math.isfinite(self.period) and self.period > 0):
            raise DomainError(f"circle period must be > 0, got {self.period}")


Factor = Union[Interval, Circle]


@dataclass(frozen=True, order=True)
class StratumId:
    """Active constraint indices (sorted) of a face of an ``n``-dim domain."""

    active: tuple[int, ...]
    n: int

    @property
    def depth(self) -> int:
        return len(self.active)

    @property
    def dim(self) -> int:
        return self.n - len(self.active)

    def subfaces_containing(self) -> list["StratumId"]:
        """Faces whose closure contains this one: all subsets of the active
        set, by decreasing dimension then lexicographic subset order."""
        out = []
        for r in range(0, self.depth + 1):
            for sub in itertools.combinations(self.active, r):
                out.append(StratumId(tuple(sub), self.n))
        return out


def as_gram(g, n: int) -> np.ndarray:
    """Coerce a metric (``Metric``, matrix or ``None``) to its Gram matrix."""
    if g is None:
        return np.eye(n)
    mat = getattr(g, "matrix", g)
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (n, n):
        raise DomainError(f"metric has shape {mat.shape}, expected {(n, n)}")
    return mat


def model_cone_contains(w, n: int, ell: int, tol: float | None = None) -> bool:
    """Membership of ``w`` in the model cone R^(n-ell) x [0, inf)^ell.

    Only the last ``ell`` coordinates are constrained.
    """
    w = np.asarray(w, dtype=float)
    if not 0 <= ell <= n or w.shape != (n,):
        raise ValueError("need 0 <= ell <= n and w of length n")
    if tol is None:
        tol = 1e-9 * (1.0 + float(np.linalg.norm(w)))
    return bool(np.all(w[n - ell:] >= -tol))


class Domain:
    """A compact flat manifold with corners.

    Construct with :meth:`product` or :meth:`polytope`, or from the JSON
    fragment via :meth:`from_json`.
    """

    def __init__(self, kind: str, n: int, A: np.ndarray, b: np.ndarray,
                 ids: Sequence, periods: np.ndarray,
                 factors: tuple[Factor, ...] | None = None):
        self.kind = kind
        self.n = n
        self.A = np.asarray(A, dtype=float).reshape(-1, n)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.ids = tuple(ids)
        self.periods = np.asarray(periods, dtype=float)
        self.periodic = self.periods > 0
        self.factors = factors
        self._proj_cache: dict = {}

    # construction

    @classmethod
    def product(cls, factors: Iterable[Factor]) -> "Domain":
        factors = tuple(factors)
        if not factors:
            raise DomainError("product domain needs at least one factor")
        n = len(factors)
        rows, rhs, ids = [], [], []
        periods = np.zeros(n)
        for i, fac in enumerate(factors):
            if isinstance(fac, Interval):
                if not (np.isfinite(fac.a) and np.isfinite(fac.b)) or not fac.a < fac.b:
                    raise DomainError(f"interval factor {i} needs finite a < b")
                lo = np.zeros(n)
                lo[i] = -1.0
                hi = np.zeros(n)
                hi[i] = 1.0
                rows += [lo, hi]
                rhs += [-fac.a, fac.b]
                ids += [(i, "lo"), (i, "hi")]
            elif isinstance(fac, Circle):
                if not fac.period > 0:
                    raise DomainError(f"circle factor {i} needs period > 0")
                periods[i] = fac.period
            else:
                raise DomainError(f"unknown factor {fac!r}")
        A = np.array(rows).reshape(-1, n)
        return cls("product", n, A, np.array(rhs), ids, periods, factors)

    @classmethod
    def polytope(cls, A, b) -> "Domain":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        m, n = A.shape
        if b.shape != (m,):
            raise DomainError("polytope A and b have inconsistent shapes")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise DomainError("polytope has a zero constraint row")
        # scale rows to unit normals so tolerances mean distances
        A = A / norms[:, None]
        b = b / norms
        dom = cls("polytope", n, A, b, list(range(m)), np.zeros(n))
        dom._check_polytope()
        return dom

    @classmethod
    def from_json(cls, obj: dict) -> "Domain":
        if not isinstance(obj, dict) or "type" not in obj:
            raise DomainError("domain must be an object with a 'type' key")
        kind = obj["type"]
        if kind == "product":
            extra = set(obj) - {"type", "factors"}
            if extra:
                raise DomainError(f"unknown domain key(s): {sorted(extra)}")
            facs = []
            for i, fo in enumerate(obj.get("factors", [])):
                if not isinstance(fo, dict) or len(fo) != 1:
                    raise DomainError(f"factor {i} must have exactly one key")
                if "interval" in fo:
                    ab = fo["interval"]
                    if (not isinstance(ab, list) or len(ab) != 2
                            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in ab)):
                        raise DomainError(f"factor {i}: interval must be [a, b]")
                    facs.append(Interval(float(ab[0]), float(ab[1])))
                elif "circle" in fo:
                    c = fo["circle"]
                    if not isinstance(c, dict) or set(c) != {"period"}:
                        raise DomainError(f"factor {i}: circle must be {{'period': p}}")
                    facs.append(Circle(float(c["period"])))
                else:
                    raise DomainError(f"factor {i}: unknown factor key {next(iter(fo))!r}")
            return cls.product(facs)
        if kind == "polytope":
            extra = set(obj) - {"type", "A", "b"}
            if extra:
                raise DomainError(f"unknown domain key(s): {sorted(extra)}")
            if "A" not in obj or "b" not in obj:
                raise DomainError("polytope needs 'A' and 'b'")
            try:
                A = np.array(obj["A"], dtype=float)
                b = np.array(obj["b"], dtype=float)
            except (TypeError, ValueError) as exc:
                raise DomainError(f"polytope A/b not numeric: {exc}") from None
            if A.ndim != 2:
                raise DomainError("polytope 'A' must be a matrix")
            return cls.polytope(A, b)
        raise DomainError(f"unknown domain type {kind!r}")

    def to_json(self) -> dict:
        if self.kind == "product":
            facs = []
            for fac in self.factors:
                if isinstance(fac, Interval):
                    facs.append({"interval": [fac.a, fac.b]})
                else:
                    facs.append({"circle": {"period": fac.period}})
            return {"type": "product", "factors": facs}
        return {"type": "polytope", "A": self.A.tolist(), "b": self.b.tolist()}

    def _check_polytope(self) -> None:
        n = self.n
        for i in range(n):
            for sgn in (1.0, -1.0):
                c = np.zeros(n)
                c[i] = -sgn
                res = linprog(c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n,
                              method="highs")
                if res.status == 2:
                    raise DomainError("polytope empty")
                if res.status == 3:
                    raise DomainError("polytope unbounded")
        # interior must be nonempty: maximize slack s with A x + s <= b
        c = np.zeros(n + 1)
        c[-1] = -1.0
        Aub = np.hstack([self.A, np.ones((len(self.b), 1))])
        res = linprog(c, A_ub=Aub, b_ub=self.b,
                      bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
        if res.status != 0 or -res.fun <= 1e-9:
            raise DomainError("polytope has empty interior")
        verts = self.vertices
        if not verts:
            raise DomainError("polytope has no vertices")
        for x, act in verts:
            if len(act) != n:
                raise DomainError(
                    f"polytope not simple: vertex {np.round(x, 12).tolist()} "
                    f"lies on {len(act)} facets")

    # geometry

    @cached_property
    def vertices(self) -> list[tuple[np.ndarray, tuple[int, ...]]]:
        """Polytope vertices with their active facets (facet-subset search)."""
        if self.kind != "polytope":
            raise DomainError("vertices are only enumerated for polytopes")
        n, m = self.n, len(self.b)
        found: list[tuple[np.ndarray, tuple[int, ...]]] = []
        scale = max(1.0, float(np.max(np.abs(self.b))))
        tol = 1e-9 * scale
        for sub in itertools.combinations(range(m), n):
            M = self.A[list(sub)]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            x = np.linalg.solve(M, self.b[list(sub)])
            if np.any(self.A @ x - self.b > tol):
                continue
            if any(np.linalg.norm(x - y) < 1e3 * tol for y, _ in found):
                continue
            act = tuple(int(k) for k in np.flatnonzero(np.abs(self.A @ x - self.b) <= 1e3 * tol))
            found.append((x, act))
        found.sort(key=lambda t: tuple(t[0]))
        return found

    @cached_property
    def diameter(self) -> float:
        if self.kind == "product":
            s = 0.0
            for fac in self.factors:
                if isinstance(fac, Interval):
                    s += (fac.b - fac.a) ** 2
                else:
                    s += (fac.period / 2) ** 2
            return float(np.sqrt(s))
        pts = np.array([v for v, _ in self.vertices])
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.max(np.linalg.norm(d, axis=-1)))

    @property
    def active_tol(self) -> float:
        return 1e-9 * self.diameter

    def canonical(self, p) -> np.ndarray:
        """Representative of ``p`` with circle coordinates in [0, period)."""
        q = np.array(p, dtype=float)
        for i in np.flatnonzero(self.periodic):
            P = self.periods[i]
            q[i] = q[i] % P
            if abs(q[i] - P) < 1e-9 * P:
                q[i] = 0.0
        return q

    def displacement(self, p, q) -> np.ndarray:
        """``q - p`` with circle coordinates wrapped to [-period/2, period/2)."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        for i in np.flatnonzero(self.periodic):
            P = self.periods[i]
            d[i] = (d[i] + P / 2) % P - P / 2
        return d

    def distance(self, p, q) -> float:
        return float(np.linalg.norm(self.displacement(p, q)))

    def distances(self, p, Q) -> np.ndarray:
        """Distances from ``p`` to each row of ``Q`` (circle-aware)."""
        D = np.asarray(Q, dtype=float) - np.asarray(p, dtype=float)
        if self.periodic.any():
            P = self.periods[self.periodic]
            D[:, self.periodic] = (D[:, self.periodic] + P / 2) % P - P / 2
        return np.sqrt(np.einsum("ij,ij->i", D, D))

    def slack(self, p) -> np.ndarray:
        """Constraint values ``a_k . p - b_k`` (<= 0 inside)."""
        return self.A @ np.asarray(p, dtype=float) - self.b

    def contains(self, p, tol: float | None = None) -> bool:
        tol = self.active_tol if tol is None else tol
        return bool(np.all(self.slack(p) <= tol))

    def locate(self, p, tol: float | None = None) -> StratumId:
        tol = self.active_tol if tol is None else tol
        s = self.slack(p)
        if np.any(s > tol):
            k = int(np.argmax(s))
            raise DomainError(
                f"point {np.asarray(p).tolist()} outside domain: constraint "
                f"{self.ids[k]!r} violated by {s[k]:.3e}")
        return StratumId(tuple(int(k) for k in np.flatnonzero(s >= -tol)), self.n)

    def normals(self, S: StratumId) -> np.ndarray:
        """Active normals of ``S`` as columns (n x depth)."""
        return self.A[list(S.active)].T.reshape(self.n, S.depth)

    def face_basis(self, S: StratumId) -> np.ndarray:
        """Euclidean-orthonormal basis (columns) of the face direction space."""
        if self.kind == "product":
            fixed = {i for k in S.active for i in np.flatnonzero(self.A[k])}
            free = [i for i in range(self.n) if i not in fixed]
            return np.eye(self.n)[:, free]
        N = self.normals(S)
        if S.depth == 0:
            return np.eye(self.n)
        from scipy.linalg import null_space
        Z = null_space(N.T)
        # deterministic sign: first nonzero entry of each column positive
        for j in range(Z.shape[1]):
            nz = np.flatnonzero(np.abs(Z[:, j]) > 1e-12)
            if nz.size and Z[nz[0], j] < 0:
                Z[:, j] *= -1
        return Z

    def projector(self, S: StratumId, gram: np.ndarray) -> np.ndarray:
        """Matrix of the metric-orthogonal projection onto face ``S``'s directions."""
        key = (S.active, gram.tobytes())
        P = self._proj_cache.get(key)
        if P is None:
            n = self.n
            if S.depth == 0:
                P = np.eye(n)
            else:
                N = self.normals(S)
                Ginv_N = np.linalg.solve(gram, N)
                M = N.T @ Ginv_N
                P = np.eye(n) - Ginv_N @ np.linalg.solve(M, N.T)
            self._proj_cache[key] = P
        return P

    def faces(self) -> list[StratumId]:
        """All nonempty faces, ordered by decreasing dimension then active set."""
        if self.kind == "product":
            choices = []
            k = 0
            for fac in self.factors:
                if isinstance(fac, Interval):
                    choices.append((None, k, k + 1))
                    k += 2
            out = []
            for combo in itertools.product(*choices):
                act = tuple(sorted(c for c in combo if c is not None))
                out.append(StratumId(act, self.n))
        else:
            seen = set()
            for _, act in self.vertices:
                for r in range(len(act) + 1):
                    for sub in itertools.combinations(act, r):
                        seen.add(sub)
            out = [StratumId(s, self.n) for s in seen]
        out.sort(key=lambda S: (S.depth, S.active))
        return out

    def face_vertices(self, S: StratumId) -> list[np.ndarray]:
        return [v for v, act in self.vertices if set(S.active) <= set(act)]

    def is_inward(self, p, v, tol: float | None = None,
                  stratum: StratumId | None = None) -> bool:
        S = self.locate(p) if stratum is None else stratum
        v = np.asarray(v, dtype=float)
        if tol is None:
            tol = 1e-9 * (1.0 + float(np.linalg.norm(v)))
        if S.depth == 0:
            return True
        return bool(np.all(self.A[list(S.active)] @ v <= tol))

    def describe(self, S: StratumId) -> list:
        return [self.ids[k] for k in S.active]

    def __repr__(self) -> str:
        return f"Domain({self.kind}, n={self.n}, constraints={len(self.b)})"


def locate(d: Domain, p, tol: float | None = None) -> StratumId:
    return d.locate(p, tol)


def is_inward(d: Domain, p, v, tol: float | None = None) -> bool:
    """True iff ``v`` lies in the tangent cone of ``d`` at ``p``.

    Vectors tangent to the boundary count as inward.
    """
    return d.is_inward(p, v, tol)


def face_projection(d: Domain, p, S: StratumId, v, g=None) -> np.ndarray:
    """Metric-orthogonal projection of ``v`` onto the directions of face ``S``.

    The residual ``v - result`` is g-orthogonal to the face.
    """
    gram = as_gram(g, d.n)
    if p is not None:
        here = d.locate(p)
        if not set(S.active) <= set(here.active):
            raise DomainError("face does not contain p in its closure")
    return d.projector(S, gram) @ np.asarray(v, dtype=float)


@dataclass
class AffineChart:
    """Standard coordinate chart at ``base``.

    ``frame`` holds the initial chart directions (face basis first, then one
    column per active constraint, scaled so that coordinate equals slack),
    ``J`` is the block-orthogonalizing change of basis and ``basis = frame @ J``
    the pushed-forward coordinate vectors. Local coordinates of ``x`` are
    ``J^-1 frame^-1 (x - base)``; their last ``depth`` entries are the
    constraint slacks ``b_k - a_k . x``.
    """

    base: np.ndarray
    J: np.ndarray
    translation: np.ndarray
    depth: int
    frame: np.ndarray
    stratum: StratumId
    basis: np.ndarray = field(init=False)

    def __post_init__(self):
        self.basis = self.frame @ self.J

    def to_local(self, x) -> np.ndarray:
        return np.linalg.solve(self.basis, np.asarray(x, dtype=float) - self.translation)

    def from_local(self, w) -> np.ndarray:
        return self.translation + self.basis @ np.asarray(w, dtype=float)

    def vector_to_local(self, v) -> np.ndarray:
        return np.linalg.solve(self.basis, np.asarray(v, dtype=float))


def standard_chart(d: Domain, p, g=None) -> AffineChart:
    """Standard chart at ``p``: face directions g-orthogonal to the
    constrained directions, which are listed last."""
    gram = as_gram(g, d.n)
    if not np.allclose(gram, gram.T) or np.min(np.linalg.eigvalsh(0.5 * (gram + gram.T))) <= 0:
        raise DomainError("metric is not symmetric positive definite")
    p = np.asarray(p, dtype=float)
    S = d.locate(p)
    n, ell = d.n, S.depth
    Z = d.face_basis(S)
    if ell:
        N = d.normals(S)
        # columns u_k with a_m . u_k = -delta_mk: moving along u_k raises slack k by 1
        U0 = -N @ np.linalg.inv(N.T @ N)
        frame = np.hstack([Z, U0])
    else:
        frame = Z
    # inner product pulled back to chart coordinates
    Gy = frame.T @ gram @ frame
    k = n - ell
    J = np.eye(n)
    if ell and k:
        # proj(e_j) onto span(e_1..e_k): coefficients solve Gy[:k,:k] c = Gy[:k, j]
        C = np.linalg.solve(Gy[:k, :k], Gy[:k, k:])
        J[:k, k:] = -C
    return AffineChart(base=p, J=J, translation=p.copy(), depth=ell, frame=frame, stratum=S)
