"""Stratum-critical points: search, classification, oriented frames, seeds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh

from .domain import Interval, StratumId
from .field import MorseViolation, modified_gradient

__all__ = [
    "CriticalPoint", "Seed", "CriticalSearch", "find_critical_points",
    "classify", "unstable_seeds", "default_epsilon",
]


@dataclass
class CriticalPoint:
    """A critical point of f restricted to its stratum.

    ``E_minus`` holds g-orthonormal columns spanning the unstable space of the
    restricted Hessian; ``E_plus`` completes it so that ``[E_minus | E_plus]``
    is positively oriented. ``orientation`` is +1 for the canonical choice of
    unstable orientation and -1 when it has been flipped.
    """

    id: int
    location: np.ndarray
    stratum: StratumId
    essential: bool
    index: int
    value: float
    E_minus: np.ndarray
    E_plus: np.ndarray
    hessK: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool = False
    stationary: bool = False
    epsilon: float | None = None
    orientation: int = 1

    @property
    def oriented_E_minus(self) -> np.ndarray:
        E = self.E_minus.copy()
        if E.shape[1] and self.orientation < 0:
            E[:, 0] *= -1
        return E

    def flipped(self) -> "CriticalPoint":
        return replace(self, orientation=-self.orientation)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "location": [float(x) for x in self.location],
            "stratum_depth": self.stratum.depth,
            "essential": bool(self.essential),
            "index": int(self.index),
            "value": float(self.value),
        }


@dataclass
class Seed:
    point: np.ndarray
    param: np.ndarray  # unit vector in E_minus coordinates
    angle: float | None = None


@dataclass
class CriticalSearch:
    """All critical points found plus a per-face Newton coverage report."""

    points: list[CriticalPoint]
    coverage: list[dict] = field(default_factory=list)

    @property
    def essential(self) -> list[CriticalPoint]:
        return [cp for cp in self.points if cp.essential]


def _sign_normalize(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def classify(pr, p, S: StratumId, strict: bool = True, cp_id: int = -1) -> CriticalPoint:
    """Index, frames and essential flag of the critical point ``p`` of f|_S.

    With ``strict`` a G-stationary point with a singular restricted Hessian
    raises :class:`MorseViolation`.
    """
    dom = pr.domain
    gram = pr.metric.matrix
    p = np.asarray(p, dtype=float)
    n = dom.n
    Z = dom.face_basis(S)
    jet = pr.jet(p)
    d = Z.shape[1]
    if d:
        HK = Z.T @ jet.hessian @ Z
        GK = Z.T @ gram @ Z
        mu, C = eigh(HK, GK)
        scale = 1.0 + float(np.max(np.abs(mu)))
        degenerate = bool(np.any(np.abs(mu) < pr.tol_eig * scale))
        V = Z @ C  # g-orthonormal ambient eigenvectors, ascending eigenvalue
    else:
        HK = np.zeros((0, 0))
        mu = np.zeros(0)
        V = np.zeros((n, 0))
        degenerate = False
    neg = mu < 0
    lam = int(np.count_nonzero(neg))
    E_minus = np.column_stack([_sign_normalize(V[:, i]) for i in np.flatnonzero(neg)]) \
        if lam else np.zeros((n, 0))
    mg = modified_gradient(pr, p, active=S)
    if strict and degenerate and mg.stationary:
        raise MorseViolation(
            f"degenerate critical point at {p.tolist()} (restricted Hessian "
            f"eigenvalues {mu.tolist()}) is stationary for the flow")
    E_plus = _complete(gram, E_minus, [V[:, i] for i in np.flatnonzero(~neg)])
    return CriticalPoint(
        id=cp_id, location=p, stratum=S, essential=bool(mg.stationary and not degenerate),
        index=lam, value=jet.value, E_minus=E_minus, E_plus=E_plus, hessK=HK,
        eigenvalues=mu, degenerate=degenerate, stationary=bool(mg.stationary))


def _complete(gram, E_minus, extra) -> np.ndarray:
    """g-orthonormal completion of ``E_minus`` to a positively oriented basis."""
    n = gram.shape[0]
    basis = [E_minus[:, i] for i in range(E_minus.shape[1])]
    out = []
    for v in list(extra) + list(np.eye(n)):
        w = v.astype(float).copy()
        for u in basis + out:
            w = w - (u @ gram @ w) * u
        nrm = math.sqrt(max(w @ gram @ w, 0.0))
        if nrm > 1e-8:
            out.append(w / nrm)
        if len(basis) + len(out) == n:
            break
    E_plus = np.column_stack(out) if out else np.zeros((n, 0))
    if out and np.linalg.det(np.hstack([E_minus, E_plus])) < 0:
        E_plus[:, -1] *= -1
    return E_plus


def _face_seeds(pr, S: StratumId, density: int, salt: int) -> list[np.ndarray]:
    dom = pr.domain
    if dom.kind == "product":
        base = np.zeros(dom.n)
        axes = []
        fixed = {}
        for k in S.active:
            i, end = dom.ids[k]
            fac = dom.factors[i]
            fixed[i] = fac.a if end == "lo" else fac.b
        for i, fac in enumerate(dom.factors):
            if i in fixed:
                base[i] = fixed[i]
            elif isinstance(fac, Interval):
                axes.append((i, fac.a + (np.arange(density) + 0.5) / density * (fac.b - fac.a)))
            else:
                axes.append((i, np.arange(density) / density * fac.period))
        if not axes:
            return [base]
        grids = np.meshgrid(*[vals for _, vals in axes], indexing="ij")
        pts = []
        for combo in zip(*[g.ravel() for g in grids]):
            x = base.copy()
            for (i, _), v in zip(axes, combo):
                x[i] = v
            pts.append(x)
        return pts
    verts = np.array(dom.face_vertices(S))
    if S.dim == 0:
        return [verts[0]]
    rng = np.random.default_rng([pr.seed, salt])
    w = rng.dirichlet(np.ones(len(verts)), size=density ** S.dim)
    return list(np.vstack([verts.mean(axis=0)[None, :], w @ verts]))


def _newton(pr, x0, S: StratumId, Z, max_iter=60):
    dom = pr.domain
    x = x0.copy()
    for it in range(max_iter):
        jet = pr.jet(x)
        g = Z.T @ jet.gradient
        if np.linalg.norm(g) <= pr.tol_crit * (1.0 + np.linalg.norm(jet.gradient)):
            return x, True
        HK = Z.T @ jet.hessian @ Z
        step, *_ = np.linalg.lstsq(HK, g, rcond=1e-12)
        x = x - Z @ step
        if not np.all(np.isfinite(x)) or np.any(dom.slack(x) > 2 * dom.diameter):
            return x, False
    return x, False


def default_epsilon(pr, cp: CriticalPoint, others: list[CriticalPoint]) -> float:
    """1e-2 times the distance to the nearest other critical point or
    non-adjacent face, halved until the unstable sphere lies in the domain."""
    dom = pr.domain
    dists = [dom.distance(cp.location, o.location) for o in others if o is not cp]
    s = dom.slack(cp.location)
    inactive = [k for k in range(len(dom.b)) if k not in cp.stratum.active]
    dists += [float(-s[k]) for k in inactive]
    dists = [d for d in dists if d > 0]
    base = min(dists) if dists else dom.diameter
    eps = 1e-2 * base
    return _fit_epsilon(pr, cp, eps)


def _fit_epsilon(pr, cp, eps):
    dom = pr.domain
    if cp.index == 0:
        return eps
    E = cp.E_minus
    s = dom.slack(cp.location)
    reach = np.linalg.norm(dom.A @ E, axis=1)
    for _ in range(60):
        if np.all(s + eps * reach <= dom.active_tol):
            return eps
        eps /= 2
    raise MorseViolation(f"no valid unstable sphere radius at {cp.location.tolist()}")


def find_critical_points(pr, density: int = 8, strict: bool = True) -> CriticalSearch:
    """Newton search for critical points of f|_K on every face K.

    Vertices are critical by construction. Results are deduplicated (circle
    coordinates modulo period), sorted by (value, location) and numbered.
    """
    dom = pr.domain
    found: list[tuple[np.ndarray, StratumId]] = []
    coverage = []
    dedup = 1e-6 * dom.diameter
    for fi, S in enumerate(dom.faces()):
        Z = dom.face_basis(S)
        seeds = _face_seeds(pr, S, density, salt=100 + fi)
        conv = fail = 0
        basins = 0
        for x0 in seeds:
            if S.dim == 0:
                xs, ok = x0, True
            else:
                xs, ok = _newton(pr, np.asarray(x0, dtype=float), S, Z)
            if not ok:
                fail += 1
                continue
            if not dom.contains(xs, pr.tol_active):
                continue
            xs = _snap_face(dom, dom.canonical(xs), S)
            if dom.locate(xs, pr.tol_active) != S:
                continue
            conv += 1
            if any(T == S and dom.distance(xs, y) <= dedup for y, T in found):
                continue
            found.append((xs, S))
            basins += 1
        coverage.append({"stratum": [list(i) if isinstance(i, tuple) else i
                                     for i in dom.describe(S)],
                         "seeds": len(seeds), "converged": conv,
                         "failed": fail, "points": basins})
    cps = [classify(pr, x, S, strict=strict) for x, S in found]
    cps.sort(key=lambda c: (round(c.value, 9), tuple(np.round(c.location, 9))))
    for i, cp in enumerate(cps):
        cp.id = i
    for cp in cps:
        if cp.essential:
            cp.epsilon = (_fit_epsilon(pr, cp, pr.epsilon) if pr.epsilon
                          else default_epsilon(pr, cp, cps))
    return CriticalSearch(cps, coverage)


def _snap_face(dom, x, S):
    if S.depth == 0:
        return x
    N = dom.normals(S)
    r = N.T @ x - dom.b[list(S.active)]
    return x - N @ np.linalg.solve(N.T @ N, r)


def _sphere_params(lam: int, m: int, seed: int) -> list[tuple[np.ndarray, float | None]]:
    if lam == 1:
        return [(np.array([-1.0]), None), (np.array([1.0]), None)]
    if lam == 2:
        ang = 2 * np.pi * np.arange(m) / m
        return [(np.array([math.cos(a), math.sin(a)]), float(a)) for a in ang]
    if lam == 3:
        # Fibonacci lattice
        k = np.arange(m) + 0.5
        z = 1 - 2 * k / m
        phi = np.pi * (3 - math.sqrt(5)) * k
        r = np.sqrt(1 - z * z)
        return [(np.array([r[i] * math.cos(phi[i]), r[i] * math.sin(phi[i]), z[i]]), None)
                for i in range(m)]
    rng = np.random.default_rng([seed, lam, m])
    v = rng.standard_normal((m, lam))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return [(row, None) for row in v]


def unstable_seeds(pr, cp: CriticalPoint, eps: float | None = None, m: int | None = None) -> list[Seed]:
    """Points on the radius-``eps`` sphere of the affine unstable space of ``cp``.

    Index 1 gives the two-point sphere (negative side first) whatever ``m``.
    """
    if cp.index == 0:
        return []
    m = pr.samples if m is None else m
    eps = cp.epsilon if eps is None else eps
    if eps is None:
        raise ValueError("critical point has no epsilon assigned")
    eps = _fit_epsilon(pr, cp, eps)
    E = cp.E_minus
    out = []
    for a, ang in _sphere_params(cp.index, m, pr.seed):
        out.append(Seed(cp.location + eps * (E @ a), a, ang))
    return out
