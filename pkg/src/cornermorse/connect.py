"""Connecting trajectories between index-adjacent essential critical points,
their signs, degrees and the assembled Morse complex.

Sign convention. At a seed ``q1 = p_j + eps * E_minus(p_j) a`` the unstable
orientation is represented by ``[w_1, .., w_(l-1), G(q1)]`` where the ``w`` are
sphere-tangent vectors. Pushed forward along the path to a point ``q`` near
the target ``p_i``, the ``w`` span the unstable slice transverse to the stable
set of ``p_i``; with the stable frame written tangent-first, the determinant
of the combined frame reduces to the orientation of the ``w`` in the
quotient by the stable tangent space, which near ``p_i`` is read off from
their ``E_minus(p_i)`` coordinates with ``[E_minus | E_plus](p_i)``
positively oriented.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .critical import CriticalPoint, CriticalSearch, Seed, find_critical_points, unstable_seeds
from .flow import FlowError, FlowPath, flow_jacobian, integrate
from .field import MorseViolation, modified_gradient
from .homology import MorseComplex

__all__ = [
    "Trajectory", "MorseSmaleViolation", "InconclusiveError", "TransversalityError",
    "connecting_trajectories", "trajectory_sign", "degree", "build_complex",
]


class MorseSmaleViolation(MorseViolation):
    """Connecting trajectories are not isolated."""


class InconclusiveError(FlowError):
    """The shooting budget ran out before every seed was resolved."""


class TransversalityError(FlowError):
    """Transported unstable frame is (numerically) rank deficient."""


@dataclass
class Trajectory:
    source: int
    target: int
    param: np.ndarray  # unit vector in E_minus(source) coordinates
    angle: float | None
    seed: np.ndarray
    path: FlowPath
    sign: int = 0
    det: float = float("nan")


@dataclass
class _Shot:
    seed: Seed
    path: FlowPath
    omega: int | None
    closest: dict  # target id -> min distance along the path
    at_end: dict  # target id -> closest approach is the path's end point


class _Shooter:
    """Shoots and caches paths from one source's unstable sphere."""

    def __init__(self, pr, src: CriticalPoint, ess: list[CriticalPoint], eps: float):
        self.pr, self.src, self.ess, self.eps = pr, src, ess, eps
        self.locs = [cp.location for cp in ess]
        self.cache: dict[tuple, _Shot] = {}
        vals = [cp.value for cp in ess]
        self.spread = (max(vals) - min(vals)) if vals else 1.0

    def point(self, a: np.ndarray) -> np.ndarray:
        return self.src.location + self.eps * (self.src.E_minus @ a)

    def shoot(self, a, angle=None, floor: float | None = None) -> _Shot:
        """Flow from the sphere point with parameter ``a``.

        With ``floor`` the path stops once f drops below it; such a shot
        still detects arrival at any target whose value lies above ``floor``.
        """
        a = np.asarray(a, dtype=float)
        a = a / np.linalg.norm(a)
        key = (a.tobytes(), floor)
        hit = self.cache.get(key) or self.cache.get((key[0], None))
        if hit is not None:
            return hit
        pr = self.pr
        x0 = self.point(a)
        path = integrate(pr, x0, targets=self.locs, level=floor)
        omega = self.ess[path.target].id if path.terminal == "critical" else None
        if path.terminal == "stationary":
            d = [pr.domain.distance(path.end, q) for q in self.locs]
            if d and min(d) <= 10 * pr.r_cap:
                omega = self.ess[int(np.argmin(d))].id
        _, X = path.polyline()
        closest, at_end = {}, {}
        for cp in self.ess:
            dd = X - cp.location
            per = pr.domain.periodic
            if per.any():
                P = pr.domain.periods
                dd[:, per] = (dd[:, per] + P[per] / 2) % P[per] - P[per] / 2
            r = np.linalg.norm(dd, axis=1)
            closest[cp.id] = float(np.min(r))
            at_end[cp.id] = bool(r[-1] <= closest[cp.id] * (1 + 1e-9) + 1e-15)
        shot = _Shot(Seed(x0, a, angle), path, omega, closest, at_end)
        self.cache[key] = shot
        return shot


def _angle_vec(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def connecting_trajectories(pr, src: CriticalPoint, tgt: CriticalPoint,
                            cps: list[CriticalPoint], m: int | None = None,
                            eps: float | None = None, shooter: _Shooter | None = None
                            ) -> list[Trajectory]:
    """Isolated trajectories from ``src`` (index l) to ``tgt`` (index l-1),
    found by shooting from the unstable sphere and refining."""
    if src.index - tgt.index != 1:
        raise ValueError("indices must differ by exactly one")
    ess = [cp for cp in cps if cp.essential]
    if shooter is None:
        shooter = _Shooter(pr, src, ess, src.epsilon if eps is None else eps)
    m = pr.samples if m is None else m
    seeds = unstable_seeds(pr, src, eps=shooter.eps, m=m)
    shots = [shooter.shoot(s.param, s.angle) for s in seeds]
    unresolved = [s.seed.point.tolist() for s in shots if s.omega is None]
    lam = src.index
    found: list[Trajectory] = []
    if lam == 1:
        if unresolved:
            raise InconclusiveError(f"seeds without an omega-limit: {unresolved}")
        for s in shots:
            if s.omega == tgt.id:
                found.append(Trajectory(src.id, tgt.id, s.seed.param, None, s.seed.point, s.path))
        return found

    hits = [s.omega == tgt.id for s in shots]
    k = len(shots)
    run = 0
    for i in range(2 * k):
        run = run + 1 if hits[i % k] else 0
        if run >= 3:
            raise MorseSmaleViolation(
                f"an arc of the unstable sphere of critical point {src.id} "
                f"limits to critical point {tgt.id}: trajectories are not isolated")
    # refinement shots only need the part of the path above the target level
    floor = tgt.value - 0.05 * shooter.spread - 1e-12
    d = np.array([s.closest[tgt.id] for s in shots])
    cands = []
    if lam == 2:
        angles = np.array([s.seed.angle for s in shots])
        step = 2 * np.pi / k
        for i in range(k):
            lo, hi = sorted((d[(i - 1) % k], d[(i + 1) % k]))
            if shots[i].omega == tgt.id:
                if d[i] <= lo:
                    cands.append(angles[i])
                continue
            # plateaus are not near-misses, and a near-miss of a saddle
            # passes it mid-path rather than stopping short of it
            if d[i] > lo or d[i] >= hi * (1 - 1e-9) or shots[i].at_end[tgt.id]:
                continue
            res = minimize_scalar(
                lambda th: shooter.shoot(_angle_vec(th), th, floor).closest[tgt.id],
                bounds=(angles[i] - step, angles[i] + step), method="bounded",
                options={"xatol": 1e-13, "maxiter": 200})
            th = float(res.x)
            if shooter.shoot(_angle_vec(th), th, floor).omega == tgt.id:
                cands.append(th)
        reps = []
        for th in cands:
            th = th % (2 * np.pi)
            if all(abs((th - o + np.pi) % (2 * np.pi) - np.pi) > 1e-6 for o in reps):
                reps.append(th)
        for th in sorted(reps):
            s = shooter.shoot(_angle_vec(th), th, floor)
            found.append(Trajectory(src.id, tgt.id, s.seed.param, th, s.seed.point, s.path))
    else:
        params = np.array([s.seed.param for s in shots])
        nn = min(2 * lam, k - 1)
        reps = []
        for i in range(k):
            dist = np.linalg.norm(params - params[i], axis=1)
            nbr = np.argsort(dist)[1:nn + 1]
            if np.all(d[i] <= d[nbr]):
                a0 = params[i]
                if shots[i].omega != tgt.id:
                    res = minimize(lambda a: shooter.shoot(a, None, floor).closest[tgt.id], a0,
                                   method="Nelder-Mead",
                                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
                    a0 = res.x / np.linalg.norm(res.x)
                s = shooter.shoot(a0, None, floor)
                if s.omega == tgt.id and all(np.linalg.norm(a0 - r) > 1e-6 for r in reps):
                    reps.append(a0)
        for a in reps:
            s = shooter.shoot(a, None, floor)
            found.append(Trajectory(src.id, tgt.id, s.seed.param, None, s.seed.point, s.path))
    _check_distinct(pr, found)
    return found


def _check_distinct(pr, trajs):
    # two sphere points on one trajectory would need the paths to merge
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            a, b = trajs[i].path, trajs[j].path
            if a.t_end < 1e-12 or b.t_end < 1e-12:
                continue
            _, Xa = a.polyline()
            _, Xb = b.polyline()
            mid_a = Xa[len(Xa) // 2]
            dmin = min(pr.domain.distance(mid_a, y) for y in Xb)
            if dmin <= pr.r_cap * 1e-2:
                raise MorseSmaleViolation("two sphere points share one trajectory (paths merge)")


def _sphere_tangents(a: np.ndarray) -> np.ndarray:
    """Columns c_1..c_(l-1) with [c_1..c_(l-1), a] orthonormal and, for l >= 2,
    positively oriented."""
    lam = a.shape[0]
    if lam == 1:
        return np.zeros((1, 0))
    M = np.column_stack([a] + [np.eye(lam)[:, i] for i in range(lam)])
    Q, _ = np.linalg.qr(M)
    Q = Q[:, :lam]
    if Q[:, 0] @ a < 0:
        Q[:, 0] *= -1
    C = Q[:, 1:lam]
    if np.linalg.det(np.column_stack([C, a])) < 0:
        C[:, 0] *= -1
    return C


def _crossing_time(pr, tgt: CriticalPoint, path: FlowPath) -> float:
    level = tgt.value + (tgt.epsilon if tgt.epsilon else 1e-2)
    t_lvl = path.first_time(lambda x: pr.value(x) <= level)
    t_end = path.t_end
    if t_lvl is None:
        t_lvl = 0.5 * t_end
    # keep T strictly inside one segment; a path may reach a boundary target
    # in finite time through a final capture
    cuts = [0.0] + [e.time for e in path.events] + [t_end]
    margin = 1e-6 * (1.0 + t_end)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if lo <= t_lvl <= hi and hi - lo > 0:
            if t_lvl - lo < margin or hi - t_lvl < margin:
                return lo + 0.5 * (hi - lo)
            return t_lvl
    return 0.5 * t_end


def _drop_flow_direction(pr, x, W):
    G = modified_gradient(pr, x).vector
    nrm = np.linalg.norm(G)
    if nrm == 0:
        raise TransversalityError(f"frame transport reached a stationary point at {x.tolist()}")
    gh = G / nrm
    return W - np.outer(gh, gh @ W)


def _transport(pr, path: FlowPath, q0, T: float, W, growth: float = 1e2,
               max_pieces: int = 400):
    """Push the frame ``W`` from ``q0`` to time ``T`` modulo the flow direction.

    The time interval is cut into pieces over which the finite-difference
    Jacobian grows at most ``growth``; after each piece the frame is
    re-orthonormalized with an orientation-preserving QR step. Returns the
    frame at time ``T`` (G-component removed) and the end point.
    """
    dom = pr.domain
    h = 1e-6 * max(1.0, dom.diameter)
    ev_times = [e.time for e in path.events]
    t, x = 0.0, np.asarray(q0, dtype=float)
    W = _orthonormal(_drop_flow_direction(pr, x, W))
    dt = T
    dt_min = 1e-9 * (1.0 + T)
    for _ in range(max_pieces):
        if T - t <= dt_min:
            break
        dt = min(2 * dt, T - t)
        while True:
            t1 = t + dt
            gap = 1e-6 * (1.0 + T)
            near = [te for te in ev_times if abs(te - t1) < gap]
            if near and t1 < T:
                t1 = near[0] - gap if near[0] - gap > t + dt_min else near[0] + gap
                t1 = min(t1, T)
            try:
                J = flow_jacobian(pr, x, t1 - t, h=h, directions=W)
            except FlowError:
                J = None
            if J is None or np.max(np.linalg.norm(J, axis=0)) > growth:
                if dt <= dt_min:
                    raise TransversalityError(
                        f"frame transport failed at t={t:.6g}, x={x.tolist()}")
                dt /= 4
                continue
            break
        x = integrate(pr, x, t_max=t1 - t).end
        t = t1
        W = _orthonormal(_drop_flow_direction(pr, x, J))
    else:
        raise TransversalityError("frame transport needed too many pieces")
    return W, x


def _orthonormal(W):
    """Orientation-preserving orthonormalization of the columns of ``W``."""
    if W.shape[1] == 0:
        return W
    Q, R = np.linalg.qr(W)
    d = np.sign(np.diag(R))
    if np.any(d == 0):
        raise TransversalityError("transported frame collapsed (rank deficient)")
    return Q * d


def trajectory_sign(pr, tau: Trajectory, src: CriticalPoint, tgt: CriticalPoint,
                    eps: float | None = None) -> int:
    """+1 or -1 from the orientation comparison at a crossing point near ``tgt``."""
    a = tau.param
    E_j = src.E_minus
    q1 = tau.seed
    G1 = modified_gradient(pr, q1).vector
    gc = E_j.T @ pr.metric.matrix @ G1
    if gc @ a <= 0:
        raise TransversalityError(
            f"flow at seed {q1.tolist()} does not leave the unstable sphere outward")
    C = _sphere_tangents(a)
    sigma_u = int(np.sign(np.linalg.det(np.column_stack([C, gc]))))
    orient = src.orientation * tgt.orientation
    lam_i = tgt.index
    if lam_i == 0:
        tau.det = float(sigma_u)
        return sigma_u * orient
    W = E_j @ C
    T = _crossing_time(pr, tgt, tau.path)
    U, _ = _transport(pr, tau.path, q1, T, W)
    V = np.hstack([tgt.E_minus, tgt.E_plus])
    coords = np.linalg.solve(V, U)[:lam_i, :]
    det = float(np.linalg.det(coords))
    scale = float(np.prod(np.linalg.norm(U, axis=0)))
    if abs(det) <= 1e-8 * max(scale, 1e-300):
        raise TransversalityError(
            f"transported unstable frame is rank deficient at the crossing point "
            f"(cond = {np.linalg.cond(coords):.3g})")
    tau.det = det
    return sigma_u * int(np.sign(det)) * orient


def degree(pr, src: CriticalPoint, tgt: CriticalPoint, cps: list[CriticalPoint],
           m: int | None = None, eps: float | None = None) -> int:
    """Sum of trajectory signs from ``src`` to ``tgt`` (0 if none)."""
    trajs = connecting_trajectories(pr, src, tgt, cps, m=m, eps=eps)
    total = 0
    for tau in trajs:
        tau.sign = trajectory_sign(pr, tau, src, tgt)
        total += tau.sign
    return total


def build_complex(pr, search: CriticalSearch | None = None, m: int | None = None,
                  eps_scale: float = 1.0, orientations: dict[int, int] | None = None
                  ) -> MorseComplex:
    """Assemble generators and boundary matrices from trajectory degrees.

    ``eps_scale`` multiplies every unstable-sphere radius; ``orientations``
    maps critical point ids to +-1 to flip chosen unstable orientations.
    """
    if search is None:
        search = find_critical_points(pr)
    cps = search.points
    if orientations:
        cps = [cp.flipped() if orientations.get(cp.id, 1) < 0 else cp for cp in cps]
    ess = [cp for cp in cps if cp.essential]
    by_id = {cp.id: cp for cp in ess}
    n = pr.n
    gens = {k: [cp.id for cp in ess if cp.index == k] for k in range(n + 1)}
    bnd = {}
    trajs = []
    for k in range(1, n + 1):
        D = np.zeros((len(gens[k - 1]), len(gens[k])), dtype=object)
        for col, j in enumerate(gens[k]):
            src = by_id[j]
            eps = src.epsilon * eps_scale
            shooter = _Shooter(pr, src, ess, eps)
            for row, i in enumerate(gens[k - 1]):
                tgt = by_id[i]
                found = connecting_trajectories(pr, src, tgt, cps, m=m, eps=eps, shooter=shooter)
                total = 0
                for tau in found:
                    tau.sign = trajectory_sign(pr, tau, src, tgt)
                    total += tau.sign
                D[row, col] = total
                trajs += found
        bnd[k] = D
    return MorseComplex(gens, bnd, trajs)
