"""Integer homology of a finite chain complex via Smith normal form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import Circle, Domain

__all__ = [
    "MorseComplex", "HomologyResult", "ChainConditionError", "smith_normal_form",
    "integer_det", "verify_chain", "homology", "expected_homology",
    "morse_inequalities",
]


class ChainConditionError(ValueError):
    """Boundary maps do not compose to zero."""


def _as_int_rows(A) -> list[list[int]]:
    A = np.asarray(A, dtype=object)
    if A.ndim != 2:
        raise ValueError("expected a 2-d integer matrix")
    return [[int(v) for v in row] for row in A]


def smith_normal_form(A):
    """Unimodular ``U, V`` and diagonal ``S`` with ``U @ A @ V == S``.

    Diagonal entries are non-negative and each divides the next. Arithmetic
    is in Python integers, so there is no overflow. Matrices are returned as
    ``dtype=object`` arrays.
    """
    S = _as_int_rows(A)
    m = len(S)
    n = len(S[0]) if m else np.asarray(A).shape[1]
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap_rows(i, j):
        S[i], S[j] = S[j], S[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for row in S:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def add_row(dst, src, q):  # row_dst += q * row_src
        S[dst] = [a + q * b for a, b in zip(S[dst], S[src])]
        U[dst] = [a + q * b for a, b in zip(U[dst], U[src])]

    def add_col(dst, src, q):
        for row in S:
            row[dst] += q * row[src]
        for row in V:
            row[dst] += q * row[src]

    for t in range(min(m, n)):
        piv = None
        for i in range(t, m):
            for j in range(t, n):
                if S[i][j] and (piv is None or abs(S[i][j]) < abs(S[piv[0]][piv[1]])):
                    piv = (i, j)
        if piv is None:
            break
        swap_rows(t, piv[0])
        swap_cols(t, piv[1])
        while True:
            dirty = False
            for i in range(t + 1, m):
                if S[i][t]:
                    add_row(i, t, -(S[i][t] // S[t][t]))
                    if S[i][t]:
                        dirty = True
            for j in range(t + 1, n):
                if S[t][j]:
                    add_col(j, t, -(S[t][j] // S[t][t]))
                    if S[t][j]:
                        dirty = True
            if dirty:
                # move the smallest remainder in row/column t onto the pivot
                best = (abs(S[t][t]), "p", t)
                for i in range(t + 1, m):
                    if S[i][t] and abs(S[i][t]) < best[0]:
                        best = (abs(S[i][t]), "r", i)
                for j in range(t + 1, n):
                    if S[t][j] and abs(S[t][j]) < best[0]:
                        best = (abs(S[t][j]), "c", j)
                if best[1] == "r":
                    swap_rows(t, best[2])
                elif best[1] == "c":
                    swap_cols(t, best[2])
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if S[i][j] % S[t][t]), None)
            if bad is None:
                break
            add_row(t, bad[0], 1)
        if S[t][t] < 0:
            S[t] = [-v for v in S[t]]
            U[t] = [-v for v in U[t]]
    mk = lambda rows, r, c: np.array(rows, dtype=object).reshape(r, c)
    return mk(U, m, m), mk(S, m, n), mk(V, n, n)


def integer_det(M) -> int:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    A = _as_int_rows(M) if np.asarray(M).size else []
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            sw = next((i for i in range(k + 1, n) if A[i][k]), None)
            if sw is None:
                return 0
            A[k], A[sw] = A[sw], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


@dataclass
class MorseComplex:
    """Generators per index and integer boundary matrices.

    ``boundaries[k]`` has shape ``(len(generators[k-1]), len(generators[k]))``
    for ``k >= 1``; the map out of degree 0 is zero.
    """

    generators: dict[int, list[int]]
    boundaries: dict[int, np.ndarray]
    trajectories: list = field(default_factory=list)

    @property
    def top(self) -> int:
        return max(self.generators) if self.generators else 0

    def counts(self) -> list[int]:
        return [len(self.generators.get(k, [])) for k in range(self.top + 1)]

    def boundary(self, k: int) -> np.ndarray:
        rows = len(self.generators.get(k - 1, []))
        cols = len(self.generators.get(k, []))
        if k in self.boundaries:
            return np.asarray(self.boundaries[k], dtype=object).reshape(rows, cols)
        return np.zeros((rows, cols), dtype=object)


@dataclass
class HomologyResult:
    betti: list[int]
    torsion: list[list[int]]


def verify_chain(mc: MorseComplex) -> bool:
    """Exact check that consecutive boundary maps compose to zero."""
    for k in range(1, mc.top):
        prod = mc.boundary(k).dot(mc.boundary(k + 1))
        if any(int(v) != 0 for v in np.asarray(prod).ravel()):
            return False
    return True


def _invariants(M) -> list[int]:
    M = np.asarray(M, dtype=object)
    if M.size == 0:
        return []
    _, S, _ = smith_normal_form(M)
    return [int(S[i, i]) for i in range(min(S.shape)) if S[i, i] != 0]


def homology(mc: MorseComplex) -> HomologyResult:
    """Integer homology ``ker d_k / im d_(k+1)``: Betti numbers and torsion."""
    if not verify_chain(mc):
        raise ChainConditionError("boundary maps do not satisfy d o d = 0")
    top = mc.top
    inv = {k: _invariants(mc.boundary(k)) for k in range(1, top + 2)}
    counts = mc.counts() + [0]
    betti, torsion = [], []
    for k in range(top + 1):
        rk_k = len(inv.get(k, [])) if k >= 1 else 0
        rk_next = len(inv.get(k + 1, []))
        betti.append(counts[k] - rk_k - rk_next)
        torsion.append([d for d in inv.get(k + 1, []) if d > 1])
    return HomologyResult(betti, torsion)


def expected_homology(d: Domain) -> HomologyResult:
    """Homology of the domain itself (Kunneth over factors; polytopes are
    contractible). Padded to length ``n + 1``."""
    n = d.n
    poly = [1]
    if d.kind == "product":
        for fac in d.factors:
            if isinstance(fac, Circle):
                poly = list(np.convolve(poly, [1, 1]))
    betti = [int(v) for v in poly] + [0] * (n + 1 - len(poly))
    return HomologyResult(betti, [[] for _ in range(n + 1)])


def morse_inequalities(counts, betti) -> bool:
    """Weak Morse inequalities plus equality of Euler characteristics."""
    L = max(len(counts), len(betti))
    c = list(counts) + [0] * (L - len(counts))
    b = list(betti) + [0] * (L - len(betti))
    if any(ck < bk for ck, bk in zip(c, b)):
        return False
    return sum((-1) ** k * v for k, v in enumerate(c)) == sum((-1) ** k * v for k, v in enumerate(b))
