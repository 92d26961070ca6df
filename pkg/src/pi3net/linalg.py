"""Exact linear solvers over the rationals.

``solve_dense`` uses fraction-free (Bareiss) elimination on an integer-scaled
augmented matrix; ``solve_sparse`` factors dict-of-rows matrices modulo a
prime and lifts the solution p-adically, which avoids the coefficient growth
of elimination over ``Fraction`` on large Markov generators.
"""

from __future__ import annotations

import heapq
from fractions import Fraction
from math import isqrt, lcm
from typing import Sequence


class SingularSystem(ArithmeticError):
    pass


def _integer_row(row: Sequence[Fraction]) -> list[int]:
    den = lcm(*(Fraction(v).denominator for v in row)) if row else 1
    return [int(Fraction(v) * den) for v in row]


def solve_dense(a: Sequence[Sequence], b: Sequence) -> list[Fraction] | None:
    """Return one solution x of ``a x = b`` (free variables set to 0), or None.

    Works for any shape; ``None`` means the system is inconsistent.
    """
    n_rows = len(a)
    n_cols = len(a[0]) if n_rows else 0
    m = [_integer_row(list(a[i]) + [b[i]]) for i in range(n_rows)]
    pivots: list[int] = []
    r = 0
    prev = 1
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        for i in range(n_rows):
            if i == r:
                continue
            if i > r:
                # Bareiss update keeps entries integral and bounded
                m[i] = [(m[r][c] * m[i][k] - m[i][c] * m[r][k]) // prev for k in range(n_cols + 1)]
        prev = m[r][c]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    for i in range(r, n_rows):
        if m[i][n_cols] != 0:
            return None
    x = [Fraction(0)] * n_cols
    for i in reversed(range(r)):
        c = pivots[i]
        acc = Fraction(m[i][n_cols])
        for k in range(c + 1, n_cols):
            if m[i][k]:
                acc -= m[i][k] * x[k]
        x[c] = acc / m[i][c]
    return x


# Large primes for the modular factorization; a second one is tried if the
# first happens to divide a pivot.
_PRIMES = ((1 << 61) - 1, (1 << 62) - 57, (1 << 63) - 25, (1 << 64) - 59)


class _ModularLU:
    """Sparse LU factorization modulo a prime, recorded for repeated solves.

    Pivots follow a minimum-row-length order (a cheap Markowitz variant)
    kept in a lazy heap, which holds fill-in down on Markov generators.
    """

    def __init__(self, rows: list[dict[int, int]], n: int, prime: int):
        P = self.P = prime
        rows = [{c: v % P for c, v in r.items() if v % P} for r in rows]
        col_rows: dict[int, set[int]] = {}
        for i, r in enumerate(rows):
            for c in r:
                col_rows.setdefault(c, set()).add(i)
        heap = [(len(r), i) for i, r in enumerate(rows)]
        heapq.heapify(heap)
        done = [False] * len(rows)
        self.ops: list[tuple[int, int, int]] = []  # (pivot row, target row, factor)
        self.pivots: list[tuple[int, int, int]] = []  # (row, column, inverse pivot)
        self.rows = rows
        for _ in range(n):
            while heap:
                length, best = heapq.heappop(heap)
                if not done[best] and length == len(rows[best]):
                    break
            else:
                raise SingularSystem("matrix is singular")
            r = rows[best]
            if not r:
                raise SingularSystem("matrix is singular modulo the working prime")
            c = min(r, key=lambda k: len(col_rows[k]))
            inv = pow(r[c], -1, P)
            done[best] = True
            self.pivots.append((best, c, inv))
            for i in col_rows[c]:
                if done[i]:
                    continue
                ri = rows[i]
                f = ri[c] * inv % P
                self.ops.append((best, i, f))
                for k, v in r.items():
                    nv = (ri.get(k, 0) - f * v) % P
                    if nv:
                        if k not in ri:
                            col_rows[k].add(i)
                        ri[k] = nv
                    elif k in ri:
                        del ri[k]
                        if k != c:
                            col_rows[k].discard(i)
                heapq.heappush(heap, (len(ri), i))
            for k in r:
                if k != c:
                    col_rows[k].discard(best)
            col_rows[c] = set()

    def solve(self, rhs: Sequence[int]) -> list[int]:
        P = self.P
        b = [v % P for v in rhs]
        for src, dst, f in self.ops:
            if b[src]:
                b[dst] = (b[dst] - f * b[src]) % P
        x = [0] * len(b)
        for row, c, inv in reversed(self.pivots):
            acc = b[row]
            for k, v in self.rows[row].items():
                if k != c:
                    acc -= v * x[k]
            x[c] = acc * inv % P
        return x


def _reconstruct(u: int, m: int, bound: int) -> Fraction | None:
    """Rational a/b with |a|, b <= bound and a = u b (mod m), if one exists."""
    r0, r1, t0, t1 = m, u % m, 0, 1
    while r1 > bound:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        t0, t1 = t1, t0 - q * t1
    if t1 == 0 or abs(t1) > bound:
        return None
    return Fraction(r1, t1)


def _reconstruct_vector(xs: Sequence[int], m: int) -> list[Fraction] | None:
    bound = isqrt(m // 2)
    den = 1
    out = []
    for u in xs:
        v = u * den % m
        if v <= bound:  # integer multiple of the running denominator
            out.append(Fraction(v, den))
            continue
        if m - v <= bound:
            out.append(Fraction(v - m, den))
            continue
        q = _reconstruct(v, m, bound)
        if q is None:
            return None
        den *= q.denominator
        if den > bound:
            return None
        out.append(q / (den // q.denominator))
    return out


def solve_sparse(rows: list[dict[int, Fraction]], rhs: list[Fraction], n: int) -> list[Fraction]:
    """Solve a square nonsingular sparse system; rows map column -> coefficient.

    Dixon lifting: the integer-scaled system is factored once modulo a large
    prime, the solution is lifted p-adically, and rational reconstruction is
    attempted at doubling precisions; a candidate is accepted only after an
    exact substitution check.
    """
    if len(rows) != n:
        raise ValueError("solve_sparse needs a square system")
    A: list[dict[int, int]] = []
    b: list[int] = []
    for r, v in zip(rows, rhs):
        den = lcm(Fraction(v).denominator, *(Fraction(x).denominator for x in r.values()))
        A.append({c: int(Fraction(x) * den) for c, x in r.items() if x})
        b.append(int(Fraction(v) * den))
    lu = None
    for prime in _PRIMES:
        try:
            lu = _ModularLU(A, n, prime)
            break
        except SingularSystem:
            continue
    if lu is None:
        raise SingularSystem("matrix is singular")
    P = lu.P
    residual = list(b)
    acc = [0] * n
    modulus = 1
    steps = 0
    check_at = 2
    while True:
        y = lu.solve(residual)
        for k, v in enumerate(y):
            if v:
                acc[k] += v * modulus
        for i, r in enumerate(A):
            s = residual[i] - sum(v * y[c] for c, v in r.items())
            residual[i] = s // P  # exact by construction
        modulus *= P
        steps += 1
        if steps < check_at and any(residual):
            continue
        check_at *= 2
        x = _reconstruct_vector(acc, modulus)
        if x is not None and all(sum(v * x[c] for c, v in r.items()) == bi for r, bi in zip(A, b)):
            return x
        if not any(residual):  # the lifted integer vector is exact
            return [Fraction(v) for v in acc]
