"""Exact normalizing constant and steady-state probabilities.

The constant is split as a finite sum over c = m . P_{N-1}^notmax of two
independent sums: one over the lower layers (X places) and one over the
top of layer N-1 plus layer N (Y places).  Both are computed by memoized
recursions over exact rationals.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .bags import Pi3Structure
from .ergodicity import family_F
from .netcore import NetError
from .qualitative import _require_live, as_counts, invariant_system, is_reachable
from .stochastic import ProductForm, weight


class NotErgodic(NetError):
    """The product-form sum diverges."""


class MonomialMismatch(AssertionError):
    """Two values with different symbolic parts were added."""


def _sorted_by_pot(s: Pi3Structure, places) -> tuple[str, ...]:
    order = {p: k for k, p in enumerate(s.net.places)}
    return tuple(sorted(places, key=lambda p: (s.pot[p], order[p])))


@dataclass(frozen=True)
class XYSplit:
    X: tuple[str, ...]
    Y: tuple[str, ...]
    c_max: int  # |P| * W * |m0|
    top: tuple[str, ...]  # layer-N places sorted by potential (cin decreasing)
    t: int  # 1-based: cin > 0 on 1..t, = 0 on t+1..u-1, < 0 on u..b
    u: int
    delta: dict  # place -> max(1, |cin|)


def split_xy(s: Pi3Structure, m0=None) -> XYSplit:
    X: list[str] = []
    for i in range(1, s.N - 1):
        X.extend(s.P(i))
    if s.N >= 2:
        X.extend(s.pnegmax(s.N - 1))
    xs = set(X)
    Y = tuple(p for p in s.net.places if p not in xs)
    X = tuple(p for p in s.net.places if p in xs)
    top = _sorted_by_pot(s, s.P(s.N))
    t = sum(1 for p in top if s.cin[p] > 0)
    u = t + 1 + sum(1 for p in top if s.cin[p] == 0)
    delta = {p: max(1, abs(s.cin[p])) for p in top}
    norm = sum(as_counts(s, m0).values()) if m0 is not None else 0
    c_max = len(s.net.places) * s.net.max_weight * norm
    return XYSplit(X, Y, c_max, top, t, u, delta)


def _h(mus, total: int) -> Fraction:
    """Complete homogeneous sum: weights of all ways to put ``total`` tokens on places with these mus."""
    if total < 0:
        return Fraction(0)
    row = [Fraction(1)] + [Fraction(0)] * total
    for mu in mus:
        for k in range(1, total + 1):
            row[k] += mu * row[k - 1]
    return row[total] if mus else Fraction(int(total == 0))


class _RecursionLimit:
    def __init__(self, depth: int):
        self.depth = depth

    def __enter__(self):
        self.old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(self.old, self.depth))

    def __exit__(self, *exc):
        sys.setrecursionlimit(self.old)


# --- lower layers -----------------------------------------------------------

class _SumC:
    """Sums over classes of X-markings; S(i, j, k, c, c') as in the layer recursion."""

    def __init__(self, s: Pi3Structure, pf: ProductForm, consts: tuple[int, ...]):
        self.s = s
        self.mu = pf.mu
        self.consts = consts
        self.layer = {}
        for i in range(1, s.N):
            places = s.P(i) if i < s.N - 1 else s.pnegmax(i)
            self.layer[i] = _sorted_by_pot(s, places)
        self.S = lru_cache(maxsize=None)(self._S)

    def C(self, i: int):
        # the layer below layer 1 imposes nothing: treat its budget as unbounded
        return math.inf if i <= 0 else self.consts[i - 1]

    def _S(self, i: int, j: int, k: int, c: int, cp) -> Fraction:
        s = self.s
        L = self.layer[i]
        kappa = len(L)
        pj, pk = L[j - 1], L[k - 1]
        if c < 0 or cp < s.pot[pj]:
            return Fraction(0)
        if (c == 0 and j < kappa) or (cp < s.POT[i] and c > 0):
            return Fraction(0)
        mu_k = self.mu[pk]
        cin_k = s.cin[pk]
        if j < k:
            return self.S(i, j, k - 1, c, cp) + mu_k * self.S(i, j, k, c - 1, cp - cin_k)
        one = int(j < kappa)
        if c > one:
            return mu_k * self.S(i, j, k, c - 1, cp - cin_k)
        if i == 1:
            return mu_k ** c
        if c == 1:  # j = k < kappa
            return mu_k * self.below(i, cp - cin_k)
        return self.below(i, cp)  # j = k = kappa, c = 0

    def below(self, i: int, tokens) -> Fraction:
        kl = len(self.layer[i - 1])
        return sum((self.S(i - 1, jj, kl, tokens, self.C(i - 2)) for jj in range(1, kl + 1)), Fraction(0))

    def top(self, c: int) -> Fraction:
        s = self.s
        if s.N == 1:
            return Fraction(int(c == 0))
        kappa = len(self.layer[s.N - 1])
        if kappa == 0:
            if c != 0:
                return Fraction(0)
            if s.N == 2:
                return Fraction(1)
            kl = len(self.layer[s.N - 2])
            return sum((self.S(s.N - 2, jj, kl, self.C(s.N - 2), self.C(s.N - 3))
                        for jj in range(1, kl + 1)), Fraction(0))
        return sum((self.S(s.N - 1, j, kappa, c, self.C(s.N - 2)) for j in range(1, kappa + 1)),
                   Fraction(0))


def sum_C(s: Pi3Structure, pf: ProductForm, m0, c: int) -> Fraction:
    """Sum of v-hat over the X-classes with c tokens on P_{N-1}^notmax."""
    _require_live(s, m0)
    split = split_xy(s, m0)
    if c < 0 or c > split.c_max:
        return Fraction(0)
    consts = invariant_system(s, m0).constants
    with _RecursionLimit(10_000 + 50 * (sum(consts) + len(s.net.places))):
        return _SumC(s, pf, consts).top(c)


# --- symbolic values for the open top layer ----------------------------------

class MonomialValue:
    """``coeff * prod(mu_p ** e_p)`` with every exponent e_p in [0, 1).

    Integer parts of exponents are folded into the rational coefficient, so
    two values are summable exactly when their fractional parts agree.  A
    zero coefficient acts as a neutral element for addition.
    """

    __slots__ = ("coeff", "mono", "mu")

    def __init__(self, coeff, mono=(), mu=None):
        self.coeff = Fraction(coeff)
        self.mu = mu
        mono = dict(mono)
        for p in list(mono):
            e = Fraction(mono[p])
            whole = math.floor(e)
            if whole:
                self.coeff *= Fraction(mu[p]) ** whole
                e -= whole
            if e:
                mono[p] = e
            else:
                del mono[p]
        self.mono = tuple(sorted(mono.items()))

    @classmethod
    def power(cls, mu, place: str, exponent: Fraction) -> "MonomialValue":
        return cls(1, {place: Fraction(exponent)}, mu)

    def __add__(self, other: "MonomialValue") -> "MonomialValue":
        if other.coeff == 0:
            return self
        if self.coeff == 0:
            return other
        if self.mono != other.mono:
            raise MonomialMismatch(f"cannot add {self.mono} and {other.mono}")
        return MonomialValue(self.coeff + other.coeff, self.mono, self.mu)

    def __neg__(self) -> "MonomialValue":
        return MonomialValue(-self.coeff, self.mono, self.mu)

    def __sub__(self, other: "MonomialValue") -> "MonomialValue":
        return self + (-other)

    def __mul__(self, other) -> "MonomialValue":
        if isinstance(other, MonomialValue):
            mono = dict(self.mono)
            for p, e in other.mono:
                mono[p] = mono.get(p, 0) + e
            return MonomialValue(self.coeff * other.coeff, mono, self.mu or other.mu)
        return MonomialValue(self.coeff * Fraction(other), self.mono, self.mu)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "MonomialValue":
        return MonomialValue(self.coeff / Fraction(other), self.mono, self.mu)

    def rational(self) -> Fraction:
        if self.coeff != 0 and self.mono:
            raise MonomialMismatch(f"value still carries fractional powers {self.mono}")
        return self.coeff

    def __repr__(self) -> str:
        return f"MonomialValue({self.coeff}, {dict(self.mono)})"


class _SumDOpen:
    """Y-side sums for open nets.

    For a fixed first marked layer-N place p_s, one token is set aside on
    p_s and the remaining layer-N tokens are rescaled by Delta_i, so every
    layer-N coordinate lives in Delta_i * N.  The last P_{N-1}^max place
    x_a is eliminated through the layer-(N-1) invariant.  What is left is a
    sum of a product weight over integer points of

        x_1 + .. + x_{a-1} + P - Q <= A,    P - Q <= B

    where P (resp. Q) sums the rescaled positive-cin (negative-cin)
    coordinates.  Variables are removed one at a time from two stacks: the
    positive side (x_1..x_{a-1} under y_t..y_gamma) and the negative side
    (y_nlo..y_beta).  A pair of opposite-sign variables is removed jointly by
    splitting on which of the two is smaller, which turns the unbounded
    diagonal into a geometric series.  ``w`` is a residue (index, lambda)
    carried by a stack top: that coordinate must be congruent to lambda
    modulo its Delta.
    """

    def __init__(self, s: Pi3Structure, pf: ProductForm, split: XYSplit):
        self.s = s
        self.mu = pf.mu
        self.split = split
        xs = s.pmax(s.N - 1)
        self.xs = xs[:-1]
        self.xa = xs[-1]
        self.mu_xa = pf.mu[self.xa]
        self.top = split.top
        self.b = len(self.top)
        self.t = split.t
        self.u = split.u
        self.delta = [split.delta[p] for p in self.top]
        self.U = lru_cache(maxsize=None)(self._U)
        self.nlo = self.u

    # weights of one unit of each rescaled coordinate
    def nu_y(self, j: int, amount: int) -> MonomialValue:
        p = self.top[j - 1]
        d = self.delta[j - 1]
        cin = self.s.cin[p]
        sign = 1 if cin > 0 else -1
        return MonomialValue(self.mu_xa ** (-sign * amount), {p: Fraction(amount, d)}, self.mu)

    def nu_x(self, i: int, amount: int) -> Fraction:
        return (self.mu[self.xs[i - 1]] / self.mu_xa) ** amount

    def one(self) -> MonomialValue:
        return MonomialValue(1, (), self.mu)

    def zero(self) -> MonomialValue:
        return MonomialValue(0, (), self.mu)

    def _denominator(self, value: Fraction) -> Fraction:
        d = 1 - value
        if d <= 0:
            raise NotErgodic("divergent geometric series in the top-layer sum")
        return d

    def _U(self, A: int, B: int, wj: int, lam: int, alpha: int, gamma: int, beta: int) -> MonomialValue:
        t, nlo = self.t, self.nlo
        pos = gamma <= t
        s2 = pos or alpha >= 1
        s1 = beta >= nlo
        if not s1 and not s2:
            ok = A >= 0 and B >= 0 and lam == 0
            return self.one() if ok else self.zero()
        if not s1:
            if A < 0 or B < 0:
                return self.zero()
            if pos:
                j = gamma
                d = self.delta[j - 1]
                lj = lam if wj == j else 0
                out = self.U(A, B, 0, 0, alpha, gamma + 1, beta) if lj == 0 else self.zero()
                rest = self.U(A - 1, B - 1, j, (lj - 1) % d, alpha, gamma, beta)
                return out + self.nu_y(j, 1) * rest
            return self.U(A, B, wj, lam, alpha - 1, gamma, beta) + \
                self.nu_x(alpha, 1) * self.U(A - 1, B, wj, lam, alpha, gamma, beta)
        if not s2:
            j = beta
            d = self.delta[j - 1]
            lj = lam if wj == j else 0
            if A >= 0 and B >= 0:
                geo = self._denominator(self.nu_y(j, d).rational())
                return self.nu_y(j, lj) * self.U(0, 0, 0, 0, alpha, gamma, beta - 1) / geo
            out = self.U(A, B, 0, 0, alpha, gamma, beta - 1) if lj == 0 else self.zero()
            rest = self.U(min(A + 1, 0), min(B + 1, 0), j, (lj - 1) % d, alpha, gamma, beta)
            return out + self.nu_y(j, 1) * rest
        if pos:
            g, h = gamma, beta
            dg, dh = self.delta[g - 1], self.delta[h - 1]
            lg = lam if wj == g else 0
            lh = lam if wj == h else 0
            den = self._denominator((self.nu_y(g, dg * dh) * self.nu_y(h, dg * dh)).rational())
            total = self.zero()
            for k in range(dh):
                m = lg + k * dg
                diag = self.nu_y(g, m) * self.nu_y(h, m)
                total = total + diag * self.U(A, B, h, (lh - m) % dh, alpha, gamma + 1, beta)
            for k in range(dg):
                m = lh + k * dh
                diag = self.nu_y(g, m) * self.nu_y(h, m)
                r = (lg - m) % dg
                term = self.U(A, B, g, r, alpha, gamma, beta - 1)
                if r == 0:
                    term = term - self.U(A, B, 0, 0, alpha, gamma + 1, beta - 1)
                total = total + diag * term
            return total / den
        h = beta
        dh = self.delta[h - 1]
        lh = lam if wj == h else 0
        if B < 0:
            out = self.U(A, B, 0, 0, alpha, gamma, beta - 1) if lh == 0 else self.zero()
            rest = self.U(A + 1, B + 1, h, (lh - 1) % dh, alpha, gamma, beta)
            return out + self.nu_y(h, 1) * rest
        den = self._denominator((self.nu_y(h, dh) * self.nu_x(alpha, dh)).rational())
        total = self.zero()
        for k in range(dh):
            diag = self.nu_y(h, k) * self.nu_x(alpha, k)
            total = total + diag * self.U(A, 0, h, (lh - k) % dh, alpha - 1, gamma, beta)
        diag = self.nu_y(h, lh) * self.nu_x(alpha, lh)
        total = total + diag * (self.U(A, 0, 0, 0, alpha, gamma, beta - 1)
                                - self.U(A, 0, 0, 0, alpha - 1, gamma, beta - 1))
        return total / den

    def class_sum(self, c: int, C: int) -> Fraction:
        """Sum over all Y-classes with c tokens below, given the layer-(N-1) constant C."""
        s = self.s
        pot_ext = s.pot[s.p_ext]
        xs_all = [self.mu[p] for p in s.pmax(s.N - 1)]
        total = Fraction(0)
        if C - c >= 0 and C >= pot_ext:  # no token on layer N
            total += _h(xs_all, C - c)
        for si in range(1, self.b + 1):
            p = self.top[si - 1]
            cin = s.cin[p]
            pot_s = s.pot[p] if cin > 0 else pot_ext
            A = C - cin - c
            B = C - cin - pot_s
            zero_factor = Fraction(1)
            for j in range(max(si, self.t + 1), self.u):
                zero_factor /= self._denominator(self.mu[self.top[j - 1]])
            self.nlo = max(self.u, si)
            self.U.cache_clear()
            gamma = si if si <= self.t else self.t + 1
            val = self.U(A, B, 0, 0, len(self.xs), gamma, self.b)
            pref = self.mu[p] * self.mu_xa ** A * zero_factor
            total += pref * val.rational()
        return total


def _sum_D_closed(s: Pi3Structure, pf: ProductForm, consts, c: int) -> Fraction:
    mu = pf.mu
    if s.N == 1:
        return _h([mu[p] for p in s.P(1)], consts[0])
    CN, C = consts[s.N - 1], consts[s.N - 2]
    # states: (tokens placed on P_N, cin-weighted count, min pot of marked places)
    states = {(0, 0, s.POT[s.N]): Fraction(1)}
    for p in s.P(s.N):
        nxt: dict = {}
        for (n, w, th), val in states.items():
            term = Fraction(1)
            for k in range(0, CN - n + 1):
                key = (n + k, w + k * s.cin[p], min(th, s.pot[p]) if k else th)
                nxt[key] = nxt.get(key, Fraction(0)) + val * term
                term *= mu[p]
        states = nxt
    xs = [mu[p] for p in s.pmax(s.N - 1)]
    total = Fraction(0)
    for (n, w, th), val in states.items():
        if n != CN:
            continue
        T = C - c - w
        if T < 0 or c + T < th:
            continue
        total += val * _h(xs, T)
    return total


def sum_D_open(s: Pi3Structure, pf: ProductForm, m0, c: int) -> Fraction:
    if not s.is_open:
        raise NetError("sum_D_open needs an open net")
    _require_live(s, m0)
    if s.N == 1:
        return _sum_D_open_one_layer(s, pf, c)
    split = split_xy(s, m0)
    consts = invariant_system(s, m0).constants
    with _RecursionLimit(10_000 + 50 * (sum(abs(k) for k in consts) + len(s.net.places))):
        return _SumDOpen(s, pf, split).class_sum(c, consts[s.N - 2])


def _sum_D_open_one_layer(s: Pi3Structure, pf: ProductForm, c: int) -> Fraction:
    if c != 0:
        return Fraction(0)
    out = Fraction(1)
    for p in s.P(1):
        d = 1 - pf.mu[p]
        if d <= 0:
            raise NotErgodic(f"divergent geometric series at {p}")
        out /= d
    return out


def sum_D_closed(s: Pi3Structure, pf: ProductForm, m0, c: int) -> Fraction:
    if s.is_open:
        raise NetError("sum_D_closed needs a closed net")
    _require_live(s, m0)
    return _sum_D_closed(s, pf, invariant_system(s, m0).constants, c)


def _c_range(s: Pi3Structure, split: XYSplit, consts) -> range:
    hi = split.c_max
    if s.N >= 3:
        hi = min(hi, consts[s.N - 3])  # c <= C_{N-2}
    elif s.N <= 2:
        hi = 0  # P_{N-1}^notmax is empty
    return range(0, hi + 1)


def normalizing_constant(s: Pi3Structure, pf: ProductForm, m0) -> Fraction:
    """Sum of v-hat over the reachability set of a live (and, if open, ergodic) marking."""
    _require_live(s, m0)
    if s.is_open:
        bad = [g for g in family_F(s) if weight(pf, g.vector) >= 1]
        if bad:
            raise NotErgodic("not ergodic: " + ", ".join(g.kind + ":" + "+".join(g.places) for g in bad))
    split = split_xy(s, m0)
    consts = invariant_system(s, m0).constants
    if s.is_open and s.N == 1:
        return _sum_D_open_one_layer(s, pf, 0)
    depth = 10_000 + 50 * (sum(abs(k) for k in consts) + len(s.net.places))
    with _RecursionLimit(depth):
        lower = _SumC(s, pf, consts)
        upper = _SumDOpen(s, pf, split) if s.is_open else None
        total = Fraction(0)
        for c in _c_range(s, split, consts):
            left = lower.top(c)
            if left == 0:
                continue
            if upper is not None:
                right = upper.class_sum(c, consts[s.N - 2])
            else:
                right = _sum_D_closed(s, pf, consts, c)
            total += left * right
    return total


def steady_prob(s: Pi3Structure, pf: ProductForm, m0, m, constant: Fraction | None = None) -> Fraction:
    """Stationary probability of a reachable marking m."""
    if not is_reachable(s, m0, m):
        raise NetError("marking is not reachable from m0")
    if constant is None:
        constant = normalizing_constant(s, pf, m0)
    return weight(pf, as_counts(s, m)) / constant
