"""Brute-force validators: reachability search, exact stationary solve,
a certified bracket on the normalizing constant, and stochastic simulation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import networkx as nx
import numpy as np

from .bags import Pi3Structure
from .ergodicity import family_F
from .linalg import solve_sparse
from .netcore import NetError, PetriNet, enabled_indices, fire_index
from .normalizer import NotErgodic
from .qualitative import _require_live, as_counts, invariant_system, is_live
from .stochastic import ProductForm, generator, weight

MAX_DIRECT_STATES = 20_000


@dataclass(frozen=True)
class EnumerationResult:
    markings: frozenset
    frontier_truncated: bool
    cutoff: int
    frontier: frozenset = frozenset()  # reached markings above the cutoff, not expanded


def enumerate_reachable(net: PetriNet, m0: Sequence[int], cutoff: int, limit: int | None = None,
                        stop_on_frontier: bool = False) -> EnumerationResult:
    """Breadth-first search; markings with more than ``cutoff`` tokens are not expanded.

    With ``stop_on_frontier`` the search returns as soon as one marking above
    the cutoff is reached (enough to decide that the cutoff is exceeded).
    """
    m0 = tuple(m0)
    seen = {m0}
    frontier = set()
    queue = deque([m0])
    if sum(m0) > cutoff:
        return EnumerationResult(frozenset(), True, cutoff, frozenset([m0]))
    while queue:
        m = queue.popleft()
        for j in enabled_indices(net, m):
            m2 = fire_index(net, m, j)
            if m2 in seen or m2 in frontier:
                continue
            if sum(m2) > cutoff:
                frontier.add(m2)
                if stop_on_frontier:
                    return EnumerationResult(frozenset(seen), True, cutoff, frozenset(frontier))
                continue
            seen.add(m2)
            if limit is not None and len(seen) > limit:
                raise NetError(f"more than {limit} markings below the cutoff")
            queue.append(m2)
    return EnumerationResult(frozenset(seen), bool(frontier), cutoff, frozenset(frontier))


def stationary_direct(net: PetriNet, rates: Mapping, states) -> dict:
    """Exact stationary distribution of the chain restricted to a firing-closed state set."""
    states = list(states)
    if len(states) > MAX_DIRECT_STATES:
        raise NetError(f"too many states for a direct solve ({len(states)} > {MAX_DIRECT_STATES})")
    gen = generator(net, rates, states)
    if gen.truncated:
        raise NetError("state set is not closed under firing")
    n = len(states)
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    for i, row in enumerate(gen.q):
        g.add_edges_from((i, j) for j in row if j != i)
    if not nx.is_strongly_connected(g):
        raise NetError("chain is reducible on the given states")
    cols: list[dict] = [dict() for _ in range(n)]
    for i, row in enumerate(gen.q):
        for j, v in row.items():
            if v:
                cols[j][i] = v
    # pi Q = 0 column by column, with the last equation replaced by sum(pi) = 1
    cols[-1] = {i: Fraction(1) for i in range(n)}
    rhs = [Fraction(0)] * (n - 1) + [Fraction(1)]
    x = solve_sparse(cols, rhs, n)
    return {m: v for m, v in zip(gen.states, x)}


# --- certified bracket for open nets --------------------------------------------

@dataclass(frozen=True)
class ConstantBracket:
    lower: Fraction
    upper: Fraction
    eps: Fraction
    cutoff: int
    enumerated: int

    @property
    def converged(self) -> bool:
        return self.upper - self.lower <= self.eps

    def contains(self, value: Fraction) -> bool:
        return self.lower <= value <= self.upper


def _compositions(total: int, caps: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """All ways to split ``total`` tokens over len(caps) places, place k holding at most caps[k]."""
    if not caps:
        if total == 0:
            yield ()
        return
    room = sum(caps[1:])
    for v in range(max(0, total - room), min(total, caps[0]) + 1):
        for rest in _compositions(total - v, caps[1:]):
            yield (v,) + rest


class _InvariantPoints:
    """Nonnegative integer points of the invariant equalities of an open net.

    Layer-N coordinates are chosen freely (within explicit caps); every
    lower layer is then a composition of the total its invariant forces.
    """

    def __init__(self, s: Pi3Structure, consts: Sequence[int]):
        self.s = s
        self.consts = consts
        self.places = s.net.places
        self.idx = s.net.place_index

    def points(self, top_caps: Mapping[str, int], norm_cap: int | None, allow) -> Iterator[dict]:
        s = self.s
        top = s.P(s.N)
        big = 10 ** 9

        def fill_top(k: int, m: dict, used: int):
            if k == len(top):
                yield from fill_layer(s.N - 1, m, used)
                return
            p = top[k]
            cap = top_caps[p]
            if norm_cap is not None:
                cap = min(cap, norm_cap - used)
            for v in range(0, cap + 1):
                m[p] = v
                if allow(m, partial=True):
                    yield from fill_top(k + 1, m, used + v)
            m.pop(p, None)

        def fill_layer(i: int, m: dict, used: int):
            if i == 0:
                if allow(m, partial=False):
                    yield dict(m)
                return
            total = self.consts[i - 1] - sum(s.cin[q] * m[q] for q in s.P(i + 1))
            if total < 0:
                return
            if norm_cap is not None and used + total > norm_cap:
                return
            places = s.P(i)
            caps = [self.layer_cap(i, q, m, big) for q in places]
            for comp in _compositions(total, caps):
                m.update(zip(places, comp))
                yield from fill_layer(i - 1, m, used + total)
            for q in places:
                m.pop(q, None)

        yield from fill_top(0, {}, 0)

    def layer_cap(self, i: int, q: str, m: dict, big: int) -> int:
        return big


def _head_series(fvals: Sequence[tuple[int, Fraction]], r: int) -> list[Fraction]:
    """cum[n] = sum over k with sum k_f |f| <= n of prod v(f)^k_f, n = 0..r."""
    coef = [Fraction(0)] * (r + 1)
    if r < 0:
        return []
    coef[0] = Fraction(1)
    for size, val in fvals:
        for n in range(size, r + 1):
            coef[n] += val * coef[n - size]
    out = []
    acc = Fraction(0)
    for c in coef:
        acc += c
        out.append(acc)
    return out


class _Bracket:
    def __init__(self, s: Pi3Structure, pf: ProductForm, m0):
        self.s = s
        self.pf = pf
        self.counts0 = as_counts(s, m0)
        self.consts = invariant_system(s, self.counts0).constants
        self.fam = family_F(s)
        self.fvals = [(sum(g.vector), weight(pf, g.vector)) for g in self.fam]
        if any(v >= 1 for _, v in self.fvals):
            raise NotErgodic("divergent tail: some lattice generator has weight >= 1")
        self.full = Fraction(1)
        for _, v in self.fvals:
            self.full /= 1 - v
        self.places = s.net.places
        self.pts = _InvariantPoints(s, self.consts)
        self.base = self._minimal_points()

    def _dominates(self, m: Mapping[str, int], g) -> bool:
        return all(m.get(p, 0) >= k for p, k in zip(self.places, g.vector) if k)

    def _top_caps(self) -> dict:
        s = self.s
        top = s.P(s.N)
        M = max([abs(s.cin[p]) for p in top] + [1])
        n_neg = sum(1 for p in top if s.cin[p] < 0)
        n_pos = sum(1 for p in top if s.cin[p] > 0)
        c_top = max(self.consts[s.N - 2], 0) if s.N >= 2 else 0
        c_below = max(self.consts[s.N - 3], 0) if s.N >= 3 else 0
        a = len(s.pmax(s.N - 1)) if s.N >= 2 else 0
        pos_cap = max(M, c_top + n_neg * M * M)
        layer_room = a * M + c_below + c_top
        neg_cap = layer_room + n_pos * M * pos_cap
        caps = {}
        for p in top:
            caps[p] = 0 if s.cin[p] == 0 else (pos_cap if s.cin[p] > 0 else neg_cap)
        return caps

    def _minimal_points(self) -> list[tuple[int, Fraction]]:
        """Invariant points dominating no lattice generator: (norm, v-hat) pairs."""
        fam = self.fam

        def allow(m, partial):
            return not any(self._dominates(m, g) for g in fam)

        out = []
        for m in self.pts.points(self._top_caps(), None, allow):
            out.append((sum(m.values()), weight(self.pf, m)))
        return out

    def tail(self, K: int) -> Fraction:
        total = Fraction(0)
        max_r = max((K - n for n, _ in self.base), default=-1)
        cum = _head_series(self.fvals, max_r)
        for n, v in self.base:
            r = K - n
            head = cum[r] if r >= 0 else Fraction(0)
            total += v * (self.full - head)
        return total

    def reachable_sum(self, K: int) -> tuple[Fraction, int]:
        """Sum of v-hat over invariant-and-live markings with at most K tokens."""
        s = self.s
        caps = {p: K for p in s.P(s.N)}

        def allow(m, partial):
            return True

        total = Fraction(0)
        count = 0
        for m in self.pts.points(caps, K, allow):
            if is_live(s, m).live:
                total += weight(self.pf, m)
                count += 1
        return total, count


def constant_bracketed(s: Pi3Structure, pf: ProductForm, m0, eps, start: int | None = None,
                       max_cutoff: int = 400) -> ConstantBracket:
    """Bracket the normalizing constant of a live, ergodic open net to within eps.

    The lower end sums v-hat over markings found by breadth-first search.
    The upper end sums v-hat over all markings with at most K tokens that
    satisfy the reachability characterization, plus a tail bound: every
    invariant marking is a minimal point plus a nonnegative combination of
    the lattice generators, so the markings above K are covered by the
    corresponding geometric tails.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not s.is_open:
        raise NetError("bracketing is for open nets; closed nets are enumerated exactly")
    _require_live(s, m0)
    br = _Bracket(s, pf, m0)
    m0t = tuple(as_counts(s, m0)[p] for p in s.net.places)
    K = start if start is not None else sum(m0t) + 2
    while True:
        res = enumerate_reachable(s.net, m0t, K)
        lower = sum((weight(pf, m) for m in res.markings), Fraction(0))
        upper_in, _ = br.reachable_sum(K)
        upper = upper_in + br.tail(K)
        out = ConstantBracket(lower, upper, eps, K, len(res.markings))
        if out.converged or K >= max_cutoff:
            return out
        K = K + max(2, K // 3)


# --- simulation -------------------------------------------------------------------

@dataclass
class _StateInfo:
    total: float
    cum: np.ndarray
    succ: list


class Deadlock(NetError):
    def __init__(self, marking):
        super().__init__(f"deadlock: no transition enabled at {marking}")
        self.marking = marking


def gillespie(net: PetriNet, rates: Mapping, m0: Sequence[int], steps: int, seed: int) -> dict:
    """Time-weighted occupancy fractions of a simulated trajectory.

    Uses numpy's PCG64 generator; sojourns are drawn by inverse transform
    of uniforms, and the next transition is picked proportionally to its rate.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    rate = [float(Fraction(rates[t])) for t in net.transitions]
    info: dict = {}

    def describe(m):
        js = enabled_indices(net, m)
        if not js:
            raise Deadlock(m)
        r = np.array([rate[j] for j in js])
        cum = np.cumsum(r)
        return _StateInfo(float(cum[-1]), cum, [fire_index(net, m, j) for j in js])

    occ: dict = {}
    m = tuple(m0)
    batch = 65536
    done = 0
    while done < steps:
        n = min(batch, steps - done)
        us = rng.random(n)
        vs = rng.random(n)
        for k in range(n):
            st = info.get(m)
            if st is None:
                st = info[m] = describe(m)
            dt = -math.log1p(-us[k]) / st.total
            occ[m] = occ.get(m, 0.0) + dt
            pick = int(np.searchsorted(st.cum, vs[k] * st.total, side="right"))
            m = st.succ[min(pick, len(st.succ) - 1)]
        done += n
    total = sum(occ.values())
    return {k: v / total for k, v in occ.items()}
