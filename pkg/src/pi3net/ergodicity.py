"""Generator family of the reachable lattice, ergodicity test and cover bound."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .bags import Pi3Structure
from .netcore import NetError
from .qualitative import _require_live, as_counts, invariant_system
from .stochastic import ProductForm, weight


@dataclass(frozen=True)
class Generator:
    vector: tuple[int, ...]  # aligned with the analysed net's places
    kind: str  # "zero_cin", "pos_neg" or "interface"
    places: tuple[str, ...]  # the places that define it

    def as_dict(self, places) -> dict[str, int]:
        return {p: k for p, k in zip(places, self.vector) if k}


def family_F(s: Pi3Structure) -> tuple[Generator, ...]:
    """Directions along which the reachability set of a live open net is unbounded."""
    if not s.is_open:
        raise NetError("generator family is defined for open nets only")
    places = s.net.places
    idx = s.net.place_index
    top = s.P(s.N)
    out: list[Generator] = []
    seen: set[tuple[int, ...]] = set()

    def add(vec: dict[str, int], kind: str, names: tuple[str, ...]) -> None:
        v = [0] * len(places)
        for p, k in vec.items():
            v[idx[p]] += k
        key = tuple(v)
        if key not in seen:
            seen.add(key)
            out.append(Generator(key, kind, names))

    for p in top:
        if s.cin[p] == 0:
            add({p: 1}, "zero_cin", (p,))
    for p in top:
        if s.cin[p] > 0:
            for q in top:
                if s.cin[q] < 0:
                    add({q: s.cin[p], p: -s.cin[q]}, "pos_neg", (p, q))
    if s.N >= 2:
        for p in s.pmax(s.N - 1):
            for q in top:
                if s.cin[q] < 0:
                    add({q: 1, p: -s.cin[q]}, "interface", (p, q))
    return tuple(out)


@dataclass(frozen=True)
class ErgodicReport:
    ergodic: bool
    violated: tuple[Generator, ...]
    values: tuple[Fraction, ...]  # v-hat of every generator, in family order


def is_ergodic(pf: ProductForm, s: Pi3Structure, m0=None) -> ErgodicReport:
    """True iff every generator has weight < 1; closed nets are always ergodic."""
    if m0 is not None:
        _require_live(s, m0)
    if not s.is_open:
        return ErgodicReport(True, (), ())
    fam = family_F(s)
    vals = tuple(weight(pf, g.vector) for g in fam)
    bad = tuple(g for g, v in zip(fam, vals) if v >= 1)
    return ErgodicReport(not bad, bad, vals)


@dataclass(frozen=True)
class CoverBound:
    G_bound: int
    E: int
    C_inf: int


def cover_bound(s: Pi3Structure, m0) -> CoverBound:
    """Box size G such that every reachable marking lies in [0, G]^P plus the lattice."""
    consts = invariant_system(s, as_counts(s, m0)).constants
    E = max(s.pot[p] for p in s.net.places)
    c_inf = max(consts[: max(s.N - 2, 0)], default=0)
    return CoverBound((c_inf + E) * (len(s.net.places) + 1), E, c_inf)


def divergence_partial_sums(pf: ProductForm, m0, f, K: int) -> list[Fraction]:
    """Partial sums of v-hat along the ray m0 + k f, k = 0..K."""
    base = weight(pf, m0)
    step = weight(pf, f)
    out = []
    acc = Fraction(0)
    term = base
    for _ in range(K + 1):
        acc += term
        out.append(acc)
        term *= step
    return out
