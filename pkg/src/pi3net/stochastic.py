"""Product-form constants and small exact generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .bags import Pi3Structure, build_bag_graph, compute_witnesses_pi3
from .linalg import solve_dense
from .netcore import PetriNet, enabled_indices, fire_index


class StructureBug(AssertionError):
    """An identity that holds by construction failed."""


@dataclass(frozen=True)
class ProductForm:
    places: tuple[str, ...]
    lambda_bag: dict = field(hash=False)
    pr: dict = field(hash=False)
    vis: dict = field(hash=False)
    mu: dict = field(hash=False)  # place -> Fraction

    @property
    def mu_vec(self) -> tuple[Fraction, ...]:
        return tuple(self.mu[p] for p in self.places)


def product_form(net: PetriNet, rates: Mapping[str, Fraction], s: Pi3Structure | None = None,
                 wit: Mapping | None = None) -> ProductForm:
    """Visit ratios, bag rates and the per-place constants mu_p of ``net``.

    ``net`` is the analysed net (open or closed); ``wit`` maps each of its bags
    to a witness.  When omitted, witnesses come from ``s``.
    """
    if wit is None:
        wit = compute_witnesses_pi3(s)
    bg = build_bag_graph(net)
    lam: dict = {b: Fraction(0) for b in bg.bags}
    for t, pr in zip(net.transitions, net.pre):
        lam[pr] += Fraction(rates[t])
    prob = {t: Fraction(rates[t]) / lam[pr] for t, pr in zip(net.transitions, net.pre)}
    vis: dict = {}
    for comp in bg.components:
        pos = {v: k for k, v in enumerate(comp)}
        n = len(comp)
        routing = [[Fraction(0)] * n for _ in range(n)]
        for (a, t, b) in bg.edges:
            if a in pos:
                routing[pos[a]][pos[b]] += prob[t]
        # vis * (R - I) = 0 written column-wise, plus vis[first] = 1
        rows = [[routing[i][j] - (i == j) for i in range(n)] for j in range(n)]
        rows.append([Fraction(int(i == 0)) for i in range(n)])
        x = solve_dense(rows, [0] * n + [1])
        if x is None or any(v <= 0 for v in x):
            raise StructureBug("visit-ratio system has no positive solution")
        for v, val in zip(comp, x):
            vis[bg.bags[v]] = val
    mu = {}
    for k, p in enumerate(net.places):
        val = Fraction(1)
        for b in bg.bags:
            e = wit[b][k]
            if e.denominator != 1:
                raise StructureBug(f"non-integral witness exponent for {p}")
            if e:
                val *= (vis[b] / lam[b]) ** int(e)
        mu[p] = val
    return ProductForm(places=net.places, lambda_bag=lam, pr=prob, vis=vis, mu=mu)


def weight(pf: ProductForm, delta: Sequence[int] | Mapping[str, int]) -> Fraction:
    """v-hat: the product of mu_p ** delta(p)."""
    if isinstance(delta, Mapping):
        items = ((pf.mu[p], k) for p, k in delta.items())
    else:
        items = zip(pf.mu_vec, delta)
    out = Fraction(1)
    for mu, k in items:
        if k:
            out *= mu ** k
    return out


@dataclass(frozen=True)
class GeneratorMatrix:
    states: tuple
    q: tuple  # one dict per row: column index -> Fraction (diagonal included)
    truncated: dict = field(hash=False)  # row index -> rate leaving the state set

    def dense(self) -> list[list[Fraction]]:
        n = len(self.states)
        return [[row.get(j, Fraction(0)) for j in range(n)] for row in self.q]


def generator(net: PetriNet, rates: Mapping[str, Fraction], states: Sequence) -> GeneratorMatrix:
    states = tuple(tuple(m) for m in states)
    index = {m: i for i, m in enumerate(states)}
    rows = []
    truncated = {}
    for i, m in enumerate(states):
        row: dict[int, Fraction] = {}
        out = Fraction(0)
        for j in enabled_indices(net, m):
            r = Fraction(rates[net.transitions[j]])
            m2 = fire_index(net, m, j)
            k = index.get(m2)
            if k is None:
                truncated[i] = truncated.get(i, Fraction(0)) + r
                out += r
            elif k != i:
                row[k] = row.get(k, Fraction(0)) + r
                out += r
        row[i] = -out
        rows.append(row)
    return GeneratorMatrix(states=states, q=tuple(rows), truncated=truncated)
