"""Frozen reference values and small independent helpers shared by the tests.

Constants below were computed once by exact arithmetic and cross-checked
against breadth-first enumeration (closed nets) or the certified bracket
(open nets); they are pinned here so regressions show up as exact diffs.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import networkx as nx

from pi3net import example_path, load_model

F = Fraction

# Rate sets for the open three-layer example whose lattice generators all have small weight,
# so the certified bracket closes quickly.
ERGODIC_RATES = {"t0": 3, "t1": 5, "t2": 10, "t3": 1, "t4": 2, "t5": 1, "t6": 1,
                 "t7": 10, "t8": 2, "t9": 1, "t10": 10}
ERGODIC_RATES_2 = {"t0": F(3, 2), "t1": 9, "t2": 12, "t3": F(1, 2), "t4": 2, "t5": F(1, 3),
                   "t6": 3, "t7": F(9, 2), "t8": 1, "t9": F(3, 2), "t10": F(5, 2)}
OPEN_CONSTANT = F(2396172031250000, 93195752275969)
OPEN_CONSTANT_2 = F(12436569128384252046576, 1156864560899171436455)

# Closed three-layer example from the live marking p0 + r0 (42 reachable markings).
CLOSED_RATE_SETS = [
    ("unit", {f"t{k}": 1 for k in range(11)}, F(22)),
    ("half-steps", {f"t{k}": F(k + 1, 2) for k in range(11)}, F(104576141, 34927200)),
    ("fast", ERGODIC_RATES, F(160027, 10000)),
    ("fractional", ERGODIC_RATES_2, F(58750253, 1771470)),
]


def three_layer(mode: str = "closed"):
    return load_model(str(example_path(f"three_layer_{mode}")))


def cycle():
    return load_model(str(example_path("cycle")))


def _three_layer_formula(mu, last: str) -> Fraction:
    m = {p: F(v) for p, v in mu.items()}
    a = (m["p2"] ** 2 * m["p0"] * m["q1"] * m["q2"] * m["q3"]
         + m["p2"] * (m["p0"] * m["q1"] + m["p0"] * m["q2"] + m["p0"] * m["q3"]
                      + m["q1"] * m["q2"] + m["q1"] * m["q3"] + m["q2"] * m["q3"]) + 1)
    b = (m["p2"] * (m["p0"] * m["q1"] * m["q2"] + m["p0"] * m["q1"] * m["q3"]
                    + m["p0"] * m["q2"] * m["q3"] + m[last] * m["q2"] * m["q3"])
         + m["p0"] + m["q1"] + m["q2"] + m["q3"])
    c = ((1 - m["p0"] ** 2 * m["p2"]) * (1 - m["p1"]) * (1 - m["q1"] ** 2 * m["p2"])
         * (1 - m["q2"] ** 2 * m["p2"]) * (1 - m["q3"] ** 2 * m["p2"]))
    return (m["q0"] * a + (m["r0"] + m["r1"]) * b) / c


def printed_three_layer_formula(mu) -> Fraction:
    """Closed form for the open example with m0 = q3 + r0, transcribed term by term."""
    return _three_layer_formula(mu, "p1")


def corrected_three_layer_formula(mu) -> Fraction:
    """Same expression with the last monomial of b read as p2 q1 q2 q3."""
    return _three_layer_formula(mu, "q1")


def invariant_points(s, consts):
    """All markings satisfying the invariant equalities, for nonnegative invariant vectors.

    Independent of the library's own enumerators: a plain depth-first search
    over places with partial dot products pruned against the constants.
    """
    from pi3net.qualitative import invariant_vectors

    vecs = invariant_vectors(s)
    places = s.net.places
    if any(v < 0 for vec in vecs for v in vec.values()):
        raise ValueError("needs nonnegative invariant vectors")
    if any(all(vec.get(p, 0) == 0 for vec in vecs) for p in places):
        raise ValueError("a place outside every invariant is unbounded")
    out = []

    def rec(j, acc, m):
        if j == len(places):
            if list(acc) == list(consts):
                out.append(tuple(m))
            return
        p = places[j]
        k = 0
        while True:
            nxt = [a + k * vec.get(p, 0) for a, vec in zip(acc, vecs)]
            if any(a > c for a, c in zip(nxt, consts)):
                break
            rec(j + 1, nxt, m + [k])
            k += 1

    rec(0, [0] * len(vecs), [])
    return out


def has_independent_set(graph: nx.Graph, k: int) -> bool:
    nodes = list(graph.nodes)
    return any(not any(graph.has_edge(a, b) for a, b in itertools.combinations(c, 2))
               for c in itertools.combinations(nodes, k))
