"""Liveness, linear invariants, reachability, boundedness and canonical markings."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import networkx as nx

from .bags import Pi3Structure
from .netcore import NetError, NetFile, build_net


class NotLive(NetError):
    """A precondition requiring a live initial marking failed."""


def as_counts(s: Pi3Structure, m) -> dict[str, int]:
    """Marking of the analysed net as a place -> tokens dict."""
    if isinstance(m, Mapping):
        unknown = set(m) - set(s.net.places)
        if unknown:
            raise NetError(f"unknown place(s) {sorted(unknown)}")
        return {p: int(m.get(p, 0)) for p in s.net.places}
    if len(m) != len(s.net.places):
        raise NetError("marking length does not match the net")
    return dict(zip(s.net.places, m))


def _dot(counts: Mapping[str, int], vec: Mapping[str, int]) -> int:
    return sum(counts.get(p, 0) * v for p, v in vec.items())


def live_threshold(s: Pi3Structure, m, i: int) -> int:
    """Right-hand side of Live_i (1 <= i <= N-1)."""
    counts = as_counts(s, m)
    cands = [s.pot[p] for p in s.P(i + 1) if counts[p] > 0]
    if s.is_open and i == s.N - 1:
        cands.append(s.pot[s.p_ext])
    return min(cands) if cands else s.POT[i + 1]


def live_membership(s: Pi3Structure, m, i: int) -> bool:
    if not 1 <= i <= s.N:
        raise ValueError(f"layer index {i} out of range 1..{s.N}")
    counts = as_counts(s, m)
    lhs = sum(counts[p] for p in s.P(i))
    if i == s.N:
        return True if s.is_open else lhs > 0
    return lhs >= live_threshold(s, counts, i)


@dataclass(frozen=True)
class LiveReport:
    flags: tuple[bool, ...]  # flags[i-1] is membership in Live_i
    violations: tuple[dict, ...]

    @property
    def live(self) -> bool:
        return all(self.flags)


def is_live(s: Pi3Structure, m) -> LiveReport:
    counts = as_counts(s, m)
    flags = []
    violations = []
    for i in range(1, s.N + 1):
        ok = live_membership(s, counts, i)
        flags.append(ok)
        if not ok:
            lhs = sum(counts[p] for p in s.P(i))
            rhs = 1 if i == s.N else live_threshold(s, counts, i)
            violations.append({"layer": i, "tokens": lhs, "required": rhs})
    return LiveReport(tuple(flags), tuple(violations))


@dataclass(frozen=True)
class InvariantSystem:
    vectors: tuple[dict, ...]  # vectors[i-1] = v^(i), place -> int
    constants: tuple[int, ...]

    def holds(self, counts: Mapping[str, int]) -> bool:
        return all(_dot(counts, v) == c for v, c in zip(self.vectors, self.constants))


def invariant_vectors(s: Pi3Structure) -> tuple[dict, ...]:
    out = []
    top = s.N if not s.is_open else s.N - 1
    for i in range(1, top + 1):
        vec = {p: 1 for p in s.P(i)}
        if i < s.N:
            for p in s.P(i + 1):
                if s.cin[p]:
                    vec[p] = s.cin[p]
        out.append(vec)
    return tuple(out)


def invariant_system(s: Pi3Structure, m0) -> InvariantSystem:
    counts = as_counts(s, m0)
    vecs = invariant_vectors(s)
    return InvariantSystem(vecs, tuple(_dot(counts, v) for v in vecs))


def _require_live(s: Pi3Structure, m0) -> None:
    rep = is_live(s, m0)
    if not rep.live:
        raise NotLive(f"initial marking is not live (fails Live_{rep.violations[0]['layer']})")


def is_reachable(s: Pi3Structure, m0, m) -> bool:
    """Reachability from a live m0: invariants plus all liveness conditions."""
    _require_live(s, m0)
    counts = as_counts(s, m)
    if any(v < 0 for v in counts.values()):
        return False
    return invariant_system(s, m0).holds(counts) and is_live(s, counts).live


def _linear_text(vec: Mapping[str, int]) -> str:
    parts = []
    for p, c in vec.items():
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        term = p if mag == 1 else f"{mag}{p}"
        parts.append((sign, term))
    if not parts:
        return "0"
    text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, term in parts[1:]:
        text += f" {sign} {term}"
    return text


def reachset_description(s: Pi3Structure, m0) -> dict:
    """Equalities and liveness thresholds whose conjunction is the reachability set."""
    _require_live(s, m0)
    inv = invariant_system(s, m0)
    eqs = [
        {"layer": i, "vector": dict(v), "constant": c, "text": f"{_linear_text(v)} = {c}"}
        for i, (v, c) in enumerate(zip(inv.vectors, inv.constants), start=1)
    ]
    live = []
    for i in range(1, s.N):
        lhs = " + ".join(s.P(i))
        nxt = [f"{p}:{s.pot[p]}" for p in s.P(i + 1)]
        extra = f", external:{s.pot[s.p_ext]}" if s.is_open and i == s.N - 1 else ""
        live.append({
            "layer": i,
            "text": f"{lhs} >= min pot over marked {{{', '.join(nxt)}{extra}}} (default {s.POT[i + 1]})",
        })
    if not s.is_open:
        live.append({"layer": s.N, "text": f"{' + '.join(s.P(s.N))} >= 1"})
    return {"equalities": eqs, "live": live}


def is_bounded(s: Pi3Structure, m0) -> tuple[bool, int | None]:
    """Closed nets are bounded from any marking; open nets need a live m0."""
    consts = invariant_system(s, m0).constants
    if not s.is_open:
        return True, sum(consts)
    _require_live(s, m0)
    if all(s.cin[p] > 0 for p in s.P(s.N)):
        return True, sum(consts[: s.N - 1])
    return False, None


def reference_place(s: Pi3Structure, j: int) -> str:
    """Deterministic representative of P_j^max: the first one in file order."""
    return s.pmax(j)[0]


def canonical_marking(s: Pi3Structure, m, i: int) -> tuple[int, ...]:
    """Collapse layers below i onto reference places, keeping the invariants."""
    if not 0 <= i <= s.N:
        raise ValueError(f"layer index {i} out of range 0..{s.N}")
    counts = as_counts(s, m)
    vecs = invariant_vectors(s)
    out = {p: 0 for p in s.net.places}
    for j in range(1, s.N + 1):
        if j > i:
            for p in s.P(j):
                out[p] = counts[p]
        elif j == i:
            out[reference_place(s, j)] = sum(counts[p] for p in s.P(j))
        else:
            out[reference_place(s, j)] = _dot(counts, vecs[j - 1])
    return tuple(out[p] for p in s.net.places)


def gen_independent_set_net(graph: nx.Graph, k: int) -> NetFile:
    """Four-layer open net that is unbounded iff ``graph`` has an independent set of size k.

    Layer 1 is a pair of empty places (a single empty place has no bag), so
    the layer-2 transitions never fire; edge places only lose tokens through
    the vertex transitions of layer 3.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    vertices = list(graph.nodes)
    n = len(vertices)
    if k > n:
        raise ValueError("k exceeds the number of vertices")
    vname = {v: f"v{i}" for i, v in enumerate(vertices)}
    edges = [tuple(sorted((vname[a], vname[b]))) for a, b in graph.edges]
    ename = {e: f"e_{e[0]}_{e[1]}" for e in edges}
    places = ["p1", "p1b"] + [ename[e] for e in edges] + ["p2"]
    if not edges:
        places.append("p2b")
    places += [vname[v] for v in vertices] + ["p3", "p4", "p_ext"]
    trans = [("a0", {"p1": 1}, {"p1b": 1}), ("a1", {"p1b": 1}, {"p1": 1})]
    layer2 = [ename[e] for e in edges] or ["p2b"]
    for q in layer2:
        trans.append((f"f_{q}", {q: 1, "p1": 1}, {"p2": 1, "p1": 1}))
        trans.append((f"g_{q}", {"p2": 1, "p1": 1}, {q: 1, "p1": 1}))
    for v in vertices:
        bag = {vname[v]: 1}
        for e in edges:
            if vname[v] in e:
                bag[ename[e]] = 1
        trans.append((f"x_{vname[v]}", bag, {"p3": 1, "p2": n}))
        trans.append((f"y_{vname[v]}", {"p3": 1, "p2": n}, dict(bag)))
    trans.append(("z0", {"p_ext": 1, "p3": k}, {"p4": 1, "p3": k}))
    trans.append(("z1", {"p4": 1, "p3": k}, {"p_ext": 1, "p3": k}))
    net = build_net(f"indep_{n}_{k}", places, trans)
    m0 = net.marking({**{ename[e]: 1 for e in edges}, **{vname[v]: 1 for v in vertices}})
    rates = {t: Fraction(1) for t in net.transitions}
    return NetFile(net=net, rates=rates, m0=m0, mode="open", external="p_ext")
