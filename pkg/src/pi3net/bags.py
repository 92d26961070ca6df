"""Bag graphs, witnesses and the layered (Pi3) structure of a net.

A bag is a column of ``w_minus`` or ``w_plus``; the bag graph has one edge
``w_minus(t) -> w_plus(t)`` per transition.  Bags are stored as tuples
aligned with the net's place order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import networkx as nx

from .linalg import solve_dense
from .netcore import NetError, PetriNet, open_net

Bag = tuple


class StructureError(NetError):
    """The net is not a (valid) layered product-form net."""


@dataclass(frozen=True)
class BagGraph:
    bags: tuple[Bag, ...]
    edges: tuple[tuple[int, str, int], ...]  # (source bag index, transition, target bag index)
    components: tuple[tuple[int, ...], ...]
    strongly_connected: tuple[bool, ...]

    @property
    def weakly_reversible(self) -> bool:
        return all(self.strongly_connected)

    def index(self, bag: Bag) -> int:
        return self.bags.index(tuple(bag))


def build_bag_graph(net: PetriNet) -> BagGraph:
    order: dict[Bag, int] = {}
    for pr, po in zip(net.pre, net.post):
        for b in (pr, po):
            order.setdefault(b, len(order))
    edges = tuple((order[pr], t, order[po]) for t, pr, po in zip(net.transitions, net.pre, net.post))
    g = nx.MultiDiGraph()
    g.add_nodes_from(range(len(order)))
    g.add_edges_from((a, b) for a, _, b in edges)
    comps = sorted((tuple(sorted(c)) for c in nx.weakly_connected_components(g)), key=lambda c: c[0])
    strong = tuple(nx.is_strongly_connected(g.subgraph(c)) for c in comps)
    return BagGraph(bags=tuple(order), edges=edges, components=tuple(comps), strongly_connected=strong)


def witness_target(net: PetriNet, bag: Bag) -> list[int]:
    """Right-hand side of the witness equations: +1 if t produces the bag, -1 if it consumes it."""
    bag = tuple(bag)
    return [int(po == bag) - int(pr == bag) for pr, po in zip(net.pre, net.post)]


def is_witness(net: PetriNet, bag: Bag, wit: Sequence) -> bool:
    target = witness_target(net, bag)
    return all(
        sum(Fraction(w) * d for w, d in zip(wit, eff)) == tgt for eff, tgt in zip(net.effect, target)
    )


@dataclass(frozen=True)
class Pi2Report:
    weakly_reversible: bool
    witnesses: dict | None  # bag -> tuple of Fractions
    missing: tuple[Bag, ...] = ()

    @property
    def is_pi2(self) -> bool:
        return self.weakly_reversible and self.witnesses is not None


def check_pi2(net: PetriNet) -> Pi2Report:
    """Weak reversibility plus witness existence, decided by exact linear solves."""
    bg = build_bag_graph(net)
    rows = [list(eff) for eff in net.effect]
    wits = {}
    missing = []
    for b in bg.bags:
        x = solve_dense(rows, witness_target(net, b))
        if x is None:
            missing.append(b)
        else:
            wits[b] = tuple(x)
    return Pi2Report(bg.weakly_reversible, None if missing else wits, tuple(missing))


@dataclass(frozen=True)
class Pi3Structure:
    """Layer partition, potentials and derived tables.

    ``layers`` always lists the closed-form layers (the last one contains
    ``p_ext`` when the structure describes an open net).  Layer indices are
    1-based throughout.
    """

    closed_net: PetriNet
    layers: tuple[tuple[str, ...], ...]
    bag_of: dict = field(hash=False)  # place -> closed-net bag
    p_ext: str | None = None

    @property
    def is_open(self) -> bool:
        return self.p_ext is not None

    @property
    def N(self) -> int:
        return len(self.layers)

    @cached_property
    def net(self) -> PetriNet:
        """The analysed net: the closed net, or the open net with ``p_ext`` deleted."""
        return open_net(self.closed_net, self.p_ext) if self.is_open else self.closed_net

    @cached_property
    def pot(self) -> dict[str, int]:
        return {p: sum(b) - 1 for p, b in self.bag_of.items()}

    @cached_property
    def layer_of(self) -> dict[str, int]:
        return {p: i for i, layer in enumerate(self.layers, start=1) for p in layer}

    def P(self, i: int) -> tuple[str, ...]:
        """Places of layer i in the analysed net (``p_ext`` excluded)."""
        return tuple(p for p in self.layers[i - 1] if p != self.p_ext)

    @cached_property
    def POT(self) -> dict[int, int]:
        out = {i: max(self.pot[p] for p in self.layers[i - 1]) for i in range(1, self.N + 1)}
        if self.is_open:
            out[self.N] = self.pot[self.p_ext]
        return out

    @cached_property
    def cin(self) -> dict[str, int]:
        out = {p: self.POT[self.layer_of[p]] - self.pot[p] for p in self.layer_of}
        return out

    def pmax(self, i: int) -> tuple[str, ...]:
        """P_i^max: places of maximal potential within the (analysed) layer."""
        places = self.P(i)
        if not places:
            return ()
        top = max(self.pot[p] for p in places)
        return tuple(p for p in places if self.pot[p] == top)

    def pnegmax(self, i: int) -> tuple[str, ...]:
        mx = set(self.pmax(i))
        return tuple(p for p in self.P(i) if p not in mx)

    @cached_property
    def t_layer(self) -> dict[str, int]:
        net = self.closed_net
        out = {}
        for j, t in enumerate(net.transitions):
            pr = net.pre[j]
            selfs = [p for p, k in zip(net.places, pr) if k and self.bag_of[p] == pr]
            out[t] = self.layer_of[selfs[0]]
        return out

    def describe(self) -> dict:
        return {
            "N": self.N,
            "open": self.is_open,
            "p_ext": self.p_ext,
            "layers": [list(self.P(i)) for i in range(1, self.N + 1)],
            "pot": dict(self.pot),
            "POT": {str(i): v for i, v in self.POT.items()},
            "cin": {p: self.cin[p] for p in self.net.places},
            "pmax": [list(self.pmax(i)) for i in range(1, self.N + 1)],
        }


def _check_layering(net: PetriNet, layers, bag_of) -> None:
    """Check the resource condition: non-self places of a layer-i bag lie in P_{i-1}^max."""
    pot = {p: sum(b) - 1 for p, b in bag_of.items()}
    index = net.place_index
    for i, layer in enumerate(layers):
        prev = layers[i - 1] if i else ()
        top = max((pot[q] for q in prev), default=None)
        pmax_prev = {q for q in prev if pot[q] == top}
        for p in layer:
            b = bag_of[p]
            if b[index[p]] != 1:
                raise StructureError(f"bag of {p} does not contain {p} exactly once")
            for q, k in zip(net.places, b):
                if k and q != p and q not in pmax_prev:
                    where = "a non-maximal" if q in prev else "a wrong-layer"
                    raise StructureError(f"bag of {p} uses {where} resource place {q}")


def infer_pi3(net: PetriNet, declared_layers: Sequence[Sequence[str]] | None = None) -> Pi3Structure:
    """Recover the layers, the place/bag bijection and the potentials.

    Components of the bag graph are peeled bottom-up: a component is ready
    when each of its bags has exactly one not-yet-assigned place (its own
    place, with multiplicity 1).  Exactly one component must be ready at each
    step unless ``declared_layers`` settles the choice.
    """
    bg = build_bag_graph(net)
    if not bg.weakly_reversible:
        bad = [i for i, ok in enumerate(bg.strongly_connected) if not ok]
        raise StructureError(f"bag-graph component(s) {bad} not strongly connected")
    places = net.places
    assigned: dict[str, Bag] = {}
    remaining = list(bg.components)
    layers: list[tuple[str, ...]] = []
    while remaining:
        ready = []
        for comp in remaining:
            selfs = []
            for v in comp:
                b = bg.bags[v]
                free = [k for k, x in enumerate(b) if x and places[k] not in assigned]
                if len(free) != 1 or b[free[0]] != 1:
                    break
                selfs.append(free[0])
            else:
                if len(set(selfs)) == len(selfs):
                    ready.append((comp, selfs))
        if declared_layers is not None:
            want = set(declared_layers[len(layers)]) if len(layers) < len(declared_layers) else None
            ready = [r for r in ready if {places[k] for k in r[1]} == want]
        if not ready:
            raise StructureError("no place/bag bijection compatible with a layer order")
        if len(ready) > 1:
            raise StructureError("layer order is not a total order (several candidate layers)")
        comp, selfs = ready[0]
        order = sorted(zip(selfs, comp))  # file order of the self places
        for k, v in order:
            assigned[places[k]] = bg.bags[v]
        layers.append(tuple(places[k] for k, _ in order))
        remaining.remove(comp)
    orphans = [p for p in places if p not in assigned]
    if orphans:
        raise StructureError(f"no place/bag bijection: place(s) {orphans} have no bag")
    if declared_layers is not None and len(declared_layers) != len(layers):
        raise StructureError("declared layers do not match the bag-graph components")
    _check_layering(net, layers, assigned)
    return Pi3Structure(closed_net=net, layers=tuple(layers), bag_of=assigned)


def derive_open(net: PetriNet, s: Pi3Structure, p_ext: str) -> tuple[PetriNet, Pi3Structure]:
    if s.is_open:
        raise StructureError("structure is already open")
    if p_ext not in s.layers[-1]:
        raise StructureError(f"external place {p_ext} is not in the last layer")
    opened = Pi3Structure(closed_net=s.closed_net, layers=s.layers, bag_of=s.bag_of, p_ext=p_ext)
    return opened.net, opened


def open_bag(s: Pi3Structure, bag: Bag) -> Bag:
    """Project a closed-net bag onto the open net's places."""
    if not s.is_open:
        return tuple(bag)
    k = s.closed_net.place_index[s.p_ext]
    return tuple(bag[:k]) + tuple(bag[k + 1:])


def compute_witnesses_pi3(s: Pi3Structure) -> dict:
    """Witness table of the analysed net, built layer by layer from the top.

    Returns ``bag -> tuple of Fractions`` keyed by the bags of ``s.net``.
    """
    net = s.closed_net
    idx = net.place_index
    n = len(net.places)
    wit: dict[str, list[Fraction]] = {}
    for i in range(s.N, 0, -1):
        for p in s.layers[i - 1]:
            vec = [Fraction(0)] * n
            vec[idx[p]] += 1
            if i == s.N:
                if p == s.p_ext:
                    for q in s.layers[-1]:
                        vec[idx[q]] -= 1
            else:
                for q in s.layers[i]:
                    coef = s.bag_of[q][idx[p]]
                    if coef:
                        for k, v in enumerate(wit[q]):
                            vec[k] -= coef * v
            wit[p] = vec
    if not s.is_open:
        return {s.bag_of[p]: tuple(wit[p]) for p in net.places}
    k_ext = idx[s.p_ext]
    for p, vec in wit.items():
        assert vec[k_ext] == 0 or p == s.p_ext, "external place in witness support"

    def drop(vec):
        return tuple(v for j, v in enumerate(vec) if j != k_ext)

    out = {open_bag(s, s.bag_of[p]): drop(wit[p]) for p in net.places if p != s.p_ext}
    star = open_bag(s, s.bag_of[s.p_ext])
    if star in out:  # the source/sink bag coincides with an existing bag: merge
        out[star] = tuple(a + b for a, b in zip(out[star], drop(wit[s.p_ext])))
    else:
        out[star] = drop(wit[s.p_ext])
    return out
