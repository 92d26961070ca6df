"""Petri net data model, firing rule and the net-description file format.

A net file looks like::

    net cycle
    mode closed
    place r0 tokens 1
    place r1
    trans t0 rate 2
      in  r0 1
      out r1 1
    trans t1 rate 1
      in  r1 1
      out r0 1

Open nets are written in their closed form with exactly one place flagged
``external``; :func:`open_net` performs the deletion.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

Marking = tuple  # token counts aligned with PetriNet.places
RateTable = dict  # transition id -> Fraction


class NetError(ValueError):
    """Raised for malformed nets and invalid firing requests."""


class ParseError(NetError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class PetriNet:
    """Places, transitions and the two incidence matrices (place x transition)."""

    name: str
    places: tuple[str, ...]
    transitions: tuple[str, ...]
    w_minus: tuple[tuple[int, ...], ...]
    w_plus: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        np_, nt = len(self.places), len(self.transitions)
        if len(set(self.places)) != np_:
            raise NetError("duplicate place id")
        if len(set(self.transitions)) != nt:
            raise NetError("duplicate transition id")
        for mat in (self.w_minus, self.w_plus):
            if len(mat) != np_ or any(len(row) != nt for row in mat):
                raise NetError("incidence matrix shape mismatch")
            if any(v < 0 for row in mat for v in row):
                raise NetError("negative arc weight")

    @cached_property
    def place_index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.places)}

    @cached_property
    def transition_index(self) -> dict[str, int]:
        return {t: j for j, t in enumerate(self.transitions)}

    @cached_property
    def pre(self) -> tuple[tuple[int, ...], ...]:
        """Columns of w_minus, one tuple per transition."""
        return tuple(tuple(row[j] for row in self.w_minus) for j in range(len(self.transitions)))

    @cached_property
    def post(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(row[j] for row in self.w_plus) for j in range(len(self.transitions)))

    @cached_property
    def effect(self) -> tuple[tuple[int, ...], ...]:
        """Columns of the incidence matrix w = w_plus - w_minus."""
        return tuple(tuple(b - a for a, b in zip(pr, po)) for pr, po in zip(self.pre, self.post))

    @property
    def max_weight(self) -> int:
        return max((v for mat in (self.w_minus, self.w_plus) for row in mat for v in row), default=0)

    def tindex(self, t: str) -> int:
        try:
            return self.transition_index[t]
        except KeyError:
            raise NetError(f"unknown transition {t!r}") from None

    def marking(self, counts: Mapping[str, int] | None = None) -> Marking:
        """Build a marking tuple from a place -> tokens mapping (missing places are 0)."""
        counts = dict(counts or {})
        unknown = set(counts) - set(self.places)
        if unknown:
            raise NetError(f"unknown place(s) {sorted(unknown)}")
        if any(v < 0 for v in counts.values()):
            raise NetError("negative token count")
        return tuple(int(counts.get(p, 0)) for p in self.places)

    def as_dict(self, m: Sequence[int], *, skip_zero: bool = True) -> dict[str, int]:
        return {p: v for p, v in zip(self.places, m) if v or not skip_zero}

    def format_marking(self, m: Sequence[int]) -> str:
        """Human-readable sum notation, e.g. ``q3 + r0`` or ``2p0 + p2``."""
        parts = [(f"{v}{p}" if v > 1 else p) for p, v in zip(self.places, m) if v]
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class NetFile:
    """Everything a net file carries: the closed net, rates, m0 and the open-mode flag."""

    net: PetriNet
    rates: dict = field(hash=False)
    m0: Marking = ()
    mode: str = "closed"
    external: str | None = None

    @property
    def is_open(self) -> bool:
        return self.mode == "open"


def enabled(net: PetriNet, m: Sequence[int], t: str) -> bool:
    pre = net.pre[net.tindex(t)]
    return all(a >= b for a, b in zip(m, pre))


def enabled_indices(net: PetriNet, m: Sequence[int]) -> list[int]:
    return [j for j, pre in enumerate(net.pre) if all(a >= b for a, b in zip(m, pre))]


def fire(net: PetriNet, m: Sequence[int], t: str) -> Marking:
    j = net.tindex(t)
    if not all(a >= b for a, b in zip(m, net.pre[j])):
        raise NetError(f"transition {t!r} is not enabled")
    return tuple(a + d for a, d in zip(m, net.effect[j]))


def fire_index(net: PetriNet, m: Sequence[int], j: int) -> Marking:
    return tuple(a + d for a, d in zip(m, net.effect[j]))


def validate_net(net: PetriNet) -> list[str]:
    """Structural violations: useless transitions and duplicated transitions."""
    problems = []
    for t, pr, po in zip(net.transitions, net.pre, net.post):
        if pr == po:
            problems.append(f"useless transition {t}")
    seen: dict[tuple, str] = {}
    for t, pr, po in zip(net.transitions, net.pre, net.post):
        key = (pr, po)
        if key in seen:
            problems.append(f"duplicated transitions {seen[key]},{t}")
        else:
            seen[key] = t
    return problems


def open_net(net: PetriNet, p_ext: str) -> PetriNet:
    """Delete place ``p_ext`` and its arcs."""
    if p_ext not in net.place_index:
        raise NetError(f"unknown place {p_ext!r}")
    k = net.place_index[p_ext]
    keep = [i for i in range(len(net.places)) if i != k]
    return PetriNet(
        name=net.name,
        places=tuple(net.places[i] for i in keep),
        transitions=net.transitions,
        w_minus=tuple(net.w_minus[i] for i in keep),
        w_plus=tuple(net.w_plus[i] for i in keep),
    )


def build_net(
    name: str,
    places: Sequence[str],
    transitions: Iterable[tuple[str, Mapping[str, int], Mapping[str, int]]],
) -> PetriNet:
    """Build a net from ``(id, inputs, outputs)`` triples of place -> weight maps."""
    places = tuple(places)
    index = {p: i for i, p in enumerate(places)}
    trans = list(transitions)
    wm = [[0] * len(trans) for _ in places]
    wp = [[0] * len(trans) for _ in places]
    for j, (_, ins, outs) in enumerate(trans):
        for mat, arcs in ((wm, ins), (wp, outs)):
            for p, w in arcs.items():
                if p not in index:
                    raise NetError(f"unknown place {p!r}")
                mat[index[p]][j] += w
    return PetriNet(
        name=name,
        places=places,
        transitions=tuple(t for t, _, _ in trans),
        w_minus=tuple(tuple(r) for r in wm),
        w_plus=tuple(tuple(r) for r in wp),
    )


# --- file format -----------------------------------------------------------

_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_INT = re.compile(r"^[0-9]+$")
_RATE = re.compile(r"^([0-9]+)(?:/([0-9]+))?$")


def _tokens(line: str) -> list[tuple[str, int]]:
    """Split a line into (token, 1-based column) pairs, dropping comments."""
    line = line.split("#", 1)[0]
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_rate(text: str) -> Fraction:
    m = _RATE.match(text)
    if not m:
        raise NetError(f"bad rate {text!r} (integers or num/den only)")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise NetError("zero denominator in rate")
    rate = Fraction(num, den)
    if rate <= 0:
        raise NetError("rate must be positive")
    return rate


def parse_net(text: str) -> NetFile:
    """Parse a net file; the returned net is always the closed form."""
    name = None
    mode = "closed"
    places: list[str] = []
    tokens: dict[str, int] = {}
    external: str | None = None
    trans: list[list] = []  # [id, rate, ins, outs, line]
    current = None

    def need_id(tok, lineno, col, what):
        if not _ID.match(tok):
            raise ParseError(f"invalid {what} id {tok!r}", lineno, col)
        return tok

    def need_int(tok, lineno, col, what):
        if not _INT.match(tok):
            raise ParseError(f"expected nonnegative integer for {what}, got {tok!r}", lineno, col)
        return int(tok)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokens(raw)
        if not toks:
            continue
        head, col = toks[0]
        rest = toks[1:]
        if head == "net":
            if len(rest) != 1:
                raise ParseError("expected: net <id>", lineno, col)
            name = need_id(rest[0][0], lineno, rest[0][1], "net")
        elif head == "mode":
            if len(rest) != 1 or rest[0][0] not in ("closed", "open"):
                raise ParseError("expected: mode closed|open", lineno, col)
            mode = rest[0][0]
        elif head == "place":
            if not rest:
                raise ParseError("expected: place <id> [tokens <n>] [external]", lineno, col)
            pid = need_id(rest[0][0], lineno, rest[0][1], "place")
            if pid in tokens:
                raise ParseError(f"duplicate place id {pid!r}", lineno, rest[0][1])
            places.append(pid)
            tokens[pid] = 0
            k = 1
            while k < len(rest):
                tok, c = rest[k]
                if tok == "tokens":
                    if k + 1 >= len(rest):
                        raise ParseError("missing token count", lineno, c)
                    tokens[pid] = need_int(rest[k + 1][0], lineno, rest[k + 1][1], "tokens")
                    k += 2
                elif tok == "external":
                    if external is not None:
                        raise ParseError("external place declared more than once", lineno, c)
                    external = pid
                    k += 1
                else:
                    raise ParseError(f"unexpected token {tok!r}", lineno, c)
        elif head == "marking":
            if len(rest) != 2:
                raise ParseError("expected: marking <place> <n>", lineno, col)
            pid = rest[0][0]
            if pid not in tokens:
                raise ParseError(f"unknown place {pid!r}", lineno, rest[0][1])
            tokens[pid] = need_int(rest[1][0], lineno, rest[1][1], "marking")
        elif head == "trans":
            if len(rest) != 3 or rest[1][0] != "rate":
                raise ParseError("expected: trans <id> rate <int>[/<int>]", lineno, col)
            tid = need_id(rest[0][0], lineno, rest[0][1], "transition")
            if any(t[0] == tid for t in trans):
                raise ParseError(f"duplicate transition id {tid!r}", lineno, rest[0][1])
            rtok, rcol = rest[2]
            if re.search(r"[.eE]", rtok):
                raise ParseError(f"floating-point rate {rtok!r} rejected", lineno, rcol)
            try:
                rate = parse_rate(rtok)
            except NetError as exc:
                raise ParseError(str(exc), lineno, rcol) from None
            current = [tid, rate, None, None, lineno]
            trans.append(current)
        elif head in ("in", "out"):
            if current is None:
                raise ParseError(f"'{head}' outside a transition", lineno, col)
            slot = 2 if head == "in" else 3
            if current[slot] is not None:
                raise ParseError(f"second '{head}' line for transition {current[0]}", lineno, col)
            if len(rest) % 2:
                raise ParseError("arcs come in <place> <weight> pairs", lineno, rest[-1][1])
            arcs: dict[str, int] = {}
            for k in range(0, len(rest), 2):
                (pid, pc), (wt, wc) = rest[k], rest[k + 1]
                if pid in arcs:
                    raise ParseError(f"place {pid!r} repeated in arc list", lineno, pc)
                w = need_int(wt, lineno, wc, "weight")
                if w == 0:
                    raise ParseError("arc weight must be positive", lineno, wc)
                arcs[pid] = w
            current[slot] = (arcs, lineno)
        else:
            raise ParseError(f"unknown keyword {head!r}", lineno, col)

    if name is None:
        raise ParseError("missing 'net <id>' line", 1, 1)
    if not places:
        raise NetError("no places")
    if mode == "closed" and external is not None:
        raise NetError("external place declared in closed mode")
    if mode == "open" and external is None:
        raise NetError("open mode requires one external place")

    triples = []
    for tid, _, ins, outs, lineno in trans:
        for part in (ins, outs):
            if part is None:
                continue
            arcs, ln = part
            for pid in arcs:
                if pid not in tokens:
                    raise ParseError(f"unknown place {pid!r} in transition {tid}", ln, 1)
        triples.append((tid, ins[0] if ins else {}, outs[0] if outs else {}))
    net = build_net(name, places, triples)
    seen = {}
    for t, pr, po in zip(net.transitions, net.pre, net.post):
        if (pr, po) in seen:
            raise NetError(f"duplicated transition {seen[(pr, po)]},{t}")
        seen[(pr, po)] = t
    rates = {tid: rate for tid, rate, *_ in trans}
    m0 = tuple(tokens[p] for p in places)
    return NetFile(net=net, rates=rates, m0=m0, mode=mode, external=external)


def load_net(path) -> NetFile:
    with open(path, encoding="utf-8") as fh:
        return parse_net(fh.read())


def format_rate(r: Fraction) -> str:
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def serialize_net(nf: NetFile) -> str:
    """Canonical text form; ``parse_net(serialize_net(x)) == x``."""
    net = nf.net
    lines = [f"net {net.name}", f"mode {nf.mode}"]
    for p, k in zip(net.places, nf.m0):
        line = f"place {p}"
        if k:
            line += f" tokens {k}"
        if p == nf.external:
            line += " external"
        lines.append(line)
    for j, t in enumerate(net.transitions):
        lines.append(f"trans {t} rate {format_rate(nf.rates[t])}")
        ins = " ".join(f"{p} {w}" for p, w in zip(net.places, net.pre[j]) if w)
        outs = " ".join(f"{p} {w}" for p, w in zip(net.places, net.post[j]) if w)
        lines.append(f"  in {ins}".rstrip())
        lines.append(f"  out {outs}".rstrip())
    return "\n".join(lines) + "\n"


_MARKING_ITEM = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.\-]*)\s*=\s*([0-9]+)\s*$")


def parse_marking(net: PetriNet, text: str) -> Marking:
    """Parse the literal ``p=1,q=2`` into a marking of ``net``."""
    counts: dict[str, int] = {}
    if text.strip():
        for item in text.split(","):
            m = _MARKING_ITEM.match(item)
            if not m:
                raise NetError(f"bad marking item {item!r}")
            if m.group(1) in counts:
                raise NetError(f"place {m.group(1)!r} repeated in marking")
            counts[m.group(1)] = int(m.group(2))
    return net.marking(counts)
