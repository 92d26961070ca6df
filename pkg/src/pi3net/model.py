"""Bundle a parsed net file with its layered structure and product form."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

from .bags import Pi3Structure, derive_open, infer_pi3
from .netcore import Marking, NetFile, PetriNet, load_net, parse_marking, parse_net
from .stochastic import ProductForm, product_form


@dataclass(frozen=True)
class Model:
    source: NetFile
    s: Pi3Structure
    rates: dict = field(hash=False)

    @property
    def net(self) -> PetriNet:
        """The analysed net (``p_ext`` removed in open mode)."""
        return self.s.net

    @cached_property
    def m0(self) -> Marking:
        return self.project(self.source.m0)

    @cached_property
    def pf(self) -> ProductForm:
        return product_form(self.net, self.rates, self.s)

    def project(self, m) -> Marking:
        """Drop the external coordinate of a closed-form marking."""
        if not self.s.is_open:
            return tuple(m)
        k = self.source.net.place_index[self.s.p_ext]
        return tuple(v for j, v in enumerate(m) if j != k)

    def marking(self, text: str) -> Marking:
        return parse_marking(self.net, text)

    def scaled(self, factor: Fraction) -> "Model":
        rates = {t: r * factor for t, r in self.rates.items()}
        return Model(self.source, self.s, rates)

    def with_rates(self, rates) -> "Model":
        return Model(self.source, self.s, {t: Fraction(r) for t, r in rates.items()})

    def with_m0(self, m0: Marking) -> "Model":
        """Same net and rates, new initial marking given on the analysed places."""
        full = list(m0)
        if self.s.is_open:
            full.insert(self.source.net.place_index[self.s.p_ext], 0)
        src = NetFile(self.source.net, self.source.rates, tuple(full), self.source.mode, self.source.external)
        return Model(src, self.s, self.rates)


def model_from_netfile(nf: NetFile) -> Model:
    s = infer_pi3(nf.net)
    if nf.is_open:
        _, s = derive_open(nf.net, s, nf.external)
    return Model(nf, s, dict(nf.rates))


def load_model(path) -> Model:
    return model_from_netfile(load_net(path))


def parse_model(text: str) -> Model:
    return model_from_netfile(parse_net(text))
