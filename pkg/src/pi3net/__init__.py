"""Analysis of layered product-form stochastic Petri nets.

Structure checks, liveness, reachability, boundedness and ergodicity
decisions, and the exact normalizing constant, plus brute-force oracles.
"""

from importlib import resources

from .model import Model, load_model, model_from_netfile, parse_model

__all__ = ["Model", "load_model", "model_from_netfile", "parse_model", "example_path"]


def example_path(name: str):
    """Path of a bundled example net, e.g. ``example_path("three_layer_open")``."""
    return resources.files(__name__) / "nets" / f"{name}.net"
