"""Spiral gradient flows with circle limit sets and their pseudoholomorphic lifts."""
from . import diffgeo, experiments, flow, integrators, kernels, knot, lift, spiral
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "diffgeo", "experiments", "flow", "integrators", "kernels", "knot", "lift", "spiral"]
