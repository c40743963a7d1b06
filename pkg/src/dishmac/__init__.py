"""Cooperation availability analysis and simulation for DISH-style
multi-channel MAC networks: closed-form and fixed-point models of the
probability that a coordination mistake is witnessed by a helpful
neighbor, a discrete-event protocol simulator that measures the same
probability empirically, and a bandwidth-split optimizer built on top.
"""

from . import analytic, bandwidth, experiments, geometry, sim
from .analytic import CoopReport, FixedPointState, ModelParams, p_co
from .geometry import NeighborConstants, neighbor_constants

__version__ = "0.1.0"

__all__ = [
    "CoopReport",
    "FixedPointState",
    "ModelParams",
    "NeighborConstants",
    "analytic",
    "bandwidth",
    "experiments",
    "geometry",
    "neighbor_constants",
    "p_co",
    "sim",
]
