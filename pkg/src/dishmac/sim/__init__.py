"""Discrete-event simulation of the multi-channel MAC protocol family."""

from .config import ScenarioConfig, build_simulator, load_scenario
from .engine import (
    CHANNEL_CONFLICT,
    DEAF_TERMINAL,
    IDEAL,
    NONCOOP,
    REAL,
    MccProblem,
    Simulator,
    find_cooperative_nodes,
    simulate,
)
from .metrics import METRICS_CSV_COLUMNS, RatioReport, SimMetrics, measure_ratios
from .topology import Topology, generate_topology

__all__ = [
    "CHANNEL_CONFLICT",
    "DEAF_TERMINAL",
    "IDEAL",
    "NONCOOP",
    "REAL",
    "METRICS_CSV_COLUMNS",
    "MccProblem",
    "RatioReport",
    "ScenarioConfig",
    "SimMetrics",
    "Simulator",
    "Topology",
    "build_simulator",
    "find_cooperative_nodes",
    "generate_topology",
    "load_scenario",
    "measure_ratios",
    "simulate",
]
