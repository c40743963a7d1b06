"""Scenario files for the simulator (YAML with four blocks).

Example::

    topology:
      mode: multi_hop        # or single_hop
      n: 10                  # density per R^2, or node count in single_hop
      area: 1500.0           # square side, meters (multi_hop only)
      range: 250.0           # radio range, meters
    traffic:
      lambda: 10.0           # packets/s per node
      packet_bytes: 1000
    channels:
      data_channels: 5
      data_rate: 1.0e6       # bit/s
      control_rate: 1.0e6    # defaults to data_rate
      control_bytes: 34
    mode: noncoop            # noncoop | ideal | real
    seed: 1
    stop:
      packets: 20000
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import yaml

from ..analytic import MULTI_HOP, SINGLE_HOP
from ..errors import DomainError
from .engine import IDEAL, NONCOOP, REAL, Simulator
from .topology import generate_topology

__all__ = ["ScenarioConfig", "load_scenario", "build_simulator"]

_TOP_KEYS = {"topology", "traffic", "channels", "mode", "seed", "stop", "trace"}
_BLOCK_KEYS = {
    "topology": {"mode", "n", "area", "range"},
    "traffic": {"lambda", "packet_bytes"},
    "channels": {"data_channels", "data_rate", "control_rate", "control_bytes"},
    "stop": {"packets"},
}


@dataclass(frozen=True)
class ScenarioConfig:
    topology_mode: str
    n: float
    area: float
    radio_range: float
    lam: float
    packet_bytes: float
    data_channels: int
    data_rate: float
    control_rate: Optional[float]
    control_bytes: float
    mode: str
    seed: int
    stop_packets: int
    trace: bool = False

    def as_dict(self) -> dict:
        return {
            "topology": {
                "mode": self.topology_mode,
                "n": self.n,
                "area": self.area,
                "range": self.radio_range,
            },
            "traffic": {"lambda": self.lam, "packet_bytes": self.packet_bytes},
            "channels": {
                "data_channels": self.data_channels,
                "data_rate": self.data_rate,
                "control_rate": self.control_rate,
                "control_bytes": self.control_bytes,
            },
            "mode": self.mode,
            "seed": self.seed,
            "stop": {"packets": self.stop_packets},
        }


def _require_known(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise DomainError(f"unknown keys {sorted(unknown)} in {where}")


def scenario_from_mapping(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise DomainError("scenario file must contain a mapping")
    _require_known(raw, _TOP_KEYS, "scenario")
    for block, keys in _BLOCK_KEYS.items():
        if block in raw and isinstance(raw[block], dict):
            _require_known(raw[block], keys, f"block {block!r}")

    topo = raw.get("topology", {})
    traffic = raw.get("traffic", {})
    channels = raw.get("channels", {})
    stop = raw.get("stop", {})

    mode = raw.get("mode", NONCOOP)
    if mode not in (NONCOOP, IDEAL, REAL):
        raise DomainError(f"unknown mode {mode!r}")
    topo_mode = topo.get("mode", MULTI_HOP)
    if topo_mode not in (SINGLE_HOP, MULTI_HOP):
        raise DomainError(f"unknown topology mode {topo_mode!r}")

    return ScenarioConfig(
        topology_mode=topo_mode,
        n=float(topo.get("n", 10.0)),
        area=float(topo.get("area", 1500.0)),
        radio_range=float(topo.get("range", 250.0)),
        lam=float(traffic.get("lambda", 10.0)),
        packet_bytes=float(traffic.get("packet_bytes", 1000.0)),
        data_channels=int(channels.get("data_channels", 5)),
        data_rate=float(channels.get("data_rate", 1e6)),
        control_rate=(
            float(channels["control_rate"])
            if channels.get("control_rate") is not None
            else None
        ),
        control_bytes=float(channels.get("control_bytes", 34.0)),
        mode=mode,
        seed=int(raw.get("seed", 0)),
        stop_packets=int(stop.get("packets", 20_000)),
        trace=bool(raw.get("trace", False)),
    )


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return scenario_from_mapping(raw)


def build_simulator(cfg: ScenarioConfig, topology_seed: Optional[int] = None) -> Simulator:
    """Instantiate topology and engine; topology defaults to the run seed."""
    topo = generate_topology(
        cfg.n,
        radio_range=cfg.radio_range,
        area_side=cfg.area,
        seed=cfg.seed if topology_seed is None else topology_seed,
        mode=cfg.topology_mode,
    )
    return Simulator(
        topo,
        cfg.lam,
        cfg.packet_bytes,
        ctrl_bytes=cfg.control_bytes,
        data_channels=cfg.data_channels,
        data_rate=cfg.data_rate,
        ctrl_rate=cfg.control_rate,
        mode=cfg.mode,
        stop_after_packets=cfg.stop_packets,
        seed=cfg.seed,
        trace=cfg.trace,
    )
