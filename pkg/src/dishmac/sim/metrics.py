"""Run metrics and cross-mode performance ratios."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

__all__ = ["SimMetrics", "RatioReport", "measure_ratios", "METRICS_CSV_COLUMNS"]

# Fixed column order of the one-row-per-run CSV output.
METRICS_CSV_COLUMNS = [
    "mode",
    "seed",
    "n_nodes",
    "sim_time",
    "warmup_time",
    "packets_arrived",
    "packets_delivered",
    "packets_queued",
    "packets_in_flight",
    "data_packets_sent",
    "control_msgs_sent",
    "coop_msgs_sent",
    "mcc_created",
    "mcc_channel_conflict",
    "mcc_deaf_terminal",
    "mcc_with_coop",
    "p_co_hat",
    "data_handshakes",
    "data_collisions",
    "collision_rate",
    "mean_delay",
    "throughput",
    "csma_violations",
    "sojourn_min",
    "sojourn_max",
    "saturated",
    "aborted",
]


@dataclass
class SimMetrics:
    """Counters and derived measurements from one run.

    p_co_hat counts every coordination problem from time zero; the delay,
    collision and throughput figures exclude the warm-up window.
    """

    mode: str = ""
    seed: int = 0
    n_nodes: int = 0
    sim_time: float = 0.0
    warmup_time: float = 0.0
    packets_arrived: int = 0
    packets_delivered: int = 0
    packets_queued: int = 0
    packets_in_flight: int = 0
    data_packets_sent: int = 0
    control_msgs_sent: int = 0
    coop_msgs_sent: int = 0
    mcc_channel_conflict: int = 0
    mcc_deaf_terminal: int = 0
    mcc_with_coop: int = 0
    data_handshakes: int = 0
    data_collisions: int = 0
    delay_sum: float = 0.0
    delay_count: int = 0
    delivered_bits: float = 0.0
    csma_violations: int = 0
    sojourn_min: float = float("inf")
    sojourn_max: float = 0.0
    saturated: bool = False
    aborted: bool = False

    @property
    def mcc_created(self) -> int:
        return self.mcc_channel_conflict + self.mcc_deaf_terminal

    @property
    def p_co_hat(self) -> Optional[float]:
        if self.mcc_created == 0:
            return None
        return self.mcc_with_coop / self.mcc_created

    @property
    def collision_rate(self) -> Optional[float]:
        if self.data_handshakes == 0:
            return None
        return self.data_collisions / self.data_handshakes

    @property
    def mean_delay(self) -> Optional[float]:
        if self.delay_count == 0:
            return None
        return self.delay_sum / self.delay_count

    @property
    def throughput(self) -> Optional[float]:
        span = self.sim_time - self.warmup_time
        if span <= 0:
            return None
        return self.delivered_bits / span

    def conservation_holds(self) -> bool:
        return (
            self.packets_arrived
            == self.packets_delivered + self.packets_queued + self.packets_in_flight
        )

    def to_csv_row(self) -> list:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return int(v)
            if isinstance(v, float):
                return repr(v)
            return v

        return [fmt(getattr(self, c)) for c in METRICS_CSV_COLUMNS]


@dataclass(frozen=True)
class RatioReport:
    """Cooperative-over-baseline performance ratios.

    eta_xi and eta_delta divide the cooperative value by the baseline;
    eta_s is inverted (baseline over cooperative) so all three live in
    [0, 1] when cooperation helps.  A ratio is None when its baseline
    quantity is zero or missing.
    """

    eta_xi: Optional[float]
    eta_delta: Optional[float]
    eta_s: Optional[float]


def _ratio(num, den):
    if num is None or den is None or den == 0:
        return None
    return num / den


def measure_ratios(base: SimMetrics, coop: SimMetrics) -> RatioReport:
    return RatioReport(
        eta_xi=_ratio(coop.collision_rate, base.collision_rate),
        eta_delta=_ratio(coop.mean_delay, base.mean_delay),
        eta_s=_ratio(base.throughput, coop.throughput),
    )
