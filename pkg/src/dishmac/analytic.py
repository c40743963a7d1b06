"""Availability-of-cooperation analysis for multi-channel MAC networks.

Implements the coupled control-channel statistics (on-channel probability,
overhearing and handshake-success probabilities, control message rates),
the conditional residence probability after a first overhearing, and the
resulting probability p_co that a coordination problem finds at least one
cooperative witness.  Multi-hop networks are solved by damped fixed-point
iteration; fully connected (single-hop) networks admit a closed form that
doubles as a test oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

from .errors import DomainError, NoConvergenceError, UnstableError
from .geometry import NeighborConstants, default_constants

__all__ = [
    "SINGLE_HOP",
    "MULTI_HOP",
    "ModelParams",
    "FixedPointState",
    "CoopReport",
    "StabilityReport",
    "fixed_point_residual",
    "exp_window_integral",
    "switch_noninterference",
    "p_ni_oh",
    "p_ni_cts",
    "single_hop_p_ctrl",
    "solve_fixed_point",
    "stability_check",
    "p_ctrl_star",
    "p_co",
    "timings_from_bytes",
]

SINGLE_HOP = "single_hop"
MULTI_HOP = "multi_hop"

# Damped Picard iteration defaults for the multi-hop system.
_DAMPING = 0.5
_P_CTRL_FLOOR = 0.05


def timings_from_bytes(
    data_bytes: float,
    ctrl_bytes: float,
    data_rate: float,
    ctrl_rate: Optional[float] = None,
    ack_time: float = 0.0,
) -> tuple[float, float]:
    """Convert packet sizes (bytes) and channel rates (bit/s) to (T_d, b).

    The ACK transmission time is folded into T_d only if supplied; by
    default it is treated as negligible.
    """
    if data_rate <= 0 or (ctrl_rate is not None and ctrl_rate <= 0):
        raise DomainError("channel rates must be positive")
    if data_bytes <= 0 or ctrl_bytes <= 0:
        raise DomainError("packet sizes must be positive")
    if ctrl_rate is None:
        ctrl_rate = data_rate
    t_d = 8.0 * data_bytes / data_rate + ack_time
    b = 8.0 * ctrl_bytes / ctrl_rate
    return t_d, b


@dataclass(frozen=True)
class ModelParams:
    """Inputs of the analysis.

    n is the node density per R^2 in multi-hop mode and the total node
    count in single-hop mode.  lam is the per-node data packet rate
    (packets/s, retransmissions included).  T_d is the data-channel
    handshake duration and b the control message airtime, both in seconds.
    """

    n: float
    lam: float
    T_d: float
    b: float
    hop_mode: str = MULTI_HOP

    def __post_init__(self):
        if self.hop_mode not in (SINGLE_HOP, MULTI_HOP):
            raise DomainError(f"unknown hop_mode {self.hop_mode!r}")
        if self.n <= 0:
            raise DomainError(f"n must be positive, got {self.n}")
        if self.lam < 0:
            raise DomainError(f"lam must be nonnegative, got {self.lam}")
        if self.T_d <= 0 or self.b <= 0:
            raise DomainError("T_d and b must be positive")
        if self.b >= self.T_d / 10.0:
            warnings.warn(
                f"control airtime b={self.b:g}s is not small against "
                f"T_d={self.T_d:g}s; the model assumes b << T_d",
                stacklevel=2,
            )

    @property
    def single_hop(self) -> bool:
        return self.hop_mode == SINGLE_HOP


@dataclass(frozen=True)
class FixedPointState:
    """Jointly consistent control-channel statistics."""

    p_ctrl: float
    p_oh: float
    p_succ: float
    lambda_c: float
    lambda_rts: float
    lambda_cts: float
    p_ni_oh: float
    p_ni_cts: float
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class CoopReport:
    """Cooperation availability for one scenario."""

    p_ctrl_star: float
    weight: float
    lambda_w: float
    p_co_xy_star: float
    p_co: float
    state: FixedPointState


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    reason: str
    diagnostics: dict

    def __bool__(self) -> bool:
        return self.stable


def exp_window_integral(x: float, horizon: float) -> float:
    """g(x) = (1 - exp(-x*horizon)) / x, evaluated stably near x = 0."""
    xt = x * horizon
    if xt < 1e-6:
        # series to avoid the 0/0; three terms hold to ~1e-19 here
        return horizon * (1.0 - xt / 2.0 + xt * xt / 6.0)
    return -math.expm1(-xt) / x


def switch_noninterference(delta_t: float, lambda_c: float, T_d: float) -> float:
    """Probability a node on a data channel stays harmless for delta_t.

    The node's return instant is uniform over a T_d window; after returning
    it transmits as Poisson with rate lambda_c.  Valid only for windows
    shorter than the data-channel sojourn.
    """
    if delta_t < 0 or lambda_c < 0 or T_d <= 0:
        raise DomainError("delta_t and lambda_c must be nonnegative, T_d positive")
    if delta_t >= T_d:
        raise DomainError(f"delta_t={delta_t:g} must be below T_d={T_d:g}")
    return 1.0 - delta_t / T_d + exp_window_integral(lambda_c, delta_t) / T_d


def p_ni_oh(p_ctrl: float, lambda_c: float, b: float, T_d: float) -> float:
    """Probability one potential interferer spares an overhearing.

    The vulnerable window around a message reception is 2b: transmissions
    started up to b earlier still overlap it.
    """
    _check_ni_args(p_ctrl, lambda_c, b, T_d)
    on_ctrl = math.exp(-2.0 * lambda_c * b)
    off_ctrl = 1.0 - 2.0 * b / T_d + exp_window_integral(lambda_c, 2.0 * b) / T_d
    return p_ctrl * on_ctrl + (1.0 - p_ctrl) * off_ctrl


def p_ni_cts(p_ctrl: float, lambda_c: float, b: float, T_d: float) -> float:
    """Probability one potential interferer spares an addressed reply.

    Neighbors that heard the preceding request keep silent, so only the
    reply's own b-long window is exposed, and only to nodes returning from
    data channels.
    """
    _check_ni_args(p_ctrl, lambda_c, b, T_d)
    r = b / T_d
    inner = 1.0 + r - exp_window_integral(lambda_c, b) / T_d - math.exp(-lambda_c * b)
    return (1.0 - p_ctrl) * (1.0 - r * inner) + p_ctrl


def _check_ni_args(p_ctrl, lambda_c, b, T_d):
    if not 0.0 <= p_ctrl <= 1.0:
        raise DomainError(f"p_ctrl must lie in [0, 1], got {p_ctrl}")
    if lambda_c < 0:
        raise DomainError(f"lambda_c must be nonnegative, got {lambda_c}")
    if b < 0 or T_d <= 0:
        raise DomainError("b must be nonnegative and T_d positive")


def single_hop_p_ctrl(lam: float, T_d: float) -> float:
    """Closed-form on-channel probability for a fully connected network.

    Root of p^2 - (1 - lam*T_d)*p + lam*T_d = 0; the larger root is the
    attracting operating point.
    """
    a = lam * T_d
    disc = 1.0 + a * (a - 6.0)
    if disc < 0:
        raise UnstableError(
            f"offered load lam*T_d={a:g} exceeds the single-hop capacity "
            "(negative discriminant)"
        )
    return 0.5 * (1.0 - a + math.sqrt(disc))


def _degenerate_state(params: ModelParams) -> FixedPointState:
    # Zero traffic: everyone sits on the control channel in silence.
    return FixedPointState(
        p_ctrl=1.0,
        p_oh=1.0,
        p_succ=1.0,
        lambda_c=0.0,
        lambda_rts=0.0,
        lambda_cts=0.0,
        p_ni_oh=1.0,
        p_ni_cts=1.0,
        iterations=0,
        residual=0.0,
    )


def solve_fixed_point(
    params: ModelParams,
    geom: Optional[NeighborConstants] = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> FixedPointState:
    """Solve the coupled control-channel equations by damped iteration.

    Single-hop mode forces the no-hidden-terminal specialization (both
    non-interference probabilities are 1, so overhearing and handshake
    success coincide with being on the control channel).
    """
    if params.lam == 0.0:
        return _degenerate_state(params)
    geom = geom or default_constants()
    c_a = 0.0 if params.single_hop else geom.excl_given_neighbor
    n, lam, T_d, b = params.n, params.lam, params.T_d, params.b

    p_ctrl = max(_P_CTRL_FLOOR, 1.0 - 2.0 * lam * T_d)
    lambda_cts = lam
    lambda_c = lam * (1.0 + p_ctrl) / (p_ctrl * p_ctrl)

    last = None
    residual = math.inf
    for it in range(1, max_iter + 1):
        if params.single_hop:
            pnio = pnic = 1.0
        else:
            pnio = p_ni_oh(p_ctrl, lambda_c, b, T_d)
            pnic = p_ni_cts(p_ctrl, lambda_c, b, T_d)
        p_oh = p_ctrl * math.exp(-c_a * n * (1.0 - pnio))
        p_succ = p_oh * math.exp(-c_a * n * (1.0 - pnic))

        denom = p_ctrl * p_succ
        if denom <= 1e-12:
            raise UnstableError(
                "handshake success collapsed during iteration", last_state=last
            )
        lambda_c_new = lam * (1.0 + p_oh) / denom
        lambda_cts_new = lam * p_oh / denom
        p_ctrl_new = 1.0 - (lam + lambda_cts_new) * T_d

        last = FixedPointState(
            p_ctrl=p_ctrl,
            p_oh=p_oh,
            p_succ=p_succ,
            lambda_c=lambda_c,
            lambda_rts=lambda_c - lambda_cts,
            lambda_cts=lambda_cts,
            p_ni_oh=pnio,
            p_ni_cts=pnic,
            iterations=it,
            residual=residual,
        )
        if p_ctrl_new <= 0.0:
            raise UnstableError(
                f"offered load drives the on-channel probability to "
                f"{p_ctrl_new:g}; network unstable",
                last_state=last,
            )

        residual = max(
            abs(p_ctrl_new - p_ctrl),
            abs(lambda_c_new - lambda_c) * T_d,
            abs(lambda_cts_new - lambda_cts) * T_d,
        )
        p_ctrl = (1.0 - _DAMPING) * p_ctrl + _DAMPING * p_ctrl_new
        lambda_c = (1.0 - _DAMPING) * lambda_c + _DAMPING * lambda_c_new
        lambda_cts = (1.0 - _DAMPING) * lambda_cts + _DAMPING * lambda_cts_new
        if residual < tol:
            break
    else:
        raise NoConvergenceError(
            f"no fixed point after {max_iter} iterations "
            f"(residual {residual:g} > tol {tol:g})",
            last_state=last,
            residual=residual,
        )

    if params.single_hop:
        pnio = pnic = 1.0
    else:
        pnio = p_ni_oh(p_ctrl, lambda_c, b, T_d)
        pnic = p_ni_cts(p_ctrl, lambda_c, b, T_d)
    p_oh = p_ctrl * math.exp(-c_a * n * (1.0 - pnio))
    p_succ = p_oh * math.exp(-c_a * n * (1.0 - pnic))
    state = FixedPointState(
        p_ctrl=p_ctrl,
        p_oh=p_oh,
        p_succ=p_succ,
        lambda_c=lambda_c,
        lambda_rts=lambda_c - lambda_cts,
        lambda_cts=lambda_cts,
        p_ni_oh=pnio,
        p_ni_cts=pnic,
        iterations=it,
        residual=residual,
    )
    _check_state(state)
    return state


def _check_state(state: FixedPointState) -> None:
    for name in ("p_ctrl", "p_oh", "p_succ", "p_ni_oh", "p_ni_cts"):
        v = getattr(state, name)
        if not 0.0 <= v <= 1.0:
            raise UnstableError(
                f"{name}={v:g} escaped [0, 1]; no valid operating point",
                last_state=state,
            )
    if state.lambda_rts < -1e-9:
        raise UnstableError("negative request rate", last_state=state)
    if not state.p_succ <= state.p_oh + 1e-12 or not state.p_oh <= state.p_ctrl + 1e-12:
        raise UnstableError(
            "probability ordering p_succ <= p_oh <= p_ctrl violated",
            last_state=state,
        )


def fixed_point_residual(
    state: FixedPointState, params: ModelParams, geom: Optional[NeighborConstants] = None
) -> float:
    """Max violation of the defining equations at a candidate state."""
    geom = geom or default_constants()
    if params.lam == 0.0:
        return 0.0
    c_a = 0.0 if params.single_hop else geom.excl_given_neighbor
    if params.single_hop:
        pnio = pnic = 1.0
    else:
        pnio = p_ni_oh(state.p_ctrl, state.lambda_c, params.b, params.T_d)
        pnic = p_ni_cts(state.p_ctrl, state.lambda_c, params.b, params.T_d)
    p_oh = state.p_ctrl * math.exp(-c_a * params.n * (1.0 - pnio))
    p_succ = p_oh * math.exp(-c_a * params.n * (1.0 - pnic))
    denom = state.p_ctrl * p_succ
    return max(
        abs(state.p_ctrl - (1.0 - (params.lam + state.lambda_cts) * params.T_d)),
        abs(state.p_oh - p_oh),
        abs(state.p_succ - p_succ),
        abs(state.lambda_c - params.lam * (1.0 + p_oh) / denom) * params.T_d,
        abs(state.lambda_cts - params.lam * p_oh / denom) * params.T_d,
        abs(state.lambda_c - state.lambda_rts - state.lambda_cts) * params.T_d,
    )


def stability_check(params: ModelParams) -> StabilityReport:
    """Decide whether the offered load admits a valid operating point."""
    if params.lam == 0.0:
        return StabilityReport(
            stable=True,
            reason="zero load; degenerate operating point p_ctrl = 1",
            diagnostics={"p_ctrl": 1.0},
        )
    if params.single_hop:
        a = params.lam * params.T_d
        disc = 1.0 + a * (a - 6.0)
        if disc < 0:
            return StabilityReport(
                stable=False,
                reason=f"negative discriminant {disc:g} at lam*T_d={a:g}",
                diagnostics={"discriminant": disc, "load": a},
            )
        p = 0.5 * (1.0 - a + math.sqrt(disc))
        ok = 0.0 < p < 1.0
        return StabilityReport(
            stable=ok,
            reason="closed-form operating point "
            + ("in (0, 1)" if ok else "outside (0, 1)"),
            diagnostics={"discriminant": disc, "p_ctrl": p, "load": a},
        )
    try:
        state = solve_fixed_point(params)
    except (UnstableError, NoConvergenceError) as exc:
        return StabilityReport(
            stable=False,
            reason=str(exc),
            diagnostics={"last_state": getattr(exc, "last_state", None)},
        )
    return StabilityReport(
        stable=0.0 < state.p_ctrl < 1.0,
        reason="fixed point found",
        diagnostics={"p_ctrl": state.p_ctrl, "iterations": state.iterations},
    )


def p_ctrl_star(state: FixedPointState, T_d: float, hop_mode: str = MULTI_HOP) -> float:
    """Probability of still being on the control channel at a second message.

    Conditions on having overheard a first message while the gap to the
    second is bounded by the ongoing data handshake.  In single-hop mode
    every miss of the first message is due to absence, so the interference
    branch weight is zero.
    """
    if hop_mode not in (SINGLE_HOP, MULTI_HOP):
        raise DomainError(f"unknown hop_mode {hop_mode!r}")
    lam_c = state.lambda_c
    lam_w = state.lambda_rts * state.p_succ + state.lambda_cts
    if lam_c == 0.0:
        return 1.0
    if hop_mode == SINGLE_HOP:
        w = 0.0
    else:
        w = (state.p_ctrl - state.p_oh) / (1.0 - state.p_oh)
    g = exp_window_integral
    coef = w * lam_c - (1.0 - w) / T_d
    num = coef * g(lam_c + lam_w, T_d) + (1.0 - w) / T_d * g(lam_w, T_d)
    den = 1.0 - w + coef * g(lam_c, T_d)
    if abs(den) < 1e-12:
        raise DomainError("conditional residence denominator vanished")
    return num / den


def p_co(
    params: ModelParams,
    geom: Optional[NeighborConstants] = None,
    tol: float = 1e-10,
) -> CoopReport:
    """Probability that a coordination problem finds a cooperative witness.

    Multi-hop combines the chance that an average common neighbor witnesses
    both setup messages with the Poisson count of common neighbors.
    Single-hop counts the n - 4 nodes that are not involved in either
    handshake, so it needs an integer population of at least 4.
    """
    geom = geom or default_constants()
    if params.single_hop:
        n_int = round(params.n)
        if abs(params.n - n_int) > 1e-9 or n_int < 4:
            raise DomainError(
                f"single-hop population must be an integer >= 4, got {params.n}"
            )
    state = solve_fixed_point(params, geom=geom, tol=tol)
    if params.lam == 0.0:
        pcs = 1.0
    else:
        pcs = p_ctrl_star(state, params.T_d, params.hop_mode)
    lam_w = state.lambda_rts * state.p_succ + state.lambda_cts
    if params.single_hop:
        weight = 0.0
        pair = state.p_ctrl * pcs
        value = 1.0 - (1.0 - pair) ** (round(params.n) - 4)
    else:
        weight = (
            0.0
            if params.lam == 0.0
            else (state.p_ctrl - state.p_oh) / (1.0 - state.p_oh)
            if state.p_oh < 1.0
            else 0.0
        )
        pair = (
            state.p_ctrl
            * pcs
            * math.exp(-2.0 * geom.excl_given_common * params.n * (1.0 - state.p_ni_oh))
        )
        value = 1.0 - math.exp(-geom.common * params.n * pair)
    report = CoopReport(
        p_ctrl_star=pcs,
        weight=weight,
        lambda_w=lam_w,
        p_co_xy_star=pair,
        p_co=value,
        state=state,
    )
    for name in ("p_ctrl_star", "weight", "p_co_xy_star", "p_co"):
        v = getattr(report, name)
        if not -1e-12 <= v <= 1.0 + 1e-12:
            raise UnstableError(f"{name}={v:g} escaped [0, 1]", last_state=state)
    return report
