"""Channel bandwidth allocation: split a band between control and data.

Given a total bandwidth W and m equal data channels, the split is
parameterized by sigma = w_c / w_d.  Shrinking the control channel
lengthens control messages (hurting overhearing); growing it squeezes the
data channels and stretches the data handshake (hurting channel
residence).  p_co is concave in sigma, so a grid sweep plus one
golden-section polish finds the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .analytic import MULTI_HOP, ModelParams, p_co
from .errors import DomainError, NoConvergenceError, UnstableError
from .geometry import NeighborConstants

__all__ = [
    "AllocationScheme",
    "SigmaSweep",
    "OptimizationResult",
    "SigmaTable",
    "derive_timings",
    "sigma_from_timings",
    "optimize_sigma",
    "sigma_star_table",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_FLAT_TOL = 1e-9


@dataclass(frozen=True)
class AllocationScheme:
    """One point of the allocation space with its derived air times."""

    m: int
    sigma: float
    control_bw: float  # bit/s
    data_bw: float  # bit/s
    control_time: float  # s, one control message
    data_time: float  # s, one data handshake

    def total_bandwidth(self) -> float:
        return self.control_bw + self.m * self.data_bw


@dataclass(frozen=True)
class SigmaSweep:
    """Grid description for the sigma search."""

    sigma_min: float = 0.2
    sigma_max: float = 3.0
    step: float = 0.05

    def __post_init__(self):
        if self.sigma_min <= 0 or self.sigma_max <= self.sigma_min or self.step <= 0:
            raise DomainError(f"invalid sweep {self}")

    def grid(self) -> list[float]:
        count = int(round((self.sigma_max - self.sigma_min) / self.step)) + 1
        return [round(self.sigma_min + k * self.step, 12) for k in range(count)]


@dataclass(frozen=True)
class OptimizationResult:
    m: int
    sigma_star: float
    p_co_max: float
    curve: tuple  # ordered (sigma, p_co-or-None) samples
    flat: bool = False


@dataclass(frozen=True)
class SigmaTable:
    """sigma* per (m, scenario); None marks unstable cells."""

    m_values: tuple
    scenarios: tuple  # (n, lam) pairs
    cells: dict = field(compare=False)  # (m, n, lam) -> sigma* or None

    def column(self, n: float, lam: float) -> list:
        return [self.cells[(m, n, lam)] for m in self.m_values]


def derive_timings(
    W: float, m: int, sigma: float, L: float, lc: float
) -> AllocationScheme:
    """Solve the band split for (W, m, sigma) and packet sizes in bytes."""
    if W <= 0:
        raise DomainError(f"W must be positive, got {W}")
    if m < 1 or int(m) != m:
        raise DomainError(f"m must be a positive integer, got {m}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if L <= 0 or lc <= 0:
        raise DomainError("packet sizes must be positive")
    data_bw = W / (sigma + m)
    control_bw = sigma * data_bw
    return AllocationScheme(
        m=int(m),
        sigma=sigma,
        control_bw=control_bw,
        data_bw=data_bw,
        control_time=8.0 * lc / control_bw,
        data_time=8.0 * L / data_bw,
    )


def sigma_from_timings(b: float, T_d: float, lc: float, L: float) -> float:
    """Recover the bandwidth ratio from the two air times (inverse map)."""
    if b <= 0 or T_d <= 0 or lc <= 0 or L <= 0:
        raise DomainError("all arguments must be positive")
    return (T_d * lc) / (b * L)


def _evaluate(
    sigma: float,
    W: float,
    m: int,
    L: float,
    lc: float,
    n: float,
    lam: float,
    hop_mode: str,
    geom: Optional[NeighborConstants],
) -> Optional[float]:
    scheme = derive_timings(W, m, sigma, L, lc)
    params = ModelParams(
        n=n, lam=lam, T_d=scheme.data_time, b=scheme.control_time, hop_mode=hop_mode
    )
    try:
        return p_co(params, geom=geom).p_co
    except (UnstableError, NoConvergenceError):
        return None


def optimize_sigma(
    W: float,
    m: int,
    L: float,
    lc: float,
    n: float,
    lam: float,
    sweep: SigmaSweep = SigmaSweep(),
    hop_mode: str = MULTI_HOP,
    geom: Optional[NeighborConstants] = None,
    refine: bool = True,
    refine_tol: float = 0.01,
) -> OptimizationResult:
    """Sweep sigma for the best p_co, then polish inside the best bracket.

    Unstable sweep points are kept as gaps in the curve; only an entirely
    unstable range is an error.  A curve whose total variation is below
    numerical noise is reported flat with the grid midpoint.
    """
    grid = sweep.grid()
    values = [_evaluate(s, W, m, L, lc, n, lam, hop_mode, geom) for s in grid]
    curve = tuple(zip(grid, values))
    finite = [(s, v) for s, v in curve if v is not None]
    if not finite:
        raise UnstableError(
            f"no stable operating point anywhere in sigma range "
            f"[{sweep.sigma_min}, {sweep.sigma_max}] for m={m}"
        )

    lo = min(v for _, v in finite)
    hi = max(v for _, v in finite)
    if hi - lo < _FLAT_TOL:
        mid = 0.5 * (sweep.sigma_min + sweep.sigma_max)
        return OptimizationResult(
            m=int(m), sigma_star=mid, p_co_max=hi, curve=curve, flat=True
        )

    best_idx = max(
        (i for i, (_, v) in enumerate(curve) if v is not None),
        key=lambda i: curve[i][1],
    )
    sigma_star, best = curve[best_idx]
    if refine:
        left = grid[best_idx - 1] if best_idx > 0 else grid[best_idx]
        right = grid[best_idx + 1] if best_idx + 1 < len(grid) else grid[best_idx]
        sigma_star, best = _golden_max(
            lambda s: _evaluate(s, W, m, L, lc, n, lam, hop_mode, geom),
            left,
            right,
            refine_tol,
            fallback=(sigma_star, best),
        )
    return OptimizationResult(
        m=int(m), sigma_star=sigma_star, p_co_max=best, curve=curve, flat=False
    )


def _golden_max(f, a, b, tol, fallback):
    """Golden-section maximization; gaps inside the bracket fall back."""
    if b - a < tol:
        return fallback
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    if f1 is None or f2 is None:
        return fallback
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
            if f2 is None:
                return fallback
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
            if f1 is None:
                return fallback
    s = 0.5 * (a + b)
    v = f(s)
    if v is None or v < fallback[1]:
        return fallback
    return s, v


def sigma_star_table(
    W: float,
    L: float,
    lc: float,
    m_range: Sequence[int],
    scenarios: Sequence[tuple],
    sweep: SigmaSweep = SigmaSweep(),
    hop_mode: str = MULTI_HOP,
    geom: Optional[NeighborConstants] = None,
) -> SigmaTable:
    """Tabulate sigma* across channel counts and (n, lam) scenarios."""
    if not m_range:
        raise DomainError("m_range must be nonempty")
    cells = {}
    for n, lam in scenarios:
        for m in m_range:
            try:
                res = optimize_sigma(
                    W, m, L, lc, n, lam, sweep=sweep, hop_mode=hop_mode, geom=geom
                )
                cells[(m, n, lam)] = res.sigma_star
            except UnstableError:
                cells[(m, n, lam)] = None
    return SigmaTable(
        m_values=tuple(m_range),
        scenarios=tuple(scenarios),
        cells=cells,
    )
