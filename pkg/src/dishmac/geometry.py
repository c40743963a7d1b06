"""Disk-overlap geometry for randomly placed radio nodes.

Everything here reduces to one question: given nodes scattered uniformly
with unit-disk radio range R, how many neighbors does a node have in
various conditional configurations?  The answers are expressed as
dimensionless coefficients of the density n (nodes per R^2) and feed the
interference exponents of the analytic model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, QuadratureError

__all__ = [
    "DiskPair",
    "NeighborConstants",
    "lens_area",
    "complement_area",
    "poisson_power_expectation",
    "neighbor_constants",
    "default_constants",
    "adaptive_simpson",
    "mc_lens_area",
    "mc_neighbor_constants",
]


@dataclass(frozen=True)
class DiskPair:
    """Two equal disks whose centers are a neighbor-distance apart.

    separation and radius share the same length unit; separation must not
    exceed the radius (the two nodes are assumed to be radio neighbors).
    """

    separation: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if not 0 <= self.separation <= self.radius:
            raise DomainError(
                f"separation must lie in [0, radius], got {self.separation}"
            )

    def lens_area(self) -> float:
        return lens_area(self.separation, self.radius)


@dataclass(frozen=True)
class NeighborConstants:
    """Mean neighbor counts as coefficients of the node density n.

    excl_given_neighbor: E[# of v's neighbors that are not i's] / n, given
        v is a neighbor of i.
    excl_given_common:   same quantity, given v is a common neighbor of a
        neighboring pair (i, j).
    common:              E[# common neighbors of a neighboring pair] / n.
    """

    excl_given_neighbor: float
    excl_given_common: float
    common: float

    def validate(self, tol: float = 1e-3) -> None:
        """Check the structural identities the exact coefficients satisfy."""
        if not self.excl_given_common < self.excl_given_neighbor < math.pi:
            raise DomainError("expected excl_given_common < excl_given_neighbor < pi")
        if abs(self.common + self.excl_given_neighbor - math.pi) > tol:
            raise DomainError(
                "common and excl_given_neighbor must be complementary to pi"
            )


def lens_area(separation: float, radius: float) -> float:
    """Intersection area of two circles of equal radius.

    Continuous and strictly decreasing in the separation, from pi*R^2 at
    zero down to 0 at 2R.
    """
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if separation < 0 or separation > 2 * radius:
        raise DomainError(
            f"separation must lie in [0, 2*radius], got {separation}"
        )
    half = separation / (2.0 * radius)
    return 2.0 * radius * radius * math.acos(half) - separation * math.sqrt(
        radius * radius - separation * separation / 4.0
    )


def complement_area(separation: float, radius: float) -> float:
    """Area of one disk minus its overlap with the other."""
    return math.pi * radius * radius - lens_area(separation, radius)


def poisson_power_expectation(p: float, mean_count: float) -> float:
    """E[p^K] for K Poisson with the given mean: exp(-(1-p)*mean).

    p = 0 is permitted and yields the point mass exp(-mean).
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    if mean_count < 0:
        raise DomainError(f"mean_count must be nonnegative, got {mean_count}")
    return math.exp(-(1.0 - p) * mean_count)


def adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 48) -> float:
    """Adaptive composite Simpson quadrature with interval bisection.

    Bisects until the Richardson estimate of the local error drops below
    the (proportionally allocated) tolerance.  Raises QuadratureError with
    the worst achieved local tolerance if the depth cap is hit.
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if a == b:
        return 0.0

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    worst = [0.0]

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = f(xl)
        fr = f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        delta = left + right - whole
        if abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        if depth >= max_depth:
            worst[0] = max(worst[0], abs(delta))
            return left + right + delta / 15.0
        return recurse(x0, xm, f0, fl, f1, left, eps / 2.0, depth + 1) + recurse(
            xm, x2, f1, fr, f2, right, eps / 2.0, depth + 1
        )

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    result = recurse(a, b, fa, fm, fb, whole, tol, 0)
    if worst[0] > 0.0:
        raise QuadratureError(
            f"quadrature did not converge below tol={tol:g}; "
            f"worst local delta {worst[0]:g}",
            achieved_tol=worst[0],
        )
    return result


def _excl_area_given_outside(r: float, tol: float) -> float:
    """Mean excluded-disk area for v in i's disk but outside j's, |ij| = r.

    Splits v's distance from i over [R-r, R] with the angular weight of the
    arc lying outside j's disk (unit R).
    """
    ac_r = complement_area(r, 1.0)

    def integrand(r2):
        if r2 <= 0.0:
            return 0.0
        c = (r2 * r2 + r * r - 1.0) / (2.0 * r2 * r)
        c = min(1.0, max(-1.0, c))
        theta = math.acos(c)
        return 2.0 * r2 * complement_area(r2, 1.0) * (math.pi - theta) / ac_r

    return adaptive_simpson(integrand, 1.0 - r, 1.0, tol)


@lru_cache(maxsize=8)
def neighbor_constants(quadrature_tol: float = 1e-8) -> NeighborConstants:
    """Evaluate the three neighbor-count coefficients by quadrature.

    Works in units of R = 1 so all results are coefficients of n.  The
    conditional coefficient uses a 2048-point table of the inner integral
    bridged by monotone-cubic interpolation; the table depends only on
    geometry, never on scenario parameters.
    """
    if quadrature_tol <= 0:
        raise DomainError(f"quadrature_tol must be positive, got {quadrature_tol}")

    # E[A_c(|vi|)] for v uniform in i's disk; distance pdf f(r) = 2r.
    excl = adaptive_simpson(
        lambda r: 2.0 * r * complement_area(r, 1.0), 0.0, 1.0, quadrature_tol
    )

    # Conditional variant: decompose the disk average at pair distance r into
    # the in-lens and out-of-lens parts and solve for the in-lens mean M(r).
    grid = np.linspace(1e-6, 1.0, 2048)
    m_vals = np.empty_like(grid)
    for k, r in enumerate(grid):
        p1 = lens_area(float(r), 1.0) / math.pi
        e_out = _excl_area_given_outside(float(r), quadrature_tol)
        m_vals[k] = (excl - (1.0 - p1) * e_out) / p1
    m_interp = PchipInterpolator(grid, m_vals)

    excl_common = adaptive_simpson(
        lambda r: 2.0 * r * float(m_interp(min(max(r, grid[0]), 1.0))),
        0.0,
        1.0,
        quadrature_tol,
    )

    return NeighborConstants(
        excl_given_neighbor=excl,
        excl_given_common=excl_common,
        common=math.pi - excl,
    )


def default_constants() -> NeighborConstants:
    """Coefficients at the default tolerance, computed once per process."""
    return neighbor_constants(1e-8)


def mc_lens_area(separation: float, radius: float, samples: int, seed: int = 0):
    """Hit-or-miss estimate of the two-disk overlap; returns (mean, stderr).

    Points are drawn uniformly in the bounding square of the first disk;
    the overlap is the fraction landing in both disks.
    """
    rng = np.random.default_rng(seed)
    box_area = 4.0 * radius * radius
    xs = rng.uniform(-radius, radius, samples)
    ys = rng.uniform(-radius, radius, samples)
    in_i = xs * xs + ys * ys <= radius * radius
    dxj = xs - separation
    in_j = dxj * dxj + ys * ys <= radius * radius
    hits = in_i & in_j
    p = hits.mean()
    stderr = math.sqrt(max(p * (1.0 - p), 1e-300) / samples)
    return p * box_area, stderr * box_area


def mc_neighbor_constants(samples: int, seed: int = 0):
    """Sampling estimate of the three coefficients; returns dict of (mean, stderr).

    Construction mirrors the distance-pdf setup of the quadrature but never
    uses the closed-form overlap area: each area is measured hit-or-miss
    with an extra uniform point, so the check is an independent oracle.
    """
    rng = np.random.default_rng(seed)

    def disk_points(count):
        r = np.sqrt(rng.uniform(0.0, 1.0, count))
        a = rng.uniform(0.0, 2.0 * math.pi, count)
        return r * np.cos(a), r * np.sin(a)

    def hit_or_miss(cx, cy, inside_fn):
        # w uniform in the side-2 square around each probe disk center.
        wx = cx + rng.uniform(-1.0, 1.0, cx.size)
        wy = cy + rng.uniform(-1.0, 1.0, cy.size)
        hits = inside_fn(wx, wy)
        p = hits.mean()
        stderr = math.sqrt(max(p * (1.0 - p), 1e-300) / cx.size)
        return 4.0 * p, 4.0 * stderr

    out = {}

    # (a) v uniform in i's disk; area of v's disk outside i's.
    vx, vy = disk_points(samples)
    out["excl_given_neighbor"] = hit_or_miss(
        vx,
        vy,
        lambda wx, wy: ((wx - vx) ** 2 + (wy - vy) ** 2 <= 1.0)
        & (wx * wx + wy * wy > 1.0),
    )

    # (b) j uniform in i's disk; v uniform in the overlap of i and j
    # (rejection from i's disk); same excluded area as (a).
    jx, jy = disk_points(samples)
    vx, vy = disk_points(samples)
    keep = (vx - jx) ** 2 + (vy - jy) ** 2 <= 1.0
    jx, jy, vx, vy = jx[keep], jy[keep], vx[keep], vy[keep]
    out["excl_given_common"] = hit_or_miss(
        vx,
        vy,
        lambda wx, wy: ((wx - vx) ** 2 + (wy - vy) ** 2 <= 1.0)
        & (wx * wx + wy * wy > 1.0),
    )

    # (c) j uniform in i's disk; area of the overlap of i and j.
    jx, jy = disk_points(samples)
    zeros = np.zeros(samples)
    out["common"] = hit_or_miss(
        zeros,
        zeros,
        lambda wx, wy: (wx * wx + wy * wy <= 1.0)
        & ((wx - jx) ** 2 + (wy - jy) ** 2 <= 1.0),
    )

    return out
