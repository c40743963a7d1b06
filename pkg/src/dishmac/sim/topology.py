"""Random geometric topologies for the protocol simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..analytic import MULTI_HOP, SINGLE_HOP
from ..errors import DomainError

__all__ = ["Topology", "generate_topology"]


@dataclass(frozen=True)
class Topology:
    """Node positions plus the symmetric unit-disk adjacency."""

    positions: np.ndarray  # (N, 2) meters
    radio_range: float
    adjacency: tuple  # tuple of tuples of neighbor ids
    mode: str
    neighbor_sets: tuple = field(repr=False, default=())

    @property
    def n_nodes(self) -> int:
        return len(self.adjacency)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])


def _adjacency_from_positions(positions: np.ndarray, radio_range: float):
    n = len(positions)
    diff = positions[:, None, :] - positions[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    within = dist2 <= radio_range * radio_range
    np.fill_diagonal(within, False)
    return [np.flatnonzero(within[i]).tolist() for i in range(n)]


def _is_connected(adjacency) -> bool:
    n = len(adjacency)
    if n == 0:
        return False
    seen = [False] * n
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    return count == n


def generate_topology(
    density_n: float,
    radio_range: float = 250.0,
    area_side: float = 1500.0,
    seed=None,
    mode: str = MULTI_HOP,
    max_retries: int = 100,
) -> Topology:
    """Draw a connected random network, deterministic under the seed.

    Multi-hop: the node count is Poisson with mean density_n * (side/R)^2,
    positions i.i.d. uniform over the square, and the draw is repeated (up
    to max_retries) until the unit-disk graph is connected.  Single-hop:
    exactly round(density_n) nodes forming a complete graph.
    """
    if density_n <= 0:
        raise DomainError(f"density must be positive, got {density_n}")
    rng = np.random.default_rng(seed)

    if mode == SINGLE_HOP:
        n = int(round(density_n))
        if n < 2:
            raise DomainError(f"single-hop network needs >= 2 nodes, got {n}")
        # positions are cosmetic: everyone is in everyone's range
        angles = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        positions = 0.25 * radio_range * np.column_stack(
            (np.cos(angles), np.sin(angles))
        )
        adjacency = [[j for j in range(n) if j != i] for i in range(n)]
        return Topology(
            positions=positions,
            radio_range=radio_range,
            adjacency=tuple(tuple(a) for a in adjacency),
            mode=mode,
            neighbor_sets=tuple(frozenset(a) for a in adjacency),
        )

    if mode != MULTI_HOP:
        raise DomainError(f"unknown topology mode {mode!r}")

    mean_count = density_n * (area_side / radio_range) ** 2
    for _ in range(max_retries):
        n = int(rng.poisson(mean_count))
        if n < 2:
            continue
        positions = rng.uniform(0.0, area_side, size=(n, 2))
        adjacency = _adjacency_from_positions(positions, radio_range)
        if _is_connected(adjacency):
            return Topology(
                positions=positions,
                radio_range=radio_range,
                adjacency=tuple(tuple(a) for a in adjacency),
                mode=mode,
                neighbor_sets=tuple(frozenset(a) for a in adjacency),
            )
    raise DomainError(
        f"no connected draw in {max_retries} tries at density {density_n}; "
        "increase the density or the radio range"
    )
