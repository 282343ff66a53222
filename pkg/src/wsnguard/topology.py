"""Node placement and the unit-disk neighbor graph."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"position must be finite, got ({self.x}, {self.y})")

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class NeighborGraph:
    radius: float
    positions: Mapping[str, Position]
    adjacency: Mapping[str, frozenset[str]]

    def __contains__(self, node: object) -> bool:
        return node in self.adjacency

    def neighbors(self, node: str) -> frozenset[str]:
        try:
            return self.adjacency[node]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None

    def degree(self, node: str) -> int:
        return len(self.neighbors(node))

    def edges(self) -> set[tuple[str, str]]:
        return {(u, v) for u, nbrs in self.adjacency.items() for v in nbrs if u < v}

    def distance(self, u: str, v: str) -> float:
        return self.positions[u].distance(self.positions[v])


def build_graph(positions: Mapping[str, Position], radius: float) -> NeighborGraph:
    """Edge (u, v) iff the Euclidean distance is at most ``radius`` (inclusive)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    seen: dict[tuple[float, float], str] = {}
    for node, pos in positions.items():
        key = (pos.x, pos.y)
        if key in seen:
            raise ValueError(f"nodes {seen[key]!r} and {node!r} share position {key}")
        seen[key] = node

    ids = list(positions)
    adjacency: dict[str, set[str]] = {n: set() for n in ids}
    for i, u in enumerate(ids):
        pu = positions[u]
        for v in ids[i + 1:]:
            if pu.distance(positions[v]) <= radius:
                adjacency[u].add(v)
                adjacency[v].add(u)
    return NeighborGraph(radius, dict(positions), {n: frozenset(s) for n, s in adjacency.items()})


def degree(graph: NeighborGraph, node: str) -> int:
    return graph.degree(node)


def uniform_positions(
    ids: Iterable[str], width: float, height: float, rng: random.Random
) -> dict[str, Position]:
    return {n: Position(rng.uniform(0.0, width), rng.uniform(0.0, height)) for n in ids}
