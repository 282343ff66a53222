"""Role taxonomy, CIC/SIC/SM elections, sector formation and the rotation trigger."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Collection, Iterable, Mapping

from .topology import NeighborGraph


class Role(enum.Enum):
    SG = "SG"
    CIC = "CIC"
    SM = "SM"
    SIC = "SIC"
    LN = "LN"

    @property
    def layer(self) -> int:
        return {"SG": 4, "CIC": 3, "SM": 2, "SIC": 2, "LN": 1}[self.value]


class Tier(enum.Enum):
    """Capacity class of a node; decides which roles it may be elected to."""

    GATEWAY = "gateway"
    HEAD = "head"
    SECTOR = "sector"
    LEAF = "leaf"

    def can_hold(self, role: Role) -> bool:
        if role is Role.CIC:
            return self is Tier.HEAD
        if role in (Role.SIC, Role.SM):
            return self in (Tier.HEAD, Tier.SECTOR)
        return role is Role.LN and self is not Tier.GATEWAY


@dataclass(frozen=True)
class Candidate:
    node: str
    energy: int
    degree: int = 0
    distance: float | None = None


@dataclass(frozen=True)
class ElectionRecord:
    tick: int
    role: Role
    winner: str
    candidates: tuple[Candidate, ...]
    cluster: str | None = None


class NoEligibleCandidate(Exception):
    pass


@dataclass
class Sector:
    sic: str
    members: frozenset[str]  # everything in the sector, SIC included
    sm: str | None = None

    @property
    def leaves(self) -> frozenset[str]:
        return self.members - {self.sic} - ({self.sm} if self.sm else set())


@dataclass
class Cluster:
    cic: str
    members: frozenset[str]  # CIC coverage, CIC and SG excluded
    sectors: list[Sector] = field(default_factory=list)

    def sector_of(self, node: str) -> Sector | None:
        for sector in self.sectors:
            if node in sector.members:
                return sector
        return None

    def role_of(self, node: str) -> Role | None:
        if node == self.cic:
            return Role.CIC
        sector = self.sector_of(node)
        if sector is None:
            return None
        if node == sector.sic:
            return Role.SIC
        if node == sector.sm:
            return Role.SM
        return Role.LN

    def holders(self) -> list[str]:
        out = [self.cic]
        for s in self.sectors:
            out.append(s.sic)
            if s.sm:
                out.append(s.sm)
        return out


def cic_order(c: Candidate) -> tuple:
    return (-c.energy, -c.degree, c.node)


def sic_order(c: Candidate) -> tuple:
    return (-c.energy, c.node)


def sm_order(c: Candidate) -> tuple:
    return (c.distance, c.node)


def live_degree(graph: NeighborGraph, node: str, alive: Collection[str]) -> int:
    return sum(1 for n in graph.neighbors(node) if n in alive)


def elect_cic(
    sg: str,
    graph: NeighborGraph,
    energies: Mapping[str, int],
    eligible: Collection[str] | None = None,
    *,
    tick: int = 0,
    exclude: Collection[str] = (),
) -> ElectionRecord:
    """Winner maximises (residual energy, degree) over the SG's neighbors; lowest id breaks ties.

    ``energies`` holds every alive node; degree counts alive neighbors only.
    """
    pool = [
        n for n in graph.neighbors(sg)
        if n in energies and n not in exclude and (eligible is None or n in eligible)
    ]
    if not pool:
        raise NoEligibleCandidate(f"SG {sg!r} has no eligible neighbor")
    cands = sorted(
        (Candidate(n, energies[n], live_degree(graph, n, energies)) for n in pool), key=cic_order
    )
    return ElectionRecord(tick, Role.CIC, cands[0].node, tuple(sorted(cands, key=lambda c: c.node)))


def cluster_members(
    cic: str, sg: str, graph: NeighborGraph, alive: Collection[str], claimed: Collection[str] = ()
) -> frozenset[str]:
    return frozenset(
        n for n in graph.neighbors(cic) if n != sg and n in alive and n not in claimed
    )


def elect_sics(
    cic: str,
    graph: NeighborGraph,
    energies: Mapping[str, int],
    count: int,
    members: Collection[str],
    eligible: Collection[str] | None = None,
    *,
    tick: int = 0,
) -> tuple[list[ElectionRecord], list[Sector], int]:
    """Pick the ``count`` highest-energy eligible cluster members as SICs, in order.

    Each SIC's sector is its neighborhood within the cluster minus nodes claimed by an
    earlier SIC (and minus the other SICs). Returns (records, sectors, shortfall).
    """
    members = frozenset(members)
    pool = [n for n in members if n in energies and (eligible is None or n in eligible)]
    records: list[ElectionRecord] = []
    winners: list[str] = []
    for _ in range(count):
        remaining = [Candidate(n, energies[n]) for n in pool if n not in winners]
        if not remaining:
            break
        best = min(remaining, key=sic_order)
        winners.append(best.node)
        records.append(
            ElectionRecord(tick, Role.SIC, best.node, tuple(sorted(remaining, key=lambda c: c.node)), cic)
        )

    claimed = set(winners)
    sectors = []
    for sic in winners:
        own = frozenset(n for n in graph.neighbors(sic) if n in members and n not in claimed)
        claimed |= own
        sectors.append(Sector(sic, own | {sic}))
    return records, sectors, count - len(winners)


def elect_sm(
    sector: Sector,
    cic: str,
    graph: NeighborGraph,
    eligible: Collection[str] | None = None,
    energies: Mapping[str, int] | None = None,
    *,
    tick: int = 0,
) -> ElectionRecord | None:
    """Sector member adjacent to the CIC, SIC excluded, nearest to the CIC (lowest id on ties).

    Returns None when the sector has no eligible member; it then runs without an SM.
    """
    nbrs = graph.neighbors(cic)
    pool = [
        Candidate(n, (energies or {}).get(n, 0), distance=graph.distance(n, cic))
        for n in sorted(sector.members)
        if n != sector.sic and n in nbrs and (eligible is None or n in eligible)
    ]
    if not pool:
        return None
    best = min(pool, key=sm_order)
    sector.sm = best.node
    return ElectionRecord(tick, Role.SM, best.node, tuple(pool), cic)


def needs_rotation(holder_energy: int, member_energies: Iterable[int], factor: Fraction) -> bool:
    """Holder residual below ``factor`` times the cluster mean."""
    values = list(member_energies)
    if not values:
        return False
    return holder_energy * len(values) < factor * sum(values)
