"""Packets, status profiles and the role-tree routing rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .energy import SleepSchedule
from .roles import Cluster, Role


class PacketKind(enum.Enum):
    QUERY = "QUERY"
    STATUS_RESPONSE = "STATUS_RESPONSE"
    STATUS_PROFILE = "STATUS_PROFILE"
    DATA_REQUEST = "DATA_REQUEST"
    DATA = "DATA"
    SLEEP_SIGNAL = "SLEEP_SIGNAL"
    FAKE_REQUEST = "FAKE_REQUEST"


class Tag(enum.Enum):
    UNTAGGED = "UNTAGGED"
    VALID = "VALID"
    INVALID = "INVALID"


# Control traffic from the SG reaches a node whatever its duty cycle.
CONTROL_KINDS = frozenset({PacketKind.QUERY, PacketKind.STATUS_PROFILE, PacketKind.SLEEP_SIGNAL})


@dataclass
class Packet:
    pkt_id: int
    kind: PacketKind
    origin: str
    dst: str
    created_at: int
    sender_residual: int | None = None
    profile: int | None = None  # serial of the origin's status profile when created
    tag: Tag = Tag.UNTAGGED
    size: int = 1
    hop: int = 0
    path: list[str] = field(default_factory=list)
    reclassified: bool = False
    reason: str | None = None  # phase-1 annotations carried to the CIC
    suspected: bool = False

    def set_tag(self, tag: Tag) -> None:
        if self.tag is not Tag.UNTAGGED:
            raise ValueError(f"packet {self.pkt_id} already tagged {self.tag.value}")
        if tag is Tag.UNTAGGED:
            raise ValueError("cannot reset a tag to UNTAGGED")
        self.tag = tag

    def reclassify(self) -> None:
        """CIC override of an unconfirmed INVALID tag; the phase-1 record stays in the trace."""
        if self.tag is not Tag.INVALID:
            raise ValueError("only INVALID packets can be reclassified")
        self.tag = Tag.VALID
        self.reclassified = True


@dataclass(frozen=True)
class StatusProfile:
    node: str
    role: Role | None
    schedule: SleepSchedule | None
    baseline_class: str
    issued_at: int
    serial: int
    cluster: str | None = None


def next_hop(cluster: Cluster, node: str, sg: str) -> str | None:
    """Parent of ``node`` in the data tree: LN -> SIC -> SM (or CIC) -> CIC -> SG."""
    role = cluster.role_of(node)
    if role is Role.CIC:
        return sg
    if role is None:
        return None
    sector = cluster.sector_of(node)
    if role is Role.LN:
        return sector.sic
    if role is Role.SIC:
        return sector.sm or cluster.cic
    return cluster.cic
