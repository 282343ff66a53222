"""Two-phase sleep-deprivation detection.

Phase 1 runs at the sector monitor: a packet is INVALID when its origin exceeded the
rate limit inside the sliding window or created it inside its own sleep window, and an
INVALID packet's origin is SUSPECTED when its reported residual is below the baseline
threshold. Phase 2 runs at the cluster-in-charge and only confirms an intrusion when the
suspicion is corroborated (see ``corroborated``).
"""

from __future__ import annotations

import enum
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .energy import SleepSchedule
from .protocol import Packet, Tag


class Reason(enum.Enum):
    NONE = "NONE"
    RATE_EXCEEDED = "RATE_EXCEEDED"
    SLEEP_VIOLATION = "SLEEP_VIOLATION"


class Decision(enum.Enum):
    FORWARD = "FORWARD"
    DROP = "DROP"


class WindowCounter:
    """Per-key event ticks; ``count`` covers the window (t - width, t]."""

    def __init__(self, width: int) -> None:
        if width <= 0:
            raise ValueError("window width must be positive")
        self.width = width
        self._seen: dict[str, deque[int]] = defaultdict(deque)

    def observe(self, key: str, t: int) -> None:
        self._seen[key].append(t)

    def count(self, key: str, t: int) -> int:
        ticks = self._seen.get(key)
        if not ticks:
            return 0
        while ticks and ticks[0] <= t - self.width:
            ticks.popleft()
        return len(ticks)


@dataclass(frozen=True)
class Phase1Result:
    tag: Tag
    reason: Reason
    count: int
    asleep: bool
    unprofiled: bool


def phase1_classify(
    packet: Packet,
    t: int,
    counter: WindowCounter,
    schedule_of: Callable[[str, int | None], SleepSchedule | None],
    rate_threshold: int,
) -> Phase1Result:
    """Tag ``packet`` (writes the tag). ``counter`` must already include this delivery.

    ``schedule_of`` returns the origin's schedule under the profile the packet was
    created with, or None when the origin has no such profile (treated as a sleep
    violation, conservatively).
    """
    count = counter.count(packet.origin, t)
    schedule = schedule_of(packet.origin, packet.profile)
    unprofiled = schedule is None
    asleep = unprofiled or not schedule.is_awake(packet.created_at)
    if asleep:
        tag, reason = Tag.INVALID, Reason.SLEEP_VIOLATION
    elif count > rate_threshold:
        tag, reason = Tag.INVALID, Reason.RATE_EXCEEDED
    else:
        tag, reason = Tag.VALID, Reason.NONE
    packet.set_tag(tag)
    return Phase1Result(tag, reason, count, asleep, unprofiled)


def phase1_suspect(sender_residual: int, threshold: Fraction | int) -> bool:
    return sender_residual < threshold


def corroborated(suspected: bool, reason: Reason, invalid_count: int, n_corr: int) -> bool:
    """Rule applied by the CIC before confirming an intrusion.

    A suspected origin is confirmed on a single sleep violation; a rate-only anomaly
    needs ``n_corr`` INVALID packets from it across the cluster within the window.
    """
    return suspected and (reason is Reason.SLEEP_VIOLATION or invalid_count >= n_corr)


@dataclass
class DetectionVerdict:
    verdict_id: int
    pkt_id: int
    origin: str
    phase1_tag: Tag
    suspected: bool
    phase1_reason: Reason
    phase2: Decision
    confirmed_intrusion: bool
    evidence: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.phase2 is Decision.DROP and not (
            self.phase1_tag is Tag.INVALID and self.confirmed_intrusion
        ):
            raise ValueError("DROP requires an INVALID, confirmed verdict")


class ClusterDecider:
    """Phase-2 state held by one CIC: INVALID history per origin across its cluster."""

    def __init__(self, window: int, n_corr: int) -> None:
        self.invalid = WindowCounter(window)
        self.n_corr = n_corr

    def decide(
        self,
        verdict_id: int,
        packet: Packet,
        t: int,
        suspected: bool,
        reason: Reason,
        evidence: dict | None = None,
    ) -> DetectionVerdict:
        evidence = dict(evidence or {})
        if packet.tag is Tag.VALID:
            return DetectionVerdict(
                verdict_id, packet.pkt_id, packet.origin, Tag.VALID, False, Reason.NONE,
                Decision.FORWARD, False, evidence,
            )
        self.invalid.observe(packet.origin, t)
        invalid_count = self.invalid.count(packet.origin, t)
        evidence["invalid_count"] = invalid_count
        confirmed = corroborated(suspected, reason, invalid_count, self.n_corr)
        return DetectionVerdict(
            verdict_id, packet.pkt_id, packet.origin, Tag.INVALID, suspected, reason,
            Decision.DROP if confirmed else Decision.FORWARD, confirmed, evidence,
        )


class IsolationList:
    """SG-held, append-only set of confirmed node ids."""

    def __init__(self, sg: str) -> None:
        self.sg = sg
        self._entries: dict[str, tuple[int, int]] = {}

    def isolate(self, node: str, tick: int, verdict_id: int) -> bool:
        """Returns False if the node was already isolated."""
        if node == self.sg:
            raise ValueError("the sink gateway cannot be isolated")
        if node in self._entries:
            return False
        self._entries[node] = (tick, verdict_id)
        return True

    def __contains__(self, node: object) -> bool:
        return node in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def since(self, node: str) -> int | None:
        entry = self._entries.get(node)
        return entry[0] if entry else None

    def members(self) -> list[str]:
        return sorted(self._entries)
