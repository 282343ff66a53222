"""External sleep-deprivation intruder that sends fake data requests to its targets."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .energy import SleepSchedule
from .topology import Position


class AttackMode(enum.Enum):
    SLEEP_TARGETED = "sleep_targeted"  # fire only when the target is scheduled asleep
    BLIND = "blind"


@dataclass(frozen=True)
class AttackPlan:
    attacker: str
    targets: tuple[str, ...]
    start: int
    stop: int
    period: int
    mode: AttackMode = AttackMode.SLEEP_TARGETED
    random_targets: int = 0  # extra LN targets drawn after the first election
    position: Position | None = None  # None: every target is in range
    radio_range: float | None = None
    energy: int | None = None  # micro-units; None is unlimited

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError("fire period must be >= 1")
        if self.stop < self.start:
            raise ValueError("attack stop precedes start")

    def fire_ticks(self, horizon: int) -> range:
        return range(self.start, min(self.stop, horizon), self.period)


class Attacker:
    def __init__(self, plan: AttackPlan, targets: tuple[str, ...] | None = None) -> None:
        self.plan = plan
        self.targets: tuple[str, ...] = targets if targets is not None else plan.targets
        self.energy = plan.energy
        self.sent = 0

    @property
    def id(self) -> str:
        return self.plan.attacker

    @property
    def exhausted(self) -> bool:
        return self.energy is not None and self.energy <= 0

    def in_range(self, target_position: Position) -> bool:
        if self.plan.position is None or self.plan.radio_range is None:
            return True
        return self.plan.position.distance(target_position) <= self.plan.radio_range

    def wants_fire(self, schedule: SleepSchedule | None, delivery_tick: int) -> bool:
        """SLEEP_TARGETED fires only if the target will be scheduled asleep on delivery."""
        if self.plan.mode is AttackMode.BLIND:
            return True
        return schedule is None or not schedule.is_awake(delivery_tick)

    def spend(self, cost: int) -> int:
        """Debit one transmission; returns the amount taken (0 when exhausted)."""
        self.sent += 1
        if self.energy is None:
            return 0
        taken = min(cost, self.energy)
        self.energy -= taken
        return taken
