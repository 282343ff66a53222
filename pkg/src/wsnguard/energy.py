"""Per-node energy accounting in integer micro-units, duty cycles and the expected-energy baseline.

Background (idle/sleep) drain is charged lazily in closed form whenever a node is
synced, so the kernel never needs per-tick events.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Mapping

MICRO = 1_000_000


def to_micro(value: float | int | str | Decimal) -> int:
    """Scale a decimal energy quantity to integer micro-units."""
    scaled = Decimal(str(value)) * MICRO
    if scaled < 0:
        raise ValueError(f"energy quantity must be non-negative, got {value}")
    return int(scaled.to_integral_value())


def from_micro(value: int | Fraction) -> float:
    return float(value) / MICRO


class Action(enum.Enum):
    TRANSMIT = "tx"
    RECEIVE = "rx"
    SENSE = "sense"
    IDLE = "idle"
    SLEEP = "sleep"
    PROCESSING = "proc"
    FORCED_WAKE = "wake"


@dataclass(frozen=True)
class SleepSchedule:
    """Awake at tick t iff (t - wake_offset) mod period < wake_len."""

    period: int
    wake_offset: int
    wake_len: int

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("period must be positive")
        if not 0 < self.wake_len <= self.period:
            raise ValueError("need 0 < wake_len <= period")
        if not 0 <= self.wake_offset < self.period:
            raise ValueError("need 0 <= wake_offset < period")

    @property
    def duty_cycle(self) -> Fraction:
        return Fraction(self.wake_len, self.period)

    @property
    def always_on(self) -> bool:
        return self.wake_len == self.period

    def is_awake(self, t: int) -> bool:
        return (t - self.wake_offset) % self.period < self.wake_len

    def _partial(self, r: int) -> int:
        # awake residues are [o, min(o+L, P)) plus the wrapped part [0, o+L-P)
        o, L, P = self.wake_offset, self.wake_len, self.period
        head = max(0, min(r, min(o + L, P)) - o)
        tail = min(r, max(0, o + L - P))
        return head + tail

    def awake_before(self, t: int) -> int:
        """Number of awake ticks in [0, t)."""
        q, r = divmod(t, self.period)
        return q * self.wake_len + self._partial(r)

    def awake_between(self, t0: int, t1: int) -> int:
        return self.awake_before(t1) - self.awake_before(t0)

    def next_awake(self, t: int) -> int:
        d = (t - self.wake_offset) % self.period
        return t if d < self.wake_len else t + (self.period - d)


ALWAYS_ON = SleepSchedule(1, 0, 1)


_COST_FIELD = {
    Action.TRANSMIT: "transmit",
    Action.RECEIVE: "receive",
    Action.SENSE: "sense",
    Action.IDLE: "idle",
    Action.SLEEP: "sleep",
    Action.PROCESSING: "processing",
}


@dataclass(frozen=True)
class CostTable:
    transmit: int
    receive: int
    sense: int
    idle: int
    sleep: int
    processing: int

    def __post_init__(self) -> None:
        for name in ("transmit", "receive", "sense", "idle", "sleep", "processing"):
            if getattr(self, name) < 0:
                raise ValueError(f"cost {name} must be >= 0")
        if not self.sleep < self.idle:
            raise ValueError("sleep cost must be below idle-listen cost")

    def of(self, action: Action) -> int:
        return getattr(self, _COST_FIELD[action])


@dataclass
class NodeEnergy:
    """Residual energy of one node. ``schedule=None`` means radio off (deep sleep)."""

    initial: int
    schedule: SleepSchedule | None
    last_sync: int = 0
    residual: int = field(init=False)
    consumed: Counter = field(init=False)
    dead_at: int | None = None

    def __post_init__(self) -> None:
        if self.initial < 0:
            raise ValueError("initial energy must be >= 0")
        self.residual = self.initial
        self.consumed = Counter()

    @property
    def dead(self) -> bool:
        return self.dead_at is not None

    def _awake_between(self, t0: int, t1: int) -> int:
        return self.schedule.awake_between(t0, t1) if self.schedule is not None else 0

    def background_cost(self, t0: int, t1: int, costs: CostTable) -> tuple[int, int]:
        """(idle, sleep) drain over ticks [t0, t1)."""
        awake = self._awake_between(t0, t1)
        return awake * costs.idle, (t1 - t0 - awake) * costs.sleep

    def _drain_until(self, t1: int, costs: CostTable) -> int:
        idle, sleep = self.background_cost(self.last_sync, t1, costs)
        return idle + sleep

    def _awake_at(self, t: int) -> bool:
        return self.schedule is not None and self.schedule.is_awake(t)

    def predict_depletion(self, costs: CostTable, limit: int) -> int | None:
        """First tick t* <= limit by which background drain alone exhausts the node."""
        if self.dead or self._drain_until(limit, costs) < self.residual:
            return None
        lo, hi = self.last_sync, limit  # drain(lo) < residual <= drain(hi)
        if self.residual == 0:
            return lo
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self._drain_until(mid, costs) >= self.residual:
                hi = mid
            else:
                lo = mid
        return hi

    def sync(self, t: int, costs: CostTable) -> list[tuple[Action, int]]:
        """Charge background drain up to tick t. Returns the debits taken."""
        if self.dead or t <= self.last_sync:
            return []
        idle, sleep = self.background_cost(self.last_sync, t, costs)
        death = None
        if idle + sleep >= self.residual:
            death = self.predict_depletion(costs, t)
            idle, sleep = self.background_cost(self.last_sync, death, costs)
        if death is not None:
            overflow = idle + sleep - self.residual
            if self._awake_at(death - 1):
                idle -= overflow
            else:
                sleep -= overflow
        debits = [(a, amt) for a, amt in ((Action.IDLE, idle), (Action.SLEEP, sleep)) if amt > 0]
        for action, amount in debits:
            self.residual -= amount
            self.consumed[action] += amount
        self.last_sync = t
        if death is not None:
            self.residual = 0
            self.dead_at = death
        return debits

    def consume(self, action: Action, amount: int, t: int) -> int:
        """Debit ``amount`` (clamped to the residual). Returns what was actually taken."""
        if self.dead:
            return 0
        taken = min(amount, self.residual)
        self.residual -= taken
        self.consumed[action] += taken
        if self.residual <= 0:
            self.residual = 0
            self.dead_at = t
        return taken

    def set_schedule(self, schedule: SleepSchedule | None) -> None:
        self.schedule = schedule


@dataclass(frozen=True)
class EnergyBaseline:
    """Expected residual of a node class that follows its duty cycle with no traffic.

    The curve tracks the schedule's exact awake-tick count, so an idle node sits on it.
    """

    initial: int
    schedule: SleepSchedule
    idle: int
    sleep: int
    margin: Fraction

    def __post_init__(self) -> None:
        if not 0 < self.margin < 1:
            raise ValueError("margin must be in (0, 1)")

    def expected(self, t: int) -> int:
        awake = self.schedule.awake_before(t)
        return max(0, self.initial - awake * self.idle - (t - awake) * self.sleep)

    def threshold(self, t: int) -> Fraction:
        return self.margin * self.expected(t)


def threshold_re(baselines: Mapping[str, EnergyBaseline], node_class: str, t: int) -> Fraction:
    try:
        baseline = baselines[node_class]
    except KeyError:
        raise KeyError(f"no energy baseline registered for class {node_class!r}") from None
    return baseline.threshold(t)
