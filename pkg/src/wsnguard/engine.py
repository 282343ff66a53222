"""Discrete-event kernel: integer clock, (time, seq) ordered queue, trace log."""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, NamedTuple


class EventKind(enum.Enum):
    PACKET_DELIVERY = "PacketDelivery"
    WAKE_UP = "WakeUp"
    SLEEP_START = "SleepStart"
    ELECTION_TICK = "ElectionTick"
    ATTACKER_FIRE = "AttackerFire"
    METRICS_SAMPLE = "MetricsSample"
    DISCOVERY = "Discovery"
    COLLECTION_ROUND = "CollectionRound"
    NODE_ARRIVAL = "NodeArrival"
    DEPLETION = "Depletion"


@dataclass(order=True, frozen=True)
class Event:
    at: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class SchedulingError(RuntimeError):
    """An event was scheduled in the past. Always a logic bug."""


class Scheduler:
    """Min-heap of events keyed by (tick, insertion sequence)."""

    def __init__(self) -> None:
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0

    def schedule(self, at: int, kind: EventKind, payload: Any = None) -> Event:
        if at < self.now:
            raise SchedulingError(f"cannot schedule {kind.value} at t={at}, clock is {self.now}")
        if kind is EventKind.PACKET_DELIVERY and not payload:
            raise ValueError("PacketDelivery needs a payload")
        event = Event(at, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def peek_time(self) -> int | None:
        return self._queue[0].at if self._queue else None

    def pop(self) -> Event:
        event = heapq.heappop(self._queue)
        self.now = event.at
        return event

    def __len__(self) -> int:
        return len(self._queue)


def derive_rng(seed: int, purpose: str) -> random.Random:
    """Independent, reproducible stream per purpose; str seeds hash with sha512."""
    return random.Random(f"{seed}/{purpose}")


def _fmt(value: Any) -> str:
    t = type(value)
    if t is int or t is str:
        return str(value)
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, enum.Enum):
        return str(value.value)
    return str(value)


class TraceRecord(NamedTuple):
    tick: int
    kind: str
    actor: str
    fields: tuple[tuple[str, Any], ...] = ()  # values are formatted on read

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.fields:
            if k == key:
                return _fmt(v)
        return default

    def __getitem__(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise KeyError(key)
        return value

    def line(self) -> str:
        parts = [str(self.tick), self.kind, self.actor]
        parts.extend(f"{k}={_fmt(v)}" for k, v in self.fields)
        return "\t".join(parts)

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) < 3:
            raise ValueError(f"malformed trace line: {line!r}")
        fields = []
        for part in parts[3:]:
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"malformed field {part!r} in trace line")
            fields.append((key, value))
        return cls(int(parts[0]), parts[1], parts[2], tuple(fields))


_new_record = tuple.__new__  # skips the generated NamedTuple constructor on the hot path


class RunTrace:
    """Ordered run log. One record per line, tab separated: tick, kind, actor, key=value..."""

    def __init__(self, records: Iterable[TraceRecord] = ()) -> None:
        self.records: list[TraceRecord] = list(records)

    def log(self, tick: int, kind: str, actor: str, /, **fields: Any) -> TraceRecord:
        # callers pass immutable values only, so formatting can wait until the record is read
        record = _new_record(TraceRecord, (tick, kind, actor, tuple(fields.items())))
        self.records.append(record)
        return record

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, *kinds: str) -> list[TraceRecord]:
        return [r for r in self.records if r.kind in kinds]

    def header(self) -> TraceRecord:
        if not self.records or self.records[0].kind != "HEADER":
            raise ValueError("trace has no HEADER record")
        return self.records[0]

    def to_text(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "RunTrace":
        return cls(TraceRecord.parse(line) for line in text.splitlines() if line.strip())

    @classmethod
    def read(cls, path: str | Path) -> "RunTrace":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))
