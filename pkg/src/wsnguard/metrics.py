"""Lifetime, energy, packet and detection-quality metrics recomputed from a run trace."""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

from .engine import RunTrace


class TraceError(ValueError):
    """Trace is truncated or lacks the records a metric needs."""


@dataclass
class RunMetrics:
    name: str
    seed: int
    fingerprint: str
    detection: bool
    end: int
    nodes: int
    lifetime_first_death: int
    first_death_censored: bool
    lifetime_half_dead: int
    half_dead_censored: bool
    deaths: int
    consumed: dict[str, int] = field(default_factory=dict)
    consumed_by_class: dict[str, int] = field(default_factory=dict)
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    to_sg: int = 0
    confirmed_intrusion: int = 0
    victims: tuple[str, ...] = ()
    isolated: tuple[str, ...] = ()
    tp: int = 0
    fp: int = 0
    fn: int = 0
    latency: dict[str, int] = field(default_factory=dict)

    @property
    def total_consumed(self) -> int:
        return sum(self.consumed.values())

    def flat(self) -> dict[str, object]:
        """Scalar view used by the key-value file and the CSV row."""
        out = {k: v for k, v in asdict(self).items() if not isinstance(v, (dict, tuple))}
        out["total_consumed"] = self.total_consumed
        out["victims"] = ";".join(self.victims)
        out["isolated"] = ";".join(self.isolated)
        out["mean_latency"] = (
            sum(self.latency.values()) / len(self.latency) if self.latency else ""
        )
        for cls, value in sorted(self.consumed_by_class.items()):
            out[f"consumed_{cls}"] = value
        return out

    def to_kv(self) -> str:
        lines = [f"{k}={_plain(v)}" for k, v in self.flat().items()]
        lines += [f"consumed.{n}={v}" for n, v in sorted(self.consumed.items())]
        lines += [f"latency.{n}={v}" for n, v in sorted(self.latency.items())]
        return "\n".join(lines) + "\n"


def _plain(value: object) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


CSV_FIELDS = (
    "name", "seed", "fingerprint", "detection", "end", "nodes",
    "lifetime_first_death", "first_death_censored", "lifetime_half_dead", "half_dead_censored",
    "deaths", "total_consumed", "sent", "delivered", "dropped", "to_sg",
    "confirmed_intrusion", "tp", "fp", "fn", "mean_latency", "victims", "isolated",
)


def csv_header() -> str:
    return ",".join(CSV_FIELDS) + "\n"


def csv_row(metrics: RunMetrics) -> str:
    flat = metrics.flat()
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([_plain(flat[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def compute(trace: RunTrace) -> RunMetrics:
    """Metrics for one complete run; ground truth comes from the logged attack plans."""
    records = trace.records
    if not records or records[0].kind != "HEADER":
        raise TraceError("trace has no HEADER record")
    if records[-1].kind != "END":
        raise TraceError("trace is truncated (no END record)")
    header, end = records[0], records[-1]
    end_tick = int(end["end"])

    node_class: dict[str, str] = {}
    for r in trace.of_kind("INIT"):
        if r["tier"] != "gateway":
            node_class[r.actor] = r["node_class"]

    consumed: Counter[str] = Counter()
    counts: Counter[str] = Counter()
    death_at: dict[str, int] = {}
    victims: set[str] = set()
    first_fire: dict[str, int] = {}
    isolated_at: dict[str, int] = {}
    confirmed = 0
    for r in records:
        kind = r.kind
        if kind == "ENERGY":
            if r.actor in node_class:
                consumed[r.actor] += int(r["amount"])
        elif kind == "DRAIN":
            consumed[r.actor] += int(r["idle"]) + int(r["sleep"])
        elif kind in ("SEND", "DELIVER", "DROP", "SINK"):
            counts[kind] += 1
        elif kind == "DEATH":
            death_at[r.actor] = int(r["at"])
        elif kind == "ATTACK_PLAN":
            targets = r.get("targets")
            if targets and targets != "-":
                victims.update(targets.split(","))
        elif kind == "FIRE":
            first_fire.setdefault(r["target"], r.tick)
        elif kind == "VERDICT":
            confirmed += r["confirmed"] == "1"
        elif kind == "ISOLATE":
            isolated_at[r["node"]] = r.tick

    n = len(node_class)
    ordered = sorted(death_at.values())
    first = ordered[0] if ordered else end_tick
    need = (n + 1) // 2
    half = ordered[need - 1] if n and len(ordered) >= need else end_tick

    by_class: Counter[str] = Counter()
    for node, amount in consumed.items():
        by_class[node_class[node]] += amount

    isolated = set(isolated_at)
    latency = {
        node: isolated_at[node] - first_fire[node]
        for node in sorted(isolated & victims) if node in first_fire
    }
    return RunMetrics(
        name=header["name"],
        seed=int(header["seed"]),
        fingerprint=header["fingerprint"],
        detection=header["detection"] == "1",
        end=end_tick,
        nodes=n,
        lifetime_first_death=first,
        first_death_censored=not ordered,
        lifetime_half_dead=half,
        half_dead_censored=not (n and len(ordered) >= need),
        deaths=len(ordered),
        consumed={node: consumed.get(node, 0) for node in sorted(node_class)},
        consumed_by_class=dict(sorted(by_class.items())),
        sent=counts["SEND"],
        delivered=counts["DELIVER"],
        dropped=counts["DROP"],
        to_sg=counts["SINK"],
        confirmed_intrusion=confirmed,
        victims=tuple(sorted(victims)),
        isolated=tuple(sorted(isolated)),
        tp=len(isolated & victims),
        fp=len(isolated - victims),
        fn=len(victims - isolated),
        latency=latency,
    )


@dataclass
class Comparison:
    fingerprint: str
    seed: int
    first_death_delta: int
    half_dead_delta: int
    consumed_delta_by_class: dict[str, int]
    violation: bool  # detection on died strictly earlier than detection off

    def to_kv(self) -> str:
        lines = [
            f"fingerprint={self.fingerprint}",
            f"seed={self.seed}",
            f"first_death_delta={self.first_death_delta}",
            f"half_dead_delta={self.half_dead_delta}",
            f"violation={int(self.violation)}",
        ]
        lines += [f"consumed_delta.{c}={v}" for c, v in sorted(self.consumed_delta_by_class.items())]
        return "\n".join(lines) + "\n"


def compare(on: RunMetrics, off: RunMetrics) -> Comparison:
    """Deltas are ``on - off``. Runs must come from the same scenario and seed."""
    if on.fingerprint != off.fingerprint or on.seed != off.seed:
        raise ValueError(
            f"cannot compare runs of different scenarios: {on.fingerprint}/{on.seed} "
            f"vs {off.fingerprint}/{off.seed}"
        )
    classes = set(on.consumed_by_class) | set(off.consumed_by_class)
    deltas = defaultdict(int)
    for c in classes:
        deltas[c] = on.consumed_by_class.get(c, 0) - off.consumed_by_class.get(c, 0)
    return Comparison(
        fingerprint=on.fingerprint,
        seed=on.seed,
        first_death_delta=on.lifetime_first_death - off.lifetime_first_death,
        half_dead_delta=on.lifetime_half_dead - off.lifetime_half_dead,
        consumed_delta_by_class=dict(sorted(deltas.items())),
        violation=on.lifetime_first_death < off.lifetime_first_death,
    )
