"""Trace-replay oracle.

Re-derives the phase-1 tags, phase-2 verdicts, election winners, energy balance,
isolation and attack bookkeeping from the raw trace text alone. Nothing here calls
the simulator's detection, role or energy code, so agreement is a real cross-check.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction

from .engine import RunTrace, TraceRecord


@dataclass
class OracleReport:
    classified: int = 0
    elections: int = 0
    verdicts: int = 0
    mismatches: dict[str, list[str]] = field(default_factory=lambda: defaultdict(list))

    @property
    def ok(self) -> bool:
        return not any(self.mismatches.values())

    def add(self, check: str, message: str) -> None:
        self.mismatches[check].append(message)

    def count(self, check: str) -> int:
        return len(self.mismatches.get(check, ()))

    def summary(self) -> str:
        lines = [
            f"classified={self.classified} elections={self.elections} verdicts={self.verdicts}",
        ]
        for check, items in sorted(self.mismatches.items()):
            if items:
                lines.append(f"{check}: {len(items)} mismatch(es)")
                lines.extend(f"  {m}" for m in items[:10])
        lines.append("OK" if self.ok else "FAIL")
        return "\n".join(lines)


def _int(value: str | None) -> int | None:
    return None if value in (None, "-") else int(value)


@dataclass(frozen=True)
class _Profile:
    node: str
    period: int | None
    offset: int | None
    wake: int | None

    def awake(self, t: int) -> bool:
        if self.period is None:
            return False
        return (t - self.offset) % self.period < self.wake


class _AwakeTable:
    """Prefix counts of awake ticks, built by walking the clock tick by tick."""

    def __init__(self, period: int, offset: int, wake: int) -> None:
        self.period, self.offset, self.wake = period, offset, wake
        self.prefix = [0]

    def before(self, t: int) -> int:
        while len(self.prefix) <= t:
            tick = len(self.prefix) - 1
            awake = (tick - self.offset) % self.period < self.wake
            self.prefix.append(self.prefix[-1] + awake)
        return self.prefix[t]


def replay_phase1(trace: RunTrace, report: OracleReport) -> None:
    header = trace.header()
    th_rate = int(header["rate_threshold"])
    window = int(header["window"])
    margin = Fraction(header["margin"])
    idle, sleep = int(header["idle"]), int(header["sleep"])
    awake_table = _AwakeTable(int(header["ln_period"]), int(header["ln_offset"]), int(header["ln_wake"]))
    class_initial = {r.actor: int(r["initial"]) for r in trace.of_kind("CLASS")}
    node_class = {r.actor: r["node_class"] for r in trace.of_kind("INIT")}

    profiles: dict[int, _Profile] = {}
    seen: dict[tuple[str, str], deque[int]] = defaultdict(deque)
    for r in trace:
        if r.kind == "PROFILE":
            profiles[int(r["serial"])] = _Profile(
                r.actor, _int(r.get("period")), _int(r.get("offset")), _int(r.get("wake"))
            )
        elif r.kind == "DELIVER":
            if r["kind"] != "SLEEP_SIGNAL" and r.get("ignored") != "1":
                seen[(r.actor, r["origin"])].append(r.tick)
        elif r.kind == "CLASSIFY":
            report.classified += 1
            origin, t = r["origin"], r.tick
            created = int(r["created"])
            ticks = seen[(r.actor, origin)]
            count = sum(1 for x in ticks if t - window < x <= t)
            serial = _int(r.get("profile"))
            profile = profiles.get(serial) if serial is not None else None
            if profile is not None and profile.node != origin:
                profile = None
            asleep = profile is None or not profile.awake(created)
            if asleep:
                tag, reason = "INVALID", "SLEEP_VIOLATION"
            elif count > th_rate:
                tag, reason = "INVALID", "RATE_EXCEEDED"
            else:
                tag, reason = "VALID", "NONE"
            suspected = False
            residual = _int(r.get("residual"))
            cls = node_class.get(origin)
            if tag == "INVALID" and cls in class_initial and residual is not None:
                awake = awake_table.before(created)
                expected = max(0, class_initial[cls] - awake * idle - (created - awake) * sleep)
                suspected = residual < margin * expected
            got = (r["tag"], r["reason"], int(r["count"]), r["suspected"] == "1")
            want = (tag, reason, count, suspected)
            if got != want:
                report.add("phase1", f"t={t} pkt={r['pkt']} at {r.actor}: trace {got} != replay {want}")


def replay_phase2(trace: RunTrace, report: OracleReport) -> None:
    header = trace.header()
    window = int(header["window"])
    n_corr = int(header["corroboration"])
    invalid: dict[tuple[str, str], list[int]] = defaultdict(list)
    for r in trace.of_kind("VERDICT"):
        report.verdicts += 1
        if r["phase1"] != "INVALID":
            want = ("0", "FORWARD")
        else:
            hist = invalid[(r.actor, r["origin"])]
            hist.append(r.tick)
            n = sum(1 for x in hist if r.tick - window < x <= r.tick)
            if _int(r.get("invalid_count")) != n:
                report.add("phase2", f"verdict {r['verdict']}: invalid_count {r.get('invalid_count')} != {n}")
            confirmed = r["suspected"] == "1" and (r["reason"] == "SLEEP_VIOLATION" or n >= n_corr)
            want = ("1" if confirmed else "0", "DROP" if confirmed else "FORWARD")
        got = (r["confirmed"], r["phase2"])
        if got != want:
            report.add("phase2", f"verdict {r['verdict']}: trace {got} != replay {want}")


def _candidates(text: str) -> list[tuple[str, int, int, float | None]]:
    out = []
    for item in text.split(","):
        node, energy, degree, dist = item.split(":")
        out.append((node, int(energy), int(degree), None if dist == "-" else float(dist)))
    return out


def audit_elections(trace: RunTrace, report: OracleReport) -> None:
    for r in trace.of_kind("ELECTION"):
        report.elections += 1
        cands = _candidates(r["candidates"])
        role, winner = r["role"], r["winner"]
        if role == "CIC":
            best = cands[0]
            for c in cands[1:]:
                if (c[1], c[2]) > (best[1], best[2]) or ((c[1], c[2]) == (best[1], best[2]) and c[0] < best[0]):
                    best = c
        elif role == "SIC":
            best = cands[0]
            for c in cands[1:]:
                if c[1] > best[1] or (c[1] == best[1] and c[0] < best[0]):
                    best = c
        elif role == "SM":
            best = cands[0]
            for c in cands[1:]:
                if c[3] < best[3] or (c[3] == best[3] and c[0] < best[0]):
                    best = c
        else:
            report.add("elections", f"t={r.tick}: unknown role {role}")
            continue
        if best[0] != winner:
            report.add("elections", f"t={r.tick} {role}: logged winner {winner}, rule picks {best[0]}")


def audit_energy(trace: RunTrace, report: OracleReport) -> None:
    """Every debit moves the residual by exactly its amount; totals balance at the end."""
    initial: dict[str, int] = {}
    for r in trace.of_kind("INIT"):
        if r.get("energy") not in (None, "-"):
            initial[r.actor] = int(r["energy"])
    residual = dict(initial)
    spent: dict[str, int] = defaultdict(int)
    for r in trace:
        if r.kind == "ENERGY" and r.actor in initial:
            amount = int(r["amount"])
        elif r.kind == "DRAIN":
            amount = int(r["idle"]) + int(r["sleep"])
        else:
            if r.kind == "SAMPLE":
                _check_snapshot(r, residual, report)
            continue
        residual[r.actor] -= amount
        spent[r.actor] += amount
        if residual[r.actor] != int(r["residual"]) or residual[r.actor] < 0:
            report.add("energy", f"t={r.tick} {r.actor}: running residual {residual[r.actor]} != {r['residual']}")
    end = trace.records[-1]
    if end.kind != "END":
        report.add("energy", "trace has no END record")
        return
    _check_snapshot(end, residual, report)
    final = {n: int(v) for n, v in (item.rsplit(":", 1) for item in end["residuals"].split(","))}
    if sum(initial[n] - final[n] for n in initial) != sum(spent.values()):
        report.add("energy", "sum(initial - residual) differs from logged consumption")
    if sum(final.values()) != int(end["total_residual"]):
        report.add("energy", "END total_residual does not match per-node residuals")


def _check_snapshot(r: TraceRecord, residual: dict[str, int], report: OracleReport) -> None:
    for item in r["residuals"].split(","):
        node, value = item.rsplit(":", 1)
        if residual.get(node) != int(value):
            report.add("energy", f"t={r.tick} {r.kind}: {node} residual {value} != running {residual.get(node)}")


def audit_isolation(trace: RunTrace, report: OracleReport) -> None:
    """After isolation no packet from the node travels past its first hop."""
    isolated: dict[str, int] = {}
    for r in trace:
        if r.kind == "ISOLATE":
            isolated[r["node"]] = r.tick
        elif r.kind in ("SEND", "DELIVER", "SINK"):
            origin = r.get("origin")
            if origin in isolated:
                hop = _int(r.get("hop"))
                if r.kind == "SINK" or (hop is not None and hop >= 1):
                    report.add("isolation", f"t={r.tick} {r.kind} pkt={r['pkt']} from isolated {origin}")


def audit_attacks(trace: RunTrace, report: OracleReport) -> None:
    asleep_hits = sum(
        1 for r in trace.of_kind("DELIVER") if r["kind"] == "FAKE_REQUEST" and r.get("asleep") == "1"
    )
    wakeups = sum(1 for r in trace.of_kind("WAKEUP") if r.get("cause") == "fake_request")
    if asleep_hits != wakeups:
        report.add("attacks", f"{wakeups} forced wake-ups for {asleep_hits} fake requests to sleeping nodes")


def verify(trace: RunTrace) -> OracleReport:
    report = OracleReport()
    replay_phase1(trace, report)
    replay_phase2(trace, report)
    audit_elections(trace, report)
    audit_energy(trace, report)
    audit_isolation(trace, report)
    audit_attacks(trace, report)
    return report
