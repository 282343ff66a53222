import pytest

from wsnguard.engine import RunTrace
from wsnguard.oracle import verify


def _tamper(trace, old, new, count=1):
    text = trace.to_text()
    assert old in text
    return RunTrace.from_text(text.replace(old, new, count))


@pytest.mark.parametrize("name,seed", [("fig4", None), ("quiet", 0), ("sleep_targeted", 4), ("blind_flood", 1)])
@pytest.mark.parametrize("detection", [True, False])
def test_clean_traces_pass(traced, name, seed, detection):
    report = verify(traced(name, seed, detection))
    assert report.ok, report.summary()
    assert report.elections > 0


def test_detection_on_traces_are_checked(fig4_trace):
    report = verify(fig4_trace)
    assert report.classified == 8 and report.verdicts == 8 and report.elections == 5


def test_flipped_tag_detected(fig4_trace):
    bad = _tamper(fig4_trace, "tag=INVALID\treason=SLEEP_VIOLATION", "tag=VALID\treason=NONE")
    report = verify(bad)
    assert report.count("phase1") == 1 and not report.ok


def test_flipped_suspicion_detected(fig4_trace):
    bad = _tamper(fig4_trace, "threshold=39912400/1\tsuspected=1", "threshold=39912400/1\tsuspected=0")
    assert verify(bad).count("phase1") == 1


def test_wrong_count_detected(fig4_trace):
    bad = _tamper(fig4_trace, "role=SM\tcount=2", "role=SM\tcount=1")
    assert verify(bad).count("phase1") == 1


def test_flipped_verdict_detected(fig4_trace):
    bad = _tamper(fig4_trace, "phase2=DROP\tconfirmed=1", "phase2=FORWARD\tconfirmed=0")
    assert verify(bad).count("phase2") == 1


def test_wrong_election_winner_detected(fig4_trace):
    bad = _tamper(fig4_trace, "role=SIC\twinner=E", "role=SIC\twinner=G")
    report = verify(bad)
    assert report.count("elections") == 1
    assert "rule picks E" in report.summary()


def test_wrong_energy_amount_detected(fig4_trace):
    bad = _tamper(fig4_trace, "action=rx\tamount=30000\tresidual=29960000", "action=rx\tamount=20000\tresidual=29960000")
    assert verify(bad).count("energy") >= 1


def test_hidden_consumption_detected(fig4_trace):
    # dropping a debit line leaves every later residual inconsistent
    lines = fig4_trace.to_text().splitlines(keepends=True)
    idx = next(i for i, line in enumerate(lines) if "\tENERGY\tB\taction=tx" in line)
    bad = RunTrace.from_text("".join(lines[:idx] + lines[idx + 1:]))
    assert verify(bad).count("energy") >= 1


def test_post_isolation_send_detected(fig4_trace):
    lines = fig4_trace.to_text().splitlines(keepends=True)
    idx = next(i for i, line in enumerate(lines) if "\tISOLATE\t" in line)
    forged = "40\tSEND\tE\tpkt=999\tkind=DATA\tto=G\torigin=A\thop=1\tcreated=39\teta=41\n"
    bad = RunTrace.from_text("".join(lines[: idx + 1] + [forged] + lines[idx + 1:]))
    report = verify(bad)
    assert report.count("isolation") == 1


def test_first_hop_after_isolation_is_allowed(fig4_trace):
    lines = fig4_trace.to_text().splitlines(keepends=True)
    idx = next(i for i, line in enumerate(lines) if "\tISOLATE\t" in line)
    first_hop = "40\tDROP\tA\tpkt=998\tkind=DATA\torigin=A\thop=0\treason=isolated\n"
    assert verify(RunTrace.from_text("".join(lines[: idx + 1] + [first_hop] + lines[idx + 1:]))).ok


def test_missing_wakeup_detected(fig4_trace):
    lines = [line for line in fig4_trace.to_text().splitlines(keepends=True) if "\tWAKEUP\t" not in line]
    assert verify(RunTrace.from_text("".join(lines))).count("attacks") == 1
