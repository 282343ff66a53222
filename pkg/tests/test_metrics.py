import pytest

from conftest import fig4_nodes
from wsnguard.config import validate_data
from wsnguard.engine import RunTrace
from wsnguard.metrics import CSV_FIELDS, TraceError, compare, compute, csv_header, csv_row
from wsnguard.simulation import run


def _quiet_fig4(horizon=300, detection=True):
    data = fig4_nodes(attacks=[], horizon=horizon)
    data["detection"] = {"enabled": detection}
    return validate_data(data)


def test_no_attack_run_has_no_false_positives(traced):
    m = compute(traced("quiet", 0))
    assert m.fp == 0 and m.confirmed_intrusion == 0
    assert m.victims == () and m.tp == 0 and m.fn == 0 and m.latency == {}


def test_case1_true_positive_and_latency(fig4_trace):
    m = compute(fig4_trace)
    fire = fig4_trace.of_kind("FIRE")[0].tick
    isolate = fig4_trace.of_kind("ISOLATE")[0].tick
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)
    assert m.victims == ("A",) and m.isolated == ("A",)
    assert m.latency == {"A": isolate - fire} == {"A": 4}


@pytest.mark.parametrize("name,seed", [("fig4", None), ("quiet", 2), ("sleep_targeted", 1), ("blind_flood", 2)])
def test_consumed_matches_init_minus_end(traced, name, seed):
    trace = traced(name, seed)
    m = compute(trace)
    initial = {r.actor: int(r["energy"]) for r in trace.of_kind("INIT") if r["energy"] != "-"}
    final = dict(item.rsplit(":", 1) for item in trace.records[-1]["residuals"].split(","))
    assert m.consumed == {n: initial[n] - int(final[n]) for n in initial}
    assert sum(m.consumed_by_class.values()) == m.total_consumed


def test_tp_plus_fn_is_victim_count(traced):
    for seed in range(4):
        m = compute(traced("blind_flood", seed))
        assert m.tp + m.fn == len(m.victims)
        assert m.fp == len(set(m.isolated) - set(m.victims))


def test_lifetimes_from_deaths(traced):
    trace = traced("blind_flood", 0, False)
    m = compute(trace)
    deaths = sorted(int(r["at"]) for r in trace.of_kind("DEATH"))
    assert m.lifetime_first_death == deaths[0] and not m.first_death_censored
    assert m.deaths == len(deaths)
    if len(deaths) < (m.nodes + 1) // 2:
        assert m.half_dead_censored and m.lifetime_half_dead == m.end


def test_identical_runs_compare_to_zero(fig4_trace):
    a = compute(fig4_trace)
    cmp = compare(a, compute(run(validate_data(fig4_nodes()))))
    assert cmp.first_death_delta == 0 and cmp.half_dead_delta == 0
    assert set(cmp.consumed_delta_by_class.values()) == {0}
    assert not cmp.violation


def test_no_attack_pair_differs_by_processing_only():
    on_cfg, off_cfg = _quiet_fig4(detection=True), _quiet_fig4(detection=False)
    on, off = run(on_cfg), run(off_cfg)
    proc = round(on_cfg.costs.processing * 1_000_000)
    decisions = len(on.of_kind("CLASSIFY")) + len(on.of_kind("VERDICT"))
    assert decisions > 0 and not off.of_kind("CLASSIFY", "VERDICT")
    m_on, m_off = compute(on), compute(off)
    assert m_on.total_consumed - m_off.total_consumed == decisions * proc
    cmp = compare(m_on, m_off)
    assert sum(cmp.consumed_delta_by_class.values()) == decisions * proc
    assert all(v >= 0 for v in cmp.consumed_delta_by_class.values())


def test_recompute_from_serialized_trace(traced):
    for name, seed in (("fig4", None), ("sleep_targeted", 2)):
        trace = traced(name, seed)
        again = compute(RunTrace.from_text(trace.to_text()))
        assert again == compute(trace)


def test_truncated_trace_rejected(fig4_trace):
    truncated = RunTrace(fig4_trace.records[:-1])
    with pytest.raises(TraceError, match="truncated"):
        compute(truncated)
    with pytest.raises(TraceError):
        compute(RunTrace(fig4_trace.records[1:]))


def test_compare_rejects_mismatched_runs(fig4_trace, traced):
    with pytest.raises(ValueError, match="different scenarios"):
        compare(compute(fig4_trace), compute(traced("quiet", 0)))
    with pytest.raises(ValueError):
        compare(compute(traced("quiet", 0)), compute(traced("quiet", 1)))


def test_detection_flag_keeps_fingerprint(traced):
    on, off = compute(traced("sleep_targeted", 0, True)), compute(traced("sleep_targeted", 0, False))
    assert on.fingerprint == off.fingerprint and on.detection and not off.detection
    assert not compare(on, off).violation


def test_kv_and_csv_outputs(fig4_trace):
    m = compute(fig4_trace)
    kv = dict(line.split("=", 1) for line in m.to_kv().splitlines())
    assert kv["tp"] == "1" and kv["isolated"] == "A" and kv["latency.A"] == "4"
    assert kv["detection"] == "1" and int(kv["total_consumed"]) == m.total_consumed
    header, row = csv_header(), csv_row(m)
    assert header.strip().split(",") == list(CSV_FIELDS)
    values = dict(zip(CSV_FIELDS, row.strip().split(",")))
    assert values["name"] == "fig4" and values["victims"] == "A" and values["mean_latency"] == "4.0"
