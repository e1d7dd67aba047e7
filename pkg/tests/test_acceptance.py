"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its measured runtime against the stated limit.

Everything here runs with the scripted provider only: no live LLM, no
network, no frontend. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import copy
import math
import random
import socket
import time
from pathlib import Path

import pytest
import yaml

from cellops.cellcalc import CellConfig, default_band_table, earfcn_to_freq, freq_to_earfcn, pci_conflicts, pci_decompose
from cellops.knowledge import DocChunk, build_index, retrieve
from cellops.scenario import Scenario, run_scenario
from cellops.station import Station

from conftest import BAND3_CONFIG
from test_station import drive, OPS

REPO = Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"


def report(name: str, elapsed: float, limit: float) -> None:
    print(f"\nACCEPTANCE {name}: PASS in {elapsed:.2f}s (limit {limit:g}s)")
    assert elapsed < limit, f"{name} exceeded its runtime limit: {elapsed:.2f}s >= {limit:g}s"


# --- criterion 1: exhaustive EARFCN round-trip --------------------------------


def test_earfcn_round_trip_exhaustive():
    t0 = time.perf_counter()
    table = default_band_table()
    checked = 0
    for band in table.bands():
        entry = table.get(band)
        for earfcn in range(entry.n_dl_min, entry.n_dl_max + 1):
            freq = earfcn_to_freq(band, earfcn)
            back = freq_to_earfcn(band, freq)
            assert back == earfcn
            assert earfcn_to_freq(band, back) == freq  # freq -> earfcn -> freq exact
            checked += 1
    assert checked >= 2000
    report(f"earfcn-round-trip ({checked} values over {len(table.bands())} bands)", time.perf_counter() - t0, 1.0)


# --- criterion 2: PCI identity + conflict oracle ------------------------------


def test_pci_decomposition_and_conflict_oracle():
    t0 = time.perf_counter()
    for pci in range(504):
        group, sector = pci_decompose(pci)
        assert 3 * group + sector == pci and 0 <= sector <= 2
    rng = random.Random(2024)
    for _ in range(10_000):
        pci = rng.randrange(504)
        neighbors = [rng.randrange(504) for _ in range(rng.randrange(0, 8))]
        expected = []
        for n in neighbors:
            if n == pci:
                expected.append((n, "collision"))
            elif n % 3 == pci % 3:
                expected.append((n, "mod3"))
        got = [(c.neighbor, c.kind) for c in pci_conflicts(pci, neighbors)]
        assert got == expected
    report("pci-decomposition + 10k conflict-oracle cases", time.perf_counter() - t0, 1.0)


# --- criterion 3: BM25 oracle equivalence -------------------------------------


def oracle_bm25(chunks, avg_len, query_terms, k):
    """Independent full-scan BM25 (k1=1.2, b=0.75) straight from the formula."""
    n = len(chunks)
    scored = []
    for chunk in chunks:
        score = 0.0
        for term in query_terms:
            tf = chunk.term_counts.get(term, 0)
            if tf == 0:
                continue
            df = sum(1 for c in chunks if term in c.term_counts)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            denom = tf + 1.2 * (1 - 0.75 + 0.75 * chunk.length_terms / avg_len)
            score += idf * (1.2 + 1) * tf / denom
        if score > 0:
            scored.append((chunk.chunk_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def test_bm25_oracle_equivalence():
    t0 = time.perf_counter()
    rng = random.Random(7)
    vocab = [f"term{i}" for i in range(25)] + ["power", "cell", "sync", "loss"]
    for _ in range(100):
        n_chunks = rng.randint(1, 50)
        chunks = [
            DocChunk.make("c", i, [], " ".join(rng.choices(vocab, k=rng.randint(1, 40))))
            for i in range(n_chunks)
        ]
        index = build_index(chunks)
        avg_len = sum(c.length_terms for c in chunks) / len(chunks)
        for _ in range(20):
            query_terms = rng.choices(vocab + ["absentword"], k=rng.randint(1, 3))
            k = rng.randint(1, 10)
            expected = oracle_bm25(chunks, avg_len, query_terms, k)
            got = retrieve(index, " ".join(query_terms), k)
            assert [cid for cid, _ in got] == [cid for cid, _ in expected]
            for (_, a), (_, b) in zip(got, expected):
                assert a == pytest.approx(b, rel=1e-12)

    # hand-computed toy ranking: equal tf and idf, shorter chunk wins
    toy = build_index(
        [
            DocChunk.make("toy", 0, [], "cell start failure power"),
            DocChunk.make("toy", 1, [], "power amplifier gain"),
            DocChunk.make("toy", 2, [], "cell bandwidth configuration"),
        ]
    )
    assert [cid for cid, _ in retrieve(toy, "power", 2)] == ["toy#1", "toy#0"]
    report("bm25-oracle (100 corpora x 20 queries + toy ranking)", time.perf_counter() - t0, 5.0)


# --- criterion 4: state-machine fuzz ------------------------------------------


def test_state_machine_fuzz_10k():
    t0 = time.perf_counter()
    rng = random.Random(20240)
    for round_no in range(10_000):
        station = Station(rng.getrandbits(32))
        last_time = 0.0
        for op in rng.choices(OPS, k=rng.randint(1, 12)):
            drive(station, op)  # asserts legal transitions + KPI sanity on ticks
            assert station.sim_time_s >= last_time
            last_time = station.sim_time_s
    report("state-machine fuzz (10k random sequences)", time.perf_counter() - t0, 10.0)


# --- criteria 5-7: shipped scenarios ------------------------------------------


def normalized_run(result) -> dict:
    d = copy.deepcopy(result.to_dict())
    for record in d["audit"]:
        record["ts"] = 0
    for turn in d["transcript"]:
        for call in turn["iterations"]:
            call["latency_ms"] = 0
    return d


def test_scenario_configure_band3():
    t0 = time.perf_counter()
    scenario = Scenario.load(SCENARIOS / "configure-band3.yaml")
    first = run_scenario(scenario)
    second = run_scenario(scenario)
    assert first.passed, [e.to_dict() for e in first.expects if not e.passed]
    turn = first.transcript[-1]
    assert len(turn["iterations"]) <= 6
    applied = CellConfig.from_dict(turn["proposed_diff"]["new"])
    assert applied.band == 3 and float(applied.bandwidth_mhz) == 10.0
    # attach success rate > 0 within 5 ticks of the start: the verification
    # read covers exactly that window
    read = next(c for c in turn["iterations"] if c["name"] == "station.read_kpi")
    samples = read["result"]["value"]["samples"][:5]
    assert any(s["attach_successes"] / s["attach_attempts"] > 0 for s in samples)
    assert normalized_run(first) == normalized_run(second)  # deterministic replay
    report("scenario configure-band3 (deterministic, <=6 calls)", time.perf_counter() - t0, 2.0)


def test_scenario_diagnose_sync_loss(manual_index):
    t0 = time.perf_counter()
    scenario = Scenario.load(SCENARIOS / "diagnose-sync-loss.yaml")
    result = run_scenario(scenario)
    assert result.passed, [e.to_dict() for e in result.expects if not e.passed]
    diagnosis = result.transcript[-1]
    # the matching manual chunk, located independently by its heading
    sync_chunk = next(c for c in manual_index.chunks if "Sync loss" in c.heading_path)
    assert sync_chunk.chunk_id in diagnosis["retrieved_citations"]
    assert "SYNC_LOSS" in diagnosis["final_answer"]
    kpi_reads = [c for c in diagnosis["iterations"] if c["name"] == "station.read_kpi"]
    assert kpi_reads, "diagnosis must read KPIs"
    recovery_samples = kpi_reads[-1]["result"]["value"]["samples"]
    assert recovery_samples[-1]["attach_successes"] > 0  # recovery restored attaches
    assert kpi_reads[0]["result"]["value"]["samples"][0]["attach_successes"] == 0  # fault was visible
    report("scenario diagnose-sync-loss (citation + recovery)", time.perf_counter() - t0, 2.0)


def test_scenario_rollback_on_regression():
    t0 = time.perf_counter()
    scenario = Scenario.load(SCENARIOS / "rollback-on-regression.yaml")
    result = run_scenario(scenario)
    assert result.passed, [e.to_dict() for e in result.expects if not e.passed]
    bad_turn = result.transcript[-1]
    assert bad_turn["outcome"] == "rolled_back"
    byte_equal = next(e for e in result.expects if "byte-equals" in e.description)
    assert byte_equal.passed
    report("scenario rollback-on-regression (byte-equal restore)", time.perf_counter() - t0, 2.0)


# --- criterion 8: guardrail over randomized turns ------------------------------


def scan_no_apply_without_validate(records) -> int:
    """Audit-log invariant: every successful apply_config is preceded, in the
    same turn, by a successful validate of the byte-identical config."""
    applies_checked = 0
    for i, record in enumerate(records):
        if record["kind"] != "tool_call":
            continue
        payload = record["payload"]
        if payload["name"] != "station.apply_config" or payload["status"] != "ok":
            continue
        applies_checked += 1
        wanted = CellConfig.from_dict(payload["args"]["config"]).canonical_json()
        earlier = [
            r["payload"]
            for r in records[:i]
            if r["kind"] == "tool_call" and r["turn_id"] == record["turn_id"]
        ]
        assert any(
            p["name"] == "config.validate"
            and p["status"] == "ok"
            and p["result"]["value"]["valid"] is True
            and CellConfig.from_dict(p["args"]["config"]).canonical_json() == wanted
            for p in earlier
        ), f"apply without same-turn validate at seq {record['seq']}"
    return applies_checked


def test_guardrail_over_randomized_scripted_turns(make_session):
    from cellops.agent import run_turn
    from cellops.providers import ProviderResponse as R

    rng = random.Random(99)
    good = BAND3_CONFIG
    other = {**BAND3_CONFIG, "pci": 300}
    bad = {**BAND3_CONFIG, "pci": 504}
    moves = [
        lambda: R.tool("config.validate", {"config": good}),
        lambda: R.tool("config.validate", {"config": bad}),
        lambda: R.tool("station.apply_config", {"config": good}),
        lambda: R.tool("station.apply_config", {"config": other}),  # never validated
        lambda: R.tool("station.apply_config", {"config": bad}),
        lambda: R.tool("station.get_state"),
        lambda: R.tool("station.read_kpi", {"ticks": 1}),
        lambda: R.tool("kb.search", {"query": "power", "k": 2}),
        lambda: R.tool("station.start"),
        lambda: R.tool("station.stop"),
    ]
    successful_applies = 0
    refused_applies = 0
    for turn_no in range(100):
        script = [rng.choice(moves)() for _ in range(rng.randint(1, 4))]
        if rng.random() < 0.5:  # seed a legal validate-then-apply pair into half the turns
            script = [moves[0](), moves[2]()] + script
        script += [R.text("done")]
        session = make_session(script, seed=turn_no, require_approval=False)
        turn = run_turn(session, f"randomized turn {turn_no}")
        assert len(turn.iterations) <= session.policy.max_iterations
        records = session.audit.records()
        successful_applies += scan_no_apply_without_validate(records)
        refused_applies += sum(
            1
            for r in records
            if r["kind"] == "tool_call"
            and r["payload"]["name"] == "station.apply_config"
            and r["payload"]["status"] == "refused"
        )
    assert successful_applies > 0, "the randomized pool never exercised a legal apply"
    assert refused_applies > 0, "the randomized pool never exercised the guardrail refusal"
    print(
        f"\nACCEPTANCE guardrail-scan: PASS ({successful_applies} legal applies, "
        f"{refused_applies} refused, across 100 turns)"
    )


# --- criterion 9: fully offline ------------------------------------------------


def test_runs_offline_with_scripted_provider_only(monkeypatch):
    for path in sorted(SCENARIOS.glob("*.yaml")):
        data = yaml.safe_load(path.read_text())
        assert data["provider"]["kind"] == "scripted", f"{path.name} would need a live provider"

    def refuse(*args, **kwargs):
        raise AssertionError("network use attempted during offline acceptance run")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.delenv("CELLOPS_API_KEY", raising=False)
    scenario = Scenario.load(SCENARIOS / "configure-band3.yaml")
    result = run_scenario(scenario)
    assert result.passed
    print("\nACCEPTANCE offline: PASS (scenarios scripted; sockets blocked; no credential)")
