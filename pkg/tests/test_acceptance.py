"""Acceptance gate: one test per headline guarantee, one PASS/FAIL line each.

Each criterion prints `PASS n: ...` or `FAIL n: ...` with its elapsed time and
enforces the stated runtime budget. Expected values are frozen literals.
"""

import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from birdsim import (
    Band,
    Direction,
    FlightState,
    LinkModel,
    NodeKind,
    NodeProfile,
    Origin,
    Phase,
    PhasePredicate,
    PipelinePlacement,
    ProgramSpec,
    ProgramTableEntry,
    Scenario,
    Task,
    Waypoint,
    candidates_for,
    default_link_params,
    default_profiles,
    e2e_latency,
    load_scenario,
    metrics_to_csv,
    run,
    samples_to_csv,
    select_server,
    summary_to_json,
    trace_to_text,
)
from birdsim.cli import feasibility_report

from conftest import BUNDLED_SCENARIO, make_flat_bands

GOLDEN_DIR = Path(__file__).parent / "golden"


@contextmanager
def criterion(number, label, budget_s):
    start = time.perf_counter()
    done = False
    try:
        yield
        elapsed = time.perf_counter() - start
        assert elapsed < budget_s, (
            f"overran the {budget_s} s budget: {elapsed:.2f} s"
        )
        done = True
        print(f"PASS {number}: {label} ({elapsed:.2f} s)")
    finally:
        if not done:
            print(f"FAIL {number}: {label}")


# 1 ---------------------------------------------------------------------------

EXPECTED_BAND_MEANS = {
    Band.LOW_ALTITUDE: (356.77, 48.13, 20.06),
    Band.HIGH_ALTITUDE: (264.62, 37.12, 22.28),
    Band.ROTATION: (339.97, 57.99, 19.8),
}
EXPECTED_UL_STD = 11.83
EXPECTED_DL_STD = 72.09


def test_criterion_1_default_link_parameters_are_exact():
    with criterion(1, "default link parameters match the measured table "
                      "exactly", 1.0):
        params = default_link_params()
        assert set(params) == set(EXPECTED_BAND_MEANS)
        for band, (dl, ul, rtt) in EXPECTED_BAND_MEANS.items():
            p = params[band]
            assert p.dl_mean == dl
            assert p.ul_mean == ul
            assert p.rtt_mean == rtt
            assert p.ul_std == EXPECTED_UL_STD
            assert p.dl_std == EXPECTED_DL_STD


# 2 ---------------------------------------------------------------------------


def test_criterion_2_sampling_reproduces_the_configured_moments():
    with criterion(2, "10k-sample empirical moments land within 2% (mean) "
                      "and 10% (std) per band and direction", 5.0):
        link = LinkModel(noise_seed=0)
        probes = {
            Band.LOW_ALTITUDE: (30.0, False),
            Band.HIGH_ALTITUDE: (70.0, False),
            Band.ROTATION: (30.0, True),
        }
        for band, (altitude, rotating) in probes.items():
            p = link.params_for(band)
            for direction, mean, std in (
                (Direction.UL, p.ul_mean, p.ul_std),
                (Direction.DL, p.dl_mean, p.dl_std),
            ):
                draws = np.array([
                    link.sample_throughput(float(i), altitude, rotating,
                                           direction).throughput
                    for i in range(10_000)
                ])
                assert abs(draws.mean() - mean) <= 0.02 * mean, (band, direction)
                assert abs(draws.std() - std) <= 0.10 * std, (band, direction)


# 3 ---------------------------------------------------------------------------


def test_criterion_3_streaming_feasibility_booleans():
    with criterion(3, "25 Mbps uplink is sustainable in every regime and "
                      "150 Mbps in none", 1.0):
        link = LinkModel()
        for band in Band:
            ok_25, headroom_25 = link.sustainable_uplink(25.0, band)
            ok_150, headroom_150 = link.sustainable_uplink(150.0, band)
            assert ok_25 is True, band
            assert headroom_25 > 0
            assert ok_150 is False, band
            assert headroom_150 < 0
            assert "sustainable=yes" in feasibility_report(25.0, band)
            assert "sustainable=no" in feasibility_report(150.0, band)


# 4 ---------------------------------------------------------------------------


def test_criterion_4_latency_terms_are_exactly_additive():
    with criterion(4, "10k randomized cases sum the four latency terms with "
                      "zero tolerance; local runs keep the other terms at 0",
                   5.0):
        rng = np.random.default_rng(2024)
        locals_seen = 0
        for case in range(10_000):
            capacities = rng.uniform(5.0, 500.0, size=3)
            nodes = {
                0: NodeProfile(0, NodeKind.UAV5GP, float(capacities[0]),
                               battery_budget=1200.0),
                1: NodeProfile(1, NodeKind.ECS, float(capacities[1])),
                2: NodeProfile(2, NodeKind.GCS, float(capacities[2])),
            }
            program = ProgramSpec(
                "p", "object_detection",
                compute_cost=float(rng.uniform(0, 500)),
                input_payload=float(rng.uniform(0, 5e7)),
                output_payload=float(rng.uniform(0, 5e6)),
                encode_cost=float(rng.uniform(0, 20)),
                decode_cost=float(rng.uniform(0, 20)),
            )
            if case % 10 == 0:
                source = executor = consumer = int(rng.integers(0, 3))
            else:
                source, executor, consumer = (
                    int(v) for v in rng.integers(0, 3, size=3)
                )
            link = LinkModel(noise_seed=case)
            state = FlightState(t=float(rng.uniform(0, 1000)),
                                altitude=float(rng.uniform(0, 100)),
                                rotating=bool(rng.random() < 0.2))
            b = e2e_latency(
                program, PipelinePlacement(source, executor, consumer),
                nodes, link, state,
            )
            assert b.t_e2e == b.t_enc + b.t_comm + b.t_dec + b.t_proc
            if source == executor == consumer:
                locals_seen += 1
                assert b.t_enc == 0.0
                assert b.t_comm == 0.0
                assert b.t_dec == 0.0
        assert locals_seen >= 1000


# 5 ---------------------------------------------------------------------------


def _oracle_choice(program, candidates, nodes, link, state, consumer):
    """Brute-force rank (t_e2e, t_comm, server_id) over capable candidates."""
    frozen = link.mean()
    ranked = []
    for entry in candidates:
        if not entry.capable:
            continue
        placement = PipelinePlacement(0, entry.server_id, consumer)
        if entry.server_id in nodes:
            b = e2e_latency(program, placement, nodes, frozen, state)
            ranked.append(((b.t_e2e, b.t_comm, entry.server_id), entry.server_id))
        else:
            stand_in = dict(nodes)
            stand_in[entry.server_id] = NodeProfile(
                entry.server_id, NodeKind.ECS, float("inf")
            )
            legs = e2e_latency(program, placement, stand_in, frozen, state)
            total = legs.t_enc + legs.t_comm + entry.advertised_latency
            ranked.append(((total, legs.t_comm, entry.server_id), entry.server_id))
    ranked.sort()
    return ranked[0][1]


def test_criterion_5_selection_matches_the_exhaustive_oracle():
    with criterion(5, "1000 randomized instances (<=5 servers, <=10 programs) "
                      "agree with the brute-force argmin, tie-breaks included",
                   10.0):
        rng = np.random.default_rng(99)
        link = LinkModel(noise_seed=6)
        checked = 0
        for instance in range(1000):
            n_servers = int(rng.integers(1, 6))
            n_programs = int(rng.integers(1, 11))
            program_ids = [f"p{i}" for i in range(n_programs)]
            cached = frozenset(
                pid for pid in program_ids if rng.random() < 0.3
            )
            nodes = {
                0: NodeProfile(0, NodeKind.UAV5GP, 25.0, cached_programs=cached,
                               battery_budget=1200.0)
            }
            tables = []
            for sid in range(1, n_servers + 1):
                # repeated capacities provoke exact ties
                nodes[sid] = NodeProfile(
                    sid, NodeKind.ECS, float(rng.choice([50.0, 100.0, 100.0, 400.0]))
                )
                for pid in program_ids:
                    if rng.random() < 0.75:
                        tables.append(ProgramTableEntry(
                            sid, pid, capable=bool(rng.random() < 0.9)
                        ))
            if not any(e.capable and e.program_id == program_ids[0]
                       for e in tables):
                # every instance must expose at least one choosable candidate
                tables.append(ProgramTableEntry(1, program_ids[0]))
            if rng.random() < 0.3:
                # a server advertising latency without a compute profile
                tables.append(ProgramTableEntry(
                    9, program_ids[0],
                    advertised_latency=float(rng.uniform(0.001, 2.0)),
                ))
            programs = {
                pid: ProgramSpec(
                    pid, "object_detection",
                    compute_cost=float(rng.uniform(0, 300)),
                    input_payload=float(rng.uniform(0, 2e7)),
                    output_payload=float(rng.uniform(0, 2e6)),
                    encode_cost=float(rng.uniform(0, 10)),
                    decode_cost=float(rng.uniform(0, 10)),
                )
                for pid in program_ids
            }
            state = FlightState(t=float(rng.uniform(0, 500)),
                                altitude=float(rng.uniform(0, 100)))
            consumer = int(rng.choice(sorted(nodes)))
            instance_checked = False
            for pid in program_ids:
                candidates = candidates_for(pid, tables, nodes[0])
                if not candidates:
                    continue
                decision = select_server(programs[pid], candidates, nodes,
                                         link, state, consumer=consumer)
                expected = _oracle_choice(programs[pid], candidates, nodes,
                                          link, state, consumer)
                assert decision.chosen_server == expected, (instance, pid)
                instance_checked = True
            if instance_checked:
                checked += 1
        assert checked == 1000, f"only {checked} instances had candidates"


# 6 ---------------------------------------------------------------------------


def test_criterion_6_offload_decision_crosses_over():
    with criterion(6, "cheap work on a degraded channel stays on the platform; "
                      "heavy work on a good channel goes to the ground "
                      "station", 5.0):
        nodes = default_profiles()
        nodes[0] = replace(nodes[0], cached_programs=frozenset({"p"}))
        state = FlightState(t=0.0, altitude=30.0)
        candidates = candidates_for(
            "p", (ProgramTableEntry(1, "p"), ProgramTableEntry(2, "p")), nodes[0]
        )
        assert [c.server_id for c in candidates] == [0, 1, 2]

        cheap = ProgramSpec("p", "object_detection", compute_cost=5.0,
                            input_payload=1e7, output_payload=1e6,
                            encode_cost=1.0, decode_cost=1.0)
        degraded = LinkModel(bands=make_flat_bands(ul=1.0, dl=1.0, rtt=20.0))
        keep_local = select_server(cheap, candidates, nodes, degraded, state)
        assert keep_local.chosen_server == 0

        heavy = ProgramSpec("p", "object_detection", compute_cost=50_000.0,
                            input_payload=1e5, output_payload=1e4,
                            encode_cost=1.0, decode_cost=1.0)
        good = LinkModel()
        ship_out = select_server(heavy, candidates, nodes, good, state)
        assert ship_out.chosen_server == 2


# 7 ---------------------------------------------------------------------------


def _fuzz_scenario(rng, index):
    n_servers = int(rng.integers(1, 4))
    n_programs = int(rng.integers(1, 4))
    program_ids = [f"p{i}" for i in range(n_programs)]
    cached = frozenset({"p0"}) if rng.random() < 0.3 else frozenset()
    nodes = {
        0: NodeProfile(0, NodeKind.UAV5GP, 25.0, mobile=True,
                       cached_programs=cached, battery_budget=1200.0)
    }
    for sid in range(1, n_servers + 1):
        kind = NodeKind.ECS if rng.random() < 0.7 else NodeKind.GCS
        nodes[sid] = NodeProfile(
            sid, kind, float(rng.choice([50.0, 100.0, 400.0])),
            location=(float(rng.uniform(10.0, 2000.0)), 0.0, 0.0),
        )
    kinds = ["object_detection", "vr_stitching", "other"]
    programs = {
        pid: ProgramSpec(
            pid, kinds[int(rng.integers(0, 3))],
            compute_cost=float(rng.uniform(1, 80)),
            input_payload=float(rng.uniform(1e4, 3e6)),
            output_payload=float(rng.uniform(1e3, 5e5)),
            encode_cost=float(rng.uniform(0, 4)),
            decode_cost=float(rng.uniform(0, 4)),
        )
        for pid in program_ids
    }
    tables = tuple(
        ProgramTableEntry(sid, pid)
        for sid in range(1, n_servers + 1)
        for pid in program_ids
        if rng.random() < 0.8
    )
    duration = float(rng.integers(8, 24))
    tasks = []
    for i in range(int(rng.integers(1, 4))):
        size = int(rng.integers(1, n_programs + 1))
        required = tuple(
            str(p) for p in rng.choice(program_ids, size=size, replace=False)
        )
        tasks.append(Task(
            f"t{i}", required, Origin.COMMANDER_ORDER,
            issue_time=float(rng.uniform(0, duration / 2)),
            consumer=int(rng.choice(sorted(nodes))),
        ))
    phases = (
        Phase("open", completes_when=PhasePredicate(
            "elapsed", float(rng.uniform(0, duration)))),
        Phase("work", completes_when=PhasePredicate("task_completed", "t0")),
        Phase("close"),
    )
    loss = {
        sid: float(rng.uniform(0.0, 0.6)) for sid in range(1, n_servers + 1)
    }
    return Scenario(
        name=f"fuzz-{index}",
        duration=duration,
        nodes=nodes,
        programs=programs,
        tables=tables,
        tasks=tuple(tasks),
        phases=phases,
        flight_plan=(Waypoint(0.0, float(rng.uniform(0.0, 100.0))),),
        t_int=float(rng.choice([0.5, 1.0, 2.0])),
        seed=index,
        loss=loss,
    )


def _fields(line):
    return dict(part.split("=", 1) for part in line.split(" "))


def _replay_outstanding(trace):
    """Re-derive the outstanding-entry ledger from a trace and enforce the
    advancement gate; returns (entries added, entries removed)."""
    outstanding = {}
    last_tick = -1
    prev_tpos = 0
    added = removed = 0
    for line in trace:
        f = _fields(line)
        kind = f["kind"]
        tpos = int(f["tpos"])
        assert tpos >= prev_tpos, f"timeline moved backwards: {line}"
        if tpos > prev_tpos:
            # the advance happened after the previous record's bookkeeping,
            # or within this record before it issued anything itself
            legal_prev = all(t != last_tick for t in outstanding.values())
            legal_self = kind == "Flush" or (
                kind == "Tick" and not f["entries"]
            )
            assert legal_prev or legal_self, f"gated advance leaked: {line}"
        if kind == "Tick":
            last_tick = int(f["tick"])
            if f["entries"]:
                for key in f["entries"].split(";"):
                    outstanding[key] = int(key.split(":", 1)[0])
                    added += 1
        for field in ("resolved", "timed_out", "flushed"):
            raw = f.get(field, "")
            if raw:
                for key in raw.split(";"):
                    outstanding.pop(key)
                    removed += 1
        prev_tpos = tpos
    assert not outstanding, "entries left open after the flush"
    return added, removed


def test_criterion_7_conservation_and_gating_under_loss():
    with criterion(7, "100 randomized lossy runs conserve requests = "
                      "responses + timeouts and never advance past "
                      "outstanding work", 30.0):
        rng = np.random.default_rng(4242)
        for index in range(100):
            scenario = _fuzz_scenario(rng, index)
            result = run(scenario)
            counts = result.metrics.counts
            assert counts["requests"] == counts["responses"] + counts["timeouts"], (
                scenario.name
            )
            added, removed = _replay_outstanding(result.trace)
            assert added == counts["requests"], scenario.name
            assert removed == counts["responses"] + counts["timeouts"], (
                scenario.name
            )


# 8 ---------------------------------------------------------------------------


def test_criterion_8_reference_run_is_byte_reproducible():
    with criterion(8, "the bundled scenario at seed 42 reruns to "
                      "byte-identical trace and metrics", 5.0):
        scenario = load_scenario(BUNDLED_SCENARIO)
        assert scenario.seed == 42
        first = run(scenario, seed=42)
        second = run(scenario, seed=42)
        assert (trace_to_text(first.trace).encode()
                == trace_to_text(second.trace).encode())
        assert (metrics_to_csv(first.metrics).encode()
                == metrics_to_csv(second.metrics).encode())
        assert (samples_to_csv(first.metrics).encode()
                == samples_to_csv(second.metrics).encode())


# 9 ---------------------------------------------------------------------------


def test_criterion_9_reference_mission_matches_its_golden():
    with criterion(9, "the bundled mission completes within its battery "
                      "budget, orders every critical moment, and matches "
                      "the frozen golden outputs", 10.0):
        scenario = load_scenario(BUNDLED_SCENARIO)
        battery = scenario.nodes[0].battery_budget
        assert battery == 1200.0
        result = run(scenario)
        m = result.metrics

        assert m.tasks_completed() == len(m.tasks) == 4
        moments = m.moments.as_dict()
        assert all(v is not None for v in moments.values())
        recorded = list(moments.values())
        assert recorded == sorted(recorded)
        assert m.moments.termination <= battery
        span = m.moments.span("reported", "virtual_awareness")
        assert span is not None and span > 0

        golden_summary = (GOLDEN_DIR / "urban_fire_summary.json").read_text()
        golden_trace = (GOLDEN_DIR / "urban_fire_trace.log").read_text()
        assert summary_to_json(m) == golden_summary
        assert trace_to_text(result.trace) == golden_trace
