"""Fleet profiles, program/task validation, and critical-moment bookkeeping."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from birdsim import (
    PRE_ARRIVAL_BUDGET_S,
    AlreadySet,
    CriticalMoments,
    MissionTimeline,
    NodeKind,
    NodeProfile,
    OrderingViolation,
    Origin,
    Phase,
    PhasePredicate,
    ProgramSpec,
    Task,
    default_profiles,
    record_moment,
    validate_fleet,
    validate_node,
)
from birdsim.model import MOMENT_NAMES


# ------------------------------------------------------------------ profiles


def test_default_profiles_capacities_and_kinds():
    nodes = default_profiles()
    assert set(nodes) == {0, 1, 2}
    assert nodes[0].kind is NodeKind.UAV5GP
    assert nodes[1].kind is NodeKind.ECS
    assert nodes[2].kind is NodeKind.GCS
    assert nodes[0].compute_capacity == 25.0
    assert nodes[1].compute_capacity == 100.0
    assert nodes[2].compute_capacity == 400.0
    # capability strictly increases toward the ground station
    assert nodes[0].compute_capacity < nodes[1].compute_capacity < nodes[2].compute_capacity


def test_default_platform_battery_is_pre_arrival_budget():
    nodes = default_profiles()
    assert nodes[0].battery_budget == PRE_ARRIVAL_BUDGET_S == 1200.0
    assert nodes[1].battery_budget is None
    assert nodes[2].battery_budget is None


def test_validate_node_reserves_index_zero_for_the_platform():
    bad = NodeProfile(node_id=0, kind=NodeKind.ECS, compute_capacity=10.0)
    issue = validate_node(bad)
    assert issue is not None and "reserved for the aerial platform" in issue


def test_validate_node_rejects_battery_beyond_budget():
    bad = NodeProfile(
        node_id=0, kind=NodeKind.UAV5GP, compute_capacity=10.0,
        battery_budget=PRE_ARRIVAL_BUDGET_S + 1,
    )
    issue = validate_node(bad)
    assert issue is not None and "battery_budget" in issue


def test_validate_node_rejects_battery_on_servers():
    bad = NodeProfile(
        node_id=1, kind=NodeKind.ECS, compute_capacity=10.0, battery_budget=100.0
    )
    issue = validate_node(bad)
    assert issue is not None and "aerial platform" in issue


def test_validate_fleet_requires_exactly_one_platform_at_zero():
    nodes = default_profiles()
    no_uav = {k: v for k, v in nodes.items() if k != 0}
    assert validate_fleet(no_uav) is not None
    assert validate_fleet(nodes) is None


def test_validate_fleet_rejects_key_id_mismatch():
    nodes = default_profiles()
    nodes[5] = nodes.pop(1)
    assert validate_fleet(nodes) is not None


# ---------------------------------------------------------- programs / tasks


def test_program_spec_rejects_negative_costs():
    with pytest.raises(ValueError):
        ProgramSpec("p", "object_detection", compute_cost=-1.0,
                    input_payload=0.0, output_payload=0.0)
    with pytest.raises(ValueError):
        ProgramSpec("p", "object_detection", compute_cost=1.0,
                    input_payload=-5.0, output_payload=0.0)


def test_task_requires_programs():
    with pytest.raises(ValueError):
        Task("t", required_programs=(), origin=Origin.COMMANDER_ORDER, issue_time=0.0)


def test_phase_predicate_rejects_unknown_kind():
    with pytest.raises(ValueError):
        PhasePredicate("sometimes")


# --------------------------------------------------------- critical moments


def test_record_moment_happy_chain():
    m = CriticalMoments()
    for name, t in [
        ("start", 0.0), ("observed", 5.0), ("reported", 12.0),
        ("virtual_awareness", 30.0), ("physical_awareness", 300.0),
        ("termination", 400.0),
    ]:
        m = record_moment(m, name, t)
    d = m.as_dict()
    assert list(d) == list(MOMENT_NAMES)
    assert d["virtual_awareness"] == 30.0
    assert m.span("reported", "virtual_awareness") == 18.0


def test_record_moment_rejects_unknown_name():
    with pytest.raises(ValueError):
        record_moment(CriticalMoments(), "awareness", 1.0)


def test_record_moment_write_once():
    m = record_moment(CriticalMoments(), "start", 1.0)
    with pytest.raises(AlreadySet):
        record_moment(m, "start", 2.0)


def test_record_moment_rejects_report_before_observation():
    m = record_moment(CriticalMoments(), "observed", 10.0)
    with pytest.raises(OrderingViolation):
        record_moment(m, "reported", 9.0)


def test_record_moment_rejects_awareness_before_report():
    m = record_moment(CriticalMoments(), "reported", 25.0)
    with pytest.raises(OrderingViolation):
        record_moment(m, "virtual_awareness", 20.0)
    with pytest.raises(OrderingViolation):
        record_moment(m, "physical_awareness", 24.0)


def test_record_moment_rejects_termination_before_any_set_moment():
    m = record_moment(CriticalMoments(), "physical_awareness", 300.0)
    with pytest.raises(OrderingViolation):
        record_moment(m, "termination", 299.0)


def test_span_is_none_when_either_end_missing():
    m = record_moment(CriticalMoments(), "reported", 25.0)
    assert m.span("reported", "virtual_awareness") is None
    assert m.span("start", "reported") is None


@given(
    st.lists(
        st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
        min_size=6, max_size=6,
    )
)
def test_moments_recorded_in_sorted_order_always_valid(times):
    """Any six timestamps, sorted and assigned in causal order, are accepted,
    and every recorded value reads back exactly."""
    times = sorted(times)
    m = CriticalMoments()
    for name, t in zip(MOMENT_NAMES, times):
        m = record_moment(m, name, t)
    assert [m.as_dict()[name] for name in MOMENT_NAMES] == times


@given(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
)
def test_moments_never_accept_regression(a, b):
    """reported < observed is rejected for every value pair where it applies."""
    lo, hi = min(a, b), max(a, b)
    m = record_moment(CriticalMoments(), "observed", hi)
    if lo < hi:
        with pytest.raises(OrderingViolation):
            record_moment(m, "reported", lo)
    else:
        record_moment(m, "reported", lo)


# ----------------------------------------------------------------- timeline


def test_timeline_advance_is_monotone_and_bounded():
    tl = MissionTimeline(phases=[Phase("a"), Phase("b"), Phase("c")])
    assert tl.current_phase.phase_id == "a"
    tl.advance_to(1)
    assert tl.t_pos == 1
    with pytest.raises(ValueError):
        tl.advance_to(0)
    with pytest.raises(ValueError):
        tl.advance_to(3)
    tl.advance_to(2)
    assert tl.current_phase.phase_id == "c"
