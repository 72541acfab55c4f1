"""Domain types for the offloading simulator.

Mission participants (aerial platform, edge and ground servers), offloadable
programs, tasks, the mission timeline, and the incident's critical moments.
All times are seconds on a single mission clock whose epoch is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum


class NodeKind(str, Enum):
    UAV5GP = "uav5gp"
    ECS = "ecs"
    GCS = "gcs"


class Origin(str, Enum):
    COMMANDER_ORDER = "commander_order"
    TIMELINE_IMPLIED = "timeline_implied"


# Well-known task kinds; any other non-empty label is also accepted.
OBJECT_DETECTION = "object_detection"
VR_STITCHING = "vr_stitching"
TRAJECTORY_OPTIMIZATION = "trajectory_optimization"
KNOWN_TASK_KINDS = (OBJECT_DETECTION, VR_STITCHING, TRAJECTORY_OPTIMIZATION)

# Rotary-wing endurance: commercial platforms must be back on the ground well
# under 20 minutes, so no mission may plan past this battery ceiling.
PRE_ARRIVAL_BUDGET_S = 1200.0


class OrderingViolation(Exception):
    """A critical-moment timestamp would break the moment ordering."""


class AlreadySet(Exception):
    """A critical moment can be recorded only once."""


@dataclass(frozen=True)
class NodeProfile:
    """One mission participant: the aerial platform or a server."""

    node_id: int
    kind: NodeKind
    compute_capacity: float  # abstract work-units per second
    location: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mobile: bool = False
    cached_programs: frozenset[str] = frozenset()
    battery_budget: float | None = None  # flight seconds, aerial nodes only


def validate_node(
    profile: NodeProfile, battery_cap: float = PRE_ARRIVAL_BUDGET_S
) -> str | None:
    """Check one profile's invariants; return the first violation or None.

    Fleet-level constraints (unique ids, exactly one aerial platform) live in
    validate_fleet.
    """
    if not isinstance(profile.node_id, int) or profile.node_id < 0:
        return "node_id must be a non-negative integer"
    if profile.node_id == 0 and profile.kind is not NodeKind.UAV5GP:
        return "server index 0 is reserved for the aerial platform"
    if profile.kind is NodeKind.UAV5GP and profile.node_id != 0:
        return "the aerial platform must be server index 0"
    if not profile.compute_capacity > 0:
        return "compute_capacity must be positive"
    if len(profile.location) != 3:
        return "location must be an (x, y, z) triple"
    if profile.kind is NodeKind.UAV5GP:
        if profile.battery_budget is None:
            return "the aerial platform needs a battery_budget"
        if not profile.battery_budget > 0:
            return "battery_budget must be positive"
        if profile.battery_budget > battery_cap:
            return "battery_budget exceeds pre-arrival budget"
    elif profile.battery_budget is not None:
        return "battery_budget applies only to the aerial platform"
    return None


def validate_fleet(nodes: dict[int, NodeProfile]) -> str | None:
    """Check the node set as a whole; return the first violation or None."""
    if not nodes:
        return "at least one node is required"
    for node_id, profile in nodes.items():
        if node_id != profile.node_id:
            return f"node {node_id}: key does not match profile node_id"
        issue = validate_node(profile)
        if issue is not None:
            return f"node {node_id}: {issue}"
    aerial = [n for n in nodes.values() if n.kind is NodeKind.UAV5GP]
    if 0 not in nodes or len(aerial) != 1:
        return "exactly one node must be the aerial platform at index 0"
    return None


def default_profiles() -> dict[int, NodeProfile]:
    """Canonical three-participant fleet.

    Compute capacities are strictly ordered: the ground station outclasses the
    edge server, which outclasses the aerial platform.
    """
    return {
        0: NodeProfile(
            node_id=0,
            kind=NodeKind.UAV5GP,
            compute_capacity=25.0,
            location=(0.0, 0.0, 0.0),
            mobile=True,
            battery_budget=PRE_ARRIVAL_BUDGET_S,
        ),
        1: NodeProfile(
            node_id=1,
            kind=NodeKind.ECS,
            compute_capacity=100.0,
            location=(500.0, 0.0, 0.0),
            mobile=True,
        ),
        2: NodeProfile(
            node_id=2,
            kind=NodeKind.GCS,
            compute_capacity=400.0,
            location=(5000.0, 0.0, 0.0),
            mobile=False,
        ),
    }


@dataclass(frozen=True)
class ProgramSpec:
    """An offloadable program and its cost/payload profile."""

    program_id: str
    task_kind: str
    compute_cost: float  # work-units
    input_payload: float  # bits shipped to the executor
    output_payload: float  # bits shipped back to the consumer
    encode_cost: float = 0.0  # work-units spent packaging the input
    decode_cost: float = 0.0  # work-units spent unpacking at the executor

    def __post_init__(self) -> None:
        if not self.program_id:
            raise ValueError("program_id must be non-empty")
        if not self.task_kind:
            raise ValueError("task_kind must be non-empty")
        for name in (
            "compute_cost",
            "input_payload",
            "output_payload",
            "encode_cost",
            "decode_cost",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Task:
    """A unit of mission work naming the programs it needs.

    consumer is the node where results are used; monitoring feeds point it at
    a ground/edge station, everything else defaults to the aerial platform.
    """

    task_id: str
    required_programs: tuple[str, ...]
    origin: Origin = Origin.COMMANDER_ORDER
    issue_time: float = 0.0
    consumer: int = 0

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if not self.required_programs:
            raise ValueError("a task requires at least one program")
        if self.issue_time < 0:
            raise ValueError("issue_time must be >= 0")


@dataclass(frozen=True)
class PhasePredicate:
    """Declarative completion condition for a timeline phase.

    kind: "elapsed" (mission time >= value), "program_result" (a result for
    program value has been delivered), "task_completed" (task value finished),
    "always", or "never".
    """

    kind: str
    value: float | str | None = None

    _KINDS = ("elapsed", "program_result", "task_completed", "always", "never")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown predicate kind: {self.kind!r}")
        if self.kind in ("elapsed",) and not isinstance(self.value, (int, float)):
            raise ValueError("elapsed predicate needs a numeric value")
        if self.kind in ("program_result", "task_completed") and not self.value:
            raise ValueError(f"{self.kind} predicate needs a target id")


@dataclass(frozen=True)
class Phase:
    """One mission phase; completes_when=None means it never self-completes."""

    phase_id: str
    implied_task_kinds: tuple[str, ...] = ()
    completes_when: PhasePredicate | None = None


# The six critical moments, in canonical report order.
MOMENT_NAMES = (
    "start",
    "observed",
    "reported",
    "virtual_awareness",
    "physical_awareness",
    "termination",
)


@dataclass(frozen=True)
class CriticalMoments:
    """Timestamps of the incident's pivotal instants; None until recorded."""

    start: float | None = None
    observed: float | None = None
    reported: float | None = None
    virtual_awareness: float | None = None
    physical_awareness: float | None = None
    termination: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in MOMENT_NAMES}

    def span(self, first: str, second: str) -> float | None:
        """Seconds from moment `first` to moment `second`, if both are set."""
        a, b = getattr(self, first), getattr(self, second)
        if a is None or b is None:
            return None
        return b - a


def _ordering_issue(m: CriticalMoments) -> str | None:
    # Chain over the incident onset; awareness and termination bound below.
    chain = [("start", m.start), ("observed", m.observed), ("reported", m.reported)]
    known = [(name, t) for name, t in chain if t is not None]
    for (a_name, a), (b_name, b) in zip(known, known[1:]):
        if a > b:
            return f"{a_name} must not come after {b_name}"
    for name in ("virtual_awareness", "physical_awareness"):
        t = getattr(m, name)
        if t is not None and m.reported is not None and t < m.reported:
            return f"{name} cannot precede reported"
    if m.termination is not None:
        others = [
            (name, getattr(m, name))
            for name in MOMENT_NAMES[:-1]
            if getattr(m, name) is not None
        ]
        for name, t in others:
            if m.termination < t:
                return f"termination cannot precede {name}"
    return None


def record_moment(moments: CriticalMoments, which: str, t: float) -> CriticalMoments:
    """Return a copy of `moments` with moment `which` recorded at time t.

    Raises AlreadySet if the moment was recorded before and OrderingViolation
    if the new timestamp would break the moment ordering.
    """
    if which not in MOMENT_NAMES:
        raise ValueError(f"unknown moment: {which!r}")
    if t < 0:
        raise ValueError("moment timestamps must be >= 0")
    if getattr(moments, which) is not None:
        raise AlreadySet(which)
    candidate = replace(moments, **{which: t})
    issue = _ordering_issue(candidate)
    if issue is not None:
        raise OrderingViolation(f"{which}={t}: {issue}")
    return candidate


@dataclass
class MissionTimeline:
    """Ordered mission phases plus the current position and moment record."""

    phases: list[Phase]
    t_pos: int = 0
    moments: CriticalMoments = field(default_factory=CriticalMoments)

    def __post_init__(self) -> None:
        if not self.phases:
            raise ValueError("a timeline needs at least one phase")
        if not 0 <= self.t_pos < len(self.phases):
            raise ValueError("t_pos out of range")

    @property
    def current_phase(self) -> Phase:
        return self.phases[self.t_pos]

    def advance_to(self, new_pos: int) -> None:
        # Monotone: the mission never moves backwards through its phases.
        if new_pos < self.t_pos:
            raise ValueError("timeline position may only advance")
        if new_pos >= len(self.phases):
            raise ValueError("timeline position out of range")
        self.t_pos = new_pos
