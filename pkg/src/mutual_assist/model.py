"""Domain types for the mutual-assistance community and the grid container.

Everything here is plain data: cells, requests, group activities, the
parameter set and the per-snapshot census. Behaviour lives in
:mod:`mutual_assist.dispatch` and :mod:`mutual_assist.engine`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from typing import Iterator, Union

CellId = tuple[int, int]
ActivityId = int

RATE_TOLERANCE = 1e-9


class ValidationError(ValueError):
    """Raised when a parameter set violates one or more invariants.

    ``problems`` holds one human-readable message per violated invariant.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class Role(Enum):
    PC = "pc"
    IC = "ic"
    NEUTRAL = "neutral"
    REQUESTER = "requester"


class RequestKind(IntEnum):
    """Request classes. Lower value means higher dispatch priority."""

    ALARM = 0
    PARTICIPANT = 1
    NONURGENT = 2


class RequestState(Enum):
    WAITING_MATCH = "waiting_match"
    IN_FORMING = "in_forming"
    ACTIVE = "active"
    COMPLETED = "completed"
    ABORTED = "aborted"


PENDING_STATES = (RequestState.WAITING_MATCH, RequestState.IN_FORMING)


# Engagement variants. Service links count down in place; everything else is
# replaced wholesale when the engagement changes.


@dataclass(frozen=True)
class Idle:
    pass


@dataclass
class Serving:
    target: CellId
    remaining: int


@dataclass
class BeingServed:
    carer: CellId
    remaining: int


@dataclass(frozen=True)
class Participating:
    activity: ActivityId


@dataclass(frozen=True)
class Waiting:
    since: int


Engagement = Union[Idle, Serving, BeingServed, Participating, Waiting]
IDLE = Idle()
INTERACTING = (Serving, BeingServed, Participating)


@dataclass
class Cell:
    id: CellId
    role: Role = Role.NEUTRAL
    kind: RequestKind | None = None
    engagement: Engagement = IDLE

    @property
    def interacting(self) -> bool:
        return type(self.engagement) in INTERACTING


class Grid:
    """Dense row-major ``height x width`` array of cells on a bounded plane."""

    def __init__(self, width: int, height: int):
        if width < 1 or height < 1:
            raise ValidationError([f"grid dimensions must be >= 1, got {width}x{height}"])
        self.width = width
        self.height = height
        self.cells = [Cell((r, c)) for r in range(height) for c in range(width)]
        self._by_id = {cell.id: cell for cell in self.cells}

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.cells)

    def __getitem__(self, cid: CellId) -> Cell:
        try:
            return self._by_id[cid]
        except KeyError:
            raise IndexError(f"cell {cid} outside {self.height}x{self.width} grid") from None

    def role_totals(self) -> dict[Role, int]:
        totals = {role: 0 for role in Role}
        for cell in self.cells:
            totals[cell.role] += 1
        return totals


def chebyshev(a: CellId, b: CellId) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


@dataclass
class SimParams:
    """Every tunable of a run.

    Rates follow the reference setting: initial role mix, initial requester
    kind mix, churn outcome mix and churn requester kind mix. Deadlines may be
    ``math.inf`` to disable aborts.
    """

    pc_rate: float = 0.1
    ic_rate: float = 0.25
    r_rate: float = 0.25
    n_rate: float = 0.4
    a_rate: float = 0.15
    p_rate: float = 0.35
    nr_rate: float = 0.5
    ic_d: float = 0.05
    n_d: float = 0.05
    a_d: float = 0.15
    p_d: float = 0.15
    r_d: float = 0.7
    churn_count: int = 5
    steps: int = 10000
    record_every: int = 10
    grid_w: int = 25
    grid_h: int = 25
    seed: int = 0
    service_duration: int = 10
    activity_duration: int = 20
    activity_min_size: int = 2
    activity_capacity: int = 6
    activity_types: int = 1
    participant_wait_window: int = 20
    deadline_alarm: float = 5
    deadline_nonurgent: float = 50
    pref_informal: float = 0.5

    def problems(self) -> list[str]:
        out = []

        def mix(name: str, *parts: float) -> None:
            if abs(sum(parts) - 1.0) > RATE_TOLERANCE:
                out.append(f"{name} must sum to 1 (got {sum(parts)!r})")

        for f in fields(self):
            if f.name.endswith(("_rate", "_d")) or f.name == "pref_informal":
                v = getattr(self, f.name)
                if not 0.0 <= v <= 1.0:
                    out.append(f"{f.name} must be a probability in [0, 1] (got {v!r})")
        mix("role mix pc_rate + ic_rate + r_rate + n_rate", self.pc_rate, self.ic_rate, self.r_rate, self.n_rate)
        mix("requester kind mix a_rate + p_rate + nr_rate", self.a_rate, self.p_rate, self.nr_rate)
        mix("churn kind mix a_d + p_d + r_d", self.a_d, self.p_d, self.r_d)
        if self.ic_d + self.n_d > 1.0 + RATE_TOLERANCE:
            out.append(f"churn outcome ic_d + n_d must be <= 1 (got {self.ic_d + self.n_d!r})")
        for name in ("churn_count", "steps", "service_duration", "activity_duration",
                     "participant_wait_window", "deadline_alarm", "deadline_nonurgent"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0")
        for name in ("grid_w", "grid_h", "record_every", "activity_types", "activity_min_size"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.activity_capacity < self.activity_min_size:
            out.append("activity_capacity must be >= activity_min_size")
        for name in ("deadline_alarm", "deadline_nonurgent"):
            v = getattr(self, name)
            if isinstance(v, float) and math.isnan(v):
                out.append(f"{name} must not be NaN")
        return out

    def validate(self) -> "SimParams":
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self

    @property
    def cells(self) -> int:
        return self.grid_w * self.grid_h

    def deadline_for(self, kind: RequestKind) -> float:
        # Participants fall back to non-urgent handling, so they share its deadline.
        return self.deadline_alarm if kind is RequestKind.ALARM else self.deadline_nonurgent


@dataclass
class Request:
    owner: CellId
    kind: RequestKind
    created: int
    deadline: float
    prefers_informal: bool = False
    activity_type: int = 0
    state: RequestState = RequestState.WAITING_MATCH
    activity: ActivityId | None = None
    # Set once a participant request exceeds its wait window; from then on it
    # is matched as a non-urgent request but still counted as a participant.
    fell_through: bool = False

    @property
    def match_kind(self) -> RequestKind:
        return RequestKind.NONURGENT if self.fell_through else self.kind

    @property
    def pending(self) -> bool:
        return self.state in PENDING_STATES


class ActivityState(Enum):
    FORMING = "forming"
    ONGOING = "ongoing"
    FINISHED = "finished"


@dataclass
class Activity:
    id: ActivityId
    activity_type: int
    created: int
    members: list[CellId] = field(default_factory=list)
    state: ActivityState = ActivityState.FORMING
    remaining: int = 0


@dataclass
class RoleCount:
    total: float = 0
    idle: float = 0


CENSUS_KEYS = ("pc", "ic", "neutral", "alarm", "part", "nonurg")


def role_census(grid: Grid) -> dict[str, RoleCount]:
    """Count (total, not active) per census role.

    Carers are "not active" when Idle, requesters when still waiting
    (including members of a forming activity), neutrals always.
    """
    census = {key: RoleCount() for key in CENSUS_KEYS}
    for cell in grid:
        if cell.role is Role.REQUESTER:
            key = CENSUS_KEYS[3 + int(cell.kind)]
            quiet = isinstance(cell.engagement, Waiting)
        else:
            key = cell.role.value
            quiet = isinstance(cell.engagement, Idle)
        entry = census[key]
        entry.total += 1
        entry.idle += quiet
    return census


@dataclass
class Snapshot:
    step: int
    pc_total: float = 0
    pc_idle: float = 0
    ic_total: float = 0
    ic_idle: float = 0
    neutral_total: float = 0
    alarm_total: float = 0
    alarm_waiting: float = 0
    part_total: float = 0
    part_waiting: float = 0
    nonurg_total: float = 0
    nonurg_waiting: float = 0
    failures_cum: int = 0
    mean_wait: float = 0.0

    @classmethod
    def capture(cls, grid: Grid, step: int, failures_cum: int, mean_wait: float) -> "Snapshot":
        c = role_census(grid)
        return cls(
            step=step,
            pc_total=c["pc"].total, pc_idle=c["pc"].idle,
            ic_total=c["ic"].total, ic_idle=c["ic"].idle,
            neutral_total=c["neutral"].total,
            alarm_total=c["alarm"].total, alarm_waiting=c["alarm"].idle,
            part_total=c["part"].total, part_waiting=c["part"].idle,
            nonurg_total=c["nonurg"].total, nonurg_waiting=c["nonurg"].idle,
            failures_cum=failures_cum, mean_wait=mean_wait,
        )

    def row(self) -> list:
        return [getattr(self, name) for name in SNAPSHOT_COLUMNS]


SNAPSHOT_COLUMNS = tuple(f.name for f in fields(Snapshot))
ROLE_COLUMNS = SNAPSHOT_COLUMNS[1:12]


@dataclass
class RunSummary:
    """Averages over recorded snapshots plus cumulative failures.

    ``averages`` maps each role column to its mean over snapshots.
    ``failures_total`` is the cumulative count at the end of the run and is
    never averaged.
    """

    averages: dict[str, float]
    failures_total: int
    ave_latency: float
    snapshots: int

    @classmethod
    def from_snapshots(cls, snapshots: list[Snapshot], failures_total: int | None = None) -> "RunSummary":
        n = len(snapshots)
        averages = {name: (sum(getattr(s, name) for s in snapshots) / n if n else 0.0)
                    for name in ROLE_COLUMNS}
        if failures_total is None:
            failures_total = snapshots[-1].failures_cum if snapshots else 0
        latency = sum(s.mean_wait for s in snapshots) / n if n else 0.0
        return cls(averages=averages, failures_total=failures_total, ave_latency=latency, snapshots=n)

    def format(self) -> str:
        a = self.averages
        lines = [
            f"PC #:\t{a['pc_total']:.3f}; {a['pc_idle']:.3f}",
            f"IC #:\t{a['ic_total']:.3f}; {a['ic_idle']:.3f}",
            f"Ne #:\t{a['neutral_total']:.3f}; {a['neutral_total']:.3f}",
            f"A #:\t{a['alarm_total']:.3f}; {a['alarm_waiting']:.3f}",
            f"P #:\t{a['part_total']:.3f}; {a['part_waiting']:.3f}",
            f"R #:\t{a['nonurg_total']:.3f}; {a['nonurg_waiting']:.3f}",
            f"Failure\t{self.failures_total}",
            f"Latency\t{self.ave_latency:.3f}",
        ]
        return "\n".join(lines)


def new_grid(params: SimParams) -> Grid:
    """All-neutral, all-idle grid sized by ``params``."""
    params.validate()
    return Grid(params.grid_w, params.grid_h)


class Community:
    """Mutable state of one run: grid, activities, requests and counters.

    Idle carers are indexed by role so dispatch does not rescan the grid;
    always change roles and engagements through :meth:`set_role` and
    :meth:`engage` to keep the index in step with the cells.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.activities: dict[ActivityId, Activity] = {}
        self.requests: dict[CellId, Request] = {}
        self.failures = 0
        self.next_activity = 0
        self.idle_carers: dict[Role, set[CellId]] = {Role.PC: set(), Role.IC: set()}
        # carer -> requester for every live service link
        self.links: dict[CellId, CellId] = {}
        for cell in grid:
            self._index(cell)

    def _index(self, cell: Cell) -> None:
        for role, pool in self.idle_carers.items():
            if cell.role is role and type(cell.engagement) is Idle:
                pool.add(cell.id)
            else:
                pool.discard(cell.id)

    def set_role(self, cid: CellId, role: Role, kind: RequestKind | None = None,
                 engagement: Engagement = IDLE) -> None:
        cell = self.grid[cid]
        cell.role = role
        cell.kind = kind if role is Role.REQUESTER else None
        cell.engagement = engagement
        self._index(cell)

    def engage(self, cid: CellId, engagement: Engagement) -> None:
        cell = self.grid[cid]
        cell.engagement = engagement
        self._index(cell)

    def new_activity(self, activity_type: int, now: int) -> Activity:
        act = Activity(self.next_activity, activity_type, now)
        self.activities[act.id] = act
        self.next_activity += 1
        return act

    def pending(self) -> list[Request]:
        return [r for r in self.requests.values() if r.state in PENDING_STATES]
