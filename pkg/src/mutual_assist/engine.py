"""Synchronous step loop for the community simulation.

Each step runs six phases in a fixed order:

1. churn: a few eligible cells draw a new role;
2. running services and activities count down and dissolve at zero;
3. pending requests past their deadline abort;
4. participants waiting too long on a forming activity fall back to carer matching;
5. every pending request gets one dispatch attempt, highest priority first;
6. waiting ages advance (implicit: waits are measured from creation time).
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from . import dispatch
from .dispatch import DispatchOutcome, TimeCheck
from .model import (
    ActivityState,
    BeingServed,
    CellId,
    Community,
    Grid,
    INTERACTING,
    Idle,
    Participating,
    Request,
    RequestKind,
    RequestState,
    Role,
    RunSummary,
    Serving,
    SimParams,
    Snapshot,
    Waiting,
)

log = logging.getLogger(__name__)


class RngStream(random.Random):
    """Seeded Mersenne Twister; identical draws for an identical seed on any platform."""

    ALGORITHM = "mt19937"

    def __init__(self, seed: int):
        self.seed_value = seed
        super().__init__(seed)


@dataclass
class StepReport:
    step: int
    churned: list[tuple[CellId, str, str]] = field(default_factory=list)
    dispatched: list[tuple[CellId, DispatchOutcome]] = field(default_factory=list)
    aborted: list[CellId] = field(default_factory=list)
    completed_interactions: int = 0
    fell_through: list[CellId] = field(default_factory=list)


def role_label(grid: Grid, cid: CellId) -> str:
    cell = grid[cid]
    if cell.role is Role.REQUESTER:
        return cell.kind.name.lower()
    return cell.role.value


def make_request(community: Community, cid: CellId, kind: RequestKind, now: int,
                 params: SimParams, rng: random.Random) -> Request:
    """Turn ``cid`` into a waiting requester of ``kind`` created at ``now``."""
    activity_type = rng.randrange(params.activity_types) if kind is RequestKind.PARTICIPANT else 0
    prefers_informal = rng.random() < params.pref_informal
    req = Request(
        owner=cid,
        kind=kind,
        created=now,
        deadline=now + params.deadline_for(kind),
        prefers_informal=prefers_informal,
        activity_type=activity_type,
    )
    community.set_role(cid, Role.REQUESTER, kind, Waiting(now))
    community.requests[cid] = req
    return req


def _pick(rng: random.Random, weights: tuple[float, ...]) -> int:
    # Inverse-CDF over a probability vector; the last bucket absorbs rounding.
    u = rng.random()
    acc = 0.0
    for i, w in enumerate(weights[:-1]):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


_KINDS = (RequestKind.ALARM, RequestKind.PARTICIPANT, RequestKind.NONURGENT)


def init_grid(params: SimParams, rng: random.Random) -> Community:
    """Draw every cell's role independently from the initial mix."""
    params.validate()
    community = Community(Grid(params.grid_w, params.grid_h))
    roles = (Role.PC, Role.IC, Role.NEUTRAL, Role.REQUESTER)
    role_w = (params.pc_rate, params.ic_rate, params.n_rate, params.r_rate)
    kind_w = (params.a_rate, params.p_rate, params.nr_rate)
    for cell in community.grid:
        role = roles[_pick(rng, role_w)]
        if role is Role.REQUESTER:
            make_request(community, cell.id, _KINDS[_pick(rng, kind_w)], 0, params, rng)
        else:
            community.set_role(cell.id, role)
    return community


def churn_step(community: Community, params: SimParams, rng: random.Random, now: int) -> list[tuple[CellId, str, str]]:
    """Re-roll up to ``churn_count`` non-PC, non-interacting cells."""
    if params.churn_count == 0:
        return []
    eligible = [c.id for c in community.grid if c.role is not Role.PC and type(c.engagement) not in INTERACTING]
    picked = rng.sample(eligible, min(params.churn_count, len(eligible)))
    requester_p = max(0.0, 1.0 - params.ic_d - params.n_d)
    outcome_w = (params.ic_d, params.n_d, requester_p)
    kind_w = (params.a_d, params.p_d, params.r_d)
    changes = []
    for cid in picked:
        old = role_label(community.grid, cid)
        pending = community.requests.get(cid)
        if pending is not None:
            dispatch.cancel(community, pending)
        outcome = _pick(rng, outcome_w)
        if outcome == 0:
            community.set_role(cid, Role.IC)
        elif outcome == 1:
            community.set_role(cid, Role.NEUTRAL)
        else:
            make_request(community, cid, _KINDS[_pick(rng, kind_w)], now, params, rng)
        changes.append((cid, old, role_label(community.grid, cid)))
    return changes


def advance_interactions(community: Community, now: int) -> int:
    """Count down service pairs and ongoing activities; dissolve those reaching zero."""
    completed = 0
    grid = community.grid
    for carer, target in sorted(community.links.items()):
        serving = grid[carer].engagement
        served = grid[target].engagement
        serving.remaining -= 1
        served.remaining -= 1
        if serving.remaining <= 0:
            del community.links[carer]
            community.engage(carer, Idle())
            dispatch.release_requester(community, community.requests[target], RequestState.COMPLETED)
            completed += 1
    for act in sorted(community.activities.values(), key=lambda a: a.id):
        if act.state is ActivityState.ONGOING:
            act.remaining -= 1
            if act.remaining <= 0:
                dispatch.finish_activity(community, act)
                completed += 1
    return completed


def expire_deadlines(community: Community, now: int) -> list[CellId]:
    """Abort every still-pending request whose deadline has arrived."""
    expired = [r for r in community.pending() if now >= r.deadline]
    expired.sort(key=lambda r: r.owner)
    for req in expired:
        dispatch.abort(community, req)
    return [r.owner for r in expired]


def check_time_constraints(community: Community, params: SimParams, now: int) -> list[CellId]:
    stale = [
        r for r in community.requests.values()
        if r.state is RequestState.IN_FORMING
        and dispatch.check_time_constraint(r, now, params) is TimeCheck.FALL_THROUGH
    ]
    stale.sort(key=lambda r: r.owner)
    for req in stale:
        dispatch.fall_through(community, req)
    return [r.owner for r in stale]


def latency_metric(community: Community, now: int) -> float:
    """Mean current wait of requesters still waiting; 0 when nobody waits."""
    waits = [now - r.created for r in community.requests.values() if r.pending]
    return sum(waits) / len(waits) if waits else 0.0


def step(community: Community, params: SimParams, rng: random.Random, now: int) -> StepReport:
    report = StepReport(step=now)
    report.churned = churn_step(community, params, rng, now)
    report.completed_interactions = advance_interactions(community, now)
    report.aborted = expire_deadlines(community, now)
    report.fell_through = check_time_constraints(community, params, now)
    for req in dispatch.priority_order(community.pending()):
        # An earlier dispatch in this step may already have settled this request.
        if not req.pending:
            continue
        report.dispatched.append((req.owner, dispatch.parse_request(req, community, rng, params, now)))
    return report


def check_invariants(community: Community, params: SimParams) -> list[str]:
    """Full-scan consistency check; returns a list of violations (empty when sound)."""
    grid = community.grid
    errors = []
    if len(grid.cells) != params.grid_w * params.grid_h:
        errors.append("cell count changed")
    if sum(grid.role_totals().values()) != len(grid.cells):
        errors.append("role totals do not sum to the cell count")
    for cell in grid:
        eng = cell.engagement
        if isinstance(eng, Serving):
            if cell.role not in (Role.PC, Role.IC):
                errors.append(f"{cell.id} serves but is {cell.role.name}")
            other = grid[eng.target].engagement
            if other != BeingServed(cell.id, eng.remaining):
                errors.append(f"link {cell.id}->{eng.target} not mirrored ({other})")
        elif isinstance(eng, BeingServed):
            other = grid[eng.carer].engagement
            if other != Serving(cell.id, eng.remaining):
                errors.append(f"link {eng.carer}->{cell.id} not mirrored ({other})")
        elif isinstance(eng, Participating):
            act = community.activities.get(eng.activity)
            if act is None or cell.id not in act.members:
                errors.append(f"{cell.id} participates in {eng.activity} but is not a member")
        if isinstance(eng, (BeingServed, Participating, Waiting)) and cell.role is not Role.REQUESTER:
            errors.append(f"{cell.id} has {type(eng).__name__} but role {cell.role.name}")
        if cell.role is Role.REQUESTER and cell.id not in community.requests:
            errors.append(f"requester {cell.id} has no request")
        idle_carer = cell.role in (Role.PC, Role.IC) and isinstance(eng, Idle)
        if idle_carer != (cell.id in community.idle_carers.get(cell.role, ())):
            errors.append(f"idle index out of date for {cell.id}")
    for act in community.activities.values():
        if act.state is ActivityState.ONGOING:
            if not params.activity_min_size <= len(act.members) <= params.activity_capacity:
                errors.append(f"ongoing activity {act.id} has {len(act.members)} members")
            for m in act.members:
                if grid[m].engagement != Participating(act.id):
                    errors.append(f"member {m} of ongoing {act.id} is not participating")
        elif act.state is ActivityState.FORMING:
            if not 1 <= len(act.members) < params.activity_min_size:
                errors.append(f"forming activity {act.id} has {len(act.members)} members")
            for m in act.members:
                req = community.requests.get(m)
                if req is None or req.state is not RequestState.IN_FORMING or req.activity != act.id:
                    errors.append(f"member {m} of forming {act.id} has no matching request")
        else:
            errors.append(f"finished activity {act.id} still registered")
    for owner, req in community.requests.items():
        if req.deadline < req.created:
            errors.append(f"request {owner} deadline before creation")
        if grid[owner].role is not Role.REQUESTER:
            errors.append(f"request {owner} owned by a {grid[owner].role.name}")
    return errors


def run(params: SimParams, on_step=None) -> tuple[RunSummary, list[Snapshot]]:
    """Initialise, run ``params.steps`` steps and summarise the recorded snapshots.

    ``on_step(community, report)`` is called after every step when given.
    """
    params.validate()
    rng = RngStream(params.seed)
    community = init_grid(params, rng)
    snapshots = []
    for now in range(1, params.steps + 1):
        report = step(community, params, rng, now)
        if on_step is not None:
            on_step(community, report)
        if now % params.record_every == 0:
            snapshots.append(
                Snapshot.capture(community.grid, now, community.failures, latency_metric(community, now))
            )
    log.debug("seed %s: %d snapshots, %d failures", params.seed, len(snapshots), community.failures)
    return RunSummary.from_snapshots(snapshots, community.failures), snapshots
