"""Request parsing and carer matching.

A pending request walks a fixed decision path: alarms go straight to a
professional carer; participant requests join or start a group activity;
everything else (including participants whose wait window ran out) is matched
to an informal or professional carer according to the requester's preference.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Union

from .model import (
    Activity,
    ActivityId,
    ActivityState,
    BeingServed,
    CellId,
    Community,
    Participating,
    Request,
    RequestKind,
    RequestState,
    Role,
    Serving,
    SimParams,
    chebyshev,
)


class DispatchError(RuntimeError):
    """Internal inconsistency: the engine handed dispatch an impossible request."""


@dataclass(frozen=True)
class ServedByPC:
    carer: CellId


@dataclass(frozen=True)
class ServedByIC:
    carer: CellId


@dataclass(frozen=True)
class JoinedActivity:
    activity: ActivityId


@dataclass(frozen=True)
class InitiatedActivity:
    activity: ActivityId


@dataclass(frozen=True)
class StillWaiting:
    pass


@dataclass(frozen=True)
class Aborted:
    pass


DispatchOutcome = Union[ServedByPC, ServedByIC, JoinedActivity, InitiatedActivity, StillWaiting, Aborted]


class TimeCheck(Enum):
    KEEP_WAITING = "keep_waiting"
    FALL_THROUGH = "fall_through"


def priority_key(req: Request) -> tuple[int, int, CellId]:
    return (int(req.match_kind), req.created, req.owner)


def priority_order(pending: list[Request]) -> list[Request]:
    """Alarm before participant before non-urgent, then oldest, then row-major owner."""
    return sorted(pending, key=priority_key)


# -- pair / activity bookkeeping ------------------------------------------------


def release_requester(community: Community, req: Request, state: RequestState) -> None:
    """Close ``req`` and return its owner to the neutral, idle population."""
    req.state = state
    if community.requests.get(req.owner) is req:
        del community.requests[req.owner]
    community.set_role(req.owner, Role.NEUTRAL)


def leave_forming(community: Community, req: Request) -> None:
    """Take ``req``'s owner out of its forming activity; drop the activity if empty."""
    if req.activity is None:
        return
    act = community.activities.get(req.activity)
    req.activity = None
    if act is None:
        return
    if req.owner in act.members:
        act.members.remove(req.owner)
    if not act.members:
        act.state = ActivityState.FINISHED
        del community.activities[act.id]


def abort(community: Community, req: Request) -> None:
    if req.state is RequestState.IN_FORMING:
        leave_forming(community, req)
    community.failures += 1
    release_requester(community, req, RequestState.ABORTED)


def cancel(community: Community, req: Request) -> None:
    """Withdraw a pending request without counting a failure."""
    if req.state is RequestState.IN_FORMING:
        leave_forming(community, req)
    req.state = RequestState.COMPLETED
    if community.requests.get(req.owner) is req:
        del community.requests[req.owner]


def serve(community: Community, req: Request, carer: CellId, params: SimParams) -> None:
    duration = params.service_duration
    if duration == 0:
        release_requester(community, req, RequestState.COMPLETED)
        return
    community.engage(carer, Serving(req.owner, duration))
    community.engage(req.owner, BeingServed(carer, duration))
    community.links[carer] = req.owner
    req.state = RequestState.ACTIVE


def finish_activity(community: Community, act: Activity) -> None:
    act.state = ActivityState.FINISHED
    community.activities.pop(act.id, None)
    for member in act.members:
        req = community.requests.get(member)
        if req is not None:
            release_requester(community, req, RequestState.COMPLETED)
        else:
            community.set_role(member, Role.NEUTRAL)


def start_activity(community: Community, act: Activity, params: SimParams) -> None:
    act.state = ActivityState.ONGOING
    act.remaining = params.activity_duration
    for member in act.members:
        req = community.requests[member]
        req.state = RequestState.ACTIVE
        req.activity = act.id
        community.engage(member, Participating(act.id))
    if act.remaining == 0:
        finish_activity(community, act)


# -- matching -------------------------------------------------------------------


def select_informal_carer(requester: CellId, community: Community, rng: random.Random) -> CellId | None:
    """Nearest idle informal carer by Chebyshev distance; seeded tie-break."""
    pool = community.idle_carers[Role.IC]
    if not pool:
        return None
    best = None
    ties: list[CellId] = []
    for cid in pool:
        d = chebyshev(requester, cid)
        if best is None or d < best:
            best, ties = d, [cid]
        elif d == best:
            ties.append(cid)
    if len(ties) == 1:
        return ties[0]
    ties.sort()
    return rng.choice(ties)


def select_professional_carer(community: Community, rng: random.Random) -> CellId | None:
    """Any idle professional carer, uniformly; location plays no role."""
    pool = community.idle_carers[Role.PC]
    if not pool:
        return None
    if len(pool) == 1:
        return next(iter(pool))
    return rng.choice(sorted(pool))


# -- the decision path ----------------------------------------------------------


def join_or_initiate(req: Request, community: Community, params: SimParams, now: int) -> DispatchOutcome:
    """Join the oldest open activity of the requested type, or start a new one."""
    if req.kind is not RequestKind.PARTICIPANT:
        raise DispatchError(f"join_or_initiate called with {req.kind.name} request")
    open_acts = [
        a for a in community.activities.values()
        if a.activity_type == req.activity_type
        and a.state in (ActivityState.FORMING, ActivityState.ONGOING)
        and len(a.members) < params.activity_capacity
    ]
    if open_acts:
        act = min(open_acts, key=lambda a: (a.created, a.id))
        act.members.append(req.owner)
        if act.state is ActivityState.ONGOING:
            req.state = RequestState.ACTIVE
            req.activity = act.id
            community.engage(req.owner, Participating(act.id))
        else:
            req.state = RequestState.IN_FORMING
            req.activity = act.id
            if len(act.members) >= params.activity_min_size:
                start_activity(community, act, params)
        return JoinedActivity(act.id)

    act = community.new_activity(req.activity_type, now)
    act.members.append(req.owner)
    req.state = RequestState.IN_FORMING
    req.activity = act.id
    if len(act.members) >= params.activity_min_size:
        start_activity(community, act, params)
    return InitiatedActivity(act.id)


def check_time_constraint(req: Request, now: int, params: SimParams) -> TimeCheck:
    if now - req.created >= params.participant_wait_window:
        return TimeCheck.FALL_THROUGH
    return TimeCheck.KEEP_WAITING


def fall_through(community: Community, req: Request) -> None:
    """Leave the forming activity; the request is matched as non-urgent from now on."""
    leave_forming(community, req)
    req.state = RequestState.WAITING_MATCH
    req.fell_through = True


def parse_request(
    req: Request,
    community: Community,
    rng: random.Random,
    params: SimParams,
    now: int,
    trace: list[str] | None = None,
) -> DispatchOutcome:
    """Run one dispatch attempt for ``req`` and apply its outcome.

    ``trace``, when given, receives the name of every predicate evaluated, in
    order, so tests can confirm the branch order.
    """
    if not req.pending:
        raise DispatchError(f"request of {req.owner} is {req.state.name}, not pending")
    cell = community.grid[req.owner]
    if cell.role is not Role.REQUESTER:
        raise DispatchError(f"owner {req.owner} has role {cell.role.name}, not a requester")

    def check(name: str, value: bool) -> bool:
        if trace is not None:
            trace.append(name)
        return value

    if now >= req.deadline:
        abort(community, req)
        return Aborted()

    kind = req.match_kind
    if check("alarm", kind is RequestKind.ALARM):
        return _professional(req, community, rng, params)
    if check("participant", kind is RequestKind.PARTICIPANT):
        if req.state is RequestState.IN_FORMING:
            return StillWaiting()
        return join_or_initiate(req, community, params, now)
    check("nonurgent", True)
    if check("prefers_informal", req.prefers_informal):
        carer = select_informal_carer(req.owner, community, rng)
        if carer is not None:
            serve(community, req, carer, params)
            return ServedByIC(carer)
    return _professional(req, community, rng, params)


def _professional(req: Request, community: Community, rng: random.Random, params: SimParams) -> DispatchOutcome:
    carer = select_professional_carer(community, rng)
    if carer is None:
        return StillWaiting()
    serve(community, req, carer, params)
    return ServedByPC(carer)


__all__ = [
    "Aborted",
    "DispatchError",
    "DispatchOutcome",
    "InitiatedActivity",
    "JoinedActivity",
    "ServedByIC",
    "ServedByPC",
    "StillWaiting",
    "TimeCheck",
    "check_time_constraint",
    "join_or_initiate",
    "parse_request",
    "priority_order",
    "select_informal_carer",
    "select_professional_carer",
]
