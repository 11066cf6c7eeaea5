from __future__ import annotations

import pytest

from mutual_assist.engine import RngStream, make_request, step
from mutual_assist.model import Community, Grid, RequestKind, Role, SimParams

# P professional carer, I informal carer, . neutral,
# A alarm, p participant, R non-urgent (prefers informal), r non-urgent (prefers professional)
_ROLE = {"P": Role.PC, "I": Role.IC, ".": Role.NEUTRAL}
_KIND = {"A": RequestKind.ALARM, "p": RequestKind.PARTICIPANT, "R": RequestKind.NONURGENT, "r": RequestKind.NONURGENT}


class _FixedDraws:
    """Stand-in RNG for request creation: preference comes from the layout letter."""

    def __init__(self, informal: bool):
        self.informal = informal

    def random(self) -> float:
        return 0.0 if self.informal else 0.999999

    def randrange(self, n: int) -> int:
        return 0


def build(layout: list[str], params: SimParams, created: int = 0) -> Community:
    rows = [line.split() for line in layout]
    grid = Grid(len(rows[0]), len(rows))
    community = Community(grid)
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch in _ROLE:
                community.set_role((r, c), _ROLE[ch])
            else:
                make_request(community, (r, c), _KIND[ch], created, params, _FixedDraws(ch != "r"))
    return community


@pytest.fixture
def small_params() -> SimParams:
    return SimParams(grid_w=3, grid_h=3, churn_count=0)


TRACE_LAYOUT = ["P I .", "A R .", ". . ."]
NO_PC_LAYOUT = [". I .", "A R .", ". . ."]


def event_log(layout: list[str], params: SimParams, steps: int):
    """Non-empty step reports of a scripted scenario, keyed by step."""
    c = build(layout, params)
    rng = RngStream(params.seed)
    log = {}
    for now in range(1, steps + 1):
        rep = step(c, params, rng, now)
        entry = {}
        if rep.dispatched:
            entry["dispatched"] = rep.dispatched
        if rep.aborted:
            entry["aborted"] = rep.aborted
        if rep.completed_interactions:
            entry["completed"] = rep.completed_interactions
        if entry:
            log[now] = entry
    return log, c


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
