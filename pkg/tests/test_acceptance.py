"""Exit criteria for the calibrated simulator.

Each test appends one PASS/FAIL line to the terminal summary. The sweep is
shared across criteria and uses every available core.
"""

import math
import os
from dataclasses import replace

import pytest

from conftest import ACCEPTANCE_LINES, NO_PC_LAYOUT, TRACE_LAYOUT, event_log
from mutual_assist.config import default_config_path, load_config
from mutual_assist.dispatch import ServedByIC, ServedByPC, StillWaiting
from mutual_assist.engine import check_invariants, run
from mutual_assist.harness import SweepSpec, aggregate, run_single, run_sweep, write_sweep
from mutual_assist.model import RequestKind, RequestState, Role, SimParams

SWEEP_P_D = (0.10, 0.15, 0.25, 0.60)
SWEEP_SEEDS = tuple(range(20))
WORKERS = os.cpu_count() or 1


def report(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


@pytest.fixture(scope="module")
def calibrated() -> SimParams:
    return load_config(default_config_path())


@pytest.fixture(scope="module")
def sweep(calibrated):
    assert calibrated.a_d == 0.15 and (calibrated.grid_w, calibrated.grid_h) == (15, 15)
    rows = run_sweep(calibrated, SweepSpec(SWEEP_P_D, SWEEP_SEEDS), workers=WORKERS)
    return {a.p_d: a for a in aggregate(rows)}


def test_1_trend_reproduction(sweep):
    fails = [sweep[p].failures_mean for p in SWEEP_P_D]
    lats = [sweep[p].latency_mean for p in SWEEP_P_D]
    fail_down = all(a > b for a, b in zip(fails, fails[1:]))
    lat_down = all(a > b for a, b in zip(lats, lats[1:]))
    ratio = fails[1] / fails[3] if fails[3] else math.inf
    ok = fail_down and lat_down and ratio >= 10
    report(1, ok, f"failures {[round(f, 1) for f in fails]}, latency {[round(x, 3) for x in lats]}, "
                  f"failures(0.15)/failures(0.60) = {ratio:.1f} (need strictly decreasing, ratio >= 10)")
    assert fail_down, fails
    assert lat_down, lats
    assert ratio >= 10


def test_2_instability_at_low_participant_rate(sweep):
    low, mid = sweep[0.10].latency_mean, sweep[0.25].latency_mean
    ok = low >= 10 * mid
    report(2, ok, f"latency(0.10) = {low:.3f} vs 10 x latency(0.25) = {10 * mid:.3f}")
    assert ok


def test_3_calibration_magnitudes(sweep, calibrated):
    point = sweep[0.15]
    base = SimParams()
    in_box = all(
        0.5 * getattr(base, name) <= getattr(calibrated, name) <= 1.5 * getattr(base, name)
        for name in ("service_duration", "deadline_alarm", "deadline_nonurgent", "participant_wait_window")
    )
    ok = 30 <= point.failures_mean <= 3000 and 2 <= point.latency_mean <= 250 and in_box
    report(3, ok, f"p_d=0.15: failures {point.failures_mean:.1f} in [30, 3000], "
                  f"latency {point.latency_mean:.3f} in [2, 250], tuning within +-50%: {in_box}")
    assert in_box
    assert 30 <= point.failures_mean <= 3000
    assert 2 <= point.latency_mean <= 250


@pytest.fixture(scope="module")
def fig3_run(calibrated, tmp_path_factory):
    out = tmp_path_factory.mktemp("fig3") / "run.csv"
    summary, snaps = run_single(replace(calibrated, steps=10000, record_every=10), out)
    return summary, snaps, out


def test_4_run_protocol(fig3_run):
    summary, snaps, out = fig3_run
    cumulative = summary.failures_total == snaps[-1].failures_cum
    averaged = sum(s.failures_cum for s in snaps) / len(snaps)
    ok = len(snaps) == 1000 and len(out.read_text().splitlines()) == 1001 and cumulative
    report(4, ok, f"{len(snaps)} snapshots; failures_total {summary.failures_total} "
                  f"(cumulative; the snapshot mean would be {averaged:.1f})")
    assert len(snaps) == 1000
    assert len(out.read_text().splitlines()) == 1001
    assert cumulative


def test_5_property_suite(calibrated):
    seeds = range(10)
    steps = 1000
    problems = []
    for seed in seeds:
        params = replace(calibrated, seed=seed, steps=steps)
        state = {"pc": None, "fail": 0}

        def hook(c, rep, params=params, state=state):
            errs = check_invariants(c, params)
            totals = c.grid.role_totals()
            if sum(totals.values()) != params.cells:
                errs.append("conservation")
            state["pc"] = totals[Role.PC] if state["pc"] is None else state["pc"]
            if totals[Role.PC] != state["pc"]:
                errs.append("pc count changed")
            if c.failures < state["fail"]:
                errs.append("failures decreased")
            state["fail"] = c.failures
            waiting_alarm = any(
                cid in c.requests and c.requests[cid].kind is RequestKind.ALARM
                and c.requests[cid].state is RequestState.WAITING_MATCH
                for cid, _ in rep.dispatched
            )
            if waiting_alarm and c.idle_carers[Role.PC]:
                errs.append("idle pc beside waiting alarm")
            problems.extend(f"seed {params.seed} step {rep.step}: {e}" for e in errs)

        _, snaps = run(params, on_step=hook)
        cum = [s.failures_cum for s in snaps]
        if cum != sorted(cum):
            problems.append(f"seed {seed}: failures_cum not monotone")
        inf_summary, _ = run(replace(params, deadline_alarm=math.inf, deadline_nonurgent=math.inf))
        if inf_summary.failures_total:
            problems.append(f"seed {seed}: {inf_summary.failures_total} failures with infinite deadlines")
    ok = not problems
    report(5, ok, f"{len(seeds) * steps} checked steps over {len(seeds)} seeds, "
                  f"{len(problems)} violations" + (f" (first: {problems[0]})" if problems else ""))
    assert ok, problems[:5]


def test_6_determinism(calibrated, tmp_path):
    params = replace(calibrated, steps=3000, seed=17)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_single(params, a)
    run_single(params, b)
    single_ok = a.read_bytes() == b.read_bytes()

    spec = SweepSpec((0.15, 0.6), (0, 1, 2))
    short = replace(calibrated, steps=1500)
    write_sweep(run_sweep(short, spec, workers=1), tmp_path / "s1.csv", tmp_path / "p1")
    write_sweep(run_sweep(short, spec, workers=3), tmp_path / "s2.csv", tmp_path / "p2")
    names = [("s1.csv", "s2.csv"), ("s1.csv.aggregate.csv", "s2.csv.aggregate.csv"),
             ("p1/failures.tsv", "p2/failures.tsv"), ("p1/latency.tsv", "p2/latency.tsv")]
    sweep_ok = all((tmp_path / x).read_bytes() == (tmp_path / y).read_bytes() for x, y in names)
    report(6, single_ok and sweep_ok, f"snapshot CSVs identical: {single_ok}; serial vs 3-process sweep identical: {sweep_ok}")
    assert single_ok and sweep_ok


def test_7_hand_trace_oracle():
    params = SimParams(grid_w=3, grid_h=3, churn_count=0)
    served, c1 = event_log(TRACE_LAYOUT, params, 30)
    expected_served = {
        1: {"dispatched": [((1, 0), ServedByPC((0, 0))), ((1, 1), ServedByIC((0, 1)))]},
        11: {"completed": 2},
    }
    no_pc = replace(params, deadline_alarm=5)
    aborted, c2 = event_log(NO_PC_LAYOUT, no_pc, 30)
    expected_aborted = {
        1: {"dispatched": [((1, 0), StillWaiting()), ((1, 1), ServedByIC((0, 1)))]},
        2: {"dispatched": [((1, 0), StillWaiting())]},
        3: {"dispatched": [((1, 0), StillWaiting())]},
        4: {"dispatched": [((1, 0), StillWaiting())]},
        5: {"aborted": [(1, 0)]},
        11: {"completed": 1},
    }
    ok = served == expected_served and c1.failures == 0 and aborted == expected_aborted and c2.failures == 1
    report(7, ok, "PC+IC scenario served at step 1 with no failures; no-PC alarm aborted at step 5")
    assert served == expected_served and c1.failures == 0
    assert aborted == expected_aborted and c2.failures == 1


def test_8_census_structure(fig3_run):
    summary, _, _ = fig3_run
    a = summary.averages
    ok = a["alarm_waiting"] < a["nonurg_waiting"] and a["ic_idle"] > 0
    report(8, ok, f"alarm_waiting {a['alarm_waiting']:.3f} < nonurg_waiting {a['nonurg_waiting']:.3f}; "
                  f"ic_idle {a['ic_idle']:.3f} > 0")
    assert ok
