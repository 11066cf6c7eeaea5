"""Single runs, participant-rate sweeps and their tabular outputs."""

from __future__ import annotations

import csv
import io
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .engine import run
from .model import ROLE_COLUMNS, SNAPSHOT_COLUMNS, RunSummary, SimParams, Snapshot, ValidationError

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("p_d", "seed", "failures_total", "ave_latency") + ROLE_COLUMNS
DEFAULT_P_D = tuple(round(0.10 + 0.05 * i, 2) for i in range(11))


def snapshot_csv(snapshots: Sequence[Snapshot]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SNAPSHOT_COLUMNS)
    for snap in snapshots:
        writer.writerow(snap.row())
    return buf.getvalue()


def run_single(params: SimParams, out: str | Path | None = None) -> tuple[RunSummary, list[Snapshot]]:
    """Run once; optionally write the snapshot CSV to ``out`` and the summary beside it.

    The summary goes to ``<out>.summary.txt`` so the CSV stays one row per snapshot.
    """
    summary, snapshots = run(params)
    if out is not None:
        out = Path(out)
        out.write_text(snapshot_csv(snapshots), encoding="utf-8")
        summary_path(out).write_text(summary.format() + "\n", encoding="utf-8")
    return summary, snapshots


def summary_path(out: Path) -> Path:
    return out.with_name(out.name + ".summary.txt")


@dataclass(frozen=True)
class SweepSpec:
    """Participant-rate sweep: ``r_d`` follows as ``1 - a_d - p_d`` for each value."""

    values: tuple[float, ...]
    seeds: tuple[int, ...]
    parameter: str = "p_d"

    def params_for(self, base: SimParams, p_d: float, seed: int) -> SimParams:
        return replace(base, p_d=p_d, r_d=coupled_r_d(base.a_d, p_d), seed=seed)

    def validate(self, base: SimParams) -> None:
        problems = []
        if self.parameter != "p_d":
            problems.append(f"only p_d sweeps are supported, not {self.parameter!r}")
        if not self.values:
            problems.append("sweep needs at least one p_d value")
        if not self.seeds:
            problems.append("sweep needs at least one seed")
        for v in self.values:
            r_d = coupled_r_d(base.a_d, v)
            if not 0.0 <= v <= 1.0 or r_d < 0.0 or r_d > 1.0:
                problems.append(f"p_d={v!r} with a_d={base.a_d!r} gives infeasible r_d={r_d!r}")
        if problems:
            raise ValidationError(problems)
        for v in self.values:
            self.params_for(base, v, self.seeds[0]).validate()


def coupled_r_d(a_d: float, p_d: float) -> float:
    # Rounded so that e.g. 1 - 0.15 - 0.25 prints as 0.6, not 0.6000000000000001.
    return round(1.0 - a_d - p_d, 12)


@dataclass(frozen=True)
class SweepRow:
    p_d: float
    seed: int
    failures_total: int
    ave_latency: float
    averages: dict

    def row(self) -> list:
        return [self.p_d, self.seed, self.failures_total, self.ave_latency] + [self.averages[c] for c in ROLE_COLUMNS]


def _sweep_job(args: tuple[SimParams, float]) -> SweepRow:
    params, p_d = args
    summary, _ = run(params)
    return SweepRow(p_d, params.seed, summary.failures_total, summary.ave_latency, summary.averages)


def run_sweep(base: SimParams, spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Run every (p_d, seed) pair; rows come back sorted by p_d then seed.

    With ``workers > 1`` runs execute in a process pool. Each run owns its RNG,
    so the result does not depend on scheduling.
    """
    spec.validate(base)
    jobs = [(spec.params_for(base, v, s), v) for v in sorted(set(spec.values)) for s in sorted(set(spec.seeds))]
    log.info("sweep: %d runs on %d worker(s)", len(jobs), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(job) for job in jobs]
    return sorted(rows, key=lambda r: (r.p_d, r.seed))


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow(r.row())
    return buf.getvalue()


@dataclass(frozen=True)
class Aggregate:
    p_d: float
    runs: int
    failures_mean: float
    failures_std: float
    latency_mean: float
    latency_std: float


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def _std(xs: Sequence[float]) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def aggregate(rows: Sequence[SweepRow]) -> list[Aggregate]:
    """Per-p_d mean and sample standard deviation of failures and latency."""
    groups: dict[float, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault(r.p_d, []).append(r)
    out = []
    for p_d in sorted(groups):
        group = groups[p_d]
        fails = [r.failures_total for r in group]
        lats = [r.ave_latency for r in group]
        out.append(Aggregate(p_d, len(group), _mean(fails), _std(fails), _mean(lats), _std(lats)))
    return out


def aggregate_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p_d", "runs", "failures_mean", "failures_std", "latency_mean", "latency_std"])
    for a in aggregate(rows):
        writer.writerow([a.p_d, a.runs, a.failures_mean, a.failures_std, a.latency_mean, a.latency_std])
    return buf.getvalue()


def emit_plot_data(rows: Sequence[SweepRow]) -> tuple[str, str]:
    """Tab-separated (p_d, mean, stddev) tables: failures first, latency second."""
    if not rows:
        raise ValueError("no sweep rows to tabulate")
    aggs = aggregate(rows)
    failures = ["p_d\tmean\tstddev"] + [f"{a.p_d!r}\t{a.failures_mean!r}\t{a.failures_std!r}" for a in aggs]
    latency = ["p_d\tmean\tstddev"] + [f"{a.p_d!r}\t{a.latency_mean!r}\t{a.latency_std!r}" for a in aggs]
    return "\n".join(failures) + "\n", "\n".join(latency) + "\n"


def write_sweep(rows: Sequence[SweepRow], out: str | Path, plot_out: str | Path | None = None) -> None:
    """Per-run rows to ``out``, aggregates to ``<out>.aggregate.csv``, plot tables under ``plot_out``."""
    out = Path(out)
    out.write_text(sweep_csv(rows), encoding="utf-8")
    out.with_name(out.name + ".aggregate.csv").write_text(aggregate_csv(rows), encoding="utf-8")
    if plot_out is not None:
        plot_dir = Path(plot_out)
        plot_dir.mkdir(parents=True, exist_ok=True)
        failures, latency = emit_plot_data(rows)
        (plot_dir / "failures.tsv").write_text(failures, encoding="utf-8")
        (plot_dir / "latency.tsv").write_text(latency, encoding="utf-8")
