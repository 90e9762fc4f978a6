"""Sweeps traces x strategies x repetitions and compares makespans against
the workflow-unaware baseline."""

from __future__ import annotations

import csv
import io
import json
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from cws.cluster import ClusterConfig
from cws.driver import LocalClient, run_trace
from cws.errors import ExecutionFailed, MissingBaseline
from cws.scheduler import DecisionLog
from cws.strategies import ALL_STRATEGIES, BASELINE_NAME, StrategyName
from cws.trace import WorkflowTrace

DEFAULT_REPETITIONS = 5


@dataclass
class RunRecord:
    trace: str
    strategy: str
    seed: int
    repetition: int
    makespanMs: int
    taskCount: int
    finished: int
    failed: int
    withdrawn: int
    decisionsLog: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


@dataclass
class StrategyAggregate:
    trace: str
    strategy: str
    runs: int
    medianMakespanMs: int
    minMakespanMs: int
    stddevMs: float
    medianChangeVsBaselinePct: float
    betterThanBaselineMedianPct: float
    betterThanBaselineMinPct: float


METRICS = ("medianMakespanMs", "minMakespanMs", "stddevMs", "medianChangeVsBaselinePct",
           "betterThanBaselineMedianPct", "betterThanBaselineMinPct")


def lower_median(values: Sequence[int]) -> int:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def resolve_strategies(spec: str | Iterable[str]) -> list[str]:
    if isinstance(spec, str):
        if spec == "all":
            return [s.name for s in ALL_STRATEGIES]
        spec = [s for s in spec.split(",") if s.strip()]
    return [StrategyName.parse(s.strip()).name for s in spec]


def _safe(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]", "_", text)[:100]


def run_one(trace: WorkflowTrace, strategy: str, repetition: int, seed: int,
            cluster: ClusterConfig, batch_size: int = 1 << 30,
            out_dir: Optional[str] = None, audit: bool = False) -> RunRecord:
    log_rel = None
    dlog = DecisionLog()
    execution = _safe(f"{trace.name}-{strategy}-r{repetition}")
    client = LocalClient(cluster, decision_log=dlog, audit=audit)
    try:
        result = run_trace(trace, client, strategy, batch_size=batch_size, seed=seed,
                           execution_id=execution)
    except ExecutionFailed as exc:
        raise ExecutionFailed(
            f"{trace.name} / {strategy} / repetition {repetition}: {exc.message}", exc.result
        ) from exc
    if out_dir is not None:
        log_rel = f"decisions/{execution}.jsonl"
        path = Path(out_dir) / log_rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dlog.dumps())
    counts = result.counts
    return RunRecord(trace.name, result.strategy, seed, repetition, result.makespan_ms, len(trace.physical_tasks),
                     counts["FINISHED"], counts["FAILED"], counts["WITHDRAWN"], log_rel)


def _run_job(args):
    return run_one(*args)


def sweep(traces: Sequence[WorkflowTrace], strategies: Sequence[str], cluster: ClusterConfig,
          repetitions: int = DEFAULT_REPETITIONS, base_seed: int = 0,
          batch_size: int = 1 << 30, out_dir: Optional[str] = None,
          workers: int = 1) -> list[RunRecord]:
    """One record per (trace, strategy, repetition), seeded base_seed + repetition."""
    names = resolve_strategies(strategies) if strategies else []
    jobs = [(trace, name, rep, base_seed + rep, cluster, batch_size, out_dir)
            for trace in traces for name in names for rep in range(repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(job) for job in jobs]


def aggregate(records: Sequence[RunRecord]) -> list[StrategyAggregate]:
    groups: dict[str, dict[str, list[int]]] = {}
    for r in records:
        groups.setdefault(r.trace, {}).setdefault(r.strategy, []).append(r.makespanMs)
    out = []
    for trace, by_strategy in groups.items():
        base = by_strategy.get(BASELINE_NAME)
        if not base:
            raise MissingBaseline(f"no {BASELINE_NAME} runs for trace {trace!r}")
        base_median, base_min = lower_median(base), min(base)
        for strategy, spans in by_strategy.items():
            n = len(spans)
            median = lower_median(spans)
            out.append(StrategyAggregate(
                trace=trace,
                strategy=strategy,
                runs=n,
                medianMakespanMs=median,
                minMakespanMs=min(spans),
                stddevMs=statistics.stdev(spans) if n > 1 else 0.0,
                medianChangeVsBaselinePct=(100.0 * (median - base_median) / base_median
                                           if base_median else 0.0),
                betterThanBaselineMedianPct=100.0 * sum(s < base_median for s in spans) / n,
                betterThanBaselineMinPct=100.0 * sum(s < base_min for s in spans) / n,
            ))
    return out


def _markdown(aggregates: Sequence[StrategyAggregate]) -> str:
    strategies = list(dict.fromkeys(a.strategy for a in aggregates))
    cell = {(a.trace, a.strategy): a for a in aggregates}
    lines = ["| Trace | Metric | " + " | ".join(strategies) + " |",
             "|---|---|" + "---:|" * len(strategies)]
    for trace in dict.fromkeys(a.trace for a in aggregates):
        for metric in METRICS:
            row = []
            for s in strategies:
                a = cell.get((trace, s))
                v = None if a is None else getattr(a, metric)
                row.append("" if v is None else (f"{v:.1f}" if isinstance(v, float) else str(v)))
            lines.append(f"| {trace} | {metric} | " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def export(aggregates: Sequence[StrategyAggregate], fmt: str, path=None) -> str:
    """Render aggregates as csv, json or a markdown table; optionally write to ``path``."""
    rows = [asdict(a) for a in aggregates]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(StrategyAggregate.__dataclass_fields__),
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(rows, indent=1) + "\n"
    elif fmt in ("markdown", "markdown-table", "md"):
        text = _markdown(aggregates)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_aggregates_json(text: str) -> list[StrategyAggregate]:
    return [StrategyAggregate(**row) for row in json.loads(text)]


def write_records(records: Sequence[RunRecord], path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records))


def read_records(path) -> list[RunRecord]:
    return [RunRecord(**json.loads(line)) for line in Path(path).read_text().splitlines() if line]


def load_traces(directory) -> list[WorkflowTrace]:
    return [WorkflowTrace.load(p) for p in sorted(Path(directory).glob("*.json"))]


def check_run_against_log(record: RunRecord, log_records: Sequence[dict]) -> list[str]:
    """Cross-check a run record with its decision log; returns problems found."""
    problems = []
    final: dict[str, str] = {}
    submitted, finished_ts = [], []
    for rec in log_records:
        if rec["event"] in ("FINISHED", "FAILED", "WITHDRAWN"):
            if rec["taskId"] in final:
                problems.append(f"task {rec['taskId']} reached two terminal states")
            final[rec["taskId"]] = rec["event"]
        if rec["event"] == "SUBMITTED":
            submitted.append(rec["timestampMs"])
        if rec["event"] == "FINISHED":
            finished_ts.append(rec["timestampMs"])
    counts = {k: sum(v == k for v in final.values()) for k in ("FINISHED", "FAILED", "WITHDRAWN")}
    if counts["FINISHED"] != record.finished or counts["FAILED"] != record.failed:
        problems.append(f"log counts {counts} disagree with record")
    # tasks pruned before ever being submitted are withdrawn without a log entry
    if counts["WITHDRAWN"] > record.withdrawn:
        problems.append("log shows more withdrawals than the record")
    if record.finished + record.failed + record.withdrawn != record.taskCount:
        problems.append("terminal counts do not add up to the task count")
    if submitted and finished_ts:
        if max(finished_ts) - min(submitted) != record.makespanMs:
            problems.append("makespan disagrees with the decision log")
    return problems
