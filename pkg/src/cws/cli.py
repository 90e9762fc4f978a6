"""Command-line entry points: the service, the trace driver and the bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from cws import generators
from cws.cluster import ClusterConfig
from cws.errors import CwsError, TraceInvalid
from cws.trace import WorkflowTrace, validate_trace

DEFAULT_LISTEN = "127.0.0.1:8080"


def _default_cluster() -> ClusterConfig:
    return ClusterConfig.uniform(5, cpus=4, memory_bytes=16 << 30)


def _cluster(path) -> ClusterConfig:
    return ClusterConfig.load(path) if path else _default_cluster()


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


# ---------------------------------------------------------------- server

def server_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="cws-server",
                                description="Run the workflow scheduler REST service.")
    p.add_argument("--listen", default=None,
                   help=f"host:port to bind (default: $CWS_LISTEN or {DEFAULT_LISTEN})")
    p.add_argument("--cluster", help="cluster config JSON (default: 5 nodes x 4 cpus)")
    p.add_argument("--time-scale", type=float, default=1.0,
                   help="virtual ms per wall ms for the simulated cluster")
    p.add_argument("--decision-log", help="append decision records (JSON Lines) here")
    p.add_argument("--log-level", default="info")
    args = p.parse_args(argv)

    import uvicorn

    from cws.api import build_app
    from cws.scheduler import DecisionLog

    host, port = parse_listen(args.listen or os.environ.get("CWS_LISTEN") or DEFAULT_LISTEN)
    sink = open(args.decision_log, "a", buffering=1) if args.decision_log else None
    app = build_app(_cluster(args.cluster), time_scale=args.time_scale,
                    decision_log=DecisionLog(sink=sink, keep=False))
    uvicorn.run(app, host=host, port=port, log_level=args.log_level)
    return 0


# ---------------------------------------------------------------- driver

GENERATORS = {
    "example": lambda seed, i: generators.example_trace(),
    "conditional": lambda seed, i: generators.conditional_trace(),
    "chain": lambda seed, i: generators.chain_trace(5 + i),
    "forkjoin": lambda seed, i: generators.fork_join_trace(4 + i),
    "random": lambda seed, i: generators.random_layered_trace(seed + i),
    "critical": lambda seed, i: generators.critical_path_trace(seed + i),
}


def driver_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="cws-driver",
                                description="Replay workflow traces against the scheduler.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one trace")
    run.add_argument("--trace", required=True)
    run.add_argument("--strategy", required=True)
    run.add_argument("--cluster", help="cluster config JSON for the in-process simulator")
    run.add_argument("--batch-size", type=int, default=1 << 30)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--endpoint", help="scheduler base URL; omit to run in-process")
    run.add_argument("--execution", help="execution id (default: trace name)")
    run.add_argument("--decision-log", help="write the in-process decision log here")
    run.add_argument("--timeout", type=float, default=None, help="wall-clock limit (s)")

    gen = sub.add_parser("generate", help="write synthetic traces")
    gen.add_argument("--kind", choices=sorted(GENERATORS), default="critical")
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")

    val = sub.add_parser("validate", help="check a trace file")
    val.add_argument("trace")

    args = p.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)

    if args.command == "generate":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i in range(args.count):
            trace = GENERATORS[args.kind](args.seed, i)
            trace.dump(out / f"{trace.name}.json")
            print(out / f"{trace.name}.json")
        return 0

    if args.command == "validate":
        violations = validate_trace(WorkflowTrace.load(args.trace))
        for v in violations:
            print(v)
        return 1 if violations else 0

    from cws.driver import HttpClient, LocalClient, run_trace
    from cws.scheduler import DecisionLog

    trace = WorkflowTrace.load(args.trace)
    dlog = None
    if args.endpoint:
        client = HttpClient(args.endpoint)
    else:
        dlog = DecisionLog()
        client = LocalClient(_cluster(args.cluster), decision_log=dlog)
    try:
        result = run_trace(trace, client, args.strategy, batch_size=args.batch_size,
                           seed=args.seed, execution_id=args.execution,
                           max_wall_s=args.timeout)
    except TraceInvalid as exc:
        print("invalid trace:", *exc.violations, sep="\n  ", file=sys.stderr)
        return 2
    except CwsError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1
    if dlog is not None and args.decision_log:
        Path(args.decision_log).write_text(dlog.dumps())
    print(json.dumps({
        "execution": result.execution,
        "trace": result.trace,
        "strategy": result.strategy,
        "seed": result.seed,
        "makespanMs": result.makespan_ms,
        "summary": result.summary,
        "tasks": result.tasks,
    }, indent=1))
    return 0


# ---------------------------------------------------------------- bench

def bench_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="cws-bench",
                                description="Compare scheduling strategies by makespan.")
    p.add_argument("--traces", required=True, help="directory of trace JSON files")
    p.add_argument("--cluster", help="cluster config JSON")
    p.add_argument("--strategies", default="all", help="'all' or comma-separated names")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=1 << 30)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)

    from cws.harness import aggregate, export, load_traces, resolve_strategies, sweep, \
        write_records
    from cws.strategies import BASELINE_NAME

    traces = load_traces(args.traces)
    if not traces:
        print(f"no *.json traces in {args.traces}", file=sys.stderr)
        return 2
    try:
        strategies = resolve_strategies(args.strategies)
    except CwsError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = sweep(traces, strategies, _cluster(args.cluster), repetitions=args.reps,
                    base_seed=args.seed, batch_size=args.batch_size, out_dir=str(out),
                    workers=args.workers)
    write_records(records, out / "records.jsonl")
    print(f"{len(records)} runs -> {out / 'records.jsonl'}")
    if BASELINE_NAME in strategies:
        aggs = aggregate(records)
        export(aggs, "csv", out / "aggregates.csv")
        export(aggs, "markdown-table", out / "aggregates.md")
        print(f"aggregates -> {out / 'aggregates.csv'}")
    else:
        print("baseline_default not swept; skipping aggregation", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(driver_main())
