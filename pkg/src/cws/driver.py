"""Replays a workflow trace against the scheduler the way a workflow engine
would: tasks become known only when all of their predecessors finished."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import httpx

from cws.cluster import ClusterConfig
from cws.errors import (
    ERRORS_BY_CODE,
    CwsError,
    ExecutionFailed,
    NoPendingEvents,
    SchedulerUnreachable,
    TaskNotWithdrawable,
    TraceInvalid,
    VertexInUse,
)
from cws.scheduler import DecisionLog
from cws.service import API_VERSION, SchedulerService
from cws.simulator import build_system
from cws.trace import WorkflowTrace, validate_trace

log = logging.getLogger(__name__)

TERMINAL = {"FINISHED", "FAILED", "WITHDRAWN"}


class LocalClient:
    """In-process scheduler plus simulated cluster.

    ``wait`` advances virtual time by one simulator event, which only
    happens once the driver has nothing left to do at the current instant.
    """

    def __init__(self, cluster: ClusterConfig, decision_log: Optional[DecisionLog] = None,
                 audit: bool = False):
        self.scheduler, self.simulator = build_system(cluster, decision_log=decision_log,
                                                      audit=audit)
        self.service = SchedulerService(self.scheduler)

    def __getattr__(self, name):
        return getattr(self.service, name)

    def wait(self) -> bool:
        try:
            self.simulator.advance_to_next_event()
        except NoPendingEvents:
            return False
        return True


class HttpClient:
    """Talks to a running scheduler service over its REST interface."""

    def __init__(self, endpoint: str, poll_interval_s: float = 0.05, timeout_s: float = 10.0,
                 client: Optional[httpx.Client] = None):
        self.base = endpoint.rstrip("/") + "/" + API_VERSION
        self.poll_interval_s = poll_interval_s
        self.http = client or httpx.Client(timeout=timeout_s)

    def _call(self, method: str, path: str, body=None) -> dict:
        kwargs = {} if body is None else {"json": body}
        try:
            resp = self.http.request(method, self.base + path, **kwargs)
        except httpx.TransportError as exc:
            raise SchedulerUnreachable(f"{method} {path}: {exc}") from exc
        if resp.status_code >= 400:
            try:
                payload = resp.json()
            except ValueError:
                payload = {"code": "HTTP_ERROR", "message": resp.text}
            cls = ERRORS_BY_CODE.get(payload.get("code"), CwsError)
            err = cls.__new__(cls)
            CwsError.__init__(err, payload.get("message", ""))
            err.http_status = resp.status_code
            raise err
        return resp.json()

    def register(self, execution, strategy, seed=None):
        return self._call("POST", f"/{execution}", {"strategy": strategy, "seed": seed})

    def delete(self, execution):
        return self._call("DELETE", f"/{execution}")

    def add_vertices(self, execution, vertices):
        return self._call("POST", f"/{execution}/DAG/vertices", vertices)

    def remove_vertices(self, execution, ids):
        return self._call("DELETE", f"/{execution}/DAG/vertices", ids)

    def add_edges(self, execution, edges):
        return self._call("POST", f"/{execution}/DAG/edges", edges)

    def remove_edges(self, execution, edges):
        return self._call("DELETE", f"/{execution}/DAG/edges", edges)

    def start_batch(self, execution):
        return self._call("PUT", f"/{execution}/startBatch")

    def end_batch(self, execution):
        return self._call("PUT", f"/{execution}/endBatch")

    def submit_task(self, execution, task_id, body):
        return self._call("POST", f"/{execution}/task/{task_id}", body)

    def task_state(self, execution, task_id):
        return self._call("GET", f"/{execution}/task/{task_id}")

    def withdraw_task(self, execution, task_id):
        return self._call("DELETE", f"/{execution}/task/{task_id}")

    def wait(self) -> bool:
        time.sleep(self.poll_interval_s)
        return True

    def close(self) -> None:
        self.http.close()


@dataclass
class DriverState:
    finished: set[str] = field(default_factory=set)
    revealed: set[str] = field(default_factory=set)
    pending_reveal: list[str] = field(default_factory=list)
    cancelled: set[str] = field(default_factory=set)


@dataclass
class RunResult:
    execution: str
    trace: str
    strategy: str
    seed: int
    makespan_ms: int
    tasks: dict[str, dict]
    summary: dict
    batches: list[list[str]] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out = {"FINISHED": 0, "FAILED": 0, "WITHDRAWN": 0}
        for rec in self.tasks.values():
            if rec["state"] in out:
                out[rec["state"]] += 1
        return out


def makespan_of(records: dict[str, dict]) -> int:
    submitted = [r["submittedAt"] for r in records.values() if r.get("submittedAt") is not None]
    finished = [r["finishedAt"] for r in records.values() if r.get("finishedAt") is not None]
    if not submitted or not finished:
        return 0
    return max(finished) - min(submitted)


def _chunks(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def run_trace(trace: WorkflowTrace, client, strategy: str, batch_size: int = 1 << 30,
              seed: int = 0, execution_id: Optional[str] = None,
              max_wall_s: Optional[float] = None) -> RunResult:
    """Drive one workflow execution from registration to deletion.

    Each loop iteration applies due DAG edits, withdraws tasks those edits
    cancelled, submits newly ready tasks in batches of at most
    ``batch_size`` and polls every live task. The execution is deleted on
    success and on failure.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    violations = validate_trace(trace)
    if violations:
        raise TraceInvalid(violations)
    eid = execution_id or trace.name
    by_id = {t.id: t for t in trace.physical_tasks}
    order = {tid: i for i, tid in enumerate(by_id)}
    successors: dict[str, list[str]] = {t.id: [] for t in trace.physical_tasks}
    for t in trace.physical_tasks:
        for p in t.predecessors:
            successors[p].append(t.id)

    state = DriverState(pending_reveal=[t.id for t in trace.physical_tasks])
    records: dict[str, dict] = {}
    edits = list(trace.dag_edits)
    deferred_vertex_removals: list[str] = []
    batches: list[list[str]] = []
    deadline = None if max_wall_s is None else time.monotonic() + max_wall_s

    registered = client.register(eid, strategy, seed)                       # (1)
    client.add_vertices(eid, trace.abstract_vertices)                       # (3)
    if trace.abstract_edges:
        client.add_edges(eid, trace.abstract_edges)                         # (5)

    def cancel_branch(vertex_ids: set[str]) -> None:
        stack = [t.id for t in trace.physical_tasks
                 if t.abstract_id in vertex_ids and t.id not in state.finished]
        while stack:
            tid = stack.pop()
            if tid in state.cancelled:
                continue
            if tid in state.revealed:
                if records[tid]["state"] in TERMINAL:
                    continue
                try:
                    client.withdraw_task(eid, tid)                         # (11)
                    records[tid] = {**records[tid], "state": "WITHDRAWN"}
                except TaskNotWithdrawable:
                    continue
            else:
                state.pending_reveal.remove(tid)
                records[tid] = {"state": "WITHDRAWN", "submittedAt": None}
            state.cancelled.add(tid)
            stack.extend(successors[tid])

    def try_remove_vertices(ids: list[str]) -> list[str]:
        try:
            client.remove_vertices(eid, ids)                                # (4)
            return []
        except VertexInUse:
            return ids

    try:
        while True:
            progress = False
            for edit in list(edits):
                if edit.after_task is not None and edit.after_task not in state.finished:
                    continue
                edits.remove(edit)
                progress = True
                if edit.op == "addVertices":
                    client.add_vertices(eid, [v if isinstance(v, dict) else {"id": v, "label": v}
                                              for v in edit.vertices])      # (3)
                elif edit.op == "addEdges":
                    client.add_edges(eid, edit.edges)                       # (5)
                elif edit.op == "removeEdges":
                    client.remove_edges(eid, edit.edges)                    # (6)
                else:
                    ids = edit.vertex_ids()
                    cancel_branch(set(ids))
                    deferred_vertex_removals += try_remove_vertices(ids)
            if deferred_vertex_removals:
                deferred_vertex_removals = try_remove_vertices(deferred_vertex_removals)

            ready = [tid for tid in state.pending_reveal
                     if all(p in state.finished for p in by_id[tid].predecessors)]
            for chunk in _chunks(ready, batch_size):
                client.start_batch(eid)                                     # (7)
                for tid in chunk:
                    client.submit_task(eid, tid, by_id[tid].submission_body())   # (9)
                    state.pending_reveal.remove(tid)
                    state.revealed.add(tid)
                    records[tid] = {"state": "SUBMITTED"}
                client.end_batch(eid)                                       # (8)
                batches.append(list(chunk))
                progress = True

            for tid in sorted(state.revealed, key=order.__getitem__):
                if records[tid]["state"] in TERMINAL:
                    continue
                rec = client.task_state(eid, tid)                           # (10)
                if rec["state"] != records[tid].get("state"):
                    progress = True
                records[tid] = rec
                if rec["state"] == "FINISHED":
                    state.finished.add(tid)
                elif rec["state"] == "FAILED":
                    raise ExecutionFailed(f"task {tid!r} failed on node {rec.get('node')}")

            if not state.pending_reveal and all(
                    records[t]["state"] in TERMINAL for t in state.revealed):
                break
            if progress:
                continue
            if deadline is not None and time.monotonic() > deadline:
                raise ExecutionFailed(f"execution {eid!r} exceeded {max_wall_s}s")
            if not client.wait():
                raise ExecutionFailed(f"execution {eid!r} stalled: no feasible placement "
                                      "and no pending cluster events")
    except ExecutionFailed as exc:
        try:
            summary = client.delete(eid)                                    # (2)
        except CwsError:
            summary = {}
        exc.result = RunResult(eid, trace.name, registered["strategy"], seed,
                               makespan_of(records), records, summary, batches)
        raise
    summary = client.delete(eid)                                            # (2)
    return RunResult(eid, trace.name, registered["strategy"], seed, makespan_of(records),
                     records, summary, batches)


def run_local(trace: WorkflowTrace, cluster: ClusterConfig, strategy: str,
              batch_size: int = 1 << 30, seed: int = 0, decision_log: Optional[DecisionLog] = None,
              audit: bool = False) -> tuple[RunResult, LocalClient]:
    client = LocalClient(cluster, decision_log=decision_log, audit=audit)
    result = run_trace(trace, client, strategy, batch_size=batch_size, seed=seed)
    return result, client
