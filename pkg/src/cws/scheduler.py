"""The workflow-aware scheduler: execution registry, batch gating, the
resource ledger and the alignment loop."""

from __future__ import annotations

import enum
import functools
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Protocol, Sequence

from cws.clock import VirtualClock
from cws.errors import (
    BatchAlreadyOpen,
    CwsError,
    DuplicateExecution,
    DuplicateTaskId,
    InvalidRequest,
    NoBatchOpen,
    TaskNotWithdrawable,
    UnknownAbstractVertex,
    UnknownExecution,
    UnknownTask,
)
from cws.ledger import ResourceLedger
from cws.model import (
    Execution,
    FileSpec,
    PhysicalTask,
    TaskState,
    cpus_to_millis,
    transition_task,
    validate_execution_id,
)
from cws.strategies import (
    CandidateTask,
    RankTable,
    RoundRobinCursor,
    StrategyName,
    compute_ranks,
    plan_round,
)

log = logging.getLogger(__name__)


class EventKind(str, enum.Enum):
    TASK_SUBMITTED = "TASK_SUBMITTED"
    BATCH_CLOSED = "BATCH_CLOSED"
    TASK_FINISHED = "TASK_FINISHED"
    TASK_FAILED = "TASK_FAILED"
    NODE_ADDED = "NODE_ADDED"
    NODE_REMOVED = "NODE_REMOVED"
    DAG_CHANGED = "DAG_CHANGED"


@dataclass(frozen=True)
class SchedulerEvent:
    kind: EventKind
    execution_id: Optional[str] = None
    payload: dict = field(default_factory=dict)


# events after which queued work may have become placeable
_REALIGN_OWN = {EventKind.TASK_SUBMITTED, EventKind.BATCH_CLOSED, EventKind.DAG_CHANGED}
_REALIGN_ALL = {EventKind.TASK_FINISHED, EventKind.TASK_FAILED, EventKind.NODE_ADDED}


@dataclass(frozen=True)
class ScheduleDecision:
    execution_id: str
    task_id: str
    node_id: str
    decided_at: int
    queue_wait_ms: int


class Backend(Protocol):
    def dispatch(self, execution_id: str, task: PhysicalTask, node_id: str) -> None: ...

    def cancel(self, execution_id: str, task_id: str) -> None: ...


class DecisionLog:
    """JSON Lines record of every decision and state transition."""

    def __init__(self, sink: Optional[IO[str]] = None, keep: bool = True):
        self.sink = sink
        self.keep = keep
        self.records: list[dict] = []

    def emit(self, execution_id: str, task: PhysicalTask, event: str,
             timestamp_ms: int, node_id: Optional[str] = None) -> None:
        rec = {"executionId": execution_id, "taskId": task.id,
               "abstractId": task.abstract_id, "event": event}
        if node_id is not None:
            rec["nodeId"] = node_id
        rec["timestampMs"] = timestamp_ms
        if self.keep:
            self.records.append(rec)
        if self.sink is not None:
            self.sink.write(json.dumps(rec, separators=(",", ":")) + "\n")

    def dumps(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records)


def _locked(method):
    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        with self._lock:
            return method(self, *args, **kwargs)
    return wrapper


def task_status(task: PhysicalTask) -> dict:
    out = {"state": task.state.value}
    if task.assigned_node is not None:
        out["node"] = task.assigned_node
    out["submittedAt"] = task.submitted_at
    if task.started_at is not None:
        out["startedAt"] = task.started_at
    if task.finished_at is not None:
        out["finishedAt"] = task.finished_at
    return out


class Scheduler:
    """One scheduler per process, shared by all registered executions.

    Every public method runs under one re-entrant lock and drains the event
    queue before returning, so callers always observe a quiescent state.
    ``audit`` may be True (check the ledger after every event) or a callable
    receiving the scheduler, run in addition to the ledger check.
    """

    def __init__(self, nodes: Iterable, clock=None, backend: Optional[Backend] = None,
                 decision_log: Optional[DecisionLog] = None, audit=False):
        self.clock = clock if clock is not None else VirtualClock()
        self.ledger = ResourceLedger(nodes)
        self.backend = backend
        self.log = decision_log if decision_log is not None else DecisionLog()
        self.audit = audit
        self.executions: dict[str, Execution] = {}
        self.decisions: list[ScheduleDecision] = []
        self.rounds = 0
        self._events: deque[SchedulerEvent] = deque()
        self._draining = False
        self._lock = threading.RLock()

    # ------------------------------------------------------------ helpers

    def _exec(self, execution_id: str) -> Execution:
        try:
            return self.executions[execution_id]
        except KeyError:
            raise UnknownExecution(f"unknown execution {execution_id!r}") from None

    def _task(self, ex: Execution, task_id: str) -> PhysicalTask:
        try:
            return ex.tasks[task_id]
        except KeyError:
            raise UnknownTask(f"unknown task {task_id!r} in {ex.id!r}") from None

    def _move(self, ex: Execution, task: PhysicalTask, to: TaskState,
              node: Optional[str] = None) -> None:
        now = self.clock.now_ms()
        transition_task(task, to, now, node)
        self.log.emit(ex.id, task, to.value, now, task.assigned_node)

    def _abort(self, ex: Execution, task: PhysicalTask) -> None:
        """Fail a placed task and free its reservation."""
        if task.state is TaskState.SCHEDULED:
            self._move(ex, task, TaskState.RUNNING)
        if task.state is TaskState.RUNNING:
            self._move(ex, task, TaskState.FAILED)
        self.ledger.release((ex.id, task.id))

    def _post(self, event: SchedulerEvent) -> None:
        self._events.append(event)
        if self._draining:
            return
        self._draining = True
        try:
            while self._events:
                self._handle(self._events.popleft())
        finally:
            self._draining = False

    def _handle(self, event: SchedulerEvent) -> None:
        if event.kind in _REALIGN_OWN and event.execution_id in self.executions:
            self.alignment_round(event.execution_id)
        elif event.kind in _REALIGN_ALL:
            order = list(self.executions)
            if event.execution_id in self.executions:
                order.remove(event.execution_id)
                order.insert(0, event.execution_id)
            for eid in order:
                self.alignment_round(eid)
        self._audit()

    def _audit(self) -> None:
        if self.audit:
            self.ledger.audit()
            if callable(self.audit):
                self.audit(self)

    def ranks(self, ex: Execution) -> RankTable:
        cached = ex.rank_cache
        if cached is None or cached.dag_version != ex.dag.version:
            cached = ex.rank_cache = compute_ranks(ex.dag)
        return cached

    # ------------------------------------------------------------ alignment

    def alignment_round(self, execution_id: str) -> list[ScheduleDecision]:
        ex = self._exec(execution_id)
        queued = ex.queued()
        if not queued:
            return []
        ranks = self.ranks(ex).ranks
        candidates = [
            CandidateTask(t.id, t.submission_seq, t.input_size_bytes,
                          ranks.get(t.abstract_id, 0), t.cpus_millis, t.memory_bytes)
            for t in queued
        ]
        views = self.ledger.views()
        if not any(n.fits(c) for n in views for c in candidates):
            return []
        self.rounds += 1
        cursor = RoundRobinCursor(ex.rr_cursor)
        plan = plan_round(candidates, views, ex.strategy, cursor, ex.rng)
        ex.rr_cursor = cursor.position
        out = []
        for task_id, node_id in plan:
            task = ex.tasks[task_id]
            now = self.clock.now_ms()
            self.ledger.reserve((ex.id, task_id), node_id, task.cpus_millis,
                                task.memory_bytes)
            self._move(ex, task, TaskState.SCHEDULED, node_id)
            decision = ScheduleDecision(ex.id, task_id, node_id, now,
                                        now - task.submitted_at)
            self.decisions.append(decision)
            self.log.emit(ex.id, task, "DECISION", now, node_id)
            out.append(decision)
            if self.backend is not None:
                try:
                    self.backend.dispatch(ex.id, task, node_id)
                except CwsError as exc:
                    log.warning("dispatch of %s/%s failed: %s", ex.id, task_id, exc)
                    self._abort(ex, task)
        return out

    # ------------------------------------------------------------ executions

    @_locked
    def create_execution(self, execution_id: str, strategy, seed: int = 0) -> Execution:
        validate_execution_id(execution_id)
        if not isinstance(strategy, StrategyName):
            strategy = StrategyName.parse(strategy)
        if execution_id in self.executions:
            raise DuplicateExecution(f"execution {execution_id!r} already registered")
        ex = Execution(execution_id, strategy, seed=int(seed),
                       created_at=self.clock.now_ms())
        self.executions[execution_id] = ex
        return ex

    @_locked
    def delete_execution(self, execution_id: str) -> dict:
        ex = self._exec(execution_id)
        freed = False
        for task in ex.tasks.values():
            if task.state in (TaskState.SUBMITTED, TaskState.QUEUED):
                self._move(ex, task, TaskState.WITHDRAWN)
            elif task.state in (TaskState.SCHEDULED, TaskState.RUNNING):
                if self.backend is not None:
                    self.backend.cancel(ex.id, task.id)
                self._abort(ex, task)
                freed = True
        ex.batch.held_tasks.clear()
        counts = ex.counts()
        del self.executions[execution_id]
        if freed:
            self._post(SchedulerEvent(EventKind.TASK_FAILED))
        else:
            self._audit()
        return {
            "execution": execution_id,
            "finished": counts["FINISHED"],
            "failed": counts["FAILED"],
            "withdrawn": counts["WITHDRAWN"],
        }

    # ------------------------------------------------------------ DAG

    @_locked
    def add_vertices(self, execution_id: str, vertices: Sequence[tuple[str, str]]) -> int:
        ex = self._exec(execution_id)
        n = ex.dag.add_vertices(vertices)
        if n:
            self._post(SchedulerEvent(EventKind.DAG_CHANGED, ex.id))
        return n

    @_locked
    def remove_vertices(self, execution_id: str, ids: Sequence[str]) -> int:
        ex = self._exec(execution_id)
        n = ex.dag.remove_vertices(ids, in_use=ex.live_vertices())
        if n:
            self._post(SchedulerEvent(EventKind.DAG_CHANGED, ex.id))
        return n

    @_locked
    def add_edges(self, execution_id: str, edges: Sequence[tuple[str, str]]) -> int:
        ex = self._exec(execution_id)
        n = ex.dag.add_edges(edges)
        if n:
            self._post(SchedulerEvent(EventKind.DAG_CHANGED, ex.id))
        return n

    @_locked
    def remove_edges(self, execution_id: str, edges: Sequence[tuple[str, str]]) -> int:
        ex = self._exec(execution_id)
        n = ex.dag.remove_edges(edges)
        if n:
            self._post(SchedulerEvent(EventKind.DAG_CHANGED, ex.id))
        return n

    # ------------------------------------------------------------ batches

    @_locked
    def open_batch(self, execution_id: str) -> None:
        ex = self._exec(execution_id)
        if ex.batch.open:
            raise BatchAlreadyOpen(f"execution {execution_id!r} already has an open batch")
        ex.batch.open = True

    @_locked
    def close_batch(self, execution_id: str) -> int:
        ex = self._exec(execution_id)
        if not ex.batch.open:
            raise NoBatchOpen(f"execution {execution_id!r} has no open batch")
        held, ex.batch.held_tasks = ex.batch.held_tasks, []
        ex.batch.open = False
        for task_id in held:
            self._move(ex, ex.tasks[task_id], TaskState.QUEUED)
        self._post(SchedulerEvent(EventKind.BATCH_CLOSED, ex.id, {"released": len(held)}))
        return len(held)

    # ------------------------------------------------------------ tasks

    @_locked
    def submit_task(self, execution_id: str, task_id: str, abstract_id: str, cpus,
                    memory_bytes: int, runtime_estimate_ms: Optional[int] = None,
                    input_files: Iterable[FileSpec] = (),
                    output_files: Iterable[FileSpec] = ()) -> PhysicalTask:
        ex = self._exec(execution_id)
        if not task_id:
            raise InvalidRequest("task id must be non-empty")
        if task_id in ex.tasks:
            raise DuplicateTaskId(f"task {task_id!r} already submitted to {execution_id!r}")
        if abstract_id not in ex.dag:
            raise UnknownAbstractVertex(f"unknown abstract vertex {abstract_id!r}")
        if int(memory_bytes) <= 0:
            raise InvalidRequest("memoryBytes must be positive")
        if runtime_estimate_ms is not None and int(runtime_estimate_ms) < 0:
            raise InvalidRequest("runtimeEstimateMs must be non-negative")
        task = PhysicalTask(
            id=task_id,
            abstract_id=abstract_id,
            cpus_millis=cpus_to_millis(cpus),
            memory_bytes=int(memory_bytes),
            runtime_estimate_ms=None if runtime_estimate_ms is None else int(runtime_estimate_ms),
            input_files=list(input_files),
            output_files=list(output_files),
            submission_seq=ex.next_seq,
            submitted_at=self.clock.now_ms(),
        )
        ex.next_seq += 1
        ex.tasks[task_id] = task
        self.log.emit(ex.id, task, TaskState.SUBMITTED.value, task.submitted_at)
        if ex.batch.open:
            ex.batch.held_tasks.append(task_id)
        else:
            self._move(ex, task, TaskState.QUEUED)
            self._post(SchedulerEvent(EventKind.TASK_SUBMITTED, ex.id, {"task": task_id}))
        return task

    @_locked
    def task_status(self, execution_id: str, task_id: str) -> dict:
        return task_status(self._task(self._exec(execution_id), task_id))

    @_locked
    def withdraw_task(self, execution_id: str, task_id: str) -> PhysicalTask:
        ex = self._exec(execution_id)
        task = self._task(ex, task_id)
        if task.state not in (TaskState.SUBMITTED, TaskState.QUEUED):
            raise TaskNotWithdrawable(f"task {task_id!r} is {task.state.value}")
        if task_id in ex.batch.held_tasks:
            ex.batch.held_tasks.remove(task_id)
        self._move(ex, task, TaskState.WITHDRAWN)
        return task

    # ------------------------------------------------------------ backend callbacks

    @_locked
    def on_task_started(self, execution_id: str, task_id: str) -> None:
        ex = self._exec(execution_id)
        self._move(ex, self._task(ex, task_id), TaskState.RUNNING)

    @_locked
    def on_task_finished(self, execution_id: str, task_id: str, ok: bool = True) -> None:
        ex = self._exec(execution_id)
        task = self._task(ex, task_id)
        self._move(ex, task, TaskState.FINISHED if ok else TaskState.FAILED)
        self.ledger.release((ex.id, task_id))
        kind = EventKind.TASK_FINISHED if ok else EventKind.TASK_FAILED
        self._post(SchedulerEvent(kind, ex.id, {"task": task_id}))

    @_locked
    def on_node_toggled(self, node_id: str, online: bool) -> None:
        self.ledger.set_online(node_id, online)
        if online:
            self._post(SchedulerEvent(EventKind.NODE_ADDED, payload={"node": node_id}))
            return
        for eid, task_id in self.ledger.on_node(node_id):
            ex = self.executions[eid]
            if self.backend is not None:
                self.backend.cancel(eid, task_id)
            self._abort(ex, ex.tasks[task_id])
        self._post(SchedulerEvent(EventKind.NODE_REMOVED, payload={"node": node_id}))

    # ------------------------------------------------------------ introspection

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    @property
    def quiescent(self) -> bool:
        return not self._events and not any(ex.batch.open for ex in self.executions.values())
