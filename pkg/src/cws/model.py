"""Executions, the abstract DAG, physical tasks and their lifecycle."""

from __future__ import annotations

import enum
import random
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

from cws.errors import (
    IllegalTransition,
    InvalidExecutionId,
    InvalidRequest,
    UnknownAbstractVertex,
    VertexInUse,
    WouldCreateCycle,
)

_EXECUTION_ID = re.compile(r"^[A-Za-z0-9_-]{1,128}$")


def validate_execution_id(value: str) -> str:
    if not isinstance(value, str) or not _EXECUTION_ID.match(value):
        raise InvalidExecutionId(
            f"execution id must be 1-128 chars of letters, digits, '-' or '_': {value!r}"
        )
    return value


def cpus_to_millis(cpus) -> int:
    """Convert a core count (int, float or numeric string) to whole millicores."""
    millis = int(round(float(cpus) * 1000))
    if millis <= 0:
        raise InvalidRequest(f"cpus must be positive (>= 0.001), got {cpus!r}")
    return millis


def millis_to_cpus(millis: int) -> float | int:
    return millis // 1000 if millis % 1000 == 0 else millis / 1000


class TaskState(str, enum.Enum):
    SUBMITTED = "SUBMITTED"
    QUEUED = "QUEUED"
    SCHEDULED = "SCHEDULED"
    RUNNING = "RUNNING"
    FINISHED = "FINISHED"
    FAILED = "FAILED"
    WITHDRAWN = "WITHDRAWN"

    @property
    def terminal(self) -> bool:
        return self in TERMINAL_STATES


TERMINAL_STATES = frozenset({TaskState.FINISHED, TaskState.FAILED, TaskState.WITHDRAWN})

ALLOWED_TRANSITIONS = {
    TaskState.SUBMITTED: {TaskState.QUEUED, TaskState.WITHDRAWN},
    TaskState.QUEUED: {TaskState.SCHEDULED, TaskState.WITHDRAWN},
    TaskState.SCHEDULED: {TaskState.RUNNING},
    TaskState.RUNNING: {TaskState.FINISHED, TaskState.FAILED},
    TaskState.FINISHED: set(),
    TaskState.FAILED: set(),
    TaskState.WITHDRAWN: set(),
}

_PLACED_STATES = frozenset(
    {TaskState.SCHEDULED, TaskState.RUNNING, TaskState.FINISHED, TaskState.FAILED}
)


@dataclass(frozen=True)
class FileSpec:
    path: str
    size_bytes: int = 0

    def __post_init__(self):
        if self.size_bytes < 0:
            raise InvalidRequest(f"negative file size for {self.path!r}")


@dataclass
class PhysicalTask:
    id: str
    abstract_id: str
    cpus_millis: int
    memory_bytes: int
    runtime_estimate_ms: Optional[int] = None
    input_files: list[FileSpec] = field(default_factory=list)
    output_files: list[FileSpec] = field(default_factory=list)
    state: TaskState = TaskState.SUBMITTED
    submission_seq: int = 0
    submitted_at: Optional[int] = None
    started_at: Optional[int] = None
    finished_at: Optional[int] = None
    assigned_node: Optional[str] = None

    @property
    def input_size_bytes(self) -> int:
        # the single definition of "input size" used by size-based ordering
        return sum(f.size_bytes for f in self.input_files)

    @property
    def cpus(self) -> float | int:
        return millis_to_cpus(self.cpus_millis)


def transition_task(task: PhysicalTask, to: TaskState, now_ms: int,
                    node: Optional[str] = None) -> PhysicalTask:
    """Move ``task`` to state ``to``, stamping the matching timestamp."""
    if to not in ALLOWED_TRANSITIONS[task.state]:
        raise IllegalTransition(task.state, to)
    if to is TaskState.SCHEDULED:
        if node is None:
            raise ValueError("SCHEDULED requires a node")
        task.assigned_node = node
    elif to is TaskState.RUNNING:
        task.started_at = now_ms
    elif to in (TaskState.FINISHED, TaskState.FAILED):
        task.finished_at = now_ms
    task.state = to
    assert (task.assigned_node is not None) == (to in _PLACED_STATES)
    return task


class AbstractDag:
    """Mutable DAG of abstract tasks. Every mutation keeps it acyclic."""

    def __init__(self):
        self.labels: dict[str, str] = {}
        self.succ: dict[str, set[str]] = {}
        self.pred: dict[str, set[str]] = {}
        self.version = 0

    def __contains__(self, vertex_id: str) -> bool:
        return vertex_id in self.labels

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def edges(self) -> set[tuple[str, str]]:
        return {(u, w) for u, ws in self.succ.items() for w in ws}

    def add_vertices(self, vertices: Iterable[tuple[str, str]]) -> int:
        added = 0
        for vid, label in vertices:
            if not vid:
                raise InvalidRequest("vertex id must be non-empty")
            if vid in self.labels:
                continue
            self.labels[vid] = label
            self.succ[vid] = set()
            self.pred[vid] = set()
            added += 1
        if added:
            self.version += 1
        return added

    def remove_vertices(self, ids: Iterable[str], in_use: Iterable[str] = ()) -> int:
        ids = [v for v in dict.fromkeys(ids) if v in self.labels]
        busy = sorted(set(ids) & set(in_use))
        if busy:
            raise VertexInUse(f"vertices referenced by live tasks: {', '.join(busy)}")
        for vid in ids:
            for w in self.succ.pop(vid):
                self.pred[w].discard(vid)
            for u in self.pred.pop(vid):
                self.succ[u].discard(vid)
            del self.labels[vid]
        if ids:
            self.version += 1
        return len(ids)

    def reaches(self, src: str, dst: str) -> bool:
        stack, seen = [src], {src}
        while stack:
            v = stack.pop()
            if v == dst:
                return True
            for w in self.succ[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return False

    def add_edges(self, edges: Iterable[tuple[str, str]]) -> int:
        """Insert edges atomically: on any error none of them is kept."""
        added: list[tuple[str, str]] = []
        try:
            for u, w in edges:
                for v in (u, w):
                    if v not in self.labels:
                        raise UnknownAbstractVertex(f"unknown vertex {v!r}")
                if w in self.succ[u]:
                    continue
                if u == w or self.reaches(w, u):
                    raise WouldCreateCycle(f"edge {u} -> {w} would create a cycle")
                self.succ[u].add(w)
                self.pred[w].add(u)
                added.append((u, w))
        except Exception:
            for u, w in added:
                self.succ[u].discard(w)
                self.pred[w].discard(u)
            raise
        if added:
            self.version += 1
        return len(added)

    def remove_edges(self, edges: Iterable[tuple[str, str]]) -> int:
        removed = 0
        for u, w in edges:
            if u in self.succ and w in self.succ[u]:
                self.succ[u].discard(w)
                self.pred[w].discard(u)
                removed += 1
        if removed:
            self.version += 1
        return removed


@dataclass
class BatchState:
    open: bool = False
    held_tasks: list[str] = field(default_factory=list)


@dataclass
class Execution:
    id: str
    strategy: "StrategyName"  # noqa: F821 - resolved in cws.strategies
    seed: int = 0
    dag: AbstractDag = field(default_factory=AbstractDag)
    tasks: dict[str, PhysicalTask] = field(default_factory=dict)
    batch: BatchState = field(default_factory=BatchState)
    created_at: int = field(default_factory=lambda: int(time.time() * 1000))
    next_seq: int = 0
    rr_cursor: int = 0
    rank_cache: Optional[tuple[int, dict[str, int]]] = None

    def __post_init__(self):
        self.rng = random.Random(self.seed)

    def queued(self) -> list[PhysicalTask]:
        return [t for t in self.tasks.values() if t.state is TaskState.QUEUED]

    def live_vertices(self) -> set[str]:
        return {t.abstract_id for t in self.tasks.values() if not t.state.terminal}

    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in TaskState}
        for t in self.tasks.values():
            out[t.state.value] += 1
        return out
