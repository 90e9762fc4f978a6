"""Rank computation, task prioritization and node assignment.

Everything here is a pure function over snapshots. The only mutable inputs
are the round-robin cursor and the random generator, both owned by the
caller's execution.
"""

from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

from cws.errors import UnknownStrategy


class Prioritization(str, enum.Enum):
    FIFO = "fifo"
    RANDOM = "random"
    SIZE_DESC = "size_desc"
    SIZE_ASC = "size_asc"
    RANK_FIFO = "rank_fifo"
    RANK_MIN = "rank_min"
    RANK_MAX = "rank_max"


class Assignment(str, enum.Enum):
    ROUND_ROBIN = "round_robin"
    RANDOM = "random"
    FAIR = "fair"


BASELINE_NAME = "baseline_default"


@dataclass(frozen=True)
class StrategyName:
    prioritization: Optional[Prioritization]
    assignment: Optional[Assignment]

    @property
    def is_baseline(self) -> bool:
        return self.prioritization is None

    @property
    def name(self) -> str:
        if self.is_baseline:
            return BASELINE_NAME
        return f"{self.prioritization.value}-{self.assignment.value}"

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str) -> "StrategyName":
        if text == BASELINE_NAME:
            return BASELINE
        prio, sep, assign = str(text).partition("-")
        try:
            if not sep:
                raise ValueError
            return cls(Prioritization(prio), Assignment(assign))
        except ValueError:
            raise UnknownStrategy(f"unknown strategy {text!r}") from None


BASELINE = StrategyName(None, None)
COMPOSITE_STRATEGIES = [StrategyName(p, a) for p in Prioritization for a in Assignment]
ALL_STRATEGIES = COMPOSITE_STRATEGIES + [BASELINE]


# ---------------------------------------------------------------- ranks

@dataclass(frozen=True)
class RankTable:
    ranks: dict[str, int]
    dag_version: int

    def __getitem__(self, vertex_id: str) -> int:
        return self.ranks[vertex_id]


def compute_ranks(dag) -> RankTable:
    """Longest path (in edges) from every vertex to any sink.

    Processes vertices in reverse topological order (Kahn's algorithm on
    out-degrees), so each vertex is finalized after all its successors.
    """
    outdeg = {v: len(dag.succ[v]) for v in dag.labels}
    ready = deque(v for v, d in outdeg.items() if d == 0)
    ranks: dict[str, int] = {}
    while ready:
        v = ready.popleft()
        ranks[v] = max((ranks[w] + 1 for w in dag.succ[v]), default=0)
        for u in dag.pred[v]:
            outdeg[u] -= 1
            if outdeg[u] == 0:
                ready.append(u)
    if len(ranks) != len(dag.labels):
        raise ValueError("abstract DAG contains a cycle")
    return RankTable(ranks, dag.version)


# ---------------------------------------------------------- prioritization

@dataclass(frozen=True)
class CandidateTask:
    task_id: str
    submission_seq: int
    input_size_bytes: int = 0
    rank: int = 0
    cpus_millis: int = 1000
    memory_bytes: int = 0


def _sort_key(p: Prioritization):
    fifo = lambda c: (c.submission_seq, c.task_id)  # noqa: E731
    return {
        Prioritization.FIFO: fifo,
        Prioritization.RANDOM: fifo,
        Prioritization.SIZE_DESC: lambda c: (-c.input_size_bytes, *fifo(c)),
        Prioritization.SIZE_ASC: lambda c: (c.input_size_bytes, *fifo(c)),
        Prioritization.RANK_FIFO: lambda c: (-c.rank, *fifo(c)),
        Prioritization.RANK_MIN: lambda c: (-c.rank, -c.input_size_bytes, *fifo(c)),
        Prioritization.RANK_MAX: lambda c: (-c.rank, c.input_size_bytes, *fifo(c)),
    }[p]


def prioritize(pending: Sequence[CandidateTask], strategy: Prioritization,
               rng: random.Random) -> list[CandidateTask]:
    """Total order in which queued tasks are offered to node assignment.

    Rank strategies order by descending rank and break ties by submission
    order (rank_fifo), larger input first (rank_min) or smaller input first
    (rank_max). Submission sequence then task id settle any remaining tie.
    """
    strategy = Prioritization(strategy)
    ordered = sorted(pending, key=_sort_key(strategy))
    if strategy is Prioritization.RANDOM:
        rng.shuffle(ordered)
    return ordered


# ---------------------------------------------------------- node assignment

@dataclass(frozen=True)
class NodeView:
    """Snapshot of one node's capacity and current reservations."""

    id: str
    total_cpus_millis: int
    total_memory_bytes: int
    allocated_cpus_millis: int = 0
    allocated_memory_bytes: int = 0
    online: bool = True

    @property
    def free_cpus_millis(self) -> int:
        return self.total_cpus_millis - self.allocated_cpus_millis

    @property
    def free_memory_bytes(self) -> int:
        return self.total_memory_bytes - self.allocated_memory_bytes

    def fits(self, task: CandidateTask) -> bool:
        return (self.online
                and self.free_cpus_millis >= task.cpus_millis
                and self.free_memory_bytes >= task.memory_bytes)

    def with_task(self, task: CandidateTask) -> "NodeView":
        return replace(
            self,
            allocated_cpus_millis=self.allocated_cpus_millis + task.cpus_millis,
            allocated_memory_bytes=self.allocated_memory_bytes + task.memory_bytes,
        )


class RoundRobinCursor:
    def __init__(self, position: int = 0):
        self.position = position

    def __repr__(self) -> str:
        return f"RoundRobinCursor({self.position})"


def utilization_after(node: NodeView, task: CandidateTask) -> Fraction:
    return max(
        Fraction(node.allocated_cpus_millis + task.cpus_millis, node.total_cpus_millis),
        Fraction(node.allocated_memory_bytes + task.memory_bytes, node.total_memory_bytes),
    )


def assign(task: CandidateTask, nodes: Sequence[NodeView], strategy: Assignment,
           cursor: RoundRobinCursor, rng: random.Random) -> Optional[str]:
    """Pick a node that can host ``task`` or return None when none fits."""
    strategy = Assignment(strategy)
    if strategy is Assignment.ROUND_ROBIN:
        n = len(nodes)
        for k in range(n):
            i = (cursor.position + k) % n
            if nodes[i].fits(task):
                cursor.position = (i + 1) % n
                return nodes[i].id
        return None
    feasible = [node for node in nodes if node.fits(task)]
    if not feasible:
        return None
    if strategy is Assignment.RANDOM:
        return feasible[rng.randrange(len(feasible))].id
    return min(feasible, key=lambda node: (utilization_after(node, task), node.id)).id


def baseline_assign(pending: Sequence[CandidateTask], nodes: Sequence[NodeView],
                    cursor: Optional[RoundRobinCursor] = None) -> list[tuple[str, str]]:
    """Approximation of a workflow-unaware default scheduler.

    Tasks go in submission order to the feasible node with the lowest
    allocated CPU fraction (a spreading policy), ties by node id. The cursor
    is accepted for signature parity and left untouched.
    """
    views = list(nodes)
    out = []
    for task in sorted(pending, key=_sort_key(Prioritization.FIFO)):
        best = None
        for i, node in enumerate(views):
            if not node.fits(task):
                continue
            key = (Fraction(node.allocated_cpus_millis, node.total_cpus_millis), node.id)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            continue
        i = best[1]
        views[i] = views[i].with_task(task)
        out.append((task.task_id, views[i].id))
    return out


def plan_round(candidates: Sequence[CandidateTask], nodes: Sequence[NodeView],
               strategy: StrategyName, cursor: RoundRobinCursor,
               rng: random.Random) -> list[tuple[str, str]]:
    """One alignment pass: (task id, node id) pairs in decision order.

    Tasks that fit nowhere are skipped, not waited for, so a large task at
    the head of the order never blocks smaller ones behind it.
    """
    if strategy.is_baseline:
        return baseline_assign(candidates, nodes, cursor)
    views = list(nodes)
    index = {node.id: i for i, node in enumerate(views)}
    out = []
    for task in prioritize(candidates, strategy.prioritization, rng):
        node_id = assign(task, views, strategy.assignment, cursor, rng)
        if node_id is None:
            continue
        i = index[node_id]
        views[i] = views[i].with_task(task)
        out.append((task.task_id, node_id))
    return out
